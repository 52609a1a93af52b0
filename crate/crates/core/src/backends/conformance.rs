//! Shared request/response vectors for the wire protocol.
//!
//! Each vector is a request plus the reply the built-in mocks give. A model
//! server passes if every reply has the expected status and shape; the
//! mocks must also reproduce the recorded bodies exactly.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::BackendConfig;
use super::wire::{dispatch, ClipPayload};
use super::Backends;
use crate::clip::ClipTensor;

/// Embedding width and mock seed the recorded vectors were produced with.
pub const VECTOR_DIM: usize = 8;
pub const VECTOR_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceVector {
    pub name: String,
    pub method: String,
    pub path: String,
    #[serde(default)]
    pub request: Value,
    pub status: u16,
    pub response: Value,
}

/// The backends the vectors are recorded against.
pub fn reference_backends() -> Backends {
    BackendConfig::all_mock(VECTOR_DIM)
        .build(VECTOR_SEED)
        .expect("all-mock config is valid")
}

fn fixture_clip(frames: usize) -> ClipTensor {
    ClipTensor::from_fn(frames, 4, 4, 3, 10.0, |t, y, x, c| {
        ((t * 13 + y * 5 + x * 3 + c * 7) % 16) as f32 / 15.0
    })
    .expect("fixture values are in range")
}

fn clip_json(frames: usize) -> Value {
    serde_json::to_value(ClipPayload::inline(&fixture_clip(frames))).expect("payload serializes")
}

fn requests() -> Vec<(&'static str, &'static str, &'static str, Value)> {
    use serde_json::json;
    vec![
        ("health", "GET", "/health", Value::Null),
        (
            "agent_easy",
            "POST",
            "/agent",
            json!({"clip": clip_json(3), "prompt": "Question: What sport is this?"}),
        ),
        (
            "agent_hard",
            "POST",
            "/agent",
            json!({"clip": clip_json(3), "prompt": "Question: How many sub-sets of movements are performed?"}),
        ),
        ("caption", "POST", "/caption", json!({"clip": clip_json(4)})),
        (
            "score_logits",
            "POST",
            "/score_logits",
            json!({"clip": clip_json(4), "prompt": "Is this clip relevant to the question? Answer yes or no."}),
        ),
        ("embed_text", "POST", "/embed_text", json!({"text": "626B: forward 3.5 somersaults in pike"})),
        ("embed_clip", "POST", "/embed_clip", json!({"clip": clip_json(2)})),
        (
            "reason_with_options",
            "POST",
            "/reason",
            json!({
                "prompt": "Clip captions:\n1. a diver on the springboard",
                "question": "Where does the dive start?",
                "options": ["platform", "springboard", "pool deck", "ladder"],
            }),
        ),
        (
            "reason_free_form",
            "POST",
            "/reason",
            json!({"prompt": "Clip captions:\n1. a gymnast on the beam", "question": "What happens?"}),
        ),
        ("mask", "POST", "/mask", json!({"clip": clip_json(2)})),
        ("flow", "POST", "/flow", json!({"clip": clip_json(5)})),
        ("unknown_endpoint", "POST", "/nope", json!({})),
        ("bad_body", "POST", "/embed_text", json!({"txt": 1})),
        ("wrong_method", "GET", "/caption", Value::Null),
    ]
}

fn body_bytes(request: &Value) -> Vec<u8> {
    if request.is_null() {
        Vec::new()
    } else {
        serde_json::to_vec(request).expect("request serializes")
    }
}

/// Records every vector against `backends`.
pub fn record(backends: &Backends) -> Vec<ConformanceVector> {
    requests()
        .into_iter()
        .map(|(name, method, path, request)| {
            let reply = dispatch(backends, method, path, &body_bytes(&request));
            ConformanceVector {
                name: name.to_string(),
                method: method.to_string(),
                path: path.to_string(),
                status: reply.status,
                response: serde_json::from_slice(&reply.body).expect("dispatch emits JSON"),
                request,
            }
        })
        .collect()
}

impl ConformanceVector {
    pub fn body(&self) -> Vec<u8> {
        body_bytes(&self.request)
    }

    /// Status and shape check. `exact` additionally requires the recorded body.
    pub fn check(&self, status: u16, body: &Value, exact: bool) -> Result<(), String> {
        if status != self.status {
            return Err(format!("{}: status {status}, expected {}", self.name, self.status));
        }
        check_shape(&self.path, status, body).map_err(|e| format!("{}: {e}", self.name))?;
        if exact && body != &self.response {
            return Err(format!("{}: body differs from the recorded response", self.name));
        }
        Ok(())
    }
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value, String> {
    v.get(key).ok_or_else(|| format!("missing field {key:?}"))
}

fn string(v: &Value, key: &str) -> Result<(), String> {
    field(v, key)?
        .as_str()
        .map(|_| ())
        .ok_or_else(|| format!("{key:?} is not a string"))
}

fn numbers(v: &Value, key: &str, non_empty: bool) -> Result<(), String> {
    let arr = field(v, key)?
        .as_array()
        .ok_or_else(|| format!("{key:?} is not an array"))?;
    if non_empty && arr.is_empty() {
        return Err(format!("{key:?} is empty"));
    }
    if arr.iter().all(|x| x.as_f64().is_some_and(f64::is_finite)) {
        Ok(())
    } else {
        Err(format!("{key:?} holds a non-number"))
    }
}

/// Validates a reply body against the wire schema for `path`.
pub fn check_shape(path: &str, status: u16, body: &Value) -> Result<(), String> {
    if !body.is_object() {
        return Err("body is not a JSON object".into());
    }
    if status != 200 {
        return string(body, "error");
    }
    match path {
        "/health" => {
            field(body, "roles")?
                .as_array()
                .ok_or("\"roles\" is not an array")?;
            Ok(())
        }
        "/agent" | "/reason" => string(body, "text"),
        "/caption" => string(body, "caption"),
        "/score_logits" => {
            string(body, "vocab_id")?;
            numbers(body, "logits", true)
        }
        "/embed_text" | "/embed_clip" => numbers(body, "embedding", true),
        "/mask" => serde_json::from_value::<ClipPayload>(field(body, "clip")?.clone())
            .map(|_| ())
            .map_err(|e| format!("bad clip payload: {e}")),
        "/flow" => numbers(body, "magnitudes", false),
        other => Err(format!("no schema for {other}")),
    }
}
