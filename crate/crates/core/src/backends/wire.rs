//! JSON-over-HTTP schema shared by the engine's client and any model server.
//!
//! | endpoint        | request                               | response                     |
//! |-----------------|---------------------------------------|------------------------------|
//! | `/agent`        | `{clip, prompt}`                      | `{text}`                     |
//! | `/caption`      | `{clip}`                              | `{caption}`                  |
//! | `/score_logits` | `{clip, prompt}`                      | `{vocab_id, logits}`         |
//! | `/embed_text`   | `{text}`                              | `{embedding}`                |
//! | `/embed_clip`   | `{clip}`                              | `{embedding}`                |
//! | `/reason`       | `{prompt, question, options?}`        | `{text}`                     |
//! | `/mask`         | `{clip}`                              | `{clip}`                     |
//! | `/flow`         | `{clip}`                              | `{magnitudes}`               |
//! | `GET /health`   |                                       | `{roles, scorer?, embedding_dim?}` |
//!
//! Clips travel inline as base64 little-endian `f32` when small, or as a
//! path to a raw little-endian `f32` file otherwise.

use std::fs;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{BackendError, Backends, Role, ScorerManifest};
use crate::clip::{ClipError, ClipTensor};
use crate::ssgraph::Embedding;

/// Clips above this many bytes are spooled to disk and sent by path.
pub const DEFAULT_INLINE_LIMIT: usize = 8 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClipPayload {
    Inline {
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        fps: f64,
        data_b64: String,
    },
    Path {
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        fps: f64,
        path: String,
    },
}

impl ClipPayload {
    pub fn inline(clip: &ClipTensor) -> Self {
        let (frames, height, width, channels) = clip.shape();
        ClipPayload::Inline {
            frames,
            height,
            width,
            channels,
            fps: clip.fps(),
            data_b64: B64.encode(clip.to_le_bytes()),
        }
    }

    /// Inline when the raw size is at most `inline_limit` bytes, otherwise
    /// written to `spool_dir/<content hash>.f32` and referenced by path.
    pub fn encode(clip: &ClipTensor, inline_limit: usize, spool_dir: &Path) -> std::io::Result<Self> {
        let raw = clip.data().len() * 4;
        if raw <= inline_limit {
            return Ok(Self::inline(clip));
        }
        fs::create_dir_all(spool_dir)?;
        let path: PathBuf = spool_dir.join(format!("{}.f32", clip.content_hash()));
        if !path.exists() {
            fs::write(&path, clip.to_le_bytes())?;
        }
        let (frames, height, width, channels) = clip.shape();
        Ok(ClipPayload::Path {
            frames,
            height,
            width,
            channels,
            fps: clip.fps(),
            path: path.display().to_string(),
        })
    }

    pub fn decode(&self) -> Result<ClipTensor, ClipError> {
        match self {
            ClipPayload::Inline {
                frames,
                height,
                width,
                channels,
                fps,
                data_b64,
            } => {
                let bytes = B64.decode(data_b64).map_err(|e| {
                    ClipError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
                })?;
                ClipTensor::from_le_bytes(*frames, *height, *width, *channels, *fps, &bytes)
            }
            ClipPayload::Path {
                frames,
                height,
                width,
                channels,
                fps,
                path,
            } => {
                let bytes = fs::read(path)?;
                ClipTensor::from_le_bytes(*frames, *height, *width, *channels, *fps, &bytes)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipRequest {
    pub clip: ClipPayload,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipPromptRequest {
    pub clip: ClipPayload,
    pub prompt: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReasonRequest {
    pub prompt: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextResponse {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaptionResponse {
    pub caption: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogitsResponse {
    pub vocab_id: String,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingResponse {
    pub embedding: Embedding,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipResponse {
    pub clip: ClipPayload,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowResponse {
    pub magnitudes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub roles: Vec<Role>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer: Option<ScorerManifest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
}

/// A status code plus JSON body, ready to hand to any HTTP server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireReply {
    pub status: u16,
    pub body: Vec<u8>,
}

impl WireReply {
    fn json<T: Serialize>(status: u16, v: &T) -> Self {
        Self {
            status,
            body: serde_json::to_vec(v).expect("wire types serialize"),
        }
    }

    fn error(status: u16, message: impl Into<String>) -> Self {
        Self::json(
            status,
            &ErrorResponse {
                error: message.into(),
            },
        )
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, WireReply> {
    serde_json::from_slice(body).map_err(|e| WireReply::error(400, format!("bad request body: {e}")))
}

fn decode_clip(p: &ClipPayload) -> Result<ClipTensor, WireReply> {
    p.decode()
        .map_err(|e| WireReply::error(400, format!("bad clip payload: {e}")))
}

fn backend_reply(e: BackendError) -> WireReply {
    let status = match e {
        BackendError::Unavailable(_) => 404,
        BackendError::Timeout { .. } => 504,
        _ => 500,
    };
    WireReply::error(status, e.to_string())
}

/// Serves one wire request with the given backends. Responses pass through
/// the same checks the engine applies, so a conforming server built on
/// [`Backends`] always emits schema-valid payloads.
pub fn dispatch(backends: &Backends, method: &str, path: &str, body: &[u8]) -> WireReply {
    match handle(backends, method, path, body) {
        Ok(r) | Err(r) => r,
    }
}

fn handle(b: &Backends, method: &str, path: &str, body: &[u8]) -> Result<WireReply, WireReply> {
    let path = path.split('?').next().unwrap_or(path);
    if method.eq_ignore_ascii_case("GET") && path == "/health" {
        return Ok(WireReply::json(200, &health(b)));
    }
    if !method.eq_ignore_ascii_case("POST") {
        return Err(WireReply::error(405, "method not allowed"));
    }
    let reply = match path {
        "/agent" => {
            let req: ClipPromptRequest = parse(body)?;
            let text = b.respond(&decode_clip(&req.clip)?, &req.prompt).map_err(backend_reply)?;
            WireReply::json(200, &TextResponse { text })
        }
        "/caption" => {
            let req: ClipRequest = parse(body)?;
            let caption = b.caption(&decode_clip(&req.clip)?).map_err(backend_reply)?;
            WireReply::json(200, &CaptionResponse { caption })
        }
        "/score_logits" => {
            let req: ClipPromptRequest = parse(body)?;
            let l = b
                .score_logits(&decode_clip(&req.clip)?, &req.prompt)
                .map_err(backend_reply)?;
            WireReply::json(
                200,
                &LogitsResponse {
                    vocab_id: l.vocab_id,
                    logits: l.values,
                },
            )
        }
        "/embed_text" => {
            let req: TextRequest = parse(body)?;
            let embedding = b.embed_text(&req.text).map_err(backend_reply)?;
            WireReply::json(200, &EmbeddingResponse { embedding })
        }
        "/embed_clip" => {
            let req: ClipRequest = parse(body)?;
            let embedding = b.embed_clip(&decode_clip(&req.clip)?).map_err(backend_reply)?;
            WireReply::json(200, &EmbeddingResponse { embedding })
        }
        "/reason" => {
            let req: ReasonRequest = parse(body)?;
            let text = b
                .reason(&req.prompt, &req.question, req.options.as_deref())
                .map_err(backend_reply)?;
            WireReply::json(200, &TextResponse { text })
        }
        "/mask" => {
            let req: ClipRequest = parse(body)?;
            if b.masker().is_none() {
                return Err(backend_reply(BackendError::Unavailable(Role::Masker)));
            }
            let clip = b.mask(&decode_clip(&req.clip)?).map_err(backend_reply)?;
            WireReply::json(
                200,
                &ClipResponse {
                    clip: ClipPayload::inline(&clip),
                },
            )
        }
        "/flow" => {
            let req: ClipRequest = parse(body)?;
            let magnitudes = b
                .flow_magnitudes(&decode_clip(&req.clip)?)
                .map_err(backend_reply)?;
            WireReply::json(200, &FlowResponse { magnitudes })
        }
        other => return Err(WireReply::error(404, format!("unknown endpoint {other}"))),
    };
    Ok(reply)
}

pub fn health(b: &Backends) -> HealthResponse {
    HealthResponse {
        roles: b.configured_roles(),
        scorer: b.scorer.as_ref().map(|s| s.manifest()),
        embedding_dim: b.embedder.as_ref().map(|e| e.dim()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_inline_and_spooled_roundtrip() {
        let clip = ClipTensor::from_fn(3, 2, 2, 1, 12.0, |t, y, x, _| {
            (t * 4 + y * 2 + x) as f32 / 12.0
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let inline = ClipPayload::encode(&clip, 1 << 20, dir.path()).unwrap();
        assert!(matches!(inline, ClipPayload::Inline { .. }));
        assert_eq!(inline.decode().unwrap(), clip);
        let spooled = ClipPayload::encode(&clip, 8, dir.path()).unwrap();
        assert!(matches!(spooled, ClipPayload::Path { .. }));
        assert_eq!(spooled.decode().unwrap(), clip);
    }

    #[test]
    fn unknown_endpoint_and_method() {
        let b = Backends::new();
        assert_eq!(dispatch(&b, "POST", "/nope", b"{}").status, 404);
        assert_eq!(dispatch(&b, "PUT", "/caption", b"{}").status, 405);
        assert_eq!(dispatch(&b, "POST", "/caption", b"not json").status, 400);
        assert_eq!(dispatch(&b, "POST", "/embed_text", br#"{"text":"x"}"#).status, 404);
    }
}
