//! Question answering over HTTP: `POST /answer {video_ref, question, options?, force_mode?}`
//! returns a [`RoutedAnswer`]. Stage failures come back as
//! `{"error", "stage", "trace"}` with status 502 for backend faults and 422 otherwise.

use serde::{Deserialize, Serialize};

use crate::backends::wire::{health, WireReply};
use crate::eval::VideoSource;
use crate::router::{Engine, Mode, RoutedAnswer, Stage, StageRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub video_ref: String,
    pub question: String,
    #[serde(default)]
    pub options: Option<Vec<String>>,
    #[serde(default)]
    pub force_mode: Option<Mode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerError {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<StageRecord>,
}

fn reply<T: Serialize>(status: u16, v: &T) -> WireReply {
    WireReply {
        status,
        body: serde_json::to_vec(v).expect("service types serialize"),
    }
}

fn error(status: u16, message: String) -> WireReply {
    reply(
        status,
        &AnswerError {
            error: message,
            stage: None,
            trace: Vec::new(),
        },
    )
}

pub fn answer_request(engine: &Engine, source: &dyn VideoSource, req: &AnswerRequest) -> Result<RoutedAnswer, WireReply> {
    let video = source
        .load(&req.video_ref)
        .map_err(|e| error(404, format!("video {}: {e}", req.video_ref)))?;
    engine
        .answer(&video, &req.question, req.options.as_deref(), req.force_mode)
        .map_err(|e| {
            let status = if e.is_backend() { 502 } else { 422 };
            reply(
                status,
                &AnswerError {
                    error: e.to_string(),
                    stage: Some(e.stage),
                    trace: e.trace,
                },
            )
        })
}

/// Routes one request of the answering service.
pub fn dispatch(engine: &Engine, source: &dyn VideoSource, method: &str, path: &str, body: &[u8]) -> WireReply {
    let path = path.split('?').next().unwrap_or(path);
    match (method.to_ascii_uppercase().as_str(), path) {
        ("GET", "/health") => reply(200, &health(&engine.backends)),
        ("POST", "/answer") => {
            let req: AnswerRequest = match serde_json::from_slice(body) {
                Ok(r) => r,
                Err(e) => return error(400, format!("bad request body: {e}")),
            };
            match answer_request(engine, source, &req) {
                Ok(a) => reply(200, &a),
                Err(r) => r,
            }
        }
        (_, "/answer") | (_, "/health") => error(405, "method not allowed".into()),
        _ => error(404, format!("unknown endpoint {path}")),
    }
}
