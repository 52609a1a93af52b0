//! Blocking HTTP client for the wire protocol.

use std::path::PathBuf;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{
    CaptionResponse, ClipPayload, ClipPromptRequest, ClipRequest, ClipResponse,
    EmbeddingResponse, FlowResponse, HealthResponse, LogitsResponse, ReasonRequest,
    TextRequest, TextResponse, DEFAULT_INLINE_LIMIT,
};
use super::{
    Agent, BackendError, Captioner, Embedder, FlowEstimator, Masker, Reasoner, Role, Scorer,
    ScorerManifest,
};
use crate::clip::ClipTensor;
use crate::contrastive::LogitVector;
use crate::ssgraph::Embedding;

/// One remote role. Concurrent calls share the connection pool.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    role: Role,
    base: String,
    timeout_ms: u64,
    agent: ureq::Agent,
    inline_limit: usize,
    spool_dir: PathBuf,
    scorer: Option<ScorerManifest>,
    embedding_dim: Option<usize>,
}

impl HttpBackend {
    pub fn new(role: Role, endpoint: &str, timeout_ms: u64) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .build()
            .into();
        Self {
            role,
            base: endpoint.trim_end_matches('/').to_string(),
            timeout_ms,
            agent,
            inline_limit: DEFAULT_INLINE_LIMIT,
            spool_dir: std::env::temp_dir().join("finequest-spool"),
            scorer: None,
            embedding_dim: None,
        }
    }

    pub fn with_scorer_manifest(mut self, m: ScorerManifest) -> Self {
        self.scorer = Some(m);
        self
    }

    pub fn with_embedding_dim(mut self, dim: usize) -> Self {
        self.embedding_dim = Some(dim);
        self
    }

    pub fn with_inline_limit(mut self, bytes: usize) -> Self {
        self.inline_limit = bytes;
        self
    }

    pub fn with_spool_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.spool_dir = dir.into();
        self
    }

    pub fn role(&self) -> Role {
        self.role
    }

    fn map_err(&self, e: ureq::Error) -> BackendError {
        match e {
            ureq::Error::Timeout(_) => BackendError::Timeout {
                role: self.role,
                timeout_ms: self.timeout_ms,
            },
            ureq::Error::Json(e) => BackendError::invalid(self.role, e.to_string()),
            ureq::Error::StatusCode(code) => BackendError::Transport {
                role: self.role,
                message: format!("HTTP status {code}"),
            },
            other => BackendError::Transport {
                role: self.role,
                message: other.to_string(),
            },
        }
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        req: &Req,
    ) -> Result<Resp, BackendError> {
        let url = format!("{}{}", self.base, path);
        log::debug!("POST {url}");
        let mut resp = self.agent.post(&url).send_json(req).map_err(|e| self.map_err(e))?;
        resp.body_mut()
            .with_config()
            .limit(u64::MAX)
            .read_json::<Resp>()
            .map_err(|e| self.map_err(e))
    }

    fn payload(&self, clip: &ClipTensor) -> Result<ClipPayload, BackendError> {
        ClipPayload::encode(clip, self.inline_limit, &self.spool_dir).map_err(|e| {
            BackendError::Transport {
                role: self.role,
                message: format!("cannot spool clip: {e}"),
            }
        })
    }

    pub fn health(&self) -> Result<HealthResponse, BackendError> {
        let url = format!("{}/health", self.base);
        let mut resp = self.agent.get(&url).call().map_err(|e| self.map_err(e))?;
        resp.body_mut()
            .read_json::<HealthResponse>()
            .map_err(|e| self.map_err(e))
    }
}

impl Agent for HttpBackend {
    fn respond(&self, video: &ClipTensor, prompt: &str) -> Result<String, BackendError> {
        let r: TextResponse = self.post(
            "/agent",
            &ClipPromptRequest {
                clip: self.payload(video)?,
                prompt: prompt.to_string(),
            },
        )?;
        Ok(r.text)
    }
}

impl Captioner for HttpBackend {
    fn caption(&self, clip: &ClipTensor) -> Result<String, BackendError> {
        let r: CaptionResponse = self.post(
            "/caption",
            &ClipRequest {
                clip: self.payload(clip)?,
            },
        )?;
        Ok(r.caption)
    }
}

impl Scorer for HttpBackend {
    fn manifest(&self) -> ScorerManifest {
        self.scorer.clone().unwrap_or(ScorerManifest {
            vocab_id: String::new(),
            vocab_size: 0,
            affirmative_token_index: None,
        })
    }

    fn score_logits(&self, clip: &ClipTensor, prompt: &str) -> Result<LogitVector, BackendError> {
        let r: LogitsResponse = self.post(
            "/score_logits",
            &ClipPromptRequest {
                clip: self.payload(clip)?,
                prompt: prompt.to_string(),
            },
        )?;
        Ok(LogitVector::new(&r.vocab_id, r.logits))
    }
}

impl Embedder for HttpBackend {
    fn dim(&self) -> usize {
        self.embedding_dim.unwrap_or(0)
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, BackendError> {
        let r: EmbeddingResponse = self.post(
            "/embed_text",
            &TextRequest {
                text: text.to_string(),
            },
        )?;
        Ok(r.embedding)
    }

    fn embed_clip(&self, clip: &ClipTensor) -> Result<Embedding, BackendError> {
        let r: EmbeddingResponse = self.post(
            "/embed_clip",
            &ClipRequest {
                clip: self.payload(clip)?,
            },
        )?;
        Ok(r.embedding)
    }
}

impl Reasoner for HttpBackend {
    fn reason(
        &self,
        prompt: &str,
        question: &str,
        options: Option<&[String]>,
    ) -> Result<String, BackendError> {
        let r: TextResponse = self.post(
            "/reason",
            &ReasonRequest {
                prompt: prompt.to_string(),
                question: question.to_string(),
                options: options.map(|o| o.to_vec()),
            },
        )?;
        Ok(r.text)
    }
}

impl Masker for HttpBackend {
    fn mask(&self, clip: &ClipTensor) -> Result<ClipTensor, BackendError> {
        let r: ClipResponse = self.post(
            "/mask",
            &ClipRequest {
                clip: self.payload(clip)?,
            },
        )?;
        r.clip
            .decode()
            .map_err(|e| BackendError::invalid(self.role, e.to_string()))
    }
}

impl FlowEstimator for HttpBackend {
    fn flow_magnitudes(&self, clip: &ClipTensor) -> Result<Vec<f64>, BackendError> {
        let r: FlowResponse = self.post(
            "/flow",
            &ClipRequest {
                clip: self.payload(clip)?,
            },
        )?;
        Ok(r.magnitudes)
    }
}
