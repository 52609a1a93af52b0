//! Backend configuration file: a JSON object mapping role name to manifest.
//!
//! ```json
//! {
//!   "scorer":   {"endpoint": "http://127.0.0.1:8100", "timeout_ms": 30000,
//!                "vocab_id": "llava-next", "vocab_size": 32064, "affirmative_token_index": 3869},
//!   "embedder": {"endpoint": "mock", "embedding_dim": 768}
//! }
//! ```
//!
//! An endpoint of `mock` (or `mock:<anything>`) selects the built-in
//! deterministic mock for that role. `FINEQUEST_<ROLE>_ENDPOINT` overrides
//! the endpoint of a configured role.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::http::HttpBackend;
use super::mock::{
    yes_no_manifest, FrameDiffFlow, HashEmbedder, IdentityMasker, KeywordAgent, OverlapReasoner,
    ScriptedScorer, StatsCaptioner,
};
use super::{BackendError, Backends, Role, ScorerManifest};

fn default_timeout() -> u64 {
    60_000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    pub endpoint: String,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affirmative_token_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline_limit_bytes: Option<usize>,
}

impl BackendManifest {
    pub fn mock() -> Self {
        Self {
            role: None,
            endpoint: "mock".to_string(),
            timeout_ms: default_timeout(),
            vocab_id: None,
            vocab_size: None,
            affirmative_token_index: None,
            embedding_dim: None,
            inline_limit_bytes: None,
        }
    }

    pub fn is_mock(&self) -> bool {
        self.endpoint == "mock" || self.endpoint.starts_with("mock:")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BackendConfig {
    pub roles: BTreeMap<Role, BackendManifest>,
}

impl BackendConfig {
    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| BackendError::Config(format!("cannot parse backend config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Every role served by its built-in mock.
    pub fn all_mock(embedding_dim: usize) -> Self {
        let mut roles = BTreeMap::new();
        for role in Role::ALL {
            let mut m = BackendManifest::mock();
            if role == Role::Embedder {
                m.embedding_dim = Some(embedding_dim);
            }
            roles.insert(role, m);
        }
        Self { roles }
    }

    /// Replaces endpoints from `FINEQUEST_<ROLE>_ENDPOINT` variables.
    pub fn apply_env(&mut self) {
        self.apply_overrides(|key| std::env::var(key).ok());
    }

    pub fn apply_overrides(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        for (role, m) in self.roles.iter_mut() {
            let key = format!("FINEQUEST_{}_ENDPOINT", role.as_str().to_uppercase());
            if let Some(v) = lookup(&key) {
                m.endpoint = v;
            }
        }
    }

    fn check(&self) -> Result<(), BackendError> {
        for (role, m) in &self.roles {
            if let Some(r) = m.role {
                if r != *role {
                    return Err(BackendError::Config(format!(
                        "manifest under {role:?} declares role {r:?}"
                    )));
                }
            }
            if m.timeout_ms == 0 {
                return Err(BackendError::Config(format!("{role}: timeout_ms must be positive")));
            }
            if let (Some(i), Some(n)) = (m.affirmative_token_index, m.vocab_size) {
                if i >= n {
                    return Err(BackendError::Config(format!(
                        "{role}: affirmative_token_index {i} >= vocab_size {n}"
                    )));
                }
            }
            if *role == Role::Embedder && m.embedding_dim.is_none() {
                return Err(BackendError::Config("embedder: embedding_dim is required".into()));
            }
            if *role == Role::Scorer && !m.is_mock() && (m.vocab_id.is_none() || m.vocab_size.is_none()) {
                return Err(BackendError::Config(
                    "scorer: vocab_id and vocab_size are required".into(),
                ));
            }
        }
        Ok(())
    }

    /// Instantiates every configured role. `mock_seed` seeds the mock embedder.
    pub fn build(&self, mock_seed: u64) -> Result<Backends, BackendError> {
        self.check()?;
        let mut b = Backends::new();
        for (&role, m) in &self.roles {
            if m.is_mock() {
                install_mock(&mut b, role, m, mock_seed);
                continue;
            }
            let mut client = HttpBackend::new(role, &m.endpoint, m.timeout_ms);
            if let Some(n) = m.inline_limit_bytes {
                client = client.with_inline_limit(n);
            }
            if let Some(d) = m.embedding_dim {
                client = client.with_embedding_dim(d);
            }
            if let (Some(id), Some(n)) = (&m.vocab_id, m.vocab_size) {
                client = client.with_scorer_manifest(ScorerManifest {
                    vocab_id: id.clone(),
                    vocab_size: n,
                    affirmative_token_index: m.affirmative_token_index,
                });
            }
            let client = Arc::new(client);
            match role {
                Role::Agent => b.agent = Some(client),
                Role::Captioner => b.captioner = Some(client),
                Role::Scorer => b.scorer = Some(client),
                Role::Embedder => b.embedder = Some(client),
                Role::Reasoner => b.reasoner = Some(client),
                Role::Masker => b.masker = Some(client),
                Role::Flow => b.flow = Some(client),
            }
        }
        Ok(b)
    }
}

fn install_mock(b: &mut Backends, role: Role, m: &BackendManifest, seed: u64) {
    match role {
        Role::Agent => b.agent = Some(Arc::new(KeywordAgent)),
        Role::Captioner => b.captioner = Some(Arc::new(StatsCaptioner)),
        Role::Scorer => {
            let mut manifest = yes_no_manifest();
            if let Some(i) = m.affirmative_token_index {
                manifest.affirmative_token_index = Some(i);
            }
            let gain = 8.0;
            let scorer = ScriptedScorer::new(manifest).with_fallback(move |clip, _| {
                let mean = clip.data().iter().map(|&v| v as f64).sum::<f64>()
                    / clip.data().len().max(1) as f64;
                vec![gain * (mean - 0.5), 0.0]
            });
            b.scorer = Some(Arc::new(scorer));
        }
        Role::Embedder => {
            b.embedder = Some(Arc::new(HashEmbedder::new(
                m.embedding_dim.unwrap_or(8),
                seed,
            )))
        }
        Role::Reasoner => b.reasoner = Some(Arc::new(OverlapReasoner)),
        Role::Masker => b.masker = Some(Arc::new(IdentityMasker)),
        Role::Flow => b.flow = Some(Arc::new(FrameDiffFlow)),
    }
}
