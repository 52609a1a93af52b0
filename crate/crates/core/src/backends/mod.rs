//! Model roles behind a narrow, swappable interface.
//!
//! Every model the engine talks to (reactive agent, captioner, relevance
//! scorer, embedder, reasoner, athlete masker, optical-flow estimator) is a
//! trait object here. [`Backends`] bundles whichever roles are configured and
//! checks each response against its contract before the engine sees it.
//! Deterministic implementations live in [`mock`]; [`http`] speaks the JSON
//! wire protocol described in [`wire`].

pub mod config;
pub mod conformance;
pub mod http;
pub mod mock;
pub mod wire;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clip::ClipTensor;
use crate::contrastive::LogitVector;
use crate::ssgraph::{Embedding, SportsGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Agent,
    Captioner,
    Scorer,
    Embedder,
    Reasoner,
    Masker,
    Flow,
}

impl Role {
    pub const ALL: [Role; 7] = [
        Role::Agent,
        Role::Captioner,
        Role::Scorer,
        Role::Embedder,
        Role::Reasoner,
        Role::Masker,
        Role::Flow,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Agent => "agent",
            Role::Captioner => "captioner",
            Role::Scorer => "scorer",
            Role::Embedder => "embedder",
            Role::Reasoner => "reasoner",
            Role::Masker => "masker",
            Role::Flow => "flow",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("no {0} backend configured")]
    Unavailable(Role),
    #[error("{role} backend timed out after {timeout_ms} ms")]
    Timeout { role: Role, timeout_ms: u64 },
    #[error("{role} backend transport error: {message}")]
    Transport { role: Role, message: String },
    #[error("{role} backend returned an invalid response: {message}")]
    InvalidResponse { role: Role, message: String },
    #[error("logits for vocab {found_vocab:?} ({found_len} entries) do not match the scorer manifest ({expected_vocab:?}, {expected_len} entries)")]
    VocabMismatch {
        expected_vocab: String,
        expected_len: usize,
        found_vocab: String,
        found_len: usize,
    },
    #[error("{role} produced a vector of length {found}, expected {expected}")]
    Dimension {
        role: Role,
        expected: usize,
        found: usize,
    },
    #[error("{role} mock has no scripted response for key {key}")]
    Unscripted { role: Role, key: String },
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    pub fn invalid(role: Role, message: impl Into<String>) -> Self {
        BackendError::InvalidResponse {
            role,
            message: message.into(),
        }
    }
}

/// What a scorer declares about its output vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerManifest {
    pub vocab_id: String,
    pub vocab_size: usize,
    /// Index of the token read as "relevant"; `None` when the vocabulary has none.
    pub affirmative_token_index: Option<usize>,
}

/// Reactive reasoning agent: one multimodal call over the whole video.
pub trait Agent: Send + Sync {
    fn respond(&self, video: &ClipTensor, prompt: &str) -> Result<String, BackendError>;
}

pub trait Captioner: Send + Sync {
    fn caption(&self, clip: &ClipTensor) -> Result<String, BackendError>;
}

pub trait Scorer: Send + Sync {
    fn manifest(&self) -> ScorerManifest;
    /// Pre-softmax logits for the next token given the clip and prompt.
    fn score_logits(&self, clip: &ClipTensor, prompt: &str) -> Result<LogitVector, BackendError>;
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_text(&self, text: &str) -> Result<Embedding, BackendError>;
    fn embed_clip(&self, clip: &ClipTensor) -> Result<Embedding, BackendError>;
}

pub trait Reasoner: Send + Sync {
    fn reason(
        &self,
        prompt: &str,
        question: &str,
        options: Option<&[String]>,
    ) -> Result<String, BackendError>;
}

/// Highlights athletes; returns a clip of the same shape.
pub trait Masker: Send + Sync {
    fn mask(&self, clip: &ClipTensor) -> Result<ClipTensor, BackendError>;
}

/// Mean optical-flow magnitude for every consecutive frame pair.
pub trait FlowEstimator: Send + Sync {
    fn flow_magnitudes(&self, clip: &ClipTensor) -> Result<Vec<f64>, BackendError>;
}

macro_rules! forward_arc {
    ($($tr:ident { $(fn $name:ident(&self $(, $arg:ident: $ty:ty)*) -> $ret:ty;)* })*) => {$(
        impl<T: $tr + ?Sized> $tr for Arc<T> {
            $(fn $name(&self $(, $arg: $ty)*) -> $ret { (**self).$name($($arg),*) })*
        }
    )*};
}

forward_arc! {
    Agent { fn respond(&self, video: &ClipTensor, prompt: &str) -> Result<String, BackendError>; }
    Captioner { fn caption(&self, clip: &ClipTensor) -> Result<String, BackendError>; }
    Scorer {
        fn manifest(&self) -> ScorerManifest;
        fn score_logits(&self, clip: &ClipTensor, prompt: &str) -> Result<LogitVector, BackendError>;
    }
    Embedder {
        fn dim(&self) -> usize;
        fn embed_text(&self, text: &str) -> Result<Embedding, BackendError>;
        fn embed_clip(&self, clip: &ClipTensor) -> Result<Embedding, BackendError>;
    }
    Reasoner {
        fn reason(&self, prompt: &str, question: &str, options: Option<&[String]>) -> Result<String, BackendError>;
    }
    Masker { fn mask(&self, clip: &ClipTensor) -> Result<ClipTensor, BackendError>; }
    FlowEstimator { fn flow_magnitudes(&self, clip: &ClipTensor) -> Result<Vec<f64>, BackendError>; }
}

/// Wraps any backend and counts the calls made through it.
#[derive(Debug, Default)]
pub struct Counted<T> {
    inner: T,
    calls: AtomicUsize,
}

impl<T> Counted<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }

    fn tick(&self) {
        self.calls.fetch_add(1, Ordering::SeqCst);
    }
}

impl<T: Agent> Agent for Counted<T> {
    fn respond(&self, video: &ClipTensor, prompt: &str) -> Result<String, BackendError> {
        self.tick();
        self.inner.respond(video, prompt)
    }
}

impl<T: Captioner> Captioner for Counted<T> {
    fn caption(&self, clip: &ClipTensor) -> Result<String, BackendError> {
        self.tick();
        self.inner.caption(clip)
    }
}

impl<T: Scorer> Scorer for Counted<T> {
    fn manifest(&self) -> ScorerManifest {
        self.inner.manifest()
    }

    fn score_logits(&self, clip: &ClipTensor, prompt: &str) -> Result<LogitVector, BackendError> {
        self.tick();
        self.inner.score_logits(clip, prompt)
    }
}

impl<T: Embedder> Embedder for Counted<T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, BackendError> {
        self.tick();
        self.inner.embed_text(text)
    }

    fn embed_clip(&self, clip: &ClipTensor) -> Result<Embedding, BackendError> {
        self.tick();
        self.inner.embed_clip(clip)
    }
}

impl<T: Reasoner> Reasoner for Counted<T> {
    fn reason(
        &self,
        prompt: &str,
        question: &str,
        options: Option<&[String]>,
    ) -> Result<String, BackendError> {
        self.tick();
        self.inner.reason(prompt, question, options)
    }
}

impl<T: Masker> Masker for Counted<T> {
    fn mask(&self, clip: &ClipTensor) -> Result<ClipTensor, BackendError> {
        self.tick();
        self.inner.mask(clip)
    }
}

impl<T: FlowEstimator> FlowEstimator for Counted<T> {
    fn flow_magnitudes(&self, clip: &ClipTensor) -> Result<Vec<f64>, BackendError> {
        self.tick();
        self.inner.flow_magnitudes(clip)
    }
}

/// The configured model roles. Absent roles fail with
/// [`BackendError::Unavailable`] only when a stage actually needs them.
#[derive(Clone, Default)]
pub struct Backends {
    pub agent: Option<Arc<dyn Agent>>,
    pub captioner: Option<Arc<dyn Captioner>>,
    pub scorer: Option<Arc<dyn Scorer>>,
    pub embedder: Option<Arc<dyn Embedder>>,
    pub reasoner: Option<Arc<dyn Reasoner>>,
    pub masker: Option<Arc<dyn Masker>>,
    pub flow: Option<Arc<dyn FlowEstimator>>,
}

impl fmt::Debug for Backends {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.configured_roles()).finish()
    }
}

fn required<T: ?Sized>(slot: &Option<Arc<T>>, role: Role) -> Result<&T, BackendError> {
    slot.as_deref().ok_or(BackendError::Unavailable(role))
}

fn check_embedding(role: Role, dim: usize, v: Embedding) -> Result<Embedding, BackendError> {
    if v.len() != dim {
        return Err(BackendError::Dimension {
            role,
            expected: dim,
            found: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(BackendError::invalid(role, "embedding has non-finite values"));
    }
    if v.iter().all(|&x| x == 0.0) {
        return Err(BackendError::invalid(role, "embedding is all zero"));
    }
    Ok(v)
}

impl Backends {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_agent(mut self, b: impl Agent + 'static) -> Self {
        self.agent = Some(Arc::new(b));
        self
    }

    pub fn with_captioner(mut self, b: impl Captioner + 'static) -> Self {
        self.captioner = Some(Arc::new(b));
        self
    }

    pub fn with_scorer(mut self, b: impl Scorer + 'static) -> Self {
        self.scorer = Some(Arc::new(b));
        self
    }

    pub fn with_embedder(mut self, b: impl Embedder + 'static) -> Self {
        self.embedder = Some(Arc::new(b));
        self
    }

    pub fn with_reasoner(mut self, b: impl Reasoner + 'static) -> Self {
        self.reasoner = Some(Arc::new(b));
        self
    }

    pub fn with_masker(mut self, b: impl Masker + 'static) -> Self {
        self.masker = Some(Arc::new(b));
        self
    }

    pub fn with_flow(mut self, b: impl FlowEstimator + 'static) -> Self {
        self.flow = Some(Arc::new(b));
        self
    }

    pub fn configured_roles(&self) -> Vec<Role> {
        let present = [
            self.agent.is_some(),
            self.captioner.is_some(),
            self.scorer.is_some(),
            self.embedder.is_some(),
            self.reasoner.is_some(),
            self.masker.is_some(),
            self.flow.is_some(),
        ];
        Role::ALL
            .into_iter()
            .zip(present)
            .filter_map(|(r, p)| p.then_some(r))
            .collect()
    }

    pub fn agent(&self) -> Result<&dyn Agent, BackendError> {
        required(&self.agent, Role::Agent)
    }

    pub fn captioner(&self) -> Result<&dyn Captioner, BackendError> {
        required(&self.captioner, Role::Captioner)
    }

    pub fn scorer(&self) -> Result<&dyn Scorer, BackendError> {
        required(&self.scorer, Role::Scorer)
    }

    pub fn embedder(&self) -> Result<&dyn Embedder, BackendError> {
        required(&self.embedder, Role::Embedder)
    }

    pub fn reasoner(&self) -> Result<&dyn Reasoner, BackendError> {
        required(&self.reasoner, Role::Reasoner)
    }

    pub fn masker(&self) -> Option<&dyn Masker> {
        self.masker.as_deref()
    }

    pub fn flow(&self) -> Result<&dyn FlowEstimator, BackendError> {
        required(&self.flow, Role::Flow)
    }

    pub fn respond(&self, video: &ClipTensor, prompt: &str) -> Result<String, BackendError> {
        let text = self.agent()?.respond(video, prompt)?;
        if text.trim().is_empty() {
            return Err(BackendError::invalid(Role::Agent, "empty response"));
        }
        Ok(text)
    }

    /// Caption for one clip; empty captions are rejected.
    pub fn caption(&self, clip: &ClipTensor) -> Result<String, BackendError> {
        let text = self.captioner()?.caption(clip)?;
        if text.trim().is_empty() {
            return Err(BackendError::invalid(Role::Captioner, "empty caption"));
        }
        Ok(text)
    }

    /// Logits checked against the scorer's declared vocabulary.
    pub fn score_logits(&self, clip: &ClipTensor, prompt: &str) -> Result<LogitVector, BackendError> {
        let scorer = self.scorer()?;
        let manifest = scorer.manifest();
        let logits = scorer.score_logits(clip, prompt)?;
        if logits.vocab_id != manifest.vocab_id || logits.values.len() != manifest.vocab_size {
            return Err(BackendError::VocabMismatch {
                expected_vocab: manifest.vocab_id,
                expected_len: manifest.vocab_size,
                found_vocab: logits.vocab_id,
                found_len: logits.values.len(),
            });
        }
        if logits.values.iter().any(|v| !v.is_finite()) {
            return Err(BackendError::invalid(Role::Scorer, "non-finite logit"));
        }
        Ok(logits)
    }

    pub fn embed_text(&self, text: &str) -> Result<Embedding, BackendError> {
        let e = self.embedder()?;
        check_embedding(Role::Embedder, e.dim(), e.embed_text(text)?)
    }

    pub fn embed_clip(&self, clip: &ClipTensor) -> Result<Embedding, BackendError> {
        let e = self.embedder()?;
        check_embedding(Role::Embedder, e.dim(), e.embed_clip(clip)?)
    }

    pub fn reason(
        &self,
        prompt: &str,
        question: &str,
        options: Option<&[String]>,
    ) -> Result<String, BackendError> {
        self.reasoner()?.reason(prompt, question, options)
    }

    /// Applies the masker when one is configured, otherwise returns the clip unchanged.
    pub fn mask(&self, clip: &ClipTensor) -> Result<ClipTensor, BackendError> {
        let Some(m) = self.masker() else {
            return Ok(clip.clone());
        };
        let out = m.mask(clip)?;
        if out.shape() != clip.shape() {
            return Err(BackendError::invalid(
                Role::Masker,
                format!("mask changed clip shape {:?} -> {:?}", clip.shape(), out.shape()),
            ));
        }
        Ok(out)
    }

    pub fn flow_magnitudes(&self, clip: &ClipTensor) -> Result<Vec<f64>, BackendError> {
        let values = self.flow()?.flow_magnitudes(clip)?;
        let expected = clip.frame_count().saturating_sub(1);
        if values.len() != expected {
            return Err(BackendError::Dimension {
                role: Role::Flow,
                expected,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(BackendError::invalid(
                Role::Flow,
                "flow magnitudes must be finite and non-negative",
            ));
        }
        Ok(values)
    }

    /// Wiring-time check that the embedder matches the graph's dimension.
    pub fn check_graph(&self, graph: &SportsGraph) -> Result<(), BackendError> {
        if let Some(e) = &self.embedder {
            if e.dim() != graph.embedding_dim {
                return Err(BackendError::Dimension {
                    role: Role::Embedder,
                    expected: graph.embedding_dim,
                    found: e.dim(),
                });
            }
        }
        if let Some(s) = &self.scorer {
            let m = s.manifest();
            if let Some(i) = m.affirmative_token_index {
                if i >= m.vocab_size {
                    return Err(BackendError::Config(format!(
                        "scorer affirmative_token_index {i} is outside vocab of size {}",
                        m.vocab_size
                    )));
                }
            }
        }
        Ok(())
    }
}
