//! Deterministic stand-ins for every model role.
//!
//! Each mock is a pure function of its inputs and seed. Scripted mocks look
//! responses up in fixture tables keyed by clip content hash, prompt hash or
//! question text, and fall back to an optional closure.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{
    Agent, BackendError, Captioner, Embedder, FlowEstimator, Masker, Reasoner, Role, Scorer,
    ScorerManifest,
};
use crate::clip::ClipTensor;
use crate::contrastive::LogitVector;
use crate::motion;
use crate::ssgraph::Embedding;

type LogitFn = dyn Fn(&ClipTensor, &str) -> Vec<f64> + Send + Sync;
type ReasonFn = dyn Fn(&str, &str, Option<&[String]>) -> String + Send + Sync;
type PromptFn = dyn Fn(&str) -> String + Send + Sync;

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// SHA-256 of `(seed, key)` seeds a ChaCha stream of standard normals,
/// which is then L2-normalized.
pub fn hash_to_unit_vector(seed: u64, key: &str, dim: usize) -> Embedding {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(key.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Hash-seeded unit-vector embedder with optional fixed vectors.
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
    texts: HashMap<String, Embedding>,
    clips: HashMap<String, Embedding>,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            texts: HashMap::new(),
            clips: HashMap::new(),
        }
    }

    pub fn with_text(mut self, text: &str, v: Embedding) -> Self {
        self.texts.insert(text.to_string(), v);
        self
    }

    /// Fixed vector for a clip, keyed by [`ClipTensor::content_hash`].
    pub fn with_clip(mut self, clip_hash: &str, v: Embedding) -> Self {
        self.clips.insert(clip_hash.to_string(), v);
        self
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, BackendError> {
        Ok(self
            .texts
            .get(text)
            .cloned()
            .unwrap_or_else(|| hash_to_unit_vector(self.seed, &format!("text:{text}"), self.dim)))
    }

    fn embed_clip(&self, clip: &ClipTensor) -> Result<Embedding, BackendError> {
        let h = clip.content_hash();
        Ok(self
            .clips
            .get(&h)
            .cloned()
            .unwrap_or_else(|| hash_to_unit_vector(self.seed, &format!("clip:{h}"), self.dim)))
    }
}

#[derive(Default)]
pub struct ScriptedCaptioner {
    table: HashMap<String, String>,
}

pub struct FnCaptioner<F>(pub F);

impl<F: Fn(&ClipTensor) -> String + Send + Sync> Captioner for FnCaptioner<F> {
    fn caption(&self, clip: &ClipTensor) -> Result<String, BackendError> {
        Ok((self.0)(clip))
    }
}

impl ScriptedCaptioner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, clip_hash: &str, caption: &str) -> Self {
        self.table.insert(clip_hash.to_string(), caption.to_string());
        self
    }
}

impl Captioner for ScriptedCaptioner {
    fn caption(&self, clip: &ClipTensor) -> Result<String, BackendError> {
        let h = clip.content_hash();
        self.table
            .get(&h)
            .cloned()
            .ok_or(BackendError::Unscripted {
                role: Role::Captioner,
                key: h,
            })
    }
}

/// Describes a clip by its length, brightness and motion. Used when no
/// captioning model is configured.
#[derive(Debug, Default, Clone, Copy)]
pub struct StatsCaptioner;

impl Captioner for StatsCaptioner {
    fn caption(&self, clip: &ClipTensor) -> Result<String, BackendError> {
        let mean = clip.data().iter().map(|&v| v as f64).sum::<f64>() / clip.data().len().max(1) as f64;
        let motion = if clip.frame_count() >= 2 {
            let m = motion::frame_difference(clip);
            m.iter().sum::<f64>() / m.len() as f64
        } else {
            0.0
        };
        let activity = if motion > 0.05 {
            "fast movement"
        } else if motion > 0.01 {
            "moderate movement"
        } else {
            "little movement"
        };
        Ok(format!(
            "A {}-frame clip with {activity} (brightness {mean:.3}, motion {motion:.4}).",
            clip.frame_count()
        ))
    }
}

/// Scorer whose logits come from a fixture table keyed by
/// `(clip content hash, prompt hash)`, or from a closure.
pub struct ScriptedScorer {
    manifest: ScorerManifest,
    table: HashMap<(String, String), Vec<f64>>,
    fallback: Option<Box<LogitFn>>,
}

impl ScriptedScorer {
    pub fn new(manifest: ScorerManifest) -> Self {
        Self {
            manifest,
            table: HashMap::new(),
            fallback: None,
        }
    }

    /// Two-token vocabulary `["yes", "no"]` with `yes` affirmative.
    pub fn yes_no() -> Self {
        Self::new(yes_no_manifest())
    }

    pub fn with(mut self, clip_hash: &str, prompt: &str, logits: Vec<f64>) -> Self {
        self.table
            .insert((clip_hash.to_string(), sha256_hex(prompt)), logits);
        self
    }

    pub fn with_fallback(
        mut self,
        f: impl Fn(&ClipTensor, &str) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.fallback = Some(Box::new(f));
        self
    }

    /// `yes` logit grows with mean brightness; `no` stays at zero.
    pub fn brightness(gain: f64) -> Self {
        Self::yes_no().with_fallback(move |clip, _| {
            let mean = clip.data().iter().map(|&v| v as f64).sum::<f64>()
                / clip.data().len().max(1) as f64;
            vec![gain * (mean - 0.5), 0.0]
        })
    }
}

pub fn yes_no_manifest() -> ScorerManifest {
    ScorerManifest {
        vocab_id: "mock-yes-no".to_string(),
        vocab_size: 2,
        affirmative_token_index: Some(0),
    }
}

impl Scorer for ScriptedScorer {
    fn manifest(&self) -> ScorerManifest {
        self.manifest.clone()
    }

    fn score_logits(&self, clip: &ClipTensor, prompt: &str) -> Result<LogitVector, BackendError> {
        let key = (clip.content_hash(), sha256_hex(prompt));
        let values = match self.table.get(&key) {
            Some(v) => v.clone(),
            None => match &self.fallback {
                Some(f) => f(clip, prompt),
                None => {
                    return Err(BackendError::Unscripted {
                        role: Role::Scorer,
                        key: format!("{}/{}", key.0, key.1),
                    })
                }
            },
        };
        Ok(LogitVector::new(&self.manifest.vocab_id, values))
    }
}

/// Reasoner answering from tables keyed by prompt hash or question text.
#[derive(Default)]
pub struct ScriptedReasoner {
    by_prompt: HashMap<String, String>,
    by_question: HashMap<String, String>,
    fallback: Option<Box<ReasonFn>>,
}

impl ScriptedReasoner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_prompt(mut self, prompt: &str, answer: &str) -> Self {
        self.by_prompt.insert(sha256_hex(prompt), answer.to_string());
        self
    }

    pub fn with_question(mut self, question: &str, answer: &str) -> Self {
        self.by_question
            .insert(question.to_string(), answer.to_string());
        self
    }

    pub fn with_fallback(
        mut self,
        f: impl Fn(&str, &str, Option<&[String]>) -> String + Send + Sync + 'static,
    ) -> Self {
        self.fallback = Some(Box::new(f));
        self
    }
}

impl Reasoner for ScriptedReasoner {
    fn reason(
        &self,
        prompt: &str,
        question: &str,
        options: Option<&[String]>,
    ) -> Result<String, BackendError> {
        let ph = sha256_hex(prompt);
        if let Some(a) = self.by_prompt.get(&ph) {
            return Ok(a.clone());
        }
        if let Some(a) = self.by_question.get(question) {
            return Ok(a.clone());
        }
        match &self.fallback {
            Some(f) => Ok(f(prompt, question, options)),
            None => Err(BackendError::Unscripted {
                role: Role::Reasoner,
                key: ph,
            }),
        }
    }
}

/// Picks the first option whose text appears in the prompt, else `A`.
#[derive(Debug, Default, Clone, Copy)]
pub struct OverlapReasoner;

impl Reasoner for OverlapReasoner {
    fn reason(
        &self,
        prompt: &str,
        _question: &str,
        options: Option<&[String]>,
    ) -> Result<String, BackendError> {
        let lower = prompt.to_lowercase();
        let pick = options
            .and_then(|opts| {
                opts.iter()
                    .position(|o| !o.is_empty() && lower.contains(&o.to_lowercase()))
            })
            .unwrap_or(0);
        Ok(format!("The answer is {}.", (b'A' + pick as u8) as char))
    }
}

/// Agent answering from a question table or a closure over the prompt.
#[derive(Default)]
pub struct ScriptedAgent {
    by_question: HashMap<String, String>,
    fallback: Option<Box<PromptFn>>,
}

impl ScriptedAgent {
    pub fn new() -> Self {
        Self::default()
    }

    /// `question` is matched as a substring of the prompt.
    pub fn with_question(mut self, question: &str, response: &str) -> Self {
        self.by_question
            .insert(question.to_string(), response.to_string());
        self
    }

    pub fn with_fallback(mut self, f: impl Fn(&str) -> String + Send + Sync + 'static) -> Self {
        self.fallback = Some(Box::new(f));
        self
    }
}

impl Agent for ScriptedAgent {
    fn respond(&self, _video: &ClipTensor, prompt: &str) -> Result<String, BackendError> {
        // longest matching question wins so that nested questions stay unambiguous
        let hit = self
            .by_question
            .iter()
            .filter(|(q, _)| prompt.contains(q.as_str()))
            .max_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| b.0.cmp(a.0)));
        if let Some((_, r)) = hit {
            return Ok(r.clone());
        }
        match &self.fallback {
            Some(f) => Ok(f(prompt)),
            None => Err(BackendError::Unscripted {
                role: Role::Agent,
                key: sha256_hex(prompt),
            }),
        }
    }
}

/// Rule-based stand-in for the reactive agent: questions that count,
/// order, score or name technical codes are sent to the deliberative path.
#[derive(Debug, Default, Clone, Copy)]
pub struct KeywordAgent;

const MULTI_STEP_CUES: &[&str] = &[
    "how many",
    "sub-set",
    "subset",
    "sequence",
    "order",
    "after",
    "before",
    "count",
];
const KNOWLEDGE_CUES: &[&str] = &[
    "element",
    "code",
    "difficulty",
    "score",
    "somersault",
    "twist",
    "salto",
    "dive number",
    "which skill",
    "name of",
];

impl KeywordAgent {
    pub fn assess(question: &str) -> String {
        let q = question.to_lowercase();
        let multi = MULTI_STEP_CUES.iter().any(|c| q.contains(c));
        let knowledge = KNOWLEDGE_CUES.iter().any(|c| q.contains(c));
        let switch = multi || knowledge;
        serde_json::json!({
            "relevance": "direct",
            "question_type": if multi { "dynamic" } else { "static" },
            "reasoning": if multi { "multi_step" } else { "single_step" },
            "external_knowledge": knowledge,
            "decision": if switch { "switch" } else { "answer" },
            "answer": if switch { serde_json::Value::Null } else { "A".into() },
            "rationale": if switch {
                "the question needs multi-step inference or domain knowledge"
            } else {
                "the question is answerable from a coarse view of the video"
            },
        })
        .to_string()
    }
}

impl Agent for KeywordAgent {
    fn respond(&self, _video: &ClipTensor, prompt: &str) -> Result<String, BackendError> {
        // the question follows the last "Question:" marker in the shipped prompt
        let question = prompt.rsplit("Question:").next().unwrap_or(prompt);
        Ok(Self::assess(question))
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct IdentityMasker;

impl Masker for IdentityMasker {
    fn mask(&self, clip: &ClipTensor) -> Result<ClipTensor, BackendError> {
        Ok(clip.clone())
    }
}

/// Reports the mean absolute frame difference as the flow magnitude.
#[derive(Debug, Default, Clone, Copy)]
pub struct FrameDiffFlow;

impl FlowEstimator for FrameDiffFlow {
    fn flow_magnitudes(&self, clip: &ClipTensor) -> Result<Vec<f64>, BackendError> {
        Ok(motion::frame_difference(clip))
    }
}

pub struct FnFlow<F>(pub F);

impl<F: Fn(&ClipTensor) -> Vec<f64> + Send + Sync> FlowEstimator for FnFlow<F> {
    fn flow_magnitudes(&self, clip: &ClipTensor) -> Result<Vec<f64>, BackendError> {
        Ok((self.0)(clip))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_embedder_is_deterministic_and_unit_norm() {
        let e = HashEmbedder::new(16, 7);
        let a = e.embed_text("back 2.5 somersaults").unwrap();
        let b = e.embed_text("back 2.5 somersaults").unwrap();
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        let corpus = ["athlete", "balance beam", "626B", "forward 3.5 somersaults pike", ""];
        let vs: Vec<_> = corpus.iter().map(|t| e.embed_text(t).unwrap()).collect();
        for i in 0..vs.len() {
            for j in i + 1..vs.len() {
                assert_ne!(vs[i], vs[j], "{:?} vs {:?}", corpus[i], corpus[j]);
            }
        }
        assert_ne!(HashEmbedder::new(16, 8).embed_text("athlete").unwrap(), vs[0]);
    }

    #[test]
    fn scripted_captioner_by_hash() {
        let clip = ClipTensor::filled(2, 1, 1, 1, 10.0, 0.25).unwrap();
        let other = ClipTensor::filled(2, 1, 1, 1, 10.0, 0.5).unwrap();
        let c = ScriptedCaptioner::new().with(&clip.content_hash(), "an athlete on the beam");
        assert_eq!(c.caption(&clip).unwrap(), "an athlete on the beam");
        assert_eq!(c.caption(&clip).unwrap(), c.caption(&clip).unwrap());
        assert!(matches!(c.caption(&other), Err(BackendError::Unscripted { .. })));
    }

    #[test]
    fn scripted_scorer_table_then_fallback() {
        let clip = ClipTensor::filled(2, 1, 1, 1, 10.0, 0.25).unwrap();
        let s = ScriptedScorer::yes_no()
            .with(&clip.content_hash(), "p", vec![1.0, -1.0])
            .with_fallback(|_, _| vec![0.0, 0.0]);
        assert_eq!(s.score_logits(&clip, "p").unwrap().values, vec![1.0, -1.0]);
        assert_eq!(s.score_logits(&clip, "q").unwrap().values, vec![0.0, 0.0]);
    }

    #[test]
    fn keyword_agent_routes() {
        let easy: serde_json::Value = serde_json::from_str(&KeywordAgent::assess("What sport is this?")).unwrap();
        assert_eq!(easy["decision"], "answer");
        let hard: serde_json::Value = serde_json::from_str(&KeywordAgent::assess(
            "How many sub-sets of movements are performed?",
        ))
        .unwrap();
        assert_eq!(hard["decision"], "switch");
    }

    #[test]
    fn overlap_reasoner_picks_mentioned_option() {
        let opts = vec!["vault".to_string(), "balance beam".to_string(), "floor".to_string(), "rings".to_string()];
        let out = OverlapReasoner
            .reason("Domain knowledge:\n- 12B: jump on the balance beam", "q", Some(&opts))
            .unwrap();
        assert_eq!(out, "The answer is B.");
    }
}
