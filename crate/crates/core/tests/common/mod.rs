//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use finequest::backends::mock::{HashEmbedder, IdentityMasker, ScriptedAgent, ScriptedReasoner, ScriptedScorer, StatsCaptioner};
use finequest::backends::{Backends, Counted};
use finequest::clip::ClipTensor;
use finequest::config::EngineConfig;
use finequest::eval::{Difficulty, Letter, QaItem, Subset};
use finequest::router::Engine;
use finequest::ssgraph::SportsGraph;
use finequest::synthetic::{action_video, random_graph};

pub const DIM: usize = 16;

pub const EASY: [&str; 10] = [
    "What sport is this?",
    "What color is the mat in the video?",
    "Is the athlete indoors?",
    "What apparatus is the athlete using?",
    "Is there a crowd watching?",
    "What is the athlete wearing?",
    "Is the video filmed from the side?",
    "Is a coach visible in the frame?",
    "What surface does the athlete land on?",
    "Is the athlete male or female?",
];

pub const HARD: [&str; 10] = [
    "How many sub-sets of movements are performed?",
    "Which element code matches the first jump?",
    "How many somersaults are completed before entry?",
    "What is the dive number of this dive?",
    "In what order are the turns performed?",
    "How many twists happen after the take-off?",
    "Which skill is performed on the high bar after the swing?",
    "What is the difficulty value of the vault?",
    "How many leaps appear in the sequence?",
    "What is the name of the final salto?",
];

/// Agent reply for a question: easy questions are answered directly with `answer`.
pub fn agent_reply(hard: bool, answer: &str) -> String {
    serde_json::json!({
        "relevance": "direct",
        "question_type": if hard { "dynamic" } else { "static" },
        "reasoning": if hard { "multi_step" } else { "single_step" },
        "external_knowledge": hard,
        "decision": if hard { "switch" } else { "answer" },
        "answer": if hard { serde_json::Value::Null } else { answer.into() },
        "rationale": "scripted",
    })
    .to_string()
}

pub fn options() -> Vec<String> {
    ["vault", "balance beam", "floor exercise", "uneven bars"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Ten easy and ten hard items with golds cycling through the letters.
pub fn qa_items() -> Vec<QaItem> {
    EASY.iter()
        .map(|q| (q, false))
        .chain(HARD.iter().map(|q| (q, true)))
        .enumerate()
        .map(|(i, (q, hard))| QaItem {
            id: format!("item-{i:02}"),
            video_ref: format!("video-{i}"),
            question: q.to_string(),
            options: options(),
            gold: Letter::ALL[i % 4],
            difficulty: Some(if hard { Difficulty::Hard } else { Difficulty::Easy }),
            subset: Some(if i % 2 == 0 { Subset::Set } else { Subset::Element }),
        })
        .collect()
}

pub fn video(seed: u64) -> ClipTensor {
    action_video(&[(18, 0.9), (20, 0.5), (16, 0.7)], 6, 12, 25.0, seed)
}

pub fn graph() -> SportsGraph {
    random_graph(11, 12, DIM)
}

/// Counted handles to every backend an engine uses.
pub struct Counters {
    pub agent: Arc<Counted<ScriptedAgent>>,
    pub captioner: Arc<Counted<StatsCaptioner>>,
    pub scorer: Arc<Counted<ScriptedScorer>>,
    pub embedder: Arc<Counted<HashEmbedder>>,
    pub reasoner: Arc<Counted<ScriptedReasoner>>,
    pub masker: Arc<Counted<IdentityMasker>>,
}

impl Counters {
    /// Calls made to backends only the deliberative path uses.
    pub fn deliberative(&self) -> usize {
        self.captioner.calls()
            + self.scorer.calls()
            + self.embedder.calls()
            + self.reasoner.calls()
            + self.masker.calls()
    }
}

/// An engine whose agent and reasoner answer every fixture item with its gold letter.
pub fn oracle_engine(items: &[QaItem], seed: u64) -> (Engine, Counters) {
    let mut agent = ScriptedAgent::new();
    let mut reasoner = ScriptedReasoner::new();
    for item in items {
        let hard = item.difficulty == Some(Difficulty::Hard);
        let gold = item.gold.to_string();
        agent = agent.with_question(&item.question, &agent_reply(hard, &gold));
        reasoner = reasoner.with_question(&item.question, &format!("The answer is {gold}."));
    }
    let c = Counters {
        agent: Arc::new(Counted::new(agent)),
        captioner: Arc::new(Counted::new(StatsCaptioner)),
        scorer: Arc::new(Counted::new(ScriptedScorer::brightness(4.0))),
        embedder: Arc::new(Counted::new(HashEmbedder::new(DIM, seed))),
        reasoner: Arc::new(Counted::new(reasoner)),
        masker: Arc::new(Counted::new(IdentityMasker)),
    };
    let backends = Backends::new()
        .with_agent(c.agent.clone())
        .with_captioner(c.captioner.clone())
        .with_scorer(c.scorer.clone())
        .with_embedder(c.embedder.clone())
        .with_reasoner(c.reasoner.clone())
        .with_masker(c.masker.clone());
    let config = EngineConfig {
        n1: Some(2),
        n2: Some(3),
        workers: Some(4),
        ..EngineConfig::default()
    }
    .with_seed(seed);
    let engine = Engine::new(config, backends, Some(Arc::new(graph()))).expect("fixture engine is valid");
    (engine, c)
}
