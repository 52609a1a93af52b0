mod common;

use std::sync::Arc;

use finequest::backends::config::BackendConfig;
use finequest::backends::mock::{HashEmbedder, KeywordAgent, ScriptedReasoner, ScriptedScorer, StatsCaptioner};
use finequest::backends::Backends;
use finequest::config::EngineConfig;
use finequest::eval::FnVideoSource;
use finequest::router::{Decision, Engine, Mode, Stage, StageError};
use finequest::service::{dispatch, AnswerError, AnswerRequest};
use finequest::ssgraph::load_graph;

fn fixture_graph() -> finequest::ssgraph::SportsGraph {
    load_graph(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/graph.json")).unwrap()
}

fn mock_engine(config: EngineConfig) -> Engine {
    let backends = BackendConfig::all_mock(8).build(0).unwrap();
    Engine::new(config, backends, Some(Arc::new(fixture_graph()))).unwrap()
}

fn small_config() -> EngineConfig {
    EngineConfig { n1: Some(2), n2: Some(2), ..EngineConfig::default() }
}

#[test]
fn easy_question_is_answered_reactively() {
    let e = mock_engine(small_config());
    let out = e.answer(&common::video(1), "What sport is this?", Some(&common::options()), None).unwrap();
    assert_eq!(out.mode, Mode::Reactive);
    assert!(out.trace.is_empty());
    assert_eq!(out.assessment.unwrap().decision, Decision::Answer);
    assert!(!out.forced);
}

#[test]
fn counting_question_goes_deliberative_with_full_trace() {
    let e = mock_engine(small_config());
    let q = "How many sub-sets of movements are performed?";
    let out = e.answer(&common::video(1), q, Some(&common::options()), None).unwrap();
    assert_eq!(out.mode, Mode::Deliberative);
    let stages: Vec<Stage> = out.trace.iter().map(|r| r.stage).collect();
    assert_eq!(stages, Stage::PIPELINE);
    let prompt = out.trace.last().unwrap().detail["prompt"].as_str().unwrap();
    assert!(prompt.contains("Domain knowledge:"));
    assert!(prompt.contains("Clip captions:"));
    // identical inputs give an identical answer, byte for byte
    let again = e.answer(&common::video(1), q, Some(&common::options()), None).unwrap();
    assert_eq!(serde_json::to_vec(&out).unwrap(), serde_json::to_vec(&again).unwrap());
}

#[test]
fn missing_reasoner_fails_at_reason_with_trace_through_match() {
    let mut b = BackendConfig::all_mock(8).build(0).unwrap();
    b.reasoner = None;
    let e = Engine::new(small_config(), b, Some(Arc::new(fixture_graph()))).unwrap();
    let err = e
        .answer(&common::video(2), "Which element code is shown?", None, None)
        .unwrap_err();
    assert_eq!(err.stage, Stage::Reason);
    assert!(err.is_backend());
    assert_eq!(err.trace.last().unwrap().stage, Stage::Match);
    assert_eq!(err.trace.len(), 5);
}

#[test]
fn missing_graph_fails_at_match() {
    let b = BackendConfig::all_mock(8).build(0).unwrap();
    let e = Engine::new(small_config(), b, None).unwrap();
    let err = e
        .answer(&common::video(2), "How many twists?", None, Some(Mode::Deliberative))
        .unwrap_err();
    assert_eq!(err.stage, Stage::Match);
    assert!(matches!(err.source, StageError::MissingGraph));
}

#[test]
fn forced_modes_skip_or_trust_the_agent() {
    let items = common::qa_items();
    let (e, counters) = common::oracle_engine(&items, 3);
    let easy = &items[0];
    let out = e
        .answer(&common::video(0), &easy.question, Some(&easy.options), Some(Mode::Deliberative))
        .unwrap();
    assert_eq!(out.mode, Mode::Deliberative);
    assert!(out.forced && out.assessment.is_none());
    assert_eq!(counters.agent.calls(), 0);
    assert_eq!(out.trace.len(), 6);

    let hard = &items[15];
    let before = counters.deliberative();
    let out = e
        .answer(&common::video(0), &hard.question, Some(&hard.options), Some(Mode::Reactive))
        .unwrap();
    assert_eq!(out.mode, Mode::Reactive);
    assert!(out.forced);
    assert_eq!(out.assessment.unwrap().decision, Decision::Switch);
    assert_eq!(counters.deliberative(), before);
}

#[test]
fn agent_cannot_answer_directly_when_knowledge_is_needed() {
    let agent = finequest::backends::mock::ScriptedAgent::new().with_fallback(|_| {
        r#"{"relevance":"direct","question_type":"static","reasoning":"single_step",
            "external_knowledge":true,"decision":"answer","answer":"A","rationale":"looks easy"}"#
            .to_string()
    });
    let b = Backends::new()
        .with_agent(agent)
        .with_captioner(StatsCaptioner)
        .with_scorer(ScriptedScorer::brightness(4.0))
        .with_embedder(HashEmbedder::new(8, 0))
        .with_reasoner(ScriptedReasoner::new().with_fallback(|_, _, _| "B".into()));
    let e = Engine::new(small_config(), b, Some(Arc::new(fixture_graph()))).unwrap();
    let out = e.answer(&common::video(4), "Name the dive.", None, None).unwrap();
    assert_eq!(out.mode, Mode::Deliberative);
    assert_eq!(out.text, "B");
    assert!(out.assessment.unwrap().rationale.contains("overridden"));
}

#[test]
fn keyword_agent_tells_the_two_fixture_questions_apart() {
    let easy = KeywordAgent::assess("What sport is this?");
    let hard = KeywordAgent::assess("How many sub-sets of movements are performed?");
    assert!(easy.contains(r#""decision":"answer""#));
    assert!(hard.contains(r#""decision":"switch""#));
}

#[test]
fn answer_service_maps_outcomes_to_status_codes() {
    let e = mock_engine(small_config());
    let source = FnVideoSource(|r: &str| match r {
        "clip" => Ok(common::video(5)),
        other => Err(format!("no video {other}")),
    });
    let ok = AnswerRequest {
        video_ref: "clip".into(),
        question: "What sport is this?".into(),
        options: None,
        force_mode: None,
    };
    let body = serde_json::to_vec(&ok).unwrap();
    assert_eq!(dispatch(&e, &source, "POST", "/answer", &body).status, 200);
    assert_eq!(dispatch(&e, &source, "GET", "/health", b"").status, 200);
    assert_eq!(dispatch(&e, &source, "GET", "/answer", b"").status, 405);
    assert_eq!(dispatch(&e, &source, "POST", "/answer", b"{").status, 400);
    assert_eq!(dispatch(&e, &source, "POST", "/elsewhere", b"{}").status, 404);
    let missing = AnswerRequest { video_ref: "gone".into(), ..ok.clone() };
    assert_eq!(dispatch(&e, &source, "POST", "/answer", &serde_json::to_vec(&missing).unwrap()).status, 404);

    let mut b = BackendConfig::all_mock(8).build(0).unwrap();
    b.reasoner = None;
    let broken = Engine::new(small_config(), b, Some(Arc::new(fixture_graph()))).unwrap();
    let hard = AnswerRequest { question: "How many somersaults?".into(), ..ok };
    let reply = dispatch(&broken, &source, "POST", "/answer", &serde_json::to_vec(&hard).unwrap());
    assert_eq!(reply.status, 502);
    let err: AnswerError = serde_json::from_slice(&reply.body).unwrap();
    assert_eq!(err.stage, Some(Stage::Reason));
    assert_eq!(err.trace.len(), 5);
}
