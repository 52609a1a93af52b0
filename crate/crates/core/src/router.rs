//! Reactive agent and system switch.
//!
//! Every question first goes to the reactive agent, which grades its
//! difficulty and either answers or asks for a switch. A switch runs the
//! deliberative pipeline once: segment, select key clips, caption, embed,
//! match against the graph, reason over the enriched prompt.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, Backends};
use crate::clip::{ClipError, ClipTensor, FrameInterval};
use crate::config::EngineConfig;
use crate::contrastive::{bucketed_n, select_key_clips, ContrastiveError};
use crate::matcher::{enrich_prompt, match_clips, EmbeddedClip, MatchError, MatchOptions, MatchResult};
use crate::motion::{segment_video, MotionError};
use crate::ssgraph::SportsGraph;

pub const DEFAULT_AGENT_PROMPT: &str = include_str!("../assets/reactive_agent_prompt.txt");
pub const DEFAULT_REASONING_PROMPT: &str = include_str!("../assets/reasoning_prompt.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    Direct,
    Indirect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reasoning {
    SingleStep,
    MultiStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Answer,
    Switch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultyAssessment {
    pub relevance: Relevance,
    pub question_type: QuestionType,
    pub reasoning: Reasoning,
    pub external_knowledge: bool,
    pub decision: Decision,
    pub rationale: String,
}

impl DifficultyAssessment {
    /// Multi-step reasoning or outside knowledge always means a switch.
    fn enforce(mut self) -> Self {
        if self.decision == Decision::Answer
            && (self.reasoning == Reasoning::MultiStep || self.external_knowledge)
        {
            self.decision = Decision::Switch;
            self.rationale = format!(
                "{} [decision overridden to switch: multi-step reasoning or external knowledge required]",
                self.rationale
            );
        }
        self
    }
}

/// What the agent returned: the graded question plus its direct answer, if any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub assessment: DifficultyAssessment,
    pub answer: Option<String>,
    pub raw_response: String,
}

#[derive(Debug, Deserialize)]
struct AgentReply {
    relevance: Relevance,
    question_type: QuestionType,
    reasoning: Reasoning,
    external_knowledge: bool,
    decision: Decision,
    #[serde(default)]
    answer: Option<serde_json::Value>,
    #[serde(default)]
    rationale: String,
}

fn json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

/// Parses an agent response. Malformed JSON falls back to looking for the
/// words "switch" and then "answer".
pub fn parse_agent_response(text: &str) -> Result<Classification, RouterError> {
    if let Some(reply) = json_object(text).and_then(|j| serde_json::from_str::<AgentReply>(j).ok()) {
        let answer = match reply.answer {
            Some(serde_json::Value::String(s)) if !s.trim().is_empty() => Some(s),
            Some(serde_json::Value::Null) | None => None,
            Some(serde_json::Value::String(_)) => None,
            Some(other) => Some(other.to_string()),
        };
        let assessment = DifficultyAssessment {
            relevance: reply.relevance,
            question_type: reply.question_type,
            reasoning: reply.reasoning,
            external_knowledge: reply.external_knowledge,
            decision: reply.decision,
            rationale: reply.rationale,
        }
        .enforce();
        return Ok(Classification {
            assessment,
            answer,
            raw_response: text.to_string(),
        });
    }
    let lower = text.to_lowercase();
    let decision = if lower.contains("switch") {
        Decision::Switch
    } else if lower.contains("answer") {
        Decision::Answer
    } else {
        return Err(RouterError::new(
            Stage::Classify,
            StageError::UnparseableResponse(text.to_string()),
            Vec::new(),
        ));
    };
    Ok(Classification {
        assessment: DifficultyAssessment {
            relevance: Relevance::Direct,
            question_type: QuestionType::Static,
            reasoning: Reasoning::SingleStep,
            external_knowledge: false,
            decision,
            rationale: format!("keyword fallback on non-JSON agent response: {}", text.trim()),
        },
        answer: (decision == Decision::Answer).then(|| text.trim().to_string()),
        raw_response: text.to_string(),
    })
}

fn options_block(options: Option<&[String]>) -> String {
    match options {
        Some(opts) if !opts.is_empty() => {
            let mut s = String::from("Options:\n");
            for (i, o) in opts.iter().enumerate() {
                s.push_str(&format!("{}. {}\n", (b'A' + i as u8) as char, o));
            }
            s
        }
        _ => String::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Classify,
    Segment,
    Select,
    Caption,
    Embed,
    Match,
    Reason,
}

impl Stage {
    /// Deliberative stages in execution order.
    pub const PIPELINE: [Stage; 6] = [
        Stage::Segment,
        Stage::Select,
        Stage::Caption,
        Stage::Embed,
        Stage::Match,
        Stage::Reason,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Classify => "classify",
            Stage::Segment => "segment",
            Stage::Select => "select",
            Stage::Caption => "caption",
            Stage::Embed => "embed",
            Stage::Match => "match",
            Stage::Reason => "reason",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Reactive,
    Deliberative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedAnswer {
    pub text: String,
    pub mode: Mode,
    /// Absent only when the deliberative mode was forced without asking the agent.
    pub assessment: Option<DifficultyAssessment>,
    #[serde(default)]
    pub forced: bool,
    pub trace: Vec<StageRecord>,
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Selection(#[from] ContrastiveError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Clip(#[from] ClipError),
    #[error("no sports graph loaded")]
    MissingGraph,
    #[error("agent response is neither JSON nor contains a decision keyword: {0:?}")]
    UnparseableResponse(String),
}

/// A failure in one stage, with the records of the stages that completed.
#[derive(Debug, Error)]
#[error("{stage} stage failed: {source}")]
pub struct RouterError {
    pub stage: Stage,
    #[source]
    pub source: StageError,
    pub trace: Vec<StageRecord>,
}

impl RouterError {
    fn new(stage: Stage, source: StageError, trace: Vec<StageRecord>) -> Self {
        Self { stage, source, trace }
    }

    pub fn is_backend(&self) -> bool {
        matches!(self.source, StageError::Backend(_))
            || matches!(
                self.source,
                StageError::Selection(ContrastiveError::Backend(_)) | StageError::Motion(MotionError::Backend(_))
            )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompts {
    pub agent: String,
    pub reasoning: String,
}

impl Default for Prompts {
    fn default() -> Self {
        Self {
            agent: DEFAULT_AGENT_PROMPT.to_string(),
            reasoning: DEFAULT_REASONING_PROMPT.to_string(),
        }
    }
}

impl Prompts {
    pub fn load(agent: Option<&Path>, reasoning: Option<&Path>) -> std::io::Result<Self> {
        let mut p = Self::default();
        if let Some(path) = agent {
            p.agent = fs::read_to_string(path)?;
        }
        if let Some(path) = reasoning {
            p.reasoning = fs::read_to_string(path)?;
        }
        Ok(p)
    }

    pub fn agent_prompt(&self, question: &str, options: Option<&[String]>) -> String {
        self.agent
            .replace("{options}", &options_block(options))
            .replace("{question}", question)
    }

    pub fn reasoning_prompt(&self, captions: &[(FrameInterval, String)]) -> String {
        let lines: Vec<String> = captions
            .iter()
            .enumerate()
            .map(|(i, (iv, c))| format!("{}. frames {iv}: {c}", i + 1))
            .collect();
        self.reasoning.replace("{captions}", &lines.join("\n"))
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    Config(#[from] crate::config::ConfigError),
    #[error("cannot read prompt asset: {0}")]
    Prompt(#[from] std::io::Error),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("graph is invalid: {0}")]
    Graph(#[from] crate::ssgraph::GraphError),
}

/// Everything needed to answer questions. Shared read-only across threads.
#[derive(Debug, Clone)]
pub struct Engine {
    pub config: EngineConfig,
    pub backends: Backends,
    pub graph: Option<Arc<SportsGraph>>,
    pub prompts: Prompts,
}

impl Engine {
    pub fn new(
        config: EngineConfig,
        backends: Backends,
        graph: Option<Arc<SportsGraph>>,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        if let Some(g) = &graph {
            g.validate()?;
            backends.check_graph(g)?;
        }
        let prompts = Prompts::load(
            config.agent_prompt_path.as_deref(),
            config.reasoning_prompt_path.as_deref(),
        )?;
        Ok(Self {
            config,
            backends,
            graph,
            prompts,
        })
    }

    pub fn with_prompts(mut self, prompts: Prompts) -> Self {
        self.prompts = prompts;
        self
    }

    /// One agent call grading the question.
    pub fn classify_query(
        &self,
        video: &ClipTensor,
        question: &str,
        options: Option<&[String]>,
    ) -> Result<Classification, RouterError> {
        let prompt = self.prompts.agent_prompt(question, options);
        let text = self
            .backends
            .respond(video, &prompt)
            .map_err(|e| RouterError::new(Stage::Classify, e.into(), Vec::new()))?;
        parse_agent_response(&text)
    }

    pub fn answer(
        &self,
        video: &ClipTensor,
        question: &str,
        options: Option<&[String]>,
        force_mode: Option<Mode>,
    ) -> Result<RoutedAnswer, RouterError> {
        if force_mode == Some(Mode::Deliberative) {
            let (text, trace) = self.deliberate(video, question, options)?;
            return Ok(RoutedAnswer {
                text,
                mode: Mode::Deliberative,
                assessment: None,
                forced: true,
                trace,
            });
        }
        let c = self.classify_query(video, question, options)?;
        let reactive = force_mode == Some(Mode::Reactive) || c.assessment.decision == Decision::Answer;
        if reactive {
            let text = c
                .answer
                .clone()
                .unwrap_or_else(|| c.assessment.rationale.clone());
            return Ok(RoutedAnswer {
                text,
                mode: Mode::Reactive,
                forced: force_mode.is_some(),
                assessment: Some(c.assessment),
                trace: Vec::new(),
            });
        }
        let (text, trace) = self.deliberate(video, question, options)?;
        Ok(RoutedAnswer {
            text,
            mode: Mode::Deliberative,
            assessment: Some(c.assessment),
            forced: false,
            trace,
        })
    }

    fn deliberate(
        &self,
        video: &ClipTensor,
        question: &str,
        options: Option<&[String]>,
    ) -> Result<(String, Vec<StageRecord>), RouterError> {
        let cfg = &self.config;
        let b = &self.backends;
        let mut trace: Vec<StageRecord> = Vec::new();
        macro_rules! stage {
            ($stage:expr, $e:expr) => {
                match $e {
                    Ok(v) => v,
                    Err(e) => return Err(RouterError::new($stage, StageError::from(e), trace)),
                }
            };
        }

        let masked = if cfg.mask_athletes {
            stage!(Stage::Segment, b.mask(video))
        } else {
            video.clone()
        };
        let proposals = match segment_video(&masked, &cfg.segmenter, cfg.motion_estimator, b) {
            Ok(p) => p,
            // too short for one window: the whole video is one proposal
            Err(MotionError::SignalTooShort { .. }) => vec![FrameInterval::new(0, video.frame_count())],
            Err(e) => stage!(Stage::Segment, Err(e)),
        };
        trace.push(StageRecord {
            stage: Stage::Segment,
            detail: serde_json::json!({
                "masked": cfg.mask_athletes && b.masker().is_some(),
                "proposals": proposals.iter().map(|p| [p.start_frame, p.end_frame]).collect::<Vec<_>>(),
            }),
        });

        let duration = video.duration_secs();
        let n1 = match cfg.n1 {
            Some(n) => n,
            None => stage!(Stage::Select, bucketed_n(duration)),
        };
        let clips: Vec<ClipTensor> = stage!(
            Stage::Select,
            proposals.iter().map(|p| video.slice(*p)).collect::<Result<Vec<_>, _>>()
        );
        let selection = stage!(
            Stage::Select,
            select_key_clips(&clips, question, &cfg.weights, &cfg.distortions, b, n1)
        );
        let key: Vec<FrameInterval> = selection
            .spans
            .iter()
            .map(|s| FrameInterval::new(proposals[s.start].start_frame, proposals[s.end - 1].end_frame))
            .collect();
        trace.push(StageRecord {
            stage: Stage::Select,
            detail: serde_json::json!({
                "n1": n1,
                "scores": selection.scores.iter().map(|s| s.score).collect::<Vec<_>>(),
                "key_clips": key.iter().map(|k| [k.start_frame, k.end_frame]).collect::<Vec<_>>(),
            }),
        });

        let key_clips: Vec<ClipTensor> = stage!(
            Stage::Caption,
            key.iter().map(|k| video.slice(*k)).collect::<Result<Vec<_>, _>>()
        );
        let captions: Vec<String> = stage!(
            Stage::Caption,
            key_clips.par_iter().map(|c| b.caption(c)).collect::<Result<Vec<_>, _>>()
        );
        trace.push(StageRecord {
            stage: Stage::Caption,
            detail: serde_json::json!({ "captions": captions }),
        });

        let embedded: Vec<EmbeddedClip> = stage!(
            Stage::Embed,
            key_clips
                .par_iter()
                .zip(captions.par_iter())
                .zip(key.par_iter())
                .map(|((clip, caption), iv)| -> Result<EmbeddedClip, BackendError> {
                    Ok(EmbeddedClip {
                        clip_ref: *iv,
                        embedding: b.embed_clip(clip)?,
                        caption_text: caption.clone(),
                        caption_embedding: b.embed_text(caption)?,
                    })
                })
                .collect::<Result<Vec<_>, _>>()
        );
        trace.push(StageRecord {
            stage: Stage::Embed,
            detail: serde_json::json!({ "clips": embedded.len() }),
        });

        let Some(graph) = &self.graph else {
            return Err(RouterError::new(Stage::Match, StageError::MissingGraph, trace));
        };
        let n2 = match cfg.n2 {
            Some(n) => n,
            None => stage!(Stage::Match, bucketed_n(duration)),
        };
        let opts = MatchOptions {
            n2,
            top_k: cfg.top_k,
            weights: cfg.channel_weights,
            sport: cfg.sport,
        };
        let matches: Vec<MatchResult> = stage!(Stage::Match, match_clips(&embedded, graph, &opts));
        let caption_lines: Vec<(FrameInterval, String)> =
            key.iter().copied().zip(captions.iter().cloned()).collect();
        let prompt = stage!(
            Stage::Match,
            enrich_prompt(&self.prompts.reasoning_prompt(&caption_lines), &matches)
        );
        trace.push(StageRecord {
            stage: Stage::Match,
            detail: serde_json::json!({ "n2": n2, "matches": matches }),
        });

        let text = stage!(Stage::Reason, b.reason(&prompt, question, options));
        trace.push(StageRecord {
            stage: Stage::Reason,
            detail: serde_json::json!({ "prompt": prompt }),
        });
        Ok((text, trace))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_strict_json() {
        let c = parse_agent_response(
            r#"Sure. {"relevance":"direct","question_type":"static","reasoning":"single_step",
               "external_knowledge":false,"decision":"answer","answer":"B","rationale":"clear view"}"#,
        )
        .unwrap();
        assert_eq!(c.assessment.decision, Decision::Answer);
        assert_eq!(c.answer.as_deref(), Some("B"));
    }

    #[test]
    fn override_forces_switch() {
        let c = parse_agent_response(
            r#"{"relevance":"direct","question_type":"dynamic","reasoning":"multi_step",
               "external_knowledge":false,"decision":"answer","answer":"C","rationale":"r"}"#,
        )
        .unwrap();
        assert_eq!(c.assessment.decision, Decision::Switch);
        let k = parse_agent_response(
            r#"{"relevance":"indirect","question_type":"static","reasoning":"single_step",
               "external_knowledge":true,"decision":"answer","answer":null,"rationale":"r"}"#,
        )
        .unwrap();
        assert_eq!(k.assessment.decision, Decision::Switch);
    }

    #[test]
    fn keyword_fallback() {
        let c = parse_agent_response("This needs a SWITCH to deliberate mode.").unwrap();
        assert_eq!(c.assessment.decision, Decision::Switch);
        assert!(c.assessment.rationale.starts_with("keyword fallback"));
        let a = parse_agent_response("My answer is B").unwrap();
        assert_eq!(a.assessment.decision, Decision::Answer);
        let e = parse_agent_response("no idea").unwrap_err();
        assert_eq!(e.stage, Stage::Classify);
        assert!(matches!(e.source, StageError::UnparseableResponse(_)));
    }

    #[test]
    fn prompt_templates() {
        let p = Prompts::default();
        let opts = vec!["vault".to_string(), "beam".into(), "floor".into(), "bars".into()];
        let text = p.agent_prompt("What apparatus is used?", Some(&opts));
        assert!(text.ends_with("Options:\nA. vault\nB. beam\nC. floor\nD. bars\nQuestion: What apparatus is used?\n"));
        let r = p.reasoning_prompt(&[(FrameInterval::new(0, 8), "a dive".into())]);
        assert!(r.contains("1. frames [0, 8): a dive"));
    }
}
