//! Multiple-choice benchmark evaluation.
//!
//! Datasets are JSON Lines, one [`QaItem`] per line:
//!
//! ```json
//! {"id": "g-001", "video_ref": "g-001.json", "question": "Which apparatus is used?",
//!  "options": ["vault", "balance beam", "floor", "uneven bars"], "gold": "B",
//!  "difficulty": "easy", "subset": "event"}
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clip::ClipTensor;
use crate::router::{Engine, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Letter {
    A,
    B,
    C,
    D,
}

impl Letter {
    pub const ALL: [Letter; 4] = [Letter::A, Letter::B, Letter::C, Letter::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(Letter::A),
            'B' => Some(Letter::B),
            'C' => Some(Letter::C),
            'D' => Some(Letter::D),
            _ => None,
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Event,
    Set,
    Element,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaItem {
    pub id: String,
    pub video_ref: String,
    pub question: String,
    pub options: Vec<String>,
    pub gold: Letter,
    #[serde(default)]
    pub difficulty: Option<Difficulty>,
    #[serde(default)]
    pub subset: Option<Subset>,
}

impl QaItem {
    pub fn validate(&self) -> Result<(), String> {
        if self.options.len() != 4 {
            return Err(format!("expected 4 options, found {}", self.options.len()));
        }
        for i in 0..4 {
            for j in i + 1..4 {
                if self.options[i].trim().eq_ignore_ascii_case(self.options[j].trim()) {
                    return Err(format!("options {} and {} are identical", Letter::ALL[i], Letter::ALL[j]));
                }
            }
        }
        if self.question.trim().is_empty() {
            return Err("empty question".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("dataset row {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate item id {id:?} at row {line}")]
    DuplicateId { id: String, line: usize },
}

/// Parses JSON Lines; blank lines are skipped, rows are numbered from 1.
pub fn parse_dataset(text: &str) -> Result<Vec<QaItem>, DatasetError> {
    let mut items = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let item: QaItem = serde_json::from_str(raw).map_err(|e| DatasetError::Parse {
            line,
            message: e.to_string(),
        })?;
        item.validate()
            .map_err(|message| DatasetError::Parse { line, message })?;
        if !seen.insert(item.id.clone()) {
            return Err(DatasetError::DuplicateId { id: item.id, line });
        }
        items.push(item);
    }
    Ok(items)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<QaItem>, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text)
}

static LETTER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b([ABCD])\b").expect("valid regex"));

/// The option an answer names: the first standalone letter A to D (any
/// case), else an option quoted verbatim as the whole answer.
pub fn extract_letter(answer: &str, options: &[String]) -> Option<Letter> {
    if let Some(m) = LETTER_RE.captures(answer) {
        return m[1].chars().next().and_then(Letter::from_char);
    }
    let norm = |s: &str| {
        s.trim()
            .trim_end_matches(['.', '!', '?', ',', ';', ':'])
            .trim()
            .to_lowercase()
    };
    let a = norm(answer);
    options
        .iter()
        .position(|o| norm(o) == a)
        .and_then(Letter::from_index)
}

/// Where evaluation videos come from.
pub trait VideoSource: Sync {
    fn load(&self, video_ref: &str) -> Result<ClipTensor, String>;
}

/// Resolves references against a directory: a frame directory or a clip JSON file.
#[derive(Debug, Clone)]
pub struct DirVideoSource {
    pub root: PathBuf,
    /// Frame rate assumed for frame directories.
    pub fps: f64,
}

impl VideoSource for DirVideoSource {
    fn load(&self, video_ref: &str) -> Result<ClipTensor, String> {
        ClipTensor::load(self.root.join(video_ref), self.fps).map_err(|e| e.to_string())
    }
}

pub struct FnVideoSource<F>(pub F);

impl<F: Fn(&str) -> Result<ClipTensor, String> + Sync> VideoSource for FnVideoSource<F> {
    fn load(&self, video_ref: &str) -> Result<ClipTensor, String> {
        (self.0)(video_ref)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub id: String,
    pub gold: Letter,
    pub predicted: Option<Letter>,
    pub correct: bool,
    pub difficulty: Option<Difficulty>,
    pub subset: Option<Subset>,
    pub mode: Option<Mode>,
    pub response: Option<String>,
    /// Set when the item failed before an answer was produced.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
    /// `None` when no item carries the tag.
    pub accuracy: Option<f64>,
}

impl Accuracy {
    fn of<'a>(verdicts: impl Iterator<Item = &'a Verdict>) -> Self {
        let (mut correct, mut total) = (0, 0);
        for v in verdicts {
            total += 1;
            correct += v.correct as usize;
        }
        Self {
            correct,
            total,
            accuracy: (total > 0).then(|| correct as f64 / total as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyBreakdown {
    pub easy: Accuracy,
    pub medium: Accuracy,
    pub hard: Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetBreakdown {
    pub event: Accuracy,
    pub set: Accuracy,
    pub element: Accuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub item_count: usize,
    pub overall: Accuracy,
    pub by_difficulty: DifficultyBreakdown,
    pub by_subset: SubsetBreakdown,
    pub reactive_count: usize,
    pub deliberative_count: usize,
    pub error_count: usize,
    /// In dataset order.
    pub verdicts: Vec<Verdict>,
}

impl EvalReport {
    /// Aggregates verdicts; every figure depends only on the multiset of verdicts.
    pub fn from_verdicts(verdicts: Vec<Verdict>) -> Self {
        let diff = |d: Difficulty| Accuracy::of(verdicts.iter().filter(|v| v.difficulty == Some(d)));
        let sub = |s: Subset| Accuracy::of(verdicts.iter().filter(|v| v.subset == Some(s)));
        Self {
            item_count: verdicts.len(),
            overall: Accuracy::of(verdicts.iter()),
            by_difficulty: DifficultyBreakdown {
                easy: diff(Difficulty::Easy),
                medium: diff(Difficulty::Medium),
                hard: diff(Difficulty::Hard),
            },
            by_subset: SubsetBreakdown {
                event: sub(Subset::Event),
                set: sub(Subset::Set),
                element: sub(Subset::Element),
            },
            reactive_count: verdicts.iter().filter(|v| v.mode == Some(Mode::Reactive)).count(),
            deliberative_count: verdicts
                .iter()
                .filter(|v| v.mode == Some(Mode::Deliberative))
                .count(),
            error_count: verdicts.iter().filter(|v| v.error.is_some()).count(),
            verdicts,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Table in the Event / Set / Element / Overall layout, then per-level rows.
    pub fn to_text(&self) -> String {
        let pct = |a: &Accuracy| match a.accuracy {
            Some(x) => format!("{:6.2}", 100.0 * x),
            None => "     -".to_string(),
        };
        let row = |name: &str, a: &Accuracy| format!("{name:<8} {} ({}/{})\n", pct(a), a.correct, a.total);
        let mut out = String::new();
        out.push_str(&format!("items: {}  reactive: {}  deliberative: {}  errors: {}\n\n",
            self.item_count, self.reactive_count, self.deliberative_count, self.error_count));
        out.push_str("subset   acc(%)\n");
        out.push_str(&row("event", &self.by_subset.event));
        out.push_str(&row("set", &self.by_subset.set));
        out.push_str(&row("element", &self.by_subset.element));
        out.push_str(&row("overall", &self.overall));
        out.push_str("\nlevel    acc(%)\n");
        out.push_str(&row("easy", &self.by_difficulty.easy));
        out.push_str(&row("medium", &self.by_difficulty.medium));
        out.push_str(&row("hard", &self.by_difficulty.hard));
        out
    }
}

fn evaluate_item(engine: &Engine, source: &dyn VideoSource, item: &QaItem, force: Option<Mode>) -> Verdict {
    let mut v = Verdict {
        id: item.id.clone(),
        gold: item.gold,
        predicted: None,
        correct: false,
        difficulty: item.difficulty,
        subset: item.subset,
        mode: None,
        response: None,
        error: None,
    };
    let video = match source.load(&item.video_ref) {
        Ok(c) => c,
        Err(e) => {
            v.error = Some(format!("video {}: {e}", item.video_ref));
            return v;
        }
    };
    match engine.answer(&video, &item.question, Some(&item.options), force) {
        Ok(ans) => {
            v.predicted = extract_letter(&ans.text, &item.options);
            v.correct = v.predicted == Some(item.gold);
            v.mode = Some(ans.mode);
            v.response = Some(ans.text);
        }
        Err(e) => v.error = Some(e.to_string()),
    }
    v
}

/// Answers every item, in parallel when the engine config allows more than
/// one worker. Per-item failures become incorrect verdicts.
pub fn evaluate(
    items: &[QaItem],
    engine: &Engine,
    source: &dyn VideoSource,
    force_mode: Option<Mode>,
) -> EvalReport {
    let run = || -> Vec<Verdict> {
        items
            .par_iter()
            .map(|item| evaluate_item(engine, source, item, force_mode))
            .collect()
    };
    let verdicts = match engine.config.workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                log::warn!("cannot build a {n}-thread pool ({e}); using the global pool");
                run()
            }
        },
        None => run(),
    };
    EvalReport::from_verdicts(verdicts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> Vec<String> {
        ["vault", "uneven bars", "balance beam", "floor exercise"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    #[test]
    fn letters() {
        assert_eq!(extract_letter("The answer is B.", &opts()), Some(Letter::B));
        assert_eq!(extract_letter("balance beam", &opts()), Some(Letter::C));
        assert_eq!(extract_letter("  Balance Beam. ", &opts()), Some(Letter::C));
        assert_eq!(extract_letter("unsure", &opts()), None);
        assert_eq!(extract_letter("(d)", &opts()), Some(Letter::D));
        assert_eq!(extract_letter("ABD", &opts()), None);
    }

    #[test]
    fn dataset_rows() {
        let good = r#"{"id":"1","video_ref":"v","question":"q?","options":["a1","b1","c1","d1"],"gold":"C","difficulty":"hard","subset":"set"}"#;
        let items = parse_dataset(&format!("{good}\n\n")).unwrap();
        assert_eq!(items[0].gold, Letter::C);
        let bad = format!("{good}\n{{\"id\": 2}}\n");
        match parse_dataset(&bad) {
            Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let three = good.replace(r#","d1""#, "");
        assert!(matches!(parse_dataset(&three), Err(DatasetError::Parse { line: 1, .. })));
        let wrong_gold = good.replace(r#""gold":"C""#, r#""gold":"E""#);
        assert!(parse_dataset(&wrong_gold).is_err());
        assert!(matches!(
            parse_dataset(&format!("{good}\n{good}")),
            Err(DatasetError::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn report_recomputes_from_verdicts() {
        let v = |id: &str, correct: bool, d: Difficulty| Verdict {
            id: id.into(),
            gold: Letter::A,
            predicted: correct.then_some(Letter::A),
            correct,
            difficulty: Some(d),
            subset: None,
            mode: Some(Mode::Reactive),
            response: None,
            error: None,
        };
        let r = EvalReport::from_verdicts(vec![
            v("1", true, Difficulty::Easy),
            v("2", false, Difficulty::Hard),
            v("3", true, Difficulty::Easy),
        ]);
        assert_eq!(r.overall.accuracy, Some(2.0 / 3.0));
        assert_eq!(r.by_difficulty.easy.accuracy, Some(1.0));
        assert_eq!(r.by_difficulty.hard.accuracy, Some(0.0));
        assert_eq!(r.by_difficulty.medium.accuracy, None);
        assert!(r.to_text().contains("overall   66.67 (2/3)"));
    }
}
