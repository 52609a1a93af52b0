//! Hierarchical contrastive decoding and key clip selection.
//!
//! A clip's relevance is the probability of the scorer's affirmative token
//! after the original-clip logits are amplified against the logits of its
//! spatially, temporally and spatio-temporally distorted copies:
//!
//! ```text
//! out = (1 + a_s + a_t + a_st) * orig - a_s * spa - a_t * tem - a_st * st
//! ```

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, Backends};
use crate::clip::ClipTensor;
use crate::distortion::{distort, DistortionError, DistortionSet, DistortionSpec};

/// Appended to the question before scoring.
pub const SELECTION_PROMPT: &str = "Is this clip relevant to the question? Answer yes or no.";

#[derive(Debug, Error)]
pub enum ContrastiveError {
    #[error("logit vectors use different vocabularies: {0:?} vs {1:?}")]
    VocabMismatch(String, String),
    #[error("logit vectors have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("contrastive weights must be finite and non-negative")]
    InvalidWeights,
    #[error("scorer vocabulary {0:?} declares no affirmative token")]
    MissingAffirmativeToken(String),
    #[error("no clips to select from")]
    EmptyClipList,
    #[error("n1 must be at least 1")]
    InvalidN1,
    #[error("duration must be positive and finite, got {0}")]
    InvalidDuration(f64),
    #[error(transparent)]
    Distortion(#[from] DistortionError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitVector {
    pub values: Vec<f64>,
    pub vocab_id: String,
}

impl LogitVector {
    pub fn new(vocab_id: &str, values: Vec<f64>) -> Self {
        Self {
            values,
            vocab_id: vocab_id.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveWeights {
    pub alpha_s: f64,
    pub alpha_t: f64,
    pub alpha_st: f64,
}

impl ContrastiveWeights {
    pub fn new(alpha_s: f64, alpha_t: f64, alpha_st: f64) -> Result<Self, ContrastiveError> {
        let w = Self {
            alpha_s,
            alpha_t,
            alpha_st,
        };
        w.validate()?;
        Ok(w)
    }

    pub const ZERO: Self = Self {
        alpha_s: 0.0,
        alpha_t: 0.0,
        alpha_st: 0.0,
    };

    pub fn total(&self) -> f64 {
        self.alpha_s + self.alpha_t + self.alpha_st
    }

    pub fn validate(&self) -> Result<(), ContrastiveError> {
        let ok = |a: f64| a.is_finite() && a >= 0.0;
        if ok(self.alpha_s) && ok(self.alpha_t) && ok(self.alpha_st) {
            Ok(())
        } else {
            Err(ContrastiveError::InvalidWeights)
        }
    }
}

impl Default for ContrastiveWeights {
    fn default() -> Self {
        Self {
            alpha_s: 0.5,
            alpha_t: 0.3,
            alpha_st: 0.2,
        }
    }
}

fn check_compatible(a: &LogitVector, b: &LogitVector) -> Result<(), ContrastiveError> {
    if a.vocab_id != b.vocab_id {
        return Err(ContrastiveError::VocabMismatch(a.vocab_id.clone(), b.vocab_id.clone()));
    }
    if a.len() != b.len() {
        return Err(ContrastiveError::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

pub fn contrastive_logits(
    orig: &LogitVector,
    spa: &LogitVector,
    tem: &LogitVector,
    st: &LogitVector,
    w: &ContrastiveWeights,
) -> Result<LogitVector, ContrastiveError> {
    w.validate()?;
    for other in [spa, tem, st] {
        check_compatible(orig, other)?;
    }
    let gain = 1.0 + w.total();
    let values = (0..orig.len())
        .map(|i| {
            gain * orig.values[i] - w.alpha_s * spa.values[i] - w.alpha_t * tem.values[i]
                - w.alpha_st * st.values[i]
        })
        .collect();
    Ok(LogitVector {
        values,
        vocab_id: orig.vocab_id.clone(),
    })
}

/// Max-shifted softmax. Entries whose logit trails the maximum by more than
/// about 745 underflow to zero.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn contrastive_distribution(
    orig: &LogitVector,
    spa: &LogitVector,
    tem: &LogitVector,
    st: &LogitVector,
    w: &ContrastiveWeights,
) -> Result<Vec<f64>, ContrastiveError> {
    Ok(softmax(&contrastive_logits(orig, spa, tem, st, w)?.values))
}

/// The text sent to the scorer for a question.
pub fn scoring_prompt(query: &str) -> String {
    format!("{query}\n{SELECTION_PROMPT}")
}

/// Contrastive probability of the scorer's affirmative token for one clip.
///
/// Distortions whose weight is zero contribute nothing to the combination,
/// so their scorer call is skipped.
pub fn relevance_score(
    clip: &ClipTensor,
    query: &str,
    w: &ContrastiveWeights,
    specs: &DistortionSet,
    backends: &Backends,
) -> Result<f64, ContrastiveError> {
    w.validate()?;
    let manifest = backends.scorer()?.manifest();
    let yes = manifest
        .affirmative_token_index
        .filter(|&i| i < manifest.vocab_size)
        .ok_or_else(|| ContrastiveError::MissingAffirmativeToken(manifest.vocab_id.clone()))?;
    let prompt = scoring_prompt(query);
    let orig = backends.score_logits(clip, &prompt)?;
    let variant = |alpha: f64, spec: &DistortionSpec| -> Result<LogitVector, ContrastiveError> {
        if alpha == 0.0 {
            return Ok(orig.clone());
        }
        let distorted = distort(clip, spec)?;
        Ok(backends.score_logits(&distorted, &prompt)?)
    };
    let spa = variant(w.alpha_s, &specs.spatial)?;
    let tem = variant(w.alpha_t, &specs.temporal)?;
    let st = variant(w.alpha_st, &specs.spatiotemporal)?;
    let dist = contrastive_distribution(&orig, &spa, &tem, &st, w)?;
    Ok(dist[yes])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipScore {
    pub clip_index: usize,
    pub score: f64,
}

/// Half-open range of clip indices `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClipSpan {
    pub start: usize,
    pub end: usize,
}

impl ClipSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

impl fmt::Display for ClipSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Indices of the `n` highest scores, ties to the lower clip index, sorted ascending.
pub fn top_n(scores: &[ClipScore], n: usize) -> Vec<usize> {
    let mut ranked: Vec<&ClipScore> = scores.iter().collect();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.clip_index.cmp(&b.clip_index))
    });
    let mut picked: Vec<usize> = ranked.iter().take(n).map(|s| s.clip_index).collect();
    picked.sort_unstable();
    picked
}

/// Merges runs of consecutive indices. Input need not be sorted.
pub fn merge_adjacent(indices: &[usize]) -> Vec<ClipSpan> {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut spans: Vec<ClipSpan> = Vec::new();
    for i in sorted {
        match spans.last_mut() {
            Some(s) if s.end == i => s.end = i + 1,
            _ => spans.push(ClipSpan { start: i, end: i + 1 }),
        }
    }
    spans
}

pub fn select_from_scores(scores: &[ClipScore], n1: usize) -> Result<Vec<ClipSpan>, ContrastiveError> {
    if n1 == 0 {
        return Err(ContrastiveError::InvalidN1);
    }
    if scores.is_empty() {
        return Err(ContrastiveError::EmptyClipList);
    }
    Ok(merge_adjacent(&top_n(scores, n1)))
}

/// Selected spans plus the score of every clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub scores: Vec<ClipScore>,
    pub spans: Vec<ClipSpan>,
}

/// Scores every clip (in parallel) and keeps the `n1` best, merged into spans.
pub fn select_key_clips(
    clips: &[ClipTensor],
    query: &str,
    w: &ContrastiveWeights,
    specs: &DistortionSet,
    backends: &Backends,
    n1: usize,
) -> Result<Selection, ContrastiveError> {
    if n1 == 0 {
        return Err(ContrastiveError::InvalidN1);
    }
    if clips.is_empty() {
        return Err(ContrastiveError::EmptyClipList);
    }
    let scores = clips
        .par_iter()
        .enumerate()
        .map(|(clip_index, clip)| {
            relevance_score(clip, query, w, specs, backends).map(|score| ClipScore { clip_index, score })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let spans = select_from_scores(&scores, n1)?;
    Ok(Selection { scores, spans })
}

/// Number of clips or matches kept for a video of `duration_s` seconds:
/// 10 per started 30-second block.
pub fn bucketed_n(duration_s: f64) -> Result<usize, ContrastiveError> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(ContrastiveError::InvalidDuration(duration_s));
    }
    Ok(10 * (duration_s / 30.0).ceil() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::{yes_no_manifest, ScriptedScorer};
    use approx::assert_abs_diff_eq;

    fn lv(v: &[f64]) -> LogitVector {
        LogitVector::new("v", v.to_vec())
    }

    #[test]
    fn hand_evaluated_combination() {
        // 2*2 - 0.5*1 - 0.3*0 - 0.2*0.5 = 3.4 ; 2*0 - 0 - 0.3*1 - 0.2*0.5 = -0.4
        let out = contrastive_logits(
            &lv(&[2.0, 0.0]),
            &lv(&[1.0, 0.0]),
            &lv(&[0.0, 1.0]),
            &lv(&[0.5, 0.5]),
            &ContrastiveWeights::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(out.values[0], 3.4, epsilon = 1e-12);
        assert_abs_diff_eq!(out.values[1], -0.4, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_cases() {
        let l = lv(&[0.3, -1.0, 2.0]);
        let zero = contrastive_logits(&l, &lv(&[9.0, 9.0, 9.0]), &l, &l, &ContrastiveWeights::ZERO).unwrap();
        assert_eq!(zero.values, l.values);
        let same = contrastive_logits(&l, &l, &l, &l, &ContrastiveWeights::new(2.0, 1.0, 3.0).unwrap()).unwrap();
        for (a, b) in same.values.iter().zip(&l.values) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let u = softmax(&[4.0; 4]);
        assert!(u.iter().all(|p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn mismatches_are_rejected() {
        let a = lv(&[1.0, 2.0]);
        let other_vocab = LogitVector::new("w", vec![1.0, 2.0]);
        assert!(matches!(
            contrastive_logits(&a, &other_vocab, &a, &a, &ContrastiveWeights::default()),
            Err(ContrastiveError::VocabMismatch(..))
        ));
        assert!(matches!(
            contrastive_logits(&a, &a, &lv(&[1.0]), &a, &ContrastiveWeights::default()),
            Err(ContrastiveError::LengthMismatch(2, 1))
        ));
        assert!(ContrastiveWeights::new(-0.1, 0.0, 0.0).is_err());
    }

    fn clip() -> ClipTensor {
        ClipTensor::filled(4, 2, 2, 1, 10.0, 0.5).unwrap()
    }

    #[test]
    fn relevance_from_identical_logits() {
        // ln(0.73 / 0.27) puts 0.73 on "yes"
        let l = (0.73f64 / 0.27).ln();
        let b = Backends::new()
            .with_scorer(ScriptedScorer::yes_no().with_fallback(move |_, _| vec![l, 0.0]));
        let s = relevance_score(&clip(), "q", &ContrastiveWeights::default(), &DistortionSet::default(), &b).unwrap();
        assert_abs_diff_eq!(s, 0.73, epsilon = 1e-12);
    }

    #[test]
    fn missing_affirmative_token() {
        let mut m = yes_no_manifest();
        m.affirmative_token_index = None;
        let b = Backends::new().with_scorer(ScriptedScorer::new(m).with_fallback(|_, _| vec![0.0, 0.0]));
        assert!(matches!(
            relevance_score(&clip(), "q", &ContrastiveWeights::default(), &DistortionSet::default(), &b),
            Err(ContrastiveError::MissingAffirmativeToken(_))
        ));
    }

    #[test]
    fn selection_merges_runs() {
        let scores: Vec<ClipScore> = [0.1, 0.2, 0.9, 0.8, 0.3, 0.1, 0.2, 0.85]
            .iter()
            .enumerate()
            .map(|(clip_index, &score)| ClipScore { clip_index, score })
            .collect();
        assert_eq!(
            select_from_scores(&scores, 3).unwrap(),
            vec![ClipSpan { start: 2, end: 4 }, ClipSpan { start: 7, end: 8 }]
        );
        assert_eq!(select_from_scores(&scores, 20).unwrap(), vec![ClipSpan { start: 0, end: 8 }]);
        let flat: Vec<ClipScore> = (0..5).map(|clip_index| ClipScore { clip_index, score: 0.5 }).collect();
        assert_eq!(top_n(&flat, 2), vec![0, 1]);
        assert!(matches!(select_from_scores(&[], 1), Err(ContrastiveError::EmptyClipList)));
        assert!(matches!(select_from_scores(&flat, 0), Err(ContrastiveError::InvalidN1)));
    }

    #[test]
    fn buckets() {
        assert_eq!(bucketed_n(30.0).unwrap(), 10);
        assert_eq!(bucketed_n(45.0).unwrap(), 20);
        assert_eq!(bucketed_n(61.0).unwrap(), 30);
        assert_eq!(bucketed_n(0.5).unwrap(), 10);
        assert!(bucketed_n(0.0).is_err());
    }
}
