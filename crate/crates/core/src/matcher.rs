//! Two-level matching of clips against the sports graph.
//!
//! Instance level: caption-to-description (t2t) and clip-to-instance (v2v)
//! cosines over every element, keeping the union of the top-k of each
//! channel, then cross-modal t2v and v2t for those candidates. Relational
//! level: for each relation sentence, the clip's similarity to the positive
//! sentence minus its similarity to the negated one (v2r).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clip::FrameInterval;
use crate::ssgraph::{ElementNode, Embedding, SportCode, SportsGraph};

pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("cannot take the cosine of a zero vector")]
    ZeroVector,
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("graph has no elements to match against")]
    EmptyGraph,
    #[error("{what} has dimension {found}, graph uses {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("element {0} has no relation sentences")]
    NoRelationSentences(String),
    #[error("element {0} has a relation sentence without embeddings")]
    MissingRelationEmbedding(String),
    #[error("no matches to add to the prompt")]
    EmptyMatches,
    #[error("{0} must be at least 1")]
    InvalidCount(&'static str),
}

/// A key clip in embedding space, with its caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedClip {
    pub clip_ref: FrameInterval,
    pub embedding: Embedding,
    pub caption_text: String,
    pub caption_embedding: Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub t2t: f64,
    pub v2v: f64,
    pub t2v: f64,
    pub v2t: f64,
    pub v2r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub node_id: String,
    pub terminology: String,
    pub description_text: String,
    pub score_breakdown: ScoreBreakdown,
    pub combined: f64,
}

/// Weights of the four instance channels (averaged) and of v2r (added).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelWeights {
    pub t2t: f64,
    pub v2v: f64,
    pub t2v: f64,
    pub v2t: f64,
    pub v2r: f64,
}

impl Default for ChannelWeights {
    fn default() -> Self {
        Self {
            t2t: 1.0,
            v2v: 1.0,
            t2v: 1.0,
            v2t: 1.0,
            v2r: 1.0,
        }
    }
}

impl ChannelWeights {
    pub fn combine(&self, s: &ScoreBreakdown) -> f64 {
        let wsum = self.t2t + self.v2v + self.t2v + self.v2t;
        let instance = if wsum > 0.0 {
            (self.t2t * s.t2t + self.v2v * s.v2v + self.t2v * s.t2v + self.v2t * s.v2t) / wsum
        } else {
            0.0
        };
        instance + self.v2r * s.v2r
    }
}

/// Options for [`match_graph`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchOptions {
    pub n2: usize,
    pub top_k: usize,
    pub weights: ChannelWeights,
    /// Restrict the scan to one sport.
    pub sport: Option<SportCode>,
}

impl MatchOptions {
    pub fn new(n2: usize) -> Self {
        Self {
            n2,
            top_k: DEFAULT_TOP_K,
            weights: ChannelWeights::default(),
            sport: None,
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, MatchError> {
    if a.len() != b.len() {
        return Err(MatchError::LengthMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(MatchError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

fn check_dim(what: &'static str, v: &[f64], expected: usize) -> Result<(), MatchError> {
    if v.len() != expected {
        return Err(MatchError::Dimension {
            what,
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

fn candidates(g: &SportsGraph, sport: Option<SportCode>) -> Vec<&ElementNode> {
    match sport {
        Some(code) => g.sport(code).map(|s| s.elements().collect()).unwrap_or_default(),
        None => g.elements().collect(),
    }
}

fn by_score_then_id(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

fn top_k_ids<'g>(scored: &[(f64, &'g ElementNode)], k: usize) -> Vec<&'g str> {
    let mut v: Vec<(f64, &str)> = scored.iter().map(|(s, e)| (*s, e.node_id.as_str())).collect();
    v.sort_by(|a, b| by_score_then_id(*a, *b));
    v.into_iter().take(k).map(|(_, id)| id).collect()
}

fn instance_candidates<'g>(
    item: &EmbeddedClip,
    elements: &[&'g ElementNode],
    dim: usize,
    k: usize,
) -> Result<Vec<(&'g ElementNode, ScoreBreakdown)>, MatchError> {
    if elements.is_empty() {
        return Err(MatchError::EmptyGraph);
    }
    if k == 0 {
        return Err(MatchError::InvalidCount("top_k"));
    }
    check_dim("clip embedding", &item.embedding, dim)?;
    check_dim("caption embedding", &item.caption_embedding, dim)?;
    let mut t2t = Vec::with_capacity(elements.len());
    let mut v2v = Vec::with_capacity(elements.len());
    for &e in elements {
        t2t.push((cosine(&item.caption_embedding, &e.description_embedding)?, e));
        v2v.push((cosine(&item.embedding, &e.instance_embedding)?, e));
    }
    let keep: BTreeSet<&str> = top_k_ids(&t2t, k)
        .into_iter()
        .chain(top_k_ids(&v2v, k))
        .collect();
    let mut out = Vec::with_capacity(keep.len());
    for (i, &e) in elements.iter().enumerate() {
        if !keep.contains(e.node_id.as_str()) {
            continue;
        }
        out.push((
            e,
            ScoreBreakdown {
                t2t: t2t[i].0,
                v2v: v2v[i].0,
                t2v: cosine(&item.caption_embedding, &e.instance_embedding)?,
                v2t: cosine(&item.embedding, &e.description_embedding)?,
                v2r: 0.0,
            },
        ));
    }
    Ok(out)
}

fn result(e: &ElementNode, score_breakdown: ScoreBreakdown, combined: f64) -> MatchResult {
    MatchResult {
        node_id: e.node_id.clone(),
        terminology: e.terminology.clone(),
        description_text: e.description_text.clone(),
        score_breakdown,
        combined,
    }
}

fn rank(results: &mut [MatchResult]) {
    results.sort_by(|a, b| by_score_then_id((a.combined, &a.node_id), (b.combined, &b.node_id)));
}

/// Instance-level candidates: the union of the top-`k` elements by t2t and
/// by v2v, with all four instance channels filled, ranked by their mean.
pub fn instance_match(
    item: &EmbeddedClip,
    g: &SportsGraph,
    k: usize,
) -> Result<Vec<MatchResult>, MatchError> {
    let elements = candidates(g, None);
    let mut out: Vec<MatchResult> = instance_candidates(item, &elements, g.embedding_dim, k)?
        .into_iter()
        .map(|(e, s)| {
            let mean = (s.t2t + s.v2v + s.t2v + s.v2t) / 4.0;
            result(e, s, mean)
        })
        .collect();
    rank(&mut out);
    Ok(out)
}

/// Mean over relation sentences of `cos(clip, positive) - cos(clip, negative)`.
pub fn relational_score(item: &EmbeddedClip, node: &ElementNode) -> Result<f64, MatchError> {
    if node.relation_sentences.is_empty() {
        return Err(MatchError::NoRelationSentences(node.node_id.clone()));
    }
    let mut total = 0.0;
    for s in &node.relation_sentences {
        if s.positive_embedding.is_empty() || s.negative_embedding.is_empty() {
            return Err(MatchError::MissingRelationEmbedding(node.node_id.clone()));
        }
        total += cosine(&item.embedding, &s.positive_embedding)?
            - cosine(&item.embedding, &s.negative_embedding)?;
    }
    Ok(total / node.relation_sentences.len() as f64)
}

/// Top-`n2` elements for one clip. Elements without relation sentences
/// score a v2r of zero.
pub fn match_graph(
    item: &EmbeddedClip,
    g: &SportsGraph,
    opts: &MatchOptions,
) -> Result<Vec<MatchResult>, MatchError> {
    if opts.n2 == 0 {
        return Err(MatchError::InvalidCount("n2"));
    }
    let elements = candidates(g, opts.sport);
    let mut out = Vec::new();
    for (e, mut s) in instance_candidates(item, &elements, g.embedding_dim, opts.top_k)? {
        if !e.relation_sentences.is_empty() {
            s.v2r = relational_score(item, e)?;
        }
        out.push(result(e, s, opts.weights.combine(&s)));
    }
    rank(&mut out);
    out.truncate(opts.n2);
    Ok(out)
}

/// Matches every clip and keeps, per element, its best-scoring result;
/// returns the top `n2` of those.
pub fn match_clips(
    items: &[EmbeddedClip],
    g: &SportsGraph,
    opts: &MatchOptions,
) -> Result<Vec<MatchResult>, MatchError> {
    if opts.n2 == 0 {
        return Err(MatchError::InvalidCount("n2"));
    }
    let mut best: BTreeMap<String, MatchResult> = BTreeMap::new();
    for item in items {
        for r in match_graph(item, g, opts)? {
            match best.get(&r.node_id) {
                Some(prev) if prev.combined >= r.combined => {}
                _ => {
                    best.insert(r.node_id.clone(), r);
                }
            }
        }
    }
    let mut out: Vec<MatchResult> = best.into_values().collect();
    rank(&mut out);
    out.truncate(opts.n2);
    Ok(out)
}

pub const KNOWLEDGE_HEADER: &str = "Domain knowledge:";

/// Appends the matched terminology and descriptions, in rank order, to `base`.
pub fn enrich_prompt(base: &str, matches: &[MatchResult]) -> Result<String, MatchError> {
    if matches.is_empty() {
        return Err(MatchError::EmptyMatches);
    }
    let mut out = String::from(base.trim_end());
    out.push_str("\n\n");
    out.push_str(KNOWLEDGE_HEADER);
    for m in matches {
        out.push('\n');
        out.push_str(&format!("- {}: {}", m.terminology, m.description_text));
    }
    out.push('\n');
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssgraph::{EventNode, RelationSentence, SetNode, SportEntry, FORMAT_VERSION};
    use approx::assert_abs_diff_eq;

    fn element(id: &str, desc: Embedding, inst: Embedding) -> ElementNode {
        ElementNode {
            node_id: id.to_string(),
            sport_code: SportCode::D,
            terminology: id.to_uppercase(),
            description_text: format!("description of {id}"),
            description_embedding: desc,
            instance_embedding: inst,
            scene_frames: Vec::new(),
            relation_sentences: Vec::new(),
        }
    }

    fn graph(elements: Vec<ElementNode>) -> SportsGraph {
        SportsGraph {
            format_version: FORMAT_VERSION.to_string(),
            embedding_dim: elements[0].description_embedding.len(),
            sports: vec![SportEntry {
                code: SportCode::D,
                name: "Diving".into(),
                events: vec![EventNode {
                    id: "e".into(),
                    name: "e".into(),
                    sets: vec![SetNode {
                        id: "s".into(),
                        name: "s".into(),
                        elements,
                    }],
                }],
            }],
        }
    }

    fn item(caption: Embedding, clip: Embedding) -> EmbeddedClip {
        EmbeddedClip {
            clip_ref: FrameInterval::new(0, 10),
            embedding: clip,
            caption_text: "c".into(),
            caption_embedding: caption,
        }
    }

    #[test]
    fn cosine_values() {
        assert_abs_diff_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(cosine(&[3.0, -1.0], &[3.0, -1.0]).unwrap(), 1.0, epsilon = 1e-15);
        // 32 / (sqrt(14) * sqrt(77))
        assert_abs_diff_eq!(cosine(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap(), 0.974632, epsilon = 1e-6);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(MatchError::ZeroVector));
        assert_eq!(cosine(&[1.0], &[1.0, 0.0]), Err(MatchError::LengthMismatch(1, 2)));
    }

    #[test]
    fn relational_cases() {
        let mut e = element("a", vec![1.0, 0.0], vec![1.0, 0.0]);
        let it = item(vec![1.0, 0.0], vec![1.0, 0.0]);
        assert!(matches!(relational_score(&it, &e), Err(MatchError::NoRelationSentences(_))));
        let sentence = |pos: Embedding, neg: Embedding| RelationSentence {
            triplet_ref: 0,
            positive_text: String::new(),
            negative_text: String::new(),
            positive_embedding: pos,
            negative_embedding: neg,
        };
        e.relation_sentences = vec![sentence(vec![1.0, 0.0], vec![0.0, 1.0])];
        assert_abs_diff_eq!(relational_score(&it, &e).unwrap(), 1.0);
        e.relation_sentences = vec![sentence(vec![0.5, 0.5], vec![0.5, 0.5])];
        assert_abs_diff_eq!(relational_score(&it, &e).unwrap(), 0.0);
        // (1 - 0) and (cos45 - (-1)) averaged
        e.relation_sentences = vec![
            sentence(vec![2.0, 0.0], vec![0.0, 3.0]),
            sentence(vec![1.0, 1.0], vec![-1.0, 0.0]),
        ];
        let expected = (1.0 + (std::f64::consts::FRAC_1_SQRT_2 + 1.0)) / 2.0;
        assert_abs_diff_eq!(relational_score(&it, &e).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn staged_candidates_and_ranking() {
        let g = graph(vec![
            element("a", vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]),
            element("b", vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]),
            element("c", vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]),
        ]);
        let it = item(vec![1.0, 0.1, 0.0], vec![1.0, 0.0, 0.2]);
        let one = instance_match(&it, &g, 1).unwrap();
        let ids: BTreeSet<&str> = one.iter().map(|r| r.node_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"].into_iter().collect());
        assert_eq!(instance_match(&it, &g, 10).unwrap().len(), 3);
        let top = match_graph(&it, &g, &MatchOptions::new(1)).unwrap();
        assert_eq!(top.len(), 1);
        let only = graph(vec![element("z", vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0])]);
        assert_eq!(match_graph(&it, &only, &MatchOptions::new(4)).unwrap()[0].node_id, "z");
    }

    #[test]
    fn dimension_and_empty_checks() {
        let g = graph(vec![element("a", vec![1.0, 0.0], vec![0.0, 1.0])]);
        assert!(matches!(
            match_graph(&item(vec![1.0, 0.0, 0.0], vec![1.0, 0.0]), &g, &MatchOptions::new(1)),
            Err(MatchError::Dimension { .. })
        ));
        let mut empty = g.clone();
        empty.sports.clear();
        assert_eq!(
            match_graph(&item(vec![1.0, 0.0], vec![1.0, 0.0]), &empty, &MatchOptions::new(1)),
            Err(MatchError::EmptyGraph)
        );
    }

    #[test]
    fn enrichment_block() {
        let m = MatchResult {
            node_id: "d-626b".into(),
            terminology: "626B".into(),
            description_text: "back 2.5 somersaults with 3 twists in pike position".into(),
            score_breakdown: ScoreBreakdown::default(),
            combined: 0.5,
        };
        let p = enrich_prompt("Answer the question.", std::slice::from_ref(&m)).unwrap();
        assert!(p.contains("Domain knowledge:\n- 626B: back 2.5 somersaults"));
        assert_eq!(p, enrich_prompt("Answer the question.", &[m]).unwrap());
        assert_eq!(enrich_prompt("x", &[]), Err(MatchError::EmptyMatches));
    }
}
