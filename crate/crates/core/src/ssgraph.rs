//! The sports knowledge scene graph.
//!
//! A graph is a forest `sport → event → set → element`. Each element carries
//! its terminology code, a textual description and two embeddings (the
//! description and a visual instance), per-frame scene graphs of
//! subject–predicate–object triplets with temporal coreference edges, and
//! positive/negated relation sentences used for relational matching.
//!
//! Graphs are stored as a single JSON document; see `docs/ssgraph_format.md`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, Embedder};

pub type Embedding = Vec<f64>;

/// Token inserted after the subject to negate a relation sentence.
pub const NEGATION_TOKEN: &str = "not";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cannot parse graph: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("node {node_id}: {reason}")]
    Validation { node_id: String, reason: String },
    #[error("node {node_id}: {field} has length {found}, expected {expected}")]
    Dimension {
        node_id: String,
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown sport code {0:?}")]
    UnknownSportCode(String),
    #[error("embedding relation sentences of {node_id}: {source}")]
    Embedding {
        node_id: String,
        #[source]
        source: BackendError,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl GraphError {
    fn invalid(node_id: &str, reason: impl Into<String>) -> Self {
        GraphError::Validation {
            node_id: node_id.to_string(),
            reason: reason.into(),
        }
    }
}

/// The nine sport categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SportCode {
    G,
    D,
    B1,
    S,
    I,
    T,
    B2,
    B3,
    V,
}

impl SportCode {
    pub const ALL: [SportCode; 9] = [
        SportCode::G,
        SportCode::D,
        SportCode::B1,
        SportCode::S,
        SportCode::I,
        SportCode::T,
        SportCode::B2,
        SportCode::B3,
        SportCode::V,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SportCode::G => "G",
            SportCode::D => "D",
            SportCode::B1 => "B1",
            SportCode::S => "S",
            SportCode::I => "I",
            SportCode::T => "T",
            SportCode::B2 => "B2",
            SportCode::B3 => "B3",
            SportCode::V => "V",
        }
    }

    pub fn sport_name(self) -> &'static str {
        match self {
            SportCode::G => "gymnastics",
            SportCode::D => "diving",
            SportCode::B1 => "basketball",
            SportCode::S => "soccer",
            SportCode::I => "ice hockey",
            SportCode::T => "tennis",
            SportCode::B2 => "baseball",
            SportCode::B3 => "badminton",
            SportCode::V => "volleyball",
        }
    }
}

impl fmt::Display for SportCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SportCode {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SportCode::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| GraphError::UnknownSportCode(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    #[default]
    Spatial,
    Action,
    Causal,
    Temporal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationTriplet {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    #[serde(default)]
    pub relation_kind: RelationKind,
}

impl RelationTriplet {
    pub fn new(subject: &str, predicate: &str, object: &str) -> Self {
        Self {
            subject: subject.to_string(),
            predicate: predicate.to_string(),
            object: object.to_string(),
            relation_kind: RelationKind::Spatial,
        }
    }

    pub fn with_kind(mut self, kind: RelationKind) -> Self {
        self.relation_kind = kind;
        self
    }

    fn mentions(&self, label: &str) -> bool {
        self.subject == label || self.object == label
    }
}

/// Renders a triplet as `"The {subject} {predicate} the {object}"`; the
/// negated form puts `not` right after the subject.
pub fn format_relation(t: &RelationTriplet, negate: bool) -> String {
    if negate {
        format!(
            "The {} {} {} the {}",
            t.subject, NEGATION_TOKEN, t.predicate, t.object
        )
    } else {
        format!("The {} {} the {}", t.subject, t.predicate, t.object)
    }
}

/// True when `negative` equals `positive` with one ` not` token inserted.
fn is_single_negation_of(negative: &str, positive: &str) -> bool {
    let token = format!(" {NEGATION_TOKEN} ");
    negative.match_indices(&token).any(|(i, _)| {
        let mut removed = String::with_capacity(negative.len());
        removed.push_str(&negative[..i]);
        removed.push(' ');
        removed.push_str(&negative[i + token.len()..]);
        removed == positive
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorefEdge {
    pub label: String,
    pub from_frame: usize,
    pub to_frame: usize,
}

/// Scene graph of one frame: its triplets plus coreference edges arriving
/// from the previous frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneGraphFrame {
    pub frame_index: usize,
    pub triplets: Vec<RelationTriplet>,
    #[serde(default)]
    pub coref_edges: Vec<CorefEdge>,
}

impl SceneGraphFrame {
    fn mentions(&self, label: &str) -> bool {
        self.triplets.iter().any(|t| t.mentions(label))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSentence {
    /// Index into the element's triplets, counted across all scene frames in order.
    pub triplet_ref: usize,
    #[serde(default)]
    pub positive_text: String,
    #[serde(default)]
    pub negative_text: String,
    #[serde(default)]
    pub positive_embedding: Embedding,
    #[serde(default)]
    pub negative_embedding: Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementNode {
    pub node_id: String,
    pub sport_code: SportCode,
    pub terminology: String,
    pub description_text: String,
    pub description_embedding: Embedding,
    pub instance_embedding: Embedding,
    #[serde(default)]
    pub scene_frames: Vec<SceneGraphFrame>,
    #[serde(default)]
    pub relation_sentences: Vec<RelationSentence>,
}

impl ElementNode {
    /// All triplets across scene frames, in frame order.
    pub fn triplets(&self) -> impl Iterator<Item = &RelationTriplet> + '_ {
        self.scene_frames.iter().flat_map(|f| f.triplets.iter())
    }

    pub fn triplet(&self, flat_index: usize) -> Option<&RelationTriplet> {
        self.triplets().nth(flat_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetNode {
    pub id: String,
    pub name: String,
    pub elements: Vec<ElementNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventNode {
    pub id: String,
    pub name: String,
    pub sets: Vec<SetNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SportEntry {
    pub code: SportCode,
    pub name: String,
    pub events: Vec<EventNode>,
}

impl SportEntry {
    pub fn elements(&self) -> impl Iterator<Item = &ElementNode> + '_ {
        self.events
            .iter()
            .flat_map(|e| e.sets.iter())
            .flat_map(|s| s.elements.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SportsGraph {
    pub format_version: String,
    pub embedding_dim: usize,
    pub sports: Vec<SportEntry>,
}

/// Where relation-sentence embeddings come from when loading.
#[derive(Clone, Copy)]
pub enum RelationEmbeddings<'a> {
    /// Every sentence must carry both embeddings in the file.
    Precomputed,
    /// Missing sentence embeddings are computed with the embedder.
    Compute(&'a dyn Embedder),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GraphStats {
    pub sports: usize,
    pub events: usize,
    pub sets: usize,
    pub elements: usize,
    pub scene_frames: usize,
    pub triplets: usize,
    pub coref_edges: usize,
    pub relation_sentences: usize,
    pub elements_per_sport: Vec<(SportCode, usize)>,
}

pub const FORMAT_VERSION: &str = "1.0";

impl SportsGraph {
    pub fn empty(embedding_dim: usize) -> Self {
        Self {
            format_version: FORMAT_VERSION.to_string(),
            embedding_dim,
            sports: Vec::new(),
        }
    }

    /// Every element in file order.
    pub fn elements(&self) -> impl Iterator<Item = &ElementNode> + '_ {
        self.sports.iter().flat_map(|s| s.elements())
    }

    pub fn element_count(&self) -> usize {
        self.elements().count()
    }

    pub fn element(&self, node_id: &str) -> Option<&ElementNode> {
        self.elements().find(|e| e.node_id == node_id)
    }

    pub fn sport(&self, code: SportCode) -> Option<&SportEntry> {
        self.sports.iter().find(|s| s.code == code)
    }

    pub fn stats(&self) -> GraphStats {
        let mut st = GraphStats {
            sports: self.sports.len(),
            ..Default::default()
        };
        for sport in &self.sports {
            st.events += sport.events.len();
            st.sets += sport.events.iter().map(|e| e.sets.len()).sum::<usize>();
            let mut n = 0;
            for el in sport.elements() {
                n += 1;
                st.scene_frames += el.scene_frames.len();
                st.triplets += el.triplets().count();
                st.coref_edges += el
                    .scene_frames
                    .iter()
                    .map(|f| f.coref_edges.len())
                    .sum::<usize>();
                st.relation_sentences += el.relation_sentences.len();
            }
            st.elements += n;
            st.elements_per_sport.push((sport.code, n));
        }
        st
    }

    /// Checks every structural invariant. Relation texts must already be present.
    pub fn validate(&self) -> Result<(), GraphError> {
        let dim = self.embedding_dim;
        if dim == 0 {
            return Err(GraphError::invalid("<graph>", "embedding_dim must be positive"));
        }
        let mut codes = HashSet::new();
        let mut ids = HashSet::new();
        let mut claim = |id: &str| -> Result<(), GraphError> {
            if id.is_empty() {
                return Err(GraphError::invalid(id, "empty node id"));
            }
            if !ids.insert(id.to_string()) {
                return Err(GraphError::invalid(id, "duplicate node id"));
            }
            Ok(())
        };
        for sport in &self.sports {
            if !codes.insert(sport.code) {
                return Err(GraphError::invalid(
                    sport.code.as_str(),
                    "sport listed more than once",
                ));
            }
            for event in &sport.events {
                claim(&event.id)?;
                for set in &event.sets {
                    claim(&set.id)?;
                    for el in &set.elements {
                        claim(&el.node_id)?;
                        if el.sport_code != sport.code {
                            return Err(GraphError::invalid(
                                &el.node_id,
                                format!(
                                    "sport_code {} does not match parent sport {}",
                                    el.sport_code, sport.code
                                ),
                            ));
                        }
                        validate_element(el, dim)?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Fills missing relation texts and, in compute mode, missing embeddings.
    fn complete_relations(&mut self, mode: RelationEmbeddings<'_>) -> Result<(), GraphError> {
        for sport in &mut self.sports {
            for event in &mut sport.events {
                for set in &mut event.sets {
                    for el in &mut set.elements {
                        complete_element(el, mode)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_vector(node_id: &str, field: &str, v: &[f64], dim: usize) -> Result<(), GraphError> {
    if v.len() != dim {
        return Err(GraphError::Dimension {
            node_id: node_id.to_string(),
            field: field.to_string(),
            expected: dim,
            found: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(GraphError::invalid(node_id, format!("{field} has non-finite values")));
    }
    if v.iter().all(|&x| x == 0.0) {
        return Err(GraphError::invalid(node_id, format!("{field} is all zero")));
    }
    Ok(())
}

fn validate_element(el: &ElementNode, dim: usize) -> Result<(), GraphError> {
    let id = el.node_id.as_str();
    check_vector(id, "description_embedding", &el.description_embedding, dim)?;
    check_vector(id, "instance_embedding", &el.instance_embedding, dim)?;

    let mut prev: Option<&SceneGraphFrame> = None;
    for frame in &el.scene_frames {
        if let Some(p) = prev {
            if frame.frame_index <= p.frame_index {
                return Err(GraphError::invalid(
                    id,
                    format!(
                        "scene frame index {} does not increase after {}",
                        frame.frame_index, p.frame_index
                    ),
                ));
            }
        }
        for t in &frame.triplets {
            if t.subject.is_empty() || t.predicate.is_empty() || t.object.is_empty() {
                return Err(GraphError::invalid(
                    id,
                    format!("empty triplet field in frame {}", frame.frame_index),
                ));
            }
        }
        for edge in &frame.coref_edges {
            if edge.to_frame != edge.from_frame + 1 || edge.to_frame != frame.frame_index {
                return Err(GraphError::invalid(
                    id,
                    format!(
                        "coreference edge {:?} {}->{} must end at frame {} and span one frame",
                        edge.label, edge.from_frame, edge.to_frame, frame.frame_index
                    ),
                ));
            }
            let linked = prev
                .filter(|p| p.frame_index == edge.from_frame)
                .map(|p| p.mentions(&edge.label) && frame.mentions(&edge.label))
                .unwrap_or(false);
            if !linked {
                return Err(GraphError::invalid(
                    id,
                    format!(
                        "coreference label {:?} is not present in both frames {} and {}",
                        edge.label, edge.from_frame, edge.to_frame
                    ),
                ));
            }
        }
        prev = Some(frame);
    }

    let n_triplets = el.triplets().count();
    for (k, s) in el.relation_sentences.iter().enumerate() {
        if s.triplet_ref >= n_triplets {
            return Err(GraphError::invalid(
                id,
                format!(
                    "relation sentence {k} references triplet {} of {n_triplets}",
                    s.triplet_ref
                ),
            ));
        }
        if !is_single_negation_of(&s.negative_text, &s.positive_text) {
            return Err(GraphError::invalid(
                id,
                format!(
                    "relation sentence {k}: {:?} is not {:?} with one {NEGATION_TOKEN:?} inserted",
                    s.negative_text, s.positive_text
                ),
            ));
        }
        check_vector(id, &format!("relation_sentences[{k}].positive_embedding"), &s.positive_embedding, dim)?;
        check_vector(id, &format!("relation_sentences[{k}].negative_embedding"), &s.negative_embedding, dim)?;
    }
    Ok(())
}

fn complete_element(el: &mut ElementNode, mode: RelationEmbeddings<'_>) -> Result<(), GraphError> {
    let triplets: Vec<RelationTriplet> = el.triplets().cloned().collect();
    for (k, s) in el.relation_sentences.iter_mut().enumerate() {
        let Some(t) = triplets.get(s.triplet_ref) else {
            return Err(GraphError::invalid(
                &el.node_id,
                format!(
                    "relation sentence {k} references triplet {} of {}",
                    s.triplet_ref,
                    triplets.len()
                ),
            ));
        };
        if s.positive_text.is_empty() {
            s.positive_text = format_relation(t, false);
        }
        if s.negative_text.is_empty() {
            s.negative_text = format_relation(t, true);
        }
        if let RelationEmbeddings::Compute(embedder) = mode {
            let wrap = |source| GraphError::Embedding {
                node_id: el.node_id.clone(),
                source,
            };
            if s.positive_embedding.is_empty() {
                s.positive_embedding = embedder.embed_text(&s.positive_text).map_err(wrap)?;
            }
            if s.negative_embedding.is_empty() {
                s.negative_embedding = embedder.embed_text(&s.negative_text).map_err(wrap)?;
            }
        }
    }
    Ok(())
}

/// Parses and validates a graph document held in memory.
pub fn parse_graph(text: &str, mode: RelationEmbeddings<'_>) -> Result<SportsGraph, GraphError> {
    let mut g: SportsGraph = serde_json::from_str(text)?;
    g.complete_relations(mode)?;
    g.validate()?;
    Ok(g)
}

/// Loads a graph whose relation embeddings are stored in the file.
pub fn load_graph(path: impl AsRef<Path>) -> Result<SportsGraph, GraphError> {
    load_graph_with(path, RelationEmbeddings::Precomputed)
}

pub fn load_graph_with(
    path: impl AsRef<Path>,
    mode: RelationEmbeddings<'_>,
) -> Result<SportsGraph, GraphError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_graph(&text, mode)
}

pub fn save_graph(g: &SportsGraph, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let path = path.as_ref();
    let bytes = serde_json::to_vec_pretty(g)?;
    fs::write(path, bytes).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Elements under `sport_code` in file order; empty when the sport is absent.
pub fn elements_of_sport<'g>(
    g: &'g SportsGraph,
    sport_code: &str,
) -> Result<Vec<&'g ElementNode>, GraphError> {
    let code: SportCode = sport_code.parse()?;
    Ok(g.sport(code)
        .map(|s| s.elements().collect())
        .unwrap_or_default())
}
