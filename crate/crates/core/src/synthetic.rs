//! Seeded generators for graphs, motion signals and videos, used by the
//! examples, tests and `finequest` fixture commands.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::clip::ClipTensor;
use crate::motion::MotionSignal;
use crate::ssgraph::{
    format_relation, CorefEdge, ElementNode, Embedding, EventNode, RelationKind, RelationSentence,
    RelationTriplet, SceneGraphFrame, SetNode, SportCode, SportEntry, SportsGraph, FORMAT_VERSION,
};

const SUBJECTS: &[&str] = &["athlete", "gymnast", "diver", "left hand", "right foot", "body"];
const PREDICATES: &[&str] = &["on top of", "holding", "above", "next to", "rotating around", "touching"];
const OBJECTS: &[&str] = &["balance beam", "bar", "springboard", "water", "mat", "vault table"];

pub fn gaussian_vector(rng: &mut impl Rng, dim: usize) -> Embedding {
    loop {
        let v: Embedding = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if v.iter().any(|&x| x != 0.0) {
            return v;
        }
    }
}

fn triplet(rng: &mut impl Rng) -> RelationTriplet {
    let kinds = [
        RelationKind::Spatial,
        RelationKind::Action,
        RelationKind::Causal,
        RelationKind::Temporal,
    ];
    RelationTriplet::new(
        SUBJECTS.choose(rng).expect("non-empty"),
        PREDICATES.choose(rng).expect("non-empty"),
        OBJECTS.choose(rng).expect("non-empty"),
    )
    .with_kind(*kinds.choose(rng).expect("non-empty"))
}

fn scene_frames(rng: &mut impl Rng) -> Vec<SceneGraphFrame> {
    let n = rng.random_range(0..=3);
    let mut frames: Vec<SceneGraphFrame> = Vec::with_capacity(n);
    let mut index = rng.random_range(0..5usize);
    for _ in 0..n {
        let triplets: Vec<RelationTriplet> = (0..rng.random_range(1..=3)).map(|_| triplet(rng)).collect();
        let mut coref_edges = Vec::new();
        if let Some(prev) = frames.last() {
            if prev.frame_index + 1 == index {
                for label in triplets.iter().flat_map(|t| [&t.subject, &t.object]) {
                    let shared = prev.triplets.iter().any(|p| &p.subject == label || &p.object == label);
                    if shared && !coref_edges.iter().any(|e: &CorefEdge| &e.label == label) {
                        coref_edges.push(CorefEdge {
                            label: label.clone(),
                            from_frame: index - 1,
                            to_frame: index,
                        });
                    }
                }
            }
        }
        frames.push(SceneGraphFrame {
            frame_index: index,
            triplets,
            coref_edges,
        });
        index += rng.random_range(1..=2);
    }
    frames
}

/// A valid graph with `elements` elements spread over up to three sports.
pub fn random_graph(seed: u64, elements: usize, dim: usize) -> SportsGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_sports = rng.random_range(1..=3usize).min(elements.max(1));
    let codes: Vec<SportCode> = SportCode::ALL
        .choose_multiple(&mut rng, n_sports)
        .copied()
        .collect();
    let mut sports: Vec<SportEntry> = codes
        .iter()
        .map(|&code| SportEntry {
            code,
            name: code.sport_name().to_string(),
            events: vec![EventNode {
                id: format!("{code}-event"),
                name: format!("{} event", code.sport_name()),
                sets: vec![SetNode {
                    id: format!("{code}-set"),
                    name: format!("{} set", code.sport_name()),
                    elements: Vec::new(),
                }],
            }],
        })
        .collect();
    for i in 0..elements {
        let s = i % sports.len();
        let code = sports[s].code;
        let frames = scene_frames(&mut rng);
        let n_triplets: usize = frames.iter().map(|f| f.triplets.len()).sum();
        let flat: Vec<RelationTriplet> = frames.iter().flat_map(|f| f.triplets.clone()).collect();
        let relation_sentences = (0..n_triplets.min(rng.random_range(0..=3)))
            .map(|k| RelationSentence {
                triplet_ref: k,
                positive_text: format_relation(&flat[k], false),
                negative_text: format_relation(&flat[k], true),
                positive_embedding: gaussian_vector(&mut rng, dim),
                negative_embedding: gaussian_vector(&mut rng, dim),
            })
            .collect();
        let el = ElementNode {
            node_id: format!("{code}-el-{i:03}"),
            sport_code: code,
            terminology: format!("{}{:03}", code, 100 + i),
            description_text: format!("synthetic element {i} of {}", code.sport_name()),
            description_embedding: gaussian_vector(&mut rng, dim),
            instance_embedding: gaussian_vector(&mut rng, dim),
            scene_frames: frames,
            relation_sentences,
        };
        sports[s].events[0].sets[0].elements.push(el);
    }
    SportsGraph {
        format_version: FORMAT_VERSION.to_string(),
        embedding_dim: dim,
        sports,
    }
}

/// Noisy motion around a base level with occasional deep dips.
pub fn random_signal(seed: u64, len: usize) -> MotionSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: f64 = rng.random_range(0.2..2.0);
    let noise: f64 = rng.random_range(0.0..0.5);
    let dip_p: f64 = rng.random_range(0.0..0.1);
    let values = (0..len)
        .map(|_| {
            if rng.random_bool(dip_p) {
                base * rng.random_range(0.0..0.2)
            } else {
                let n: f64 = StandardNormal.sample(&mut rng);
                (base + noise * base * n).max(0.0)
            }
        })
        .collect();
    MotionSignal::new(values, 25.0).expect("generated values are finite and non-negative")
}

/// A video of `actions.len()` moving blocks separated by short still pauses.
/// Each action is `(frames, brightness)`; a bright square sweeps across the
/// frame at a brightness-dependent level so clips are distinguishable.
pub fn action_video(actions: &[(usize, f32)], pause: usize, size: usize, fps: f64, seed: u64) -> ClipTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan: Vec<(f32, Option<usize>)> = Vec::new();
    for (k, &(frames, level)) in actions.iter().enumerate() {
        if k > 0 {
            plan.extend((0..pause).map(|_| (level, None)));
        }
        plan.extend((0..frames).map(|t| (level, Some(t))));
    }
    let jitter: Vec<f32> = (0..plan.len()).map(|_| rng.random_range(0.0..0.02)).collect();
    ClipTensor::from_fn(plan.len(), size, size, 3, fps, |t, y, x, c| {
        let (level, phase) = plan[t];
        let background = 0.1 + jitter[t] * (c as f32 + 1.0) / 3.0;
        match phase {
            None => background,
            Some(p) => {
                let side = (size / 3).max(1);
                let x0 = (p * 2) % size.saturating_sub(side).max(1);
                let y0 = (p * 3) % size.saturating_sub(side).max(1);
                if (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y) {
                    level
                } else {
                    background
                }
            }
        }
    })
    .expect("generated frames are in range")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graphs_validate() {
        for seed in 0..50 {
            let g = random_graph(seed, 1 + seed as usize % 20, 8);
            g.validate().unwrap();
            assert_eq!(g.element_count(), 1 + seed as usize % 20);
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(random_graph(3, 5, 4), random_graph(3, 5, 4));
        assert_eq!(random_signal(3, 40), random_signal(3, 40));
        let v = action_video(&[(10, 0.9), (12, 0.6)], 4, 12, 25.0, 1);
        assert_eq!(v.frame_count(), 26);
    }
}
