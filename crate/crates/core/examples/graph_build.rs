//! Builds a small two-sport knowledge graph, fills in relation sentences
//! and their embeddings with the mock embedder, then validates and saves it.
//!
//! `cargo run --example graph_build -- out.json` writes the graph; without
//! an argument it only prints statistics.

use finequest::backends::mock::HashEmbedder;
use finequest::backends::Embedder;
use finequest::ssgraph::{
    parse_graph, save_graph, CorefEdge, ElementNode, EventNode, RelationEmbeddings, RelationKind,
    RelationSentence, RelationTriplet, SceneGraphFrame, SetNode, SportCode, SportEntry, SportsGraph,
    FORMAT_VERSION,
};

const DIM: usize = 8;

fn element(
    e: &HashEmbedder,
    node_id: &str,
    sport_code: SportCode,
    terminology: &str,
    description: &str,
    frames: Vec<SceneGraphFrame>,
) -> anyhow::Result<ElementNode> {
    let n: usize = frames.iter().map(|f| f.triplets.len()).sum();
    Ok(ElementNode {
        node_id: node_id.into(),
        sport_code,
        terminology: terminology.into(),
        description_text: description.into(),
        description_embedding: e.embed_text(description)?,
        instance_embedding: e.embed_text(&format!("instance of {terminology}"))?,
        scene_frames: frames,
        // texts and embeddings are left empty and filled in on load
        relation_sentences: (0..n)
            .map(|triplet_ref| RelationSentence {
                triplet_ref,
                positive_text: String::new(),
                negative_text: String::new(),
                positive_embedding: Vec::new(),
                negative_embedding: Vec::new(),
            })
            .collect(),
    })
}

fn frame(index: usize, triplets: Vec<RelationTriplet>, coref: &[&str]) -> SceneGraphFrame {
    SceneGraphFrame {
        frame_index: index,
        triplets,
        coref_edges: coref
            .iter()
            .map(|l| CorefEdge {
                label: l.to_string(),
                from_frame: index - 1,
                to_frame: index,
            })
            .collect(),
    }
}

fn build(e: &HashEmbedder) -> anyhow::Result<SportsGraph> {
    let dive = element(
        e,
        "D-626B",
        SportCode::D,
        "626B",
        "Armstand back double somersault with one and a half twists in pike position",
        vec![
            frame(0, vec![RelationTriplet::new("diver", "standing on", "platform edge")], &[]),
            frame(
                1,
                vec![RelationTriplet::new("diver", "rotating around", "hips").with_kind(RelationKind::Action)],
                &["diver"],
            ),
        ],
    )?;
    let dive2 = element(
        e,
        "D-105B",
        SportCode::D,
        "105B",
        "Forward two and a half somersaults in pike position",
        vec![frame(0, vec![RelationTriplet::new("diver", "above", "springboard")], &[])],
    )?;
    let beam = element(
        e,
        "G-BB-1.201",
        SportCode::G,
        "split leap",
        "Split leap forward with 180 degree leg separation on the balance beam",
        vec![frame(
            3,
            vec![
                RelationTriplet::new("gymnast", "above", "balance beam"),
                RelationTriplet::new("left foot", "in front of", "right foot").with_kind(RelationKind::Spatial),
            ],
            &[],
        )],
    )?;
    let sport = |code: SportCode, event: &str, set: &str, elements: Vec<ElementNode>| SportEntry {
        code,
        name: code.sport_name().into(),
        events: vec![EventNode {
            id: format!("{code}-{event}"),
            name: event.replace('-', " "),
            sets: vec![SetNode {
                id: format!("{code}-{set}"),
                name: set.replace('-', " "),
                elements,
            }],
        }],
    };
    Ok(SportsGraph {
        format_version: FORMAT_VERSION.into(),
        embedding_dim: DIM,
        sports: vec![
            sport(SportCode::G, "balance-beam", "leaps", vec![beam]),
            sport(SportCode::D, "platform", "somersault-dives", vec![dive, dive2]),
        ],
    })
}

fn run(out: Option<&str>) -> anyhow::Result<()> {
    let embedder = HashEmbedder::new(DIM, 0);
    let draft = serde_json::to_string(&build(&embedder)?)?;
    let graph = parse_graph(&draft, RelationEmbeddings::Compute(&embedder))?;
    let stats = graph.stats();
    println!(
        "{} sports, {} elements, {} relation sentences",
        stats.sports, stats.elements, stats.relation_sentences
    );
    for el in graph.elements() {
        for s in &el.relation_sentences {
            println!("  {}: {} / {}", el.terminology, s.positive_text, s.negative_text);
        }
    }
    if let Some(path) = out {
        save_graph(&graph, path)?;
        println!("wrote {path}");
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1);
    run(out.as_deref())
}
