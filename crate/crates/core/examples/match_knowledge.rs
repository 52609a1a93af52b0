//! Matches a captioned clip against the fixture graph and appends the hits
//! to a reasoning prompt.

use finequest::backends::mock::HashEmbedder;
use finequest::backends::Embedder;
use finequest::clip::FrameInterval;
use finequest::matcher::{enrich_prompt, instance_match, match_graph, EmbeddedClip, MatchOptions};
use finequest::ssgraph::load_graph;

fn run() -> anyhow::Result<()> {
    let graph = load_graph(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/graph.json"))?;
    let embedder = HashEmbedder::new(graph.embedding_dim, 0);
    let caption = "Armstand back double somersault with one and a half twists in pike position";
    let item = EmbeddedClip {
        clip_ref: FrameInterval::new(0, 40),
        embedding: embedder.embed_text("instance of 626B")?,
        caption_text: caption.into(),
        caption_embedding: embedder.embed_text(caption)?,
    };
    for r in instance_match(&item, &graph, 5)? {
        let s = r.score_breakdown;
        println!(
            "{:<12} t2t {:+.3} v2v {:+.3} t2v {:+.3} v2t {:+.3}",
            r.node_id, s.t2t, s.v2v, s.t2v, s.v2t
        );
    }
    let top = match_graph(&item, &graph, &MatchOptions::new(2))?;
    println!("{}", enrich_prompt("Describe the dive.", &top)?);
    Ok(())
}

fn main() -> anyhow::Result<()> {
    run()
}
