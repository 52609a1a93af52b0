//! Routes an easy and a hard question through the engine with mock
//! backends and prints how each was answered.

use std::sync::Arc;

use finequest::backends::config::BackendConfig;
use finequest::config::EngineConfig;
use finequest::router::Engine;
use finequest::ssgraph::load_graph;
use finequest::synthetic::action_video;

fn run() -> anyhow::Result<()> {
    let graph = load_graph(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/graph.json"))?;
    let backends = BackendConfig::all_mock(graph.embedding_dim).build(0)?;
    let config = EngineConfig { n1: Some(2), n2: Some(2), ..EngineConfig::default() };
    let engine = Engine::new(config, backends, Some(Arc::new(graph)))?;
    let video = action_video(&[(20, 0.9), (20, 0.6), (20, 0.8)], 5, 16, 25.0, 3);
    let options: Vec<String> = ["one", "two", "three", "four"].iter().map(|s| s.to_string()).collect();
    for q in ["What sport is this?", "How many sub-sets of movements are performed?"] {
        let a = engine.answer(&video, q, Some(&options), None)?;
        println!("{q}\n  mode: {:?}, answer: {}", a.mode, a.text);
        for rec in &a.trace {
            println!("  stage {}", rec.stage);
        }
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    run()
}
