//! Evaluates the fixture dataset with mock backends and prints the report.

use std::path::Path;
use std::sync::Arc;

use finequest::backends::config::BackendConfig;
use finequest::config::EngineConfig;
use finequest::eval::{evaluate, load_dataset, DirVideoSource};
use finequest::router::Engine;
use finequest::ssgraph::load_graph;

fn run() -> anyhow::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let items = load_dataset(fixtures.join("eval/qa.jsonl"))?;
    let graph = load_graph(fixtures.join("graph.json"))?;
    let backends = BackendConfig::all_mock(graph.embedding_dim).build(0)?;
    let engine = Engine::new(EngineConfig { workers: Some(2), ..EngineConfig::default() }, backends, Some(Arc::new(graph)))?;
    let source = DirVideoSource { root: fixtures.join("eval"), fps: 10.0 };
    let report = evaluate(&items, &engine, &source, None);
    print!("{}", report.to_text());
    for v in &report.verdicts {
        println!("{:<12} gold {} predicted {:?} via {:?}", v.id, v.gold, v.predicted, v.mode);
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    run()
}
