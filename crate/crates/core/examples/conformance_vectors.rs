//! Records the wire-protocol conformance vectors from the built-in mocks and
//! replays them, the same check a model server has to pass.
//!
//! `cargo run --example conformance_vectors -- vectors.json` saves them.

use finequest::backends::conformance::{record, reference_backends};
use finequest::backends::wire::dispatch;

fn run(out: Option<&str>) -> anyhow::Result<()> {
    let backends = reference_backends();
    let vectors = record(&backends);
    for v in &vectors {
        let reply = dispatch(&backends, &v.method, &v.path, &v.body());
        let body: serde_json::Value = serde_json::from_slice(&reply.body)?;
        v.check(reply.status, &body, true).map_err(anyhow::Error::msg)?;
        println!("{:<22} {} {:<14} -> {}", v.name, v.method, v.path, v.status);
    }
    if let Some(path) = out {
        std::fs::write(path, serde_json::to_string_pretty(&vectors)? + "\n")?;
        println!("wrote {} vectors to {path}", vectors.len());
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1);
    run(out.as_deref())
}
