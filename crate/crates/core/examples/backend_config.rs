//! Parses a backend configuration, applies endpoint overrides and builds
//! the backends it describes.

use finequest::backends::config::BackendConfig;

const CONFIG: &str = r#"{
  "agent":    {"endpoint": "mock"},
  "scorer":   {"endpoint": "mock", "affirmative_token_index": 0},
  "embedder": {"endpoint": "mock", "embedding_dim": 16},
  "reasoner": {"endpoint": "http://127.0.0.1:8100", "timeout_ms": 20000}
}"#;

fn run() -> anyhow::Result<()> {
    let mut cfg = BackendConfig::from_json(CONFIG)?;
    // the same hook FINEQUEST_<ROLE>_ENDPOINT variables go through
    cfg.apply_overrides(|key| (key == "FINEQUEST_REASONER_ENDPOINT").then(|| "mock".to_string()));
    let backends = cfg.build(0)?;
    println!("configured roles: {:?}", backends.configured_roles());
    println!("{}", serde_json::to_string_pretty(&cfg)?);
    if BackendConfig::from_json(r#"{"embedder": {"endpoint": "mock"}}"#).is_err() {
        println!("an embedder without embedding_dim is rejected");
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    run()
}
