//! Scores candidate clips with contrastive relevance and keeps the best,
//! merging neighbours into spans.

use finequest::backends::mock::ScriptedScorer;
use finequest::backends::Backends;
use finequest::clip::ClipTensor;
use finequest::contrastive::{bucketed_n, select_key_clips, ContrastiveWeights};
use finequest::distortion::DistortionSet;

fn run() -> anyhow::Result<()> {
    // the mock scorer's "yes" logit grows with brightness, so bright clips read as relevant
    let levels = [0.2, 0.8, 0.85, 0.3, 0.25, 0.9, 0.1];
    let clips = levels
        .iter()
        .map(|&l| ClipTensor::filled(12, 8, 8, 3, 25.0, l))
        .collect::<Result<Vec<_>, _>>()?;
    let backends = Backends::new().with_scorer(ScriptedScorer::brightness(6.0));
    let w = ContrastiveWeights::default();
    let sel = select_key_clips(&clips, "When does the vault happen?", &w, &DistortionSet::with_seed(1), &backends, 3)?;
    for s in &sel.scores {
        println!("clip {}: relevance {:.4}", s.clip_index, s.score);
    }
    let spans: Vec<String> = sel.spans.iter().map(|s| s.to_string()).collect();
    println!("key clip spans: {}", spans.join(" "));
    for d in [30.0, 45.0, 95.0] {
        println!("a {d} s video keeps {} clips", bucketed_n(d)?);
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    run()
}
