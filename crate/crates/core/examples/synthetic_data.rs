//! Writes synthetic videos plus a matching multiple-choice dataset, the
//! inputs `finequest eval` expects.
//!
//! `cargo run --example synthetic_data -- out_dir`

use std::fs;
use std::path::Path;

use finequest::eval::{Difficulty, Letter, QaItem, Subset};
use finequest::synthetic::action_video;

fn items() -> Vec<QaItem> {
    let opts = |o: [&str; 4]| o.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    vec![
        QaItem {
            id: "gym-sport".into(),
            video_ref: "gym.json".into(),
            question: "What sport is this?".into(),
            options: opts(["gymnastics", "diving", "tennis", "soccer"]),
            gold: Letter::A,
            difficulty: Some(Difficulty::Easy),
            subset: Some(Subset::Set),
        },
        QaItem {
            id: "gym-subsets".into(),
            video_ref: "gym.json".into(),
            question: "How many sub-sets of movements are performed?".into(),
            options: opts(["one", "two", "three", "four"]),
            gold: Letter::C,
            difficulty: Some(Difficulty::Hard),
            subset: Some(Subset::Set),
        },
        QaItem {
            id: "dive-code".into(),
            video_ref: "dive.json".into(),
            question: "Which dive number matches this dive?".into(),
            options: opts(["105B", "626B", "307C", "5253B"]),
            gold: Letter::B,
            difficulty: Some(Difficulty::Hard),
            subset: Some(Subset::Element),
        },
        QaItem {
            id: "dive-sport".into(),
            video_ref: "dive.json".into(),
            question: "Is this a water sport?".into(),
            options: opts(["yes", "no", "unclear", "only partly"]),
            gold: Letter::A,
            difficulty: Some(Difficulty::Easy),
            subset: Some(Subset::Element),
        },
    ]
}

fn run(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    action_video(&[(10, 0.9), (8, 0.6), (10, 0.8)], 3, 6, 10.0, 1).save_json(dir.join("gym.json"))?;
    action_video(&[(12, 0.7), (12, 0.95)], 4, 6, 10.0, 2).save_json(dir.join("dive.json"))?;
    let mut jsonl = String::new();
    for item in items() {
        jsonl.push_str(&serde_json::to_string(&item)?);
        jsonl.push('\n');
    }
    fs::write(dir.join("qa.jsonl"), jsonl)?;
    println!("wrote gym.json, dive.json and qa.jsonl to {}", dir.display());
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "synthetic".into());
    run(Path::new(&dir))
}
