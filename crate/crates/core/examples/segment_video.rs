//! Measures motion in a synthetic three-action video and splits it at the
//! pauses between actions.

use finequest::backends::Backends;
use finequest::motion::{extract_motion_signal, segment, MotionEstimator, SegmenterConfig};
use finequest::synthetic::action_video;

fn run() -> anyhow::Result<()> {
    let video = action_video(&[(30, 0.9), (24, 0.7), (28, 0.8)], 6, 24, 25.0, 7);
    let signal = extract_motion_signal(&video, MotionEstimator::FrameDiff, &Backends::new())?;
    let cfg = SegmenterConfig {
        win_size: 8,
        z_range: [0.5, 1.5],
        clip_len_range: [6, 20],
    };
    println!("{} frames, {} motion values", video.frame_count(), signal.len());
    for p in segment(&signal, &cfg)? {
        let secs = |f: usize| f as f64 / video.fps();
        println!(
            "  frames [{:>3}, {:>3})  {:.2}s - {:.2}s",
            p.start_frame,
            p.end_frame,
            secs(p.start_frame),
            secs(p.end_frame)
        );
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    run()
}
