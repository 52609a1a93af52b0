//! Motion-magnitude signals and adaptive sub-action segmentation.
//!
//! A sliding window over the motion signal sets a threshold
//! `mean - z * std`; a frame whose motion falls below it starts a new
//! segment, provided the current segment is already long enough. Both `z`
//! and the minimum length adapt to the window's coefficient of variation
//! `cv = std / mean` (clamped to `[0, 1]`):
//!
//! * `z = z_min + (z_max - z_min) * cv`
//! * `min_len = round(L_min + (L_max - L_min) * (1 - cv))`
//!
//! Calm windows therefore need a deeper relative dip and a longer segment
//! before they split.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, Backends};
use crate::clip::{ClipTensor, FrameInterval};

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("need at least 2 frames to measure motion, got {0}")]
    TooFewFrames(usize),
    #[error("motion signal of length {len} is shorter than the window ({win_size})")]
    SignalTooShort { len: usize, win_size: usize },
    #[error("invalid segmenter config: {0}")]
    InvalidConfig(String),
    #[error("invalid motion signal: {0}")]
    InvalidSignal(String),
    #[error("flow backend: {0}")]
    Backend(#[from] BackendError),
    #[error("cannot read motion signal: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse motion signal: {0}")]
    Parse(#[from] serde_json::Error),
}

/// One non-negative motion value per consecutive frame pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSignal {
    pub values: Vec<f64>,
    pub fps: f64,
}

impl MotionSignal {
    pub fn new(values: Vec<f64>, fps: f64) -> Result<Self, MotionError> {
        let s = Self { values, fps };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), MotionError> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(MotionError::InvalidSignal(format!("fps {} is not positive", self.fps)));
        }
        if let Some((i, v)) = self
            .values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(MotionError::InvalidSignal(format!(
                "value {v} at index {i} is not a finite non-negative number"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Frames covered by the signal (`len + 1`).
    pub fn frame_count(&self) -> usize {
        self.values.len() + 1
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, MotionError> {
        let s: MotionSignal = serde_json::from_str(&fs::read_to_string(path)?)?;
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    pub win_size: usize,
    pub z_range: [f64; 2],
    pub clip_len_range: [usize; 2],
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            win_size: 16,
            z_range: [0.5, 2.0],
            clip_len_range: [8, 32],
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<(), MotionError> {
        let bad = |m: String| Err(MotionError::InvalidConfig(m));
        let [z_min, z_max] = self.z_range;
        let [l_min, l_max] = self.clip_len_range;
        if self.win_size < 2 {
            return bad(format!("win_size {} < 2", self.win_size));
        }
        if !(z_min.is_finite() && z_max.is_finite()) || z_min < 0.0 || z_min > z_max {
            return bad(format!("z_range [{z_min}, {z_max}] must satisfy 0 <= z_min <= z_max"));
        }
        if l_min == 0 || l_min > l_max {
            return bad(format!(
                "clip_len_range [{l_min}, {l_max}] must satisfy 1 <= L_min <= L_max"
            ));
        }
        Ok(())
    }

    /// `(z, min_len)` for a window with the given mean and standard deviation.
    pub fn adapt(&self, mean: f64, std: f64) -> (f64, usize) {
        let cv = if mean == 0.0 { 0.0 } else { (std / mean).clamp(0.0, 1.0) };
        let [z_min, z_max] = self.z_range;
        let [l_min, l_max] = self.clip_len_range;
        let z = z_min + (z_max - z_min) * cv;
        let len = (l_min as f64 + (l_max - l_min) as f64 * (1.0 - cv)).round() as usize;
        (z, len)
    }
}

/// How motion is measured between consecutive frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionEstimator {
    /// Mean absolute per-value difference.
    #[default]
    FrameDiff,
    /// Mean optical-flow magnitude from the flow backend.
    BackendFlow,
}

/// Mean absolute difference between each pair of consecutive frames.
pub fn frame_difference(clip: &ClipTensor) -> Vec<f64> {
    let n = clip.frame_len().max(1) as f64;
    let frames: Vec<&[f32]> = clip.frames().collect();
    frames
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(w[1])
                .map(|(a, b)| (*b as f64 - *a as f64).abs())
                .sum::<f64>()
                / n
        })
        .collect()
}

pub fn extract_motion_signal(
    clip: &ClipTensor,
    estimator: MotionEstimator,
    backends: &Backends,
) -> Result<MotionSignal, MotionError> {
    if clip.frame_count() < 2 {
        return Err(MotionError::TooFewFrames(clip.frame_count()));
    }
    let values = match estimator {
        MotionEstimator::FrameDiff => frame_difference(clip),
        MotionEstimator::BackendFlow => backends.flow_magnitudes(clip)?,
    };
    MotionSignal::new(values, clip.fps())
}

/// Population mean and std. Summing offsets from the first value keeps a
/// constant window exact: its mean is that value and its std is zero.
fn mean_std(window: &[f64]) -> (f64, f64) {
    let n = window.len() as f64;
    let pivot = window[0];
    let mean = pivot + window.iter().map(|v| v - pivot).sum::<f64>() / n;
    let var = window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Signal indices at which a new segment starts.
pub fn boundaries(m: &MotionSignal, cfg: &SegmenterConfig) -> Result<Vec<usize>, MotionError> {
    cfg.validate()?;
    let values = &m.values;
    if values.len() < cfg.win_size {
        return Err(MotionError::SignalTooShort {
            len: values.len(),
            win_size: cfg.win_size,
        });
    }
    let mut out = Vec::new();
    let mut last = 0usize;
    for i in cfg.win_size..values.len() {
        let (mean, std) = mean_std(&values[i - cfg.win_size..i]);
        let (z, min_len) = cfg.adapt(mean, std);
        let threshold = mean - z * std;
        if values[i] < threshold && i - last >= min_len {
            out.push(i);
            last = i;
        }
    }
    Ok(out)
}

/// Converts segment starts into half-open intervals tiling `[0, frame_count)`.
pub fn boundaries_to_proposals(bounds: &[usize], frame_count: usize) -> Vec<FrameInterval> {
    let mut cuts = Vec::with_capacity(bounds.len() + 2);
    cuts.push(0);
    cuts.extend(bounds.iter().copied().filter(|&b| b > 0 && b < frame_count));
    cuts.push(frame_count);
    cuts.dedup();
    cuts.windows(2)
        .map(|w| FrameInterval::new(w[0], w[1]))
        .collect()
}

/// Segment proposals covering all `len + 1` frames of the signal.
pub fn segment(m: &MotionSignal, cfg: &SegmenterConfig) -> Result<Vec<FrameInterval>, MotionError> {
    let b = boundaries(m, cfg)?;
    Ok(boundaries_to_proposals(&b, m.frame_count()))
}

pub fn segment_video(
    clip: &ClipTensor,
    cfg: &SegmenterConfig,
    estimator: MotionEstimator,
    backends: &Backends,
) -> Result<Vec<FrameInterval>, MotionError> {
    cfg.validate()?;
    let m = extract_motion_signal(clip, estimator, backends)?;
    segment(&m, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::FnFlow;

    fn sig(values: Vec<f64>) -> MotionSignal {
        MotionSignal::new(values, 25.0).unwrap()
    }

    #[test]
    fn frame_diff_basics() {
        let same = ClipTensor::filled(2, 3, 3, 1, 25.0, 0.4).unwrap();
        assert_eq!(frame_difference(&same), vec![0.0]);
        let jump = ClipTensor::from_fn(2, 2, 2, 3, 25.0, |t, _, _, _| t as f32).unwrap();
        assert_eq!(frame_difference(&jump), vec![1.0]);
        // ramp: frame t is t/8 everywhere, so every step differs by exactly 0.125
        let ramp = ClipTensor::from_fn(5, 2, 3, 1, 25.0, |t, _, _, _| t as f32 / 8.0).unwrap();
        assert_eq!(frame_difference(&ramp), vec![0.125; 4]);
    }

    #[test]
    fn too_few_frames() {
        let one = ClipTensor::filled(1, 2, 2, 1, 25.0, 0.0).unwrap();
        assert!(matches!(
            extract_motion_signal(&one, MotionEstimator::FrameDiff, &Backends::new()),
            Err(MotionError::TooFewFrames(1))
        ));
        assert!(matches!(
            segment_video(&one, &SegmenterConfig::default(), MotionEstimator::FrameDiff, &Backends::new()),
            Err(MotionError::TooFewFrames(1))
        ));
    }

    #[test]
    fn flow_estimator_needs_backend() {
        let clip = ClipTensor::filled(3, 1, 1, 1, 25.0, 0.0).unwrap();
        assert!(matches!(
            extract_motion_signal(&clip, MotionEstimator::BackendFlow, &Backends::new()),
            Err(MotionError::Backend(BackendError::Unavailable(_)))
        ));
        let b = Backends::new().with_flow(FnFlow(|c: &ClipTensor| vec![2.0; c.frame_count() - 1]));
        let m = extract_motion_signal(&clip, MotionEstimator::BackendFlow, &b).unwrap();
        assert_eq!(m.values, vec![2.0, 2.0]);
        let bad = Backends::new().with_flow(FnFlow(|_: &ClipTensor| vec![1.0]));
        assert!(extract_motion_signal(&clip, MotionEstimator::BackendFlow, &bad).is_err());
    }

    #[test]
    fn constant_signal_is_one_segment() {
        let cfg = SegmenterConfig::default();
        let p = segment(&sig(vec![0.3; 100]), &cfg).unwrap();
        assert_eq!(p, vec![FrameInterval::new(0, 101)]);
        let p = segment(&sig(vec![0.0; 40]), &cfg).unwrap();
        assert_eq!(p, vec![FrameInterval::new(0, 41)]);
    }

    #[test]
    fn single_dip_splits_once() {
        // a window of alternating 1.0 / 1.2 has mean 1.1, std 0.1, cv < 1
        let mut v: Vec<f64> = (0..80).map(|i| if i % 2 == 0 { 1.0 } else { 1.2 }).collect();
        v[40] = 0.0;
        let cfg = SegmenterConfig {
            win_size: 10,
            z_range: [1.0, 1.0],
            clip_len_range: [5, 5],
        };
        assert_eq!(boundaries(&sig(v.clone()), &cfg).unwrap(), vec![40]);
        assert_eq!(
            segment(&sig(v), &cfg).unwrap(),
            vec![FrameInterval::new(0, 40), FrameInterval::new(40, 81)]
        );
    }

    #[test]
    fn second_close_dip_is_suppressed() {
        let mut v: Vec<f64> = (0..80).map(|i| if i % 2 == 0 { 1.0 } else { 1.2 }).collect();
        v[40] = 0.0;
        v[43] = 0.0;
        let cfg = SegmenterConfig {
            win_size: 10,
            z_range: [1.0, 1.0],
            clip_len_range: [5, 5],
        };
        assert_eq!(boundaries(&sig(v), &cfg).unwrap(), vec![40]);
    }

    #[test]
    fn short_signal_and_bad_config() {
        let cfg = SegmenterConfig::default();
        assert!(matches!(
            segment(&sig(vec![1.0; 5]), &cfg),
            Err(MotionError::SignalTooShort { len: 5, win_size: 16 })
        ));
        for bad in [
            SegmenterConfig { win_size: 1, ..cfg },
            SegmenterConfig { z_range: [2.0, 1.0], ..cfg },
            SegmenterConfig { z_range: [-1.0, 1.0], ..cfg },
            SegmenterConfig { clip_len_range: [0, 4], ..cfg },
            SegmenterConfig { clip_len_range: [9, 4], ..cfg },
        ] {
            assert!(matches!(segment(&sig(vec![1.0; 50]), &bad), Err(MotionError::InvalidConfig(_))));
        }
    }

    #[test]
    fn adapt_extremes() {
        let cfg = SegmenterConfig {
            win_size: 4,
            z_range: [0.5, 2.0],
            clip_len_range: [8, 32],
        };
        assert_eq!(cfg.adapt(0.0, 0.0), (0.5, 32));
        assert_eq!(cfg.adapt(1.0, 0.0), (0.5, 32));
        assert_eq!(cfg.adapt(1.0, 5.0), (2.0, 8));
        assert_eq!(cfg.adapt(2.0, 1.0), (1.25, 20));
    }

    #[test]
    fn rejects_negative_signal() {
        assert!(MotionSignal::new(vec![0.1, -0.1], 25.0).is_err());
        assert!(MotionSignal::new(vec![0.1, f64::NAN], 25.0).is_err());
    }
}
