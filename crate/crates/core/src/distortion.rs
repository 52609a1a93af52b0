//! Seeded clip distortions for contrastive decoding.
//!
//! The default families are additive Gaussian noise (spatial), monotone
//! temporal warping (temporal) and their composition (spatio-temporal).
//! The alternative spatial variants (CutMix, blur, color jitter) and
//! temporal variants (full shuffle, local shuffle, reverse) sit behind the
//! same [`DistortionSpec`] for ablations.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clip::ClipTensor;

#[derive(Debug, Error, PartialEq)]
pub enum DistortionError {
    #[error("temporal distortion needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("{kind:?} distorter called with a {got:?} spec")]
    WrongKind {
        kind: DistortionKind,
        got: DistortionKind,
    },
    #[error("invalid distortion spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistortionKind {
    Spatial,
    Temporal,
    Spatiotemporal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialVariant {
    #[default]
    GaussianNoise,
    CutMix,
    Blur,
    ColorJitter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalVariant {
    #[default]
    Warp,
    AllShuffle,
    LocalShuffle,
    Reverse,
}

/// Parameters of one distortion.
///
/// `noise_sigma` is the strength of whichever spatial variant is selected
/// (noise std, CutMix area fraction, blur radius in tenths of a pixel,
/// jitter amplitude); `warp_strength` is the half-width of the per-frame
/// duration range, or the local-shuffle window as a fraction of the clip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub noise_sigma: f64,
    pub warp_strength: f64,
    pub seed: u64,
    #[serde(default)]
    pub spatial_variant: SpatialVariant,
    #[serde(default)]
    pub temporal_variant: TemporalVariant,
}

pub const DEFAULT_NOISE_SIGMA: f64 = 0.1;
pub const DEFAULT_WARP_STRENGTH: f64 = 0.5;

impl DistortionSpec {
    pub fn new(kind: DistortionKind, seed: u64) -> Self {
        Self {
            kind,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            warp_strength: DEFAULT_WARP_STRENGTH,
            seed,
            spatial_variant: SpatialVariant::default(),
            temporal_variant: TemporalVariant::default(),
        }
    }

    pub fn spatial(noise_sigma: f64, seed: u64) -> Self {
        Self {
            noise_sigma,
            ..Self::new(DistortionKind::Spatial, seed)
        }
    }

    pub fn temporal(warp_strength: f64, seed: u64) -> Self {
        Self {
            warp_strength,
            ..Self::new(DistortionKind::Temporal, seed)
        }
    }

    pub fn spatiotemporal(noise_sigma: f64, warp_strength: f64, seed: u64) -> Self {
        Self {
            noise_sigma,
            warp_strength,
            ..Self::new(DistortionKind::Spatiotemporal, seed)
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<(), DistortionError> {
        if !(0.0..=1.0).contains(&self.noise_sigma) {
            return Err(DistortionError::InvalidSpec(format!(
                "noise_sigma {} outside [0, 1]",
                self.noise_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.warp_strength) {
            return Err(DistortionError::InvalidSpec(format!(
                "warp_strength {} outside [0, 1]",
                self.warp_strength
            )));
        }
        Ok(())
    }

    fn expect(&self, kind: DistortionKind) -> Result<(), DistortionError> {
        if self.kind != kind {
            return Err(DistortionError::WrongKind {
                kind,
                got: self.kind,
            });
        }
        self.validate()
    }
}

/// One spec per distortion family, as consumed by the clip selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionSet {
    pub spatial: DistortionSpec,
    pub temporal: DistortionSpec,
    pub spatiotemporal: DistortionSpec,
}

impl DistortionSet {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            spatial: DistortionSpec::new(DistortionKind::Spatial, seed),
            temporal: DistortionSpec::new(DistortionKind::Temporal, seed),
            spatiotemporal: DistortionSpec::new(DistortionKind::Spatiotemporal, seed),
        }
    }

    /// Same parameters with every seed mixed with `salt`.
    pub fn salted(&self, salt: u64) -> Self {
        let mix = |s: DistortionSpec| s.with_seed(splitmix64(s.seed ^ splitmix64(salt)));
        Self {
            spatial: mix(self.spatial),
            temporal: mix(self.temporal),
            spatiotemporal: mix(self.spatiotemporal),
        }
    }
}

impl Default for DistortionSet {
    fn default() -> Self {
        Self::with_seed(0)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn clamp01(v: f64) -> f32 {
    v.clamp(0.0, 1.0) as f32
}

/// Applies `spec.spatial_variant` frame by frame.
pub fn spatial_distort(clip: &ClipTensor, spec: &DistortionSpec) -> Result<ClipTensor, DistortionError> {
    spec.expect(DistortionKind::Spatial)?;
    Ok(apply_spatial(clip, spec.spatial_variant, spec.noise_sigma, spec.seed))
}

fn apply_spatial(clip: &ClipTensor, variant: SpatialVariant, strength: f64, seed: u64) -> ClipTensor {
    let mut r = rng(seed);
    match variant {
        SpatialVariant::GaussianNoise => {
            let data = clip
                .data()
                .iter()
                .map(|&v| {
                    let n: f64 = StandardNormal.sample(&mut r);
                    clamp01(v as f64 + strength * n)
                })
                .collect();
            clip.with_data(data)
        }
        SpatialVariant::ColorJitter => color_jitter(clip, strength, &mut r),
        SpatialVariant::Blur => box_blur(clip, (strength * 10.0).round() as usize),
        SpatialVariant::CutMix => cutmix(clip, strength, &mut r),
    }
}

fn color_jitter(clip: &ClipTensor, amp: f64, r: &mut ChaCha8Rng) -> ClipTensor {
    let c = clip.channels().max(1);
    let mut data = Vec::with_capacity(clip.data().len());
    for frame in clip.frames() {
        let shift = if amp > 0.0 { r.random_range(-amp..=amp) } else { 0.0 };
        let gains: Vec<f64> = (0..c)
            .map(|_| if amp > 0.0 { r.random_range(1.0 - amp..=1.0 + amp) } else { 1.0 })
            .collect();
        data.extend(
            frame
                .iter()
                .enumerate()
                .map(|(i, &v)| clamp01(v as f64 * gains[i % c] + shift)),
        );
    }
    clip.with_data(data)
}

fn box_blur(clip: &ClipTensor, radius: usize) -> ClipTensor {
    if radius == 0 {
        return clip.clone();
    }
    let (_, h, w, c) = clip.shape();
    let mut data = Vec::with_capacity(clip.data().len());
    for frame in clip.frames() {
        let at = |y: usize, x: usize, ch: usize| frame[(y * w + x) * c + ch] as f64;
        for y in 0..h {
            let (y0, y1) = (y.saturating_sub(radius), (y + radius).min(h - 1));
            for x in 0..w {
                let (x0, x1) = (x.saturating_sub(radius), (x + radius).min(w - 1));
                let count = ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64;
                for ch in 0..c {
                    let mut s = 0.0;
                    for yy in y0..=y1 {
                        for xx in x0..=x1 {
                            s += at(yy, xx, ch);
                        }
                    }
                    data.push(clamp01(s / count));
                }
            }
        }
    }
    clip.with_data(data)
}

/// Pastes a rectangle covering `area` of each frame from another random frame.
fn cutmix(clip: &ClipTensor, area: f64, r: &mut ChaCha8Rng) -> ClipTensor {
    let (t, h, w, c) = clip.shape();
    let side = area.sqrt();
    let ph = ((h as f64) * side).round() as usize;
    let pw = ((w as f64) * side).round() as usize;
    let mut data = clip.data().to_vec();
    if t < 2 || ph == 0 || pw == 0 {
        return clip.with_data(data);
    }
    let n = h * w * c;
    for dst in 0..t {
        let mut src = r.random_range(0..t - 1);
        if src >= dst {
            src += 1;
        }
        let y0 = r.random_range(0..=h - ph);
        let x0 = r.random_range(0..=w - pw);
        let source = clip.frame(src);
        for y in y0..y0 + ph {
            let row = (y * w + x0) * c;
            let len = pw * c;
            data[dst * n + row..dst * n + row + len].copy_from_slice(&source[row..row + len]);
        }
    }
    clip.with_data(data)
}

/// Monotone output→input frame map for the given per-frame durations.
///
/// Durations are rescaled to sum to the frame count; input frame `i`
/// starts at the cumulative duration of frames before it, and output frame
/// `j` shows the input frame whose start is nearest to `j` (ties go to the
/// earlier frame).
pub fn warp_index_map(durations: &[f64]) -> Vec<usize> {
    let n = durations.len();
    if n == 0 {
        return Vec::new();
    }
    let total: f64 = durations.iter().sum();
    let scale = n as f64 / total;
    let mut starts = Vec::with_capacity(n);
    let mut acc = 0.0;
    for d in durations {
        starts.push(acc);
        acc += d * scale;
    }
    let mut map = Vec::with_capacity(n);
    let mut i = 0;
    for j in 0..n {
        let target = j as f64;
        while i + 1 < n && (starts[i + 1] - target).abs() < (starts[i] - target).abs() {
            i += 1;
        }
        map.push(i);
    }
    map
}

/// Per-frame durations drawn from `[1 - strength, 1 + strength]`.
pub fn warp_durations(frames: usize, strength: f64, seed: u64) -> Vec<f64> {
    if strength == 0.0 {
        return vec![1.0; frames];
    }
    let mut r = rng(seed);
    let dist = Uniform::new_inclusive(1.0 - strength, 1.0 + strength).expect("valid range");
    (0..frames).map(|_| dist.sample(&mut r)).collect()
}

/// The output→input frame map a temporal spec applies to a clip of `frames` frames.
pub fn temporal_index_map(
    frames: usize,
    variant: TemporalVariant,
    strength: f64,
    seed: u64,
) -> Vec<usize> {
    match variant {
        TemporalVariant::Warp => warp_index_map(&warp_durations(frames, strength, seed)),
        TemporalVariant::Reverse => (0..frames).rev().collect(),
        TemporalVariant::AllShuffle => {
            let mut idx: Vec<usize> = (0..frames).collect();
            idx.shuffle(&mut rng(seed));
            idx
        }
        TemporalVariant::LocalShuffle => {
            let window = ((strength * frames as f64).round() as usize).max(2);
            let mut idx: Vec<usize> = (0..frames).collect();
            let mut r = rng(seed);
            for chunk in idx.chunks_mut(window) {
                chunk.shuffle(&mut r);
            }
            idx
        }
    }
}

pub fn temporal_warp(clip: &ClipTensor, spec: &DistortionSpec) -> Result<ClipTensor, DistortionError> {
    spec.expect(DistortionKind::Temporal)?;
    apply_temporal(clip, spec.temporal_variant, spec.warp_strength, spec.seed)
}

fn apply_temporal(
    clip: &ClipTensor,
    variant: TemporalVariant,
    strength: f64,
    seed: u64,
) -> Result<ClipTensor, DistortionError> {
    if clip.frame_count() < 2 {
        return Err(DistortionError::TooFewFrames(clip.frame_count()));
    }
    let map = temporal_index_map(clip.frame_count(), variant, strength, seed);
    Ok(clip.gather_frames(&map))
}

/// Temporal distortion followed by spatial distortion, each with its own
/// sub-seed drawn from `spec.seed`.
pub fn spatiotemporal_distort(
    clip: &ClipTensor,
    spec: &DistortionSpec,
) -> Result<ClipTensor, DistortionError> {
    spec.expect(DistortionKind::Spatiotemporal)?;
    let (t_seed, s_seed) = sub_seeds(spec.seed);
    let warped = apply_temporal(clip, spec.temporal_variant, spec.warp_strength, t_seed)?;
    Ok(apply_spatial(&warped, spec.spatial_variant, spec.noise_sigma, s_seed))
}

/// `(temporal, spatial)` sub-seeds used by the spatio-temporal distorter.
pub fn sub_seeds(seed: u64) -> (u64, u64) {
    let mut r = rng(seed);
    (r.next_u64(), r.next_u64())
}

/// Dispatches on `spec.kind`.
pub fn distort(clip: &ClipTensor, spec: &DistortionSpec) -> Result<ClipTensor, DistortionError> {
    match spec.kind {
        DistortionKind::Spatial => spatial_distort(clip, spec),
        DistortionKind::Temporal => temporal_warp(clip, spec),
        DistortionKind::Spatiotemporal => spatiotemporal_distort(clip, spec),
    }
}
