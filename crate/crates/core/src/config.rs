//! Engine configuration file (JSON). Every field is optional.
//!
//! ```json
//! {
//!   "segmenter": {"win_size": 16, "z_range": [0.5, 2.0], "clip_len_range": [8, 32]},
//!   "weights": {"alpha_s": 0.5, "alpha_t": 0.3, "alpha_st": 0.2},
//!   "n1": null,
//!   "n2": 5,
//!   "seed": 7
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contrastive::ContrastiveWeights;
use crate::distortion::{DistortionSet, DistortionSpec};
use crate::matcher::{ChannelWeights, DEFAULT_TOP_K};
use crate::motion::{MotionEstimator, SegmenterConfig};
use crate::ssgraph::SportCode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse engine config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid engine config: {0}")]
    Invalid(String),
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default)]
    pub segmenter: SegmenterConfig,
    #[serde(default)]
    pub motion_estimator: MotionEstimator,
    /// Run the masker (when configured) before measuring motion.
    #[serde(default = "yes")]
    pub mask_athletes: bool,
    #[serde(default)]
    pub weights: ContrastiveWeights,
    #[serde(default)]
    pub distortions: DistortionSet,
    /// Key clips kept; derived from the video length when absent.
    #[serde(default)]
    pub n1: Option<usize>,
    /// Graph matches kept; derived from the video length when absent.
    #[serde(default)]
    pub n2: Option<usize>,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub channel_weights: ChannelWeights,
    #[serde(default)]
    pub sport: Option<SportCode>,
    /// Parallel evaluation workers; all cores when absent.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub agent_prompt_path: Option<PathBuf>,
    #[serde(default)]
    pub reasoning_prompt_path: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            segmenter: SegmenterConfig::default(),
            motion_estimator: MotionEstimator::default(),
            mask_athletes: true,
            weights: ContrastiveWeights::default(),
            distortions: DistortionSet::default(),
            n1: None,
            n2: None,
            top_k: DEFAULT_TOP_K,
            channel_weights: ChannelWeights::default(),
            sport: None,
            workers: None,
            seed: 0,
            agent_prompt_path: None,
            reasoning_prompt_path: None,
        }
    }
}

impl EngineConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Sets `seed` and reseeds every distortion from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        let d = &mut self.distortions;
        for spec in [&mut d.spatial, &mut d.temporal, &mut d.spatiotemporal] {
            *spec = DistortionSpec::with_seed(*spec, seed);
        }
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.segmenter
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.weights
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for spec in [
            &self.distortions.spatial,
            &self.distortions.temporal,
            &self.distortions.spatiotemporal,
        ] {
            spec.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.n1 == Some(0) || self.n2 == Some(0) {
            return invalid("n1 and n2 must be at least 1".into());
        }
        if self.top_k == 0 {
            return invalid("top_k must be at least 1".into());
        }
        if self.workers == Some(0) {
            return invalid("workers must be at least 1".into());
        }
        let w = &self.channel_weights;
        if [w.t2t, w.v2v, w.t2v, w.v2t, w.v2r]
            .iter()
            .any(|x| !x.is_finite() || *x < 0.0)
        {
            return invalid("channel weights must be finite and non-negative".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(EngineConfig::from_json("{}").unwrap(), EngineConfig::default());
    }

    #[test]
    fn overrides_and_rejections() {
        let cfg = EngineConfig::from_json(r#"{"n2": 3, "sport": "D", "weights": {"alpha_s": 1.0, "alpha_t": 0.0, "alpha_st": 0.0}}"#)
            .unwrap();
        assert_eq!(cfg.n2, Some(3));
        assert_eq!(cfg.sport, Some(SportCode::D));
        assert_eq!(cfg.weights.alpha_s, 1.0);
        assert!(EngineConfig::from_json(r#"{"n1": 0}"#).is_err());
        assert!(EngineConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(EngineConfig::from_json(r#"{"segmenter": {"win_size": 1, "z_range": [0.5, 2.0], "clip_len_range": [8, 32]}}"#).is_err());
    }

    #[test]
    fn seed_reaches_distortions() {
        let cfg = EngineConfig::default().with_seed(42);
        assert_eq!(cfg.distortions.temporal.seed, 42);
        assert_eq!(cfg.distortions.spatiotemporal.seed, 42);
    }
}
