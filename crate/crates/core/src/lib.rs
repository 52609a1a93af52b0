//! Training-free sports video question answering.

pub mod backends;
pub mod clip;
pub mod contrastive;
pub mod distortion;
pub mod motion;
pub mod ssgraph;
pub mod matcher;
pub mod config;
pub mod router;
pub mod eval;
pub mod service;
pub mod synthetic;
