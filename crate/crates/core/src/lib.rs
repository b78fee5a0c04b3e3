//! Deterministic tooling for studying anchor-based road-object detectors on
//! KITTI: label parsing, box geometry, anchor selection, CNN stride and memory
//! arithmetic, and KITTI-protocol average precision.

pub mod anchors;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod kitti;
pub mod net;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{Box2D, BoxDelta, ImageDims};
pub use kitti::{Detection, DifficultyBin, Frame, GroundTruthObject};
