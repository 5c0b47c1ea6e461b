//! Synthetic stand-in for the neural front-end: procedural CAD shapes,
//! random scenes, noisy correspondence sampling and the robustness
//! benchmark built on top of the alignment solver.
//!
//! Everything is deterministic in the configured seed: identical
//! configuration yields byte-identical reports, and noise draws are shared
//! across the sigma sweep (only their magnitude changes) so robustness
//! comparisons are paired.

pub mod bench;
pub mod error;
pub mod sample;
pub mod scene;
pub mod shapes;

mod parallel;
mod seed;

pub use bench::{run_benchmark, BenchConfig, BenchReport, CellReport, WeightPolicy};
pub use error::{Error, Result};
pub use sample::{sample_correspondences, NoiseSpec};
pub use scene::{gen_scene, RotationMode, SceneConfig, SceneGroundTruth, SceneObject};
pub use shapes::{gen_cad, CATEGORIES};
