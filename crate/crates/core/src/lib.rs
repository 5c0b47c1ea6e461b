//! Robust 9-DoF CAD alignment from dense 2D-3D correspondences.
//!
//! The crate implements the numerical core of a correspondence-driven CAD
//! alignment pipeline: weighted Procrustes rotation and translation solves
//! over normalized-object-coordinate (NOC) correspondences, analytic
//! gradients through the SVD-based solver, the associated loss family,
//! canonical-cube voxelization with Chamfer-based shape retrieval, and the
//! alignment-accuracy evaluation protocol with world-space clustering.
//!
//! Learned components (detection, depth, NOC and weight heads) are out of
//! scope; correspondences, scales and embeddings enter as plain data so the
//! solver can be driven by oracles, fixtures or an external front-end.
//!
//! With the default `parallel` feature, batch entry points distribute work
//! with rayon; disabling it yields an equivalent sequential build.

pub mod error;
pub mod geometry;
pub mod gradients;
pub mod losses;
pub mod metrics;
pub mod procrustes;
pub mod retrieval;
pub mod voxel;

mod parallel;

pub use error::{Error, Result};
pub use geometry::{CameraExtrinsics, CameraIntrinsics, Frame, PointCloud, Pose9DoF};
pub use procrustes::{CorrespondenceSet, RobustKernel, SolveReport};
