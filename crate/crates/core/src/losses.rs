//! The alignment loss family as pure scalar functions.
//!
//! Matrix and vector losses follow the conventions used by the solver:
//! rotation error is the entrywise l1 sum over the 9 matrix entries,
//! translation errors are l2 norms, scale error is an l1 norm, and the NOC
//! term averages the per-point l1 norm over points.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose9DoF;
use crate::voxel::VoxelGrid;

/// Default berHu threshold as a fraction of the largest absolute residual.
pub const BERHU_C_FRACTION: f64 = 0.2;

/// Triplet loss margin.
pub const TRIPLET_MARGIN: f64 = 0.5;

/// Clamp applied to predicted occupancy probabilities before the log terms.
pub const BCE_EPS: f64 = 1e-7;

/// Weights combining the alignment loss terms.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_rot: f64,
    pub w_noc: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_rot: 2.0,
            w_noc: 3.0,
        }
    }
}

/// Reverse Huber: `|x|` below the adaptive threshold `c`, scaled quadratic
/// above, averaged over residuals. `c = c_fraction * max|x|`.
pub fn berhu(residuals: &[f64], c_fraction: f64) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::rejected("berhu on empty residuals"));
    }
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::rejected("berhu on non-finite residuals"));
    }
    let c = c_fraction * residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(residuals.iter().map(|&x| berhu_scalar(x, c)).sum::<f64>() / residuals.len() as f64)
}

/// berHu of a single residual at a fixed threshold `c`.
pub fn berhu_scalar(x: f64, c: f64) -> f64 {
    let a = x.abs();
    if a <= c || c == 0.0 {
        a
    } else {
        (x * x + c * c) / (2.0 * c)
    }
}

/// Huber loss averaged over residuals: `x^2/2` below `delta`, linear above.
pub fn huber(residuals: &[f64], delta: f64) -> f64 {
    assert!(delta > 0.0, "huber delta must be positive, got {delta}");
    if residuals.is_empty() {
        return 0.0;
    }
    residuals
        .iter()
        .map(|&x| {
            let a = x.abs();
            if a <= delta {
                0.5 * x * x
            } else {
                delta * (a - 0.5 * delta)
            }
        })
        .sum::<f64>()
        / residuals.len() as f64
}

/// Predicted quantities entering the combined alignment loss.
#[derive(Debug, Clone)]
pub struct AlignmentEstimate {
    pub pose: Pose9DoF,
    pub nocs: Vec<Vector3<f64>>,
    pub t_init: Vector3<f64>,
}

/// Ground-truth counterpart of [`AlignmentEstimate`].
#[derive(Debug, Clone)]
pub struct AlignmentTarget {
    pub pose: Pose9DoF,
    pub nocs: Vec<Vector3<f64>>,
}

/// Per-term breakdown of the combined alignment loss.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AlignmentLoss {
    pub rot: f64,
    pub trans: f64,
    pub scale: f64,
    pub noc: f64,
    pub trans_init: f64,
    pub total: f64,
}

/// Combined alignment loss
/// `w_rot * L_rot + L_trans + L_scale + w_noc * L_noc + L_trans_init`.
pub fn alignment_loss(
    pred: &AlignmentEstimate,
    gt: &AlignmentTarget,
    w: &LossWeights,
) -> AlignmentLoss {
    assert_eq!(
        pred.nocs.len(),
        gt.nocs.len(),
        "NOC count mismatch: {} vs {}",
        pred.nocs.len(),
        gt.nocs.len()
    );
    let rot = rotation_l1(&pred.pose.rotation, &gt.pose.rotation);
    let trans = (pred.pose.translation - gt.pose.translation).norm();
    let scale = (pred.pose.scale - gt.pose.scale).abs().sum();
    let noc = if pred.nocs.is_empty() {
        0.0
    } else {
        pred.nocs
            .iter()
            .zip(&gt.nocs)
            .map(|(a, b)| (a - b).abs().sum())
            .sum::<f64>()
            / pred.nocs.len() as f64
    };
    let trans_init = (pred.t_init - gt.pose.translation).norm();
    AlignmentLoss {
        rot,
        trans,
        scale,
        noc,
        trans_init,
        total: w.w_rot * rot + trans + scale + w.w_noc * noc + trans_init,
    }
}

/// Entrywise l1 distance between rotation matrices, summed over 9 entries.
pub fn rotation_l1(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    (a - b).abs().sum()
}

/// Triplet embedding loss with squared euclidean distances and margin 0.5.
pub fn triplet(anchor: &[f64], positive: &[f64], negative: &[f64]) -> f64 {
    assert!(
        anchor.len() == positive.len() && anchor.len() == negative.len(),
        "embedding dimension mismatch"
    );
    let d2 =
        |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
    (d2(anchor, positive) - d2(anchor, negative) + TRIPLET_MARGIN).max(0.0)
}

/// Binary cross-entropy between an occupancy prediction and a binary target
/// grid, averaged over voxels. Predictions are clamped to
/// `[BCE_EPS, 1 - BCE_EPS]`.
pub fn bce_grid(pred: &VoxelGrid, target: &VoxelGrid) -> Result<f64> {
    if pred.resolution() != target.resolution() {
        return Err(Error::rejected(format!(
            "grid resolution mismatch: {} vs {}",
            pred.resolution(),
            target.resolution()
        )));
    }
    let sum: f64 = pred
        .values()
        .iter()
        .zip(target.values())
        .map(|(&yh, &y)| {
            let yh = (yh as f64).clamp(BCE_EPS, 1.0 - BCE_EPS);
            let y = y as f64;
            -(y * yh.ln() + (1.0 - y) * (1.0 - yh).ln())
        })
        .sum();
    Ok(sum / pred.values().len() as f64)
}

/// Object-depth loss: mean absolute error plus the absolute difference of
/// the grid means.
pub fn object_depth_loss(d_pred: &[f64], d_gt: &[f64]) -> f64 {
    assert_eq!(d_pred.len(), d_gt.len(), "depth grid shape mismatch");
    if d_pred.is_empty() {
        return 0.0;
    }
    let n = d_pred.len() as f64;
    let mae = d_pred
        .iter()
        .zip(d_gt)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n;
    let mean_pred = d_pred.iter().sum::<f64>() / n;
    let mean_gt = d_gt.iter().sum::<f64>() / n;
    mae + (mean_pred - mean_gt).abs()
}
