//! Weighted Procrustes alignment: the closed-form SVD rotation solve,
//! translation initialization and refinement, and robust reweighting.
//!
//! The rotation solve minimizes `sum_k c_k |Omega q~_k - p~_k|^2` over
//! proper rotations via the SVD of the weighted cross-covariance
//! `A = p~^T diag(c) q~`, with the smallest singular direction sign-flipped
//! when the unconstrained optimum is a reflection. `solve_alignment`
//! composes the full pipeline: it centers both sides by their weighted
//! means for the rotation solve (so the translation refinement exactly
//! cancels any bias in the initial estimate) and refines the translation as
//! `t = t_init + mu_c(p~) - Omega mu_c(q~)`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Pose9DoF};

/// Degeneracy threshold: flagged when `sigma_2 <= 1e-9 * sigma_1`.
pub const DEGENERACY_RATIO: f64 = 1e-9;

/// Smallest weight emitted by the Tukey kernel.
pub const TUKEY_FLOOR: f64 = 1e-6;

/// Slack on NOC cube membership accepted for predicted correspondences.
pub const NOC_SLACK: f64 = 0.05;

/// Paired NOC/camera correspondences with per-point weights and mask
/// probabilities.
#[derive(Debug, Clone)]
pub struct CorrespondenceSet {
    q: Vec<Vector3<f64>>,
    p: Vec<Vector3<f64>>,
    c: Vec<f64>,
    m: Vec<f64>,
}

impl CorrespondenceSet {
    /// Builds a validated set: equal lengths `N >= 3`, positive finite
    /// weights, masks in `[0, 1]`, and NOC points inside the unit cube with
    /// [`NOC_SLACK`] slack.
    pub fn new(
        q: Vec<Vector3<f64>>,
        p: Vec<Vector3<f64>>,
        c: Vec<f64>,
        m: Vec<f64>,
    ) -> Result<Self> {
        let set = Self::new_unbounded(q, p, c, m)?;
        let bound = 0.5 + NOC_SLACK;
        for (k, q) in set.q.iter().enumerate() {
            if q.iter().any(|v| v.abs() > bound) {
                return Err(Error::rejected(format!(
                    "NOC point {q:?} at index {k} outside [-{bound}, {bound}]^3"
                )));
            }
        }
        Ok(set)
    }

    /// Like [`CorrespondenceSet::new`] but without the NOC cube check, for
    /// synthetic noise sources that can push correspondences past the slack.
    pub fn new_unbounded(
        q: Vec<Vector3<f64>>,
        p: Vec<Vector3<f64>>,
        c: Vec<f64>,
        m: Vec<f64>,
    ) -> Result<Self> {
        let n = q.len();
        if n < 3 {
            return Err(Error::rejected(format!(
                "need at least 3 correspondences, got {n}"
            )));
        }
        if p.len() != n || c.len() != n || m.len() != n {
            return Err(Error::rejected(format!(
                "length mismatch: q={n}, p={}, c={}, m={}",
                p.len(),
                c.len(),
                m.len()
            )));
        }
        if q.iter().chain(&p).any(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::rejected("non-finite correspondence point"));
        }
        for (k, &w) in c.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::rejected(format!(
                    "weight c[{k}] = {w} must be positive"
                )));
            }
        }
        if m.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::rejected("mask probability outside [0, 1]"));
        }
        Ok(Self { q, p, c, m })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn q(&self) -> &[Vector3<f64>] {
        &self.q
    }

    pub fn p(&self) -> &[Vector3<f64>] {
        &self.p
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }
}

/// Result of a rotation solve with conditioning diagnostics.
#[derive(Debug, Clone)]
pub struct RotationSolve {
    pub rotation: Matrix3<f64>,
    /// Singular values of the weighted cross-covariance, sorted descending.
    pub singular_values: [f64; 3],
    /// Set when the cross-covariance is (near-)rank-deficient; the returned
    /// rotation is still a valid minimizer.
    pub degenerate: bool,
}

/// Full alignment solve output.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub pose: Pose9DoF,
    pub singular_values: [f64; 3],
    pub degenerate: bool,
}

/// Robust reweighting kernels for iteratively reweighted solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobustKernel {
    Tukey,
    Huber,
}

impl RobustKernel {
    /// Weight for a residual already normalized by the robust scale.
    pub fn weight(self, r: f64) -> f64 {
        match self {
            RobustKernel::Tukey => {
                if r < 1.0 {
                    let t = 1.0 - r * r;
                    (t * t).max(TUKEY_FLOOR)
                } else {
                    TUKEY_FLOOR
                }
            }
            RobustKernel::Huber => {
                if r <= 1.0 {
                    1.0
                } else {
                    1.0 / r
                }
            }
        }
    }

    /// Standard tuning constant relating the residual scale to the kernel
    /// cutoff (95% asymptotic efficiency on Gaussian residuals).
    fn tuning(self) -> f64 {
        match self {
            RobustKernel::Tukey => 4.685,
            RobustKernel::Huber => 1.345,
        }
    }
}

/// Axis-aligned box center of a point cloud; the initial translation with
/// the learned offset fixed to zero.
pub fn initial_translation(p: &PointCloud) -> Vector3<f64> {
    let (lo, hi) = p.aabb();
    (lo + hi) * 0.5
}

/// `c`-weighted mean of a point set. Assumes `sum(c) > 0`.
pub fn weighted_mean(points: &[Vector3<f64>], weights: &[f64]) -> Vector3<f64> {
    let mut sum = Vector3::zeros();
    let mut total = 0.0;
    for (x, &w) in points.iter().zip(weights) {
        sum += w * x;
        total += w;
    }
    sum / total
}

/// Weighted alignment energy `sum_k c_k |R q~_k - p~_k|^2`.
pub fn alignment_energy(
    q_tilde: &[Vector3<f64>],
    p_tilde: &[Vector3<f64>],
    weights: &[f64],
    rotation: &Matrix3<f64>,
) -> f64 {
    q_tilde
        .iter()
        .zip(p_tilde)
        .zip(weights)
        .map(|((q, p), &w)| w * (rotation * q - p).norm_squared())
        .sum()
}

fn validate_solve_inputs(
    q_tilde: &[Vector3<f64>],
    p_tilde: &[Vector3<f64>],
    weights: &[f64],
) -> Result<()> {
    let n = q_tilde.len();
    if n < 3 {
        return Err(Error::rejected(format!("need at least 3 points, got {n}")));
    }
    if p_tilde.len() != n || weights.len() != n {
        return Err(Error::rejected(format!(
            "length mismatch: q~={n}, p~={}, c={}",
            p_tilde.len(),
            weights.len()
        )));
    }
    if q_tilde
        .iter()
        .chain(p_tilde)
        .any(|v| !v.iter().all(|x| x.is_finite()))
    {
        return Err(Error::rejected("non-finite point in rotation solve"));
    }
    let mut total = 0.0;
    for &w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::rejected(format!(
                "weight {w} must be non-negative and finite"
            )));
        }
        total += w;
    }
    if total.is_nan() || total <= 0.0 {
        return Err(Error::rejected("all-zero weight vector"));
    }
    Ok(())
}

/// Weighted cross-covariance `sum_k c_k p~_k q~_k^T`.
fn cross_covariance(
    q_tilde: &[Vector3<f64>],
    p_tilde: &[Vector3<f64>],
    weights: &[f64],
) -> Matrix3<f64> {
    let mut a = Matrix3::zeros();
    for ((q, p), &w) in q_tilde.iter().zip(p_tilde).zip(weights) {
        a += w * p * q.transpose();
    }
    a
}

/// One-sided Jacobi SVD of a 3x3 matrix: `a = U diag(sigma) V^T` with
/// singular values sorted descending.
///
/// The factors are polished to orthonormality by construction (normalize,
/// Gram-Schmidt, cross product with sign matched to the raw column), so the
/// reconstruction residual stays at machine precision even for repeated or
/// vanishing singular values, where general bidiagonalization codes can
/// drift above the 1e-9 relative contract required here.
pub(crate) fn svd3(a: &Matrix3<f64>) -> (Matrix3<f64>, [f64; 3], Matrix3<f64>) {
    let mut b = *a;
    let mut v = Matrix3::<f64>::identity();
    for _ in 0..30 {
        let mut converged = true;
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let alpha = b.column(p).norm_squared();
            let beta = b.column(q).norm_squared();
            let gamma = b.column(p).dot(&b.column(q));
            if gamma == 0.0 || gamma * gamma <= 1e-28 * alpha * beta {
                continue;
            }
            converged = false;
            let zeta = (beta - alpha) / (2.0 * gamma);
            let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = c * t;
            for row in 0..3 {
                let bp = b[(row, p)];
                let bq = b[(row, q)];
                b[(row, p)] = c * bp - s * bq;
                b[(row, q)] = s * bp + c * bq;
                let vp = v[(row, p)];
                let vq = v[(row, q)];
                v[(row, p)] = c * vp - s * vq;
                v[(row, q)] = s * vp + c * vq;
            }
        }
        if converged {
            break;
        }
    }

    let norms = [b.column(0).norm(), b.column(1).norm(), b.column(2).norm()];
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let sigma = [norms[order[0]], norms[order[1]], norms[order[2]]];
    let u_raw = Matrix3::from_columns(&[
        b.column(order[0]).into_owned(),
        b.column(order[1]).into_owned(),
        b.column(order[2]).into_owned(),
    ]);
    let v_raw = Matrix3::from_columns(&[
        v.column(order[0]).into_owned(),
        v.column(order[1]).into_owned(),
        v.column(order[2]).into_owned(),
    ]);
    (
        orthonormal_polish(&u_raw),
        sigma,
        orthonormal_polish(&v_raw).transpose(),
    )
}

/// Orthonormal basis closest in spirit to the given columns: normalize the
/// first, Gram-Schmidt the second, take the cross product for the third
/// with its sign matched to the raw column. Columns are expected sorted by
/// decreasing significance.
fn orthonormal_polish(m: &Matrix3<f64>) -> Matrix3<f64> {
    let c0_raw = m.column(0).into_owned();
    let n0 = c0_raw.norm();
    let c0 = if n0 > 0.0 { c0_raw / n0 } else { Vector3::x() };

    let mut c1 = m.column(1).into_owned();
    c1 -= c0 * c0.dot(&c1);
    let n1 = c1.norm();
    let c1 = if n1 > 1e-12 * n0.max(1e-300) {
        c1 / n1
    } else {
        // Degenerate second column: any direction orthogonal to c0.
        let pivot = if c0.x.abs() <= c0.y.abs() && c0.x.abs() <= c0.z.abs() {
            Vector3::x()
        } else if c0.y.abs() <= c0.z.abs() {
            Vector3::y()
        } else {
            Vector3::z()
        };
        c0.cross(&pivot).normalize()
    };

    let cross = c0.cross(&c1);
    let c2 = if cross.dot(&m.column(2)) < 0.0 {
        -cross
    } else {
        cross
    };
    Matrix3::from_columns(&[c0, c1, c2])
}

/// Closed-form proper rotation closest to a 3x3 cross-covariance:
/// `Omega = U diag(1, 1, det(V U^T)) V^T` with singular values sorted
/// descending so the determinant correction lands on the smallest one.
fn svd_rotation(a: &Matrix3<f64>) -> Result<RotationSolve> {
    let (u, sigma, v_t) = svd3(a);

    // det(V U^T) = det(V) det(U); both factors are +-1 up to rounding.
    let d = if u.determinant() * v_t.determinant() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let rotation = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t;

    debug_assert!({
        let recon = u * Matrix3::from_diagonal(&Vector3::new(sigma[0], sigma[1], sigma[2])) * v_t;
        (recon - a).norm() <= 1e-9 * a.norm().max(f64::MIN_POSITIVE)
    });

    let degenerate = sigma[1] <= DEGENERACY_RATIO * sigma[0] || sigma[0] == 0.0;
    Ok(RotationSolve {
        rotation,
        singular_values: sigma,
        degenerate,
    })
}

/// Solves `argmin_Omega sum_k c_k |Omega q~_k - p~_k|^2` over SO(3).
///
/// Inputs are used as given; callers wanting translation-bias-free rotations
/// center both sides first (see [`solve_alignment`]). Collinear or empty
/// covariance inputs set the `degenerate` flag but still return a valid
/// rotation.
pub fn solve_rotation(
    q_tilde: &[Vector3<f64>],
    p_tilde: &[Vector3<f64>],
    weights: &[f64],
) -> Result<RotationSolve> {
    validate_solve_inputs(q_tilde, p_tilde, weights)?;
    svd_rotation(&cross_covariance(q_tilde, p_tilde, weights))
}

/// Refines a translation through the weighted means:
/// `t = t_init + mu_c(p~) - Omega mu_c(q~)`.
pub fn refine_translation(
    t_init: &Vector3<f64>,
    p_tilde: &[Vector3<f64>],
    q_tilde: &[Vector3<f64>],
    weights: &[f64],
    rotation: &Matrix3<f64>,
) -> Result<Vector3<f64>> {
    validate_solve_inputs(q_tilde, p_tilde, weights)?;
    Ok(t_init + weighted_mean(p_tilde, weights) - rotation * weighted_mean(q_tilde, weights))
}

/// Full 9-DoF alignment for a given scale: scales the NOCs, removes the
/// initial translation, solves the rotation on weighted-mean-centered pairs
/// and refines the translation.
pub fn solve_alignment(
    corr: &CorrespondenceSet,
    scale: &Vector3<f64>,
    t_init: &Vector3<f64>,
) -> Result<SolveReport> {
    solve_alignment_weighted(corr, scale, t_init, corr.c())
}

/// [`solve_alignment`] with an explicit weight vector overriding `corr.c`.
pub fn solve_alignment_weighted(
    corr: &CorrespondenceSet,
    scale: &Vector3<f64>,
    t_init: &Vector3<f64>,
    weights: &[f64],
) -> Result<SolveReport> {
    if !(scale.x > 0.0 && scale.y > 0.0 && scale.z > 0.0) {
        return Err(Error::rejected(format!(
            "scale must be positive, got {scale:?}"
        )));
    }
    let q_tilde: Vec<Vector3<f64>> = corr.q().iter().map(|q| q.component_mul(scale)).collect();
    let p_tilde: Vec<Vector3<f64>> = corr.p().iter().map(|p| p - t_init).collect();
    validate_solve_inputs(&q_tilde, &p_tilde, weights)?;

    let mu_q = weighted_mean(&q_tilde, weights);
    let mu_p = weighted_mean(&p_tilde, weights);
    let q_centered: Vec<Vector3<f64>> = q_tilde.iter().map(|q| q - mu_q).collect();
    let p_centered: Vec<Vector3<f64>> = p_tilde.iter().map(|p| p - mu_p).collect();
    let rot = svd_rotation(&cross_covariance(&q_centered, &p_centered, weights))?;

    let t = t_init + mu_p - rot.rotation * mu_q;
    Ok(SolveReport {
        pose: Pose9DoF::new(t, *scale, rot.rotation)?,
        singular_values: rot.singular_values,
        degenerate: rot.degenerate,
    })
}

/// Default number of alternating scale/rotation rounds.
pub const SCALE_REFINE_DEFAULT_ROUNDS: usize = 3;

/// Full 9-DoF solve without an oracle scale: alternates a per-axis
/// least-squares scale estimate (given the current rotation) with the
/// rotation solve. Extends the fixed-scale pipeline for callers that have
/// no scale estimate; with a known scale prefer [`solve_alignment`].
///
/// Given the rotation, the model `p - mu_p = Omega (s .* (q - mu_q))`
/// decouples per axis after rotating the centered camera points back into
/// the object frame: `s_a = sum_k c_k x_ka y_ka / sum_k c_k x_ka^2` with
/// `x = q - mu_q` and `y = Omega^T (p - mu_p)`.
pub fn solve_alignment_alternating(
    corr: &CorrespondenceSet,
    t_init: &Vector3<f64>,
    rounds: usize,
) -> Result<SolveReport> {
    let weights = corr.c();
    let mu_q = weighted_mean(corr.q(), weights);
    let mu_p = weighted_mean(corr.p(), weights);
    let x: Vec<Vector3<f64>> = corr.q().iter().map(|q| q - mu_q).collect();
    let p_centered: Vec<Vector3<f64>> = corr.p().iter().map(|p| p - mu_p).collect();

    let mut scale = Vector3::repeat(1.0);
    let mut report = solve_alignment_weighted(corr, &scale, t_init, weights)?;
    for _ in 0..rounds {
        let rot_t = report.pose.rotation.transpose();
        let mut num = Vector3::<f64>::zeros();
        let mut den = Vector3::<f64>::zeros();
        for ((xk, pk), &w) in x.iter().zip(&p_centered).zip(weights) {
            let y = rot_t * pk;
            for axis in 0..3 {
                num[axis] += w * xk[axis] * y[axis];
                den[axis] += w * xk[axis] * xk[axis];
            }
        }
        for axis in 0..3 {
            if den[axis] > 0.0 {
                scale[axis] = (num[axis] / den[axis]).max(1e-9);
            }
        }
        report = solve_alignment_weighted(corr, &scale, t_init, weights)?;
    }
    Ok(report)
}

/// Robust weights from residuals of the current rotation fit:
/// `w_k = kernel(|Omega q~_k - p~_k| / scale)`.
pub fn irls_weights(
    q_tilde: &[Vector3<f64>],
    p_tilde: &[Vector3<f64>],
    rotation: &Matrix3<f64>,
    kernel: RobustKernel,
    scale: f64,
) -> Vec<f64> {
    assert!(scale > 0.0, "residual scale must be positive, got {scale}");
    q_tilde
        .iter()
        .zip(p_tilde)
        .map(|(q, p)| kernel.weight((rotation * q - p).norm() / scale))
        .collect()
}

/// IRLS solve result: the final report plus the weights of the last round.
#[derive(Debug, Clone)]
pub struct IrlsSolve {
    pub report: SolveReport,
    pub weights: Vec<f64>,
}

/// Default number of IRLS refinement rounds.
pub const IRLS_DEFAULT_ROUNDS: usize = 3;

/// Median absolute deviation about the median.
fn mad(values: &[f64]) -> f64 {
    let med = median(values);
    let devs: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    median(&devs)
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Iteratively reweighted alignment: alternates residual-based reweighting
/// with weighted solves. The residual scale is re-estimated each round as
/// the MAD-based sigma times the kernel tuning constant, floored to stay
/// meaningful on noise-free data. Kernel weights multiply the base weights
/// in `corr.c`.
pub fn solve_alignment_irls(
    corr: &CorrespondenceSet,
    scale: &Vector3<f64>,
    t_init: &Vector3<f64>,
    kernel: RobustKernel,
    rounds: usize,
) -> Result<IrlsSolve> {
    let q_tilde: Vec<Vector3<f64>> = corr.q().iter().map(|q| q.component_mul(scale)).collect();
    let p_tilde: Vec<Vector3<f64>> = corr.p().iter().map(|p| p - t_init).collect();

    let mut weights = corr.c().to_vec();
    let mut report = solve_alignment_weighted(corr, scale, t_init, &weights)?;

    for _ in 0..rounds {
        // Residuals of the current full fit, translation included.
        let residuals: Vec<f64> = q_tilde
            .iter()
            .zip(&p_tilde)
            .map(|(q, p)| {
                (report.pose.rotation * q + (report.pose.translation - t_init) - p).norm()
            })
            .collect();
        let sigma_hat = 1.4826 * mad(&residuals);
        let res_scale = (kernel.tuning() * sigma_hat).max(1e-9);
        let centered: Vec<Vector3<f64>> = p_tilde
            .iter()
            .map(|p| p - (report.pose.translation - t_init))
            .collect();
        let kernel_w = irls_weights(
            &q_tilde,
            &centered,
            &report.pose.rotation,
            kernel,
            res_scale,
        );
        weights = corr.c().iter().zip(&kernel_w).map(|(c, w)| c * w).collect();
        report = solve_alignment_weighted(corr, scale, t_init, &weights)?;
    }

    Ok(IrlsSolve { report, weights })
}
