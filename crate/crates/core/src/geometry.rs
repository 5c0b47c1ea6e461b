//! Camera-space geometry: pinhole back-projection, 9-DoF poses and frame
//! transforms.
//!
//! Conventions used across the crate: column vectors, right-handed frames,
//! rotations applied as `R * x`. Angles are radians internally; degrees only
//! appear in reported metrics. NOC (normalized object coordinate) points
//! live in the canonical cube `[-0.5, 0.5]^3`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frobenius tolerance for SO(3) membership checks.
pub const ROTATION_TOL: f64 = 1e-6;

/// Slack on NOC cube membership for `PointCloud` in the NOC frame.
const NOC_BOUND_TOL: f64 = 1e-9;

/// Coordinate frame a point cloud is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Camera,
    World,
    Noc,
}

/// Pinhole camera intrinsics in pixels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::rejected(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(0.0 <= cx && cx < width as f64 && 0.0 <= cy && cy < height as f64) {
            return Err(Error::rejected(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }
}

/// 9-DoF object pose: translation (m), per-axis scale and rotation.
///
/// Maps NOC-frame points into the camera frame as `R * (s .* q) + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose9DoF {
    pub translation: Vector3<f64>,
    pub scale: Vector3<f64>,
    pub rotation: Matrix3<f64>,
}

impl Pose9DoF {
    /// Builds a pose, validating that `rotation` is a proper rotation and
    /// the scale is component-wise positive.
    pub fn new(
        translation: Vector3<f64>,
        scale: Vector3<f64>,
        rotation: Matrix3<f64>,
    ) -> Result<Self> {
        check_rotation(&rotation)?;
        if !(scale.x > 0.0 && scale.y > 0.0 && scale.z > 0.0) {
            return Err(Error::rejected(format!(
                "scale must be positive, got {scale:?}"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::rejected("non-finite translation"));
        }
        Ok(Self {
            translation,
            scale,
            rotation,
        })
    }

    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            scale: Vector3::repeat(1.0),
            rotation: Matrix3::identity(),
        }
    }

    /// `R * (s .* q) + t` for a single NOC point.
    pub fn transform_point(&self, q: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * q.component_mul(&self.scale) + self.translation
    }

    /// Inverse map of [`Pose9DoF::transform_point`]: camera point back to NOC.
    pub fn untransform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        (self.rotation.transpose() * (p - self.translation)).component_div(&self.scale)
    }
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy)]
pub struct CameraExtrinsics {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraExtrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation)?;
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }
}

/// A tagged set of 3D points.
#[derive(Debug, Clone)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
    frame: Frame,
}

impl PointCloud {
    /// Builds a cloud, validating finiteness and, for the NOC frame, cube
    /// membership.
    pub fn new(points: Vec<Vector3<f64>>, frame: Frame) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::rejected("empty point cloud"));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::rejected(format!("non-finite point at index {i}")));
            }
            if frame == Frame::Noc {
                let bound = 0.5 + NOC_BOUND_TOL;
                if p.iter().any(|v| v.abs() > bound) {
                    return Err(Error::rejected(format!(
                        "NOC point {p:?} at index {i} outside [-0.5, 0.5]^3"
                    )));
                }
            }
        }
        Ok(Self { points, frame })
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn aabb(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points[1..] {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }
}

/// Validates `R^T R = I` and `det R = +1` within [`ROTATION_TOL`].
pub fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::rejected("non-finite rotation matrix"));
    }
    let ortho = (r.transpose() * r - Matrix3::identity()).norm();
    if ortho > ROTATION_TOL {
        return Err(Error::rejected(format!(
            "matrix is not orthonormal, |R^T R - I|_F = {ortho:.3e}"
        )));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > ROTATION_TOL {
        return Err(Error::rejected(format!(
            "matrix is not a proper rotation, det = {det:.9}"
        )));
    }
    Ok(())
}

/// Geodesic distance between two rotations, in radians.
pub fn rotation_geodesic(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let c = ((a.transpose() * b).trace() - 1.0) / 2.0;
    c.clamp(-1.0, 1.0).acos()
}

/// Rotation by `angle` radians about the z axis.
pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation by `angle` radians about the y axis.
pub fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Back-projects pixel/depth pairs through the pinhole model.
///
/// Each output point is `d * ((u - cx)/fx, (v - cy)/fy, 1)` in the camera
/// frame, so its z coordinate equals the input depth exactly.
pub fn backproject(
    pixels: &[(f64, f64)],
    depths: &[f64],
    intr: &CameraIntrinsics,
) -> Result<PointCloud> {
    if pixels.len() != depths.len() {
        return Err(Error::rejected(format!(
            "pixel/depth length mismatch: {} vs {}",
            pixels.len(),
            depths.len()
        )));
    }
    let mut points = Vec::with_capacity(pixels.len());
    for (k, (&(u, v), &d)) in pixels.iter().zip(depths).enumerate() {
        if d.is_nan() || d <= 0.0 {
            return Err(Error::rejected(format!(
                "non-positive depth {d} at index {k}"
            )));
        }
        if !(0.0 <= u && u < intr.width as f64 && 0.0 <= v && v < intr.height as f64) {
            return Err(Error::rejected(format!(
                "pixel ({u}, {v}) at index {k} outside {}x{} image",
                intr.width, intr.height
            )));
        }
        points.push(Vector3::new(
            d * (u - intr.cx) / intr.fx,
            d * (v - intr.cy) / intr.fy,
            d,
        ));
    }
    PointCloud::new(points, Frame::Camera)
}

/// Applies a 9-DoF pose to NOC-frame points, producing camera-frame points.
pub fn apply_pose(pose: &Pose9DoF, pts: &PointCloud) -> Result<PointCloud> {
    if pts.frame() != Frame::Noc {
        return Err(Error::rejected(format!(
            "apply_pose expects NOC-frame points, got {:?}",
            pts.frame()
        )));
    }
    let out = pts
        .points()
        .iter()
        .map(|q| pose.transform_point(q))
        .collect();
    PointCloud::new(out, Frame::Camera)
}

/// Lifts a camera-frame pose into the world frame through the extrinsics.
///
/// `R_w = R_cam * R`, `t_w = R_cam * t + t_cam`; scale is unchanged.
pub fn to_world(pose_cam: &Pose9DoF, extr: &CameraExtrinsics) -> Pose9DoF {
    Pose9DoF {
        translation: extr.rotation * pose_cam.translation + extr.translation,
        scale: pose_cam.scale,
        rotation: extr.rotation * pose_cam.rotation,
    }
}
