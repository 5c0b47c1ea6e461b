//! Random scene generation: seeded object layouts with valid 9-DoF poses
//! inside the camera frustum.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use cadalign_core::geometry::{rot_z, CameraExtrinsics, CameraIntrinsics, Pose9DoF};

use crate::error::{Error, Result};

/// Depth bounds (camera frame, meters) guaranteed for object translations.
pub const DEPTH_RANGE: (f64, f64) = (1.0, 5.0);

// Sampling stays inside the guaranteed bounds.
const DEPTH_SAMPLING: (f64, f64) = (1.2, 4.8);

/// Minimum translation distance between same-category objects. Kept above
/// any sensible clustering radius so distinct ground-truth objects never
/// merge.
pub const SAME_CATEGORY_SEPARATION: f64 = 1.0;

const ANY_SEPARATION: f64 = 0.6;

/// How object rotations are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationMode {
    /// Uniform over SO(3).
    Full,
    /// Rotation about the canonical up axis (z) only.
    YawOnly,
}

/// Scene generation parameters.
#[derive(Debug, Clone)]
pub struct SceneConfig {
    /// Number of objects.
    pub objects: usize,
    /// Per-axis scale range.
    pub scale_range: (f64, f64),
    pub rotation_mode: RotationMode,
    /// CAD ids that may be instantiated, per category.
    pub cad_ids: BTreeMap<String, Vec<String>>,
}

/// One placed object.
#[derive(Debug, Clone)]
pub struct SceneObject {
    pub category: String,
    pub cad_id: String,
    /// Camera-frame ground-truth pose.
    pub pose: Pose9DoF,
}

/// A generated scene with its camera.
#[derive(Debug, Clone)]
pub struct SceneGroundTruth {
    pub id: String,
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: CameraExtrinsics,
    pub objects: Vec<SceneObject>,
    pub seed: u64,
}

/// The fixed synthetic camera (VGA pinhole).
pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(525.0, 525.0, 319.5, 239.5, 640, 480).expect("valid intrinsics")
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    loop {
        let q = Quaternion::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if q.norm() > 1e-3 {
            return UnitQuaternion::from_quaternion(q)
                .to_rotation_matrix()
                .into_inner();
        }
    }
}

/// Generates a deterministic scene. Object translations are sampled by
/// back-projecting pixels in the central image region at depths inside
/// [`DEPTH_RANGE`], with rejection sampling keeping same-category objects
/// at least [`SAME_CATEGORY_SEPARATION`] apart.
pub fn gen_scene(config: &SceneConfig, seed: u64) -> Result<SceneGroundTruth> {
    if config.cad_ids.is_empty() && config.objects > 0 {
        return Err(Error::InvalidConfig("no CAD ids to instantiate".into()));
    }
    if !(config.scale_range.0 > 0.0 && config.scale_range.1 >= config.scale_range.0) {
        return Err(Error::InvalidConfig(format!(
            "bad scale range {:?}",
            config.scale_range
        )));
    }
    let intr = default_intrinsics();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let extrinsics = CameraExtrinsics::new(
        random_rotation(&mut rng),
        Vector3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        ),
    )?;

    let categories: Vec<&String> = config.cad_ids.keys().collect();
    let mut objects = Vec::with_capacity(config.objects);
    let mut placed: Vec<(String, Vector3<f64>)> = Vec::new();
    for _ in 0..config.objects {
        let category = categories[rng.gen_range(0..categories.len())].clone();
        let ids = &config.cad_ids[&category];
        let cad_id = ids[rng.gen_range(0..ids.len())].clone();

        let mut translation = None;
        for relax in [false, true] {
            for _ in 0..1000 {
                let u = rng.gen_range(0.1 * intr.width as f64..0.9 * intr.width as f64);
                let v = rng.gen_range(0.1 * intr.height as f64..0.9 * intr.height as f64);
                let z = rng.gen_range(DEPTH_SAMPLING.0..DEPTH_SAMPLING.1);
                let t = Vector3::new(z * (u - intr.cx) / intr.fx, z * (v - intr.cy) / intr.fy, z);
                let ok = placed.iter().all(|(cat, other)| {
                    let d = (t - other).norm();
                    if *cat == category {
                        d >= SAME_CATEGORY_SEPARATION
                    } else {
                        relax || d >= ANY_SEPARATION
                    }
                });
                if ok {
                    translation = Some(t);
                    break;
                }
            }
            if translation.is_some() {
                break;
            }
        }
        let translation = translation.unwrap_or_else(|| {
            log::warn!("scene {seed:#x}: placement fallback after exhausting attempts");
            Vector3::new(0.0, 0.0, rng.gen_range(DEPTH_SAMPLING.0..DEPTH_SAMPLING.1))
        });

        let scale = Vector3::new(
            rng.gen_range(config.scale_range.0..=config.scale_range.1),
            rng.gen_range(config.scale_range.0..=config.scale_range.1),
            rng.gen_range(config.scale_range.0..=config.scale_range.1),
        );
        let rotation = match config.rotation_mode {
            RotationMode::Full => random_rotation(&mut rng),
            RotationMode::YawOnly => rot_z(rng.gen_range(0.0..std::f64::consts::TAU)),
        };
        placed.push((category.clone(), translation));
        objects.push(SceneObject {
            category,
            cad_id,
            pose: Pose9DoF::new(translation, scale, rotation)?,
        });
    }

    Ok(SceneGroundTruth {
        id: format!("scene_{seed:016x}"),
        intrinsics: intr,
        extrinsics,
        objects,
        seed,
    })
}
