//! Procedural CAD stand-ins for the nine benchmark categories.
//!
//! Each generator composes axis-aligned boxes (z up) with seed-jittered
//! dimensions, then normalizes the result into the NOC cube with aspect
//! preserved (longest axis spans exactly 1). Identical `(category, seed)`
//! pairs produce bit-identical meshes.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cadalign_core::voxel::Mesh;

use crate::error::{Error, Result};

/// The benchmark categories.
pub const CATEGORIES: [&str; 9] = [
    "bathtub",
    "bed",
    "bin",
    "bookshelf",
    "cabinet",
    "chair",
    "display",
    "sofa",
    "table",
];

struct Builder {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
}

impl Builder {
    fn new() -> Self {
        Self {
            vertices: Vec::new(),
            triangles: Vec::new(),
        }
    }

    /// Appends a closed axis-aligned box spanning `lo..hi`.
    fn push_box(&mut self, lo: Vector3<f64>, hi: Vector3<f64>) {
        let base = self.vertices.len();
        self.vertices.extend_from_slice(&[
            Vector3::new(lo.x, lo.y, lo.z),
            Vector3::new(hi.x, lo.y, lo.z),
            Vector3::new(hi.x, hi.y, lo.z),
            Vector3::new(lo.x, hi.y, lo.z),
            Vector3::new(lo.x, lo.y, hi.z),
            Vector3::new(hi.x, lo.y, hi.z),
            Vector3::new(hi.x, hi.y, hi.z),
            Vector3::new(lo.x, hi.y, hi.z),
        ]);
        const FACES: [[usize; 3]; 12] = [
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [3, 7, 6],
            [3, 6, 2],
            [0, 4, 7],
            [0, 7, 3],
            [1, 2, 6],
            [1, 6, 5],
        ];
        for f in FACES {
            self.triangles.push([base + f[0], base + f[1], base + f[2]]);
        }
    }

    /// Centers the shape and scales it uniformly so the longest axis spans
    /// exactly 1.
    fn into_noc_mesh(mut self) -> Result<Mesh> {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices[1..] {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        let center = (lo + hi) * 0.5;
        let extent = hi - lo;
        let max_extent = extent.max();
        for v in &mut self.vertices {
            *v = (*v - center) / max_extent;
        }
        Ok(Mesh::new(self.vertices, self.triangles)?)
    }
}

/// Jitter factor in `[1 - amount, 1 + amount]`.
fn jitter(rng: &mut ChaCha8Rng, amount: f64) -> f64 {
    rng.gen_range(1.0 - amount..=1.0 + amount)
}

/// Deterministic parametric shape for one of the benchmark categories,
/// normalized into the NOC cube.
pub fn gen_cad(category: &str, seed: u64) -> Result<Mesh> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder::new();
    match category {
        "bathtub" => {
            let w = 1.6 * jitter(&mut rng, 0.15);
            let d = 0.8 * jitter(&mut rng, 0.15);
            let h = 0.55 * jitter(&mut rng, 0.12);
            let t = 0.07;
            b.push_box(Vector3::new(0.0, 0.0, 0.0), Vector3::new(w, d, t));
            b.push_box(Vector3::new(0.0, 0.0, 0.0), Vector3::new(t, d, h));
            b.push_box(Vector3::new(w - t, 0.0, 0.0), Vector3::new(w, d, h));
            b.push_box(Vector3::new(0.0, 0.0, 0.0), Vector3::new(w, t, h));
            b.push_box(Vector3::new(0.0, d - t, 0.0), Vector3::new(w, d, h));
        }
        "bed" => {
            let w = 1.5 * jitter(&mut rng, 0.2);
            let d = 2.0 * jitter(&mut rng, 0.12);
            let base_h = 0.35 * jitter(&mut rng, 0.15);
            let head_h = 0.9 * jitter(&mut rng, 0.15);
            b.push_box(Vector3::new(0.0, 0.0, 0.0), Vector3::new(w, d, base_h));
            b.push_box(
                Vector3::new(0.05 * w, 0.05 * d, base_h),
                Vector3::new(0.95 * w, 0.95 * d, base_h + 0.18),
            );
            b.push_box(Vector3::new(0.0, 0.0, 0.0), Vector3::new(w, 0.08, head_h));
        }
        "bin" => {
            let w = 0.4 * jitter(&mut rng, 0.18);
            let d = 0.4 * jitter(&mut rng, 0.18);
            let h = 0.55 * jitter(&mut rng, 0.2);
            let t = 0.03;
            b.push_box(Vector3::new(0.0, 0.0, 0.0), Vector3::new(w, d, t));
            b.push_box(Vector3::new(0.0, 0.0, 0.0), Vector3::new(t, d, h));
            b.push_box(Vector3::new(w - t, 0.0, 0.0), Vector3::new(w, d, h));
            b.push_box(Vector3::new(0.0, 0.0, 0.0), Vector3::new(w, t, h));
            b.push_box(Vector3::new(0.0, d - t, 0.0), Vector3::new(w, d, h));
        }
        "bookshelf" => {
            let w = 0.9 * jitter(&mut rng, 0.15);
            let d = 0.3 * jitter(&mut rng, 0.15);
            let h = 1.9 * jitter(&mut rng, 0.12);
            let t = 0.04;
            b.push_box(Vector3::new(0.0, 0.0, 0.0), Vector3::new(t, d, h));
            b.push_box(Vector3::new(w - t, 0.0, 0.0), Vector3::new(w, d, h));
            b.push_box(Vector3::new(0.0, d - t, 0.0), Vector3::new(w, d, h));
            let shelves = rng.gen_range(3..=5);
            for i in 0..shelves {
                let z = h * (i as f64 + 0.5) / shelves as f64;
                b.push_box(Vector3::new(0.0, 0.0, z), Vector3::new(w, d, z + t));
            }
        }
        "cabinet" => {
            let w = 0.9 * jitter(&mut rng, 0.2);
            let d = 0.5 * jitter(&mut rng, 0.15);
            let h = 1.1 * jitter(&mut rng, 0.25);
            b.push_box(Vector3::new(0.0, 0.0, 0.0), Vector3::new(w, d, h));
            b.push_box(
                Vector3::new(-0.02, -0.02, h),
                Vector3::new(w + 0.02, d + 0.02, h + 0.04),
            );
        }
        "chair" => {
            let w = 0.45 * jitter(&mut rng, 0.12);
            let d = 0.45 * jitter(&mut rng, 0.12);
            let seat_h = 0.45 * jitter(&mut rng, 0.1);
            let back_h = 0.95 * jitter(&mut rng, 0.12);
            let leg = 0.05;
            b.push_box(
                Vector3::new(0.0, 0.0, seat_h - 0.05),
                Vector3::new(w, d, seat_h),
            );
            for (lx, ly) in [
                (0.0, 0.0),
                (w - leg, 0.0),
                (0.0, d - leg),
                (w - leg, d - leg),
            ] {
                b.push_box(
                    Vector3::new(lx, ly, 0.0),
                    Vector3::new(lx + leg, ly + leg, seat_h - 0.05),
                );
            }
            b.push_box(
                Vector3::new(0.0, d - 0.05, seat_h),
                Vector3::new(w, d, back_h),
            );
        }
        "display" => {
            let w = 0.6 * jitter(&mut rng, 0.22);
            let screen_h = 0.38 * jitter(&mut rng, 0.15);
            let t = 0.035;
            let neck_h = 0.1 * jitter(&mut rng, 0.2);
            b.push_box(
                Vector3::new(0.0, 0.0, neck_h),
                Vector3::new(w, t, neck_h + screen_h),
            );
            b.push_box(
                Vector3::new(w / 2.0 - 0.03, 0.0, 0.02),
                Vector3::new(w / 2.0 + 0.03, t, neck_h + 0.02),
            );
            b.push_box(
                Vector3::new(w / 2.0 - 0.12, -0.08, 0.0),
                Vector3::new(w / 2.0 + 0.12, 0.12, 0.02),
            );
        }
        "sofa" => {
            let w = 1.8 * jitter(&mut rng, 0.18);
            let d = 0.85 * jitter(&mut rng, 0.12);
            let seat_h = 0.4 * jitter(&mut rng, 0.1);
            let back_h = 0.8 * jitter(&mut rng, 0.12);
            let arm = 0.15;
            b.push_box(Vector3::new(0.0, 0.0, 0.0), Vector3::new(w, d, seat_h));
            b.push_box(
                Vector3::new(0.0, d - 0.2, seat_h),
                Vector3::new(w, d, back_h),
            );
            b.push_box(
                Vector3::new(0.0, 0.0, seat_h),
                Vector3::new(arm, d, seat_h + 0.2),
            );
            b.push_box(
                Vector3::new(w - arm, 0.0, seat_h),
                Vector3::new(w, d, seat_h + 0.2),
            );
        }
        "table" => {
            let w = 1.3 * jitter(&mut rng, 0.25);
            let d = 0.8 * jitter(&mut rng, 0.2);
            let h = 0.75 * jitter(&mut rng, 0.08);
            let t = 0.05;
            let leg = 0.06;
            b.push_box(Vector3::new(0.0, 0.0, h - t), Vector3::new(w, d, h));
            for (lx, ly) in [
                (0.02, 0.02),
                (w - leg - 0.02, 0.02),
                (0.02, d - leg - 0.02),
                (w - leg - 0.02, d - leg - 0.02),
            ] {
                b.push_box(
                    Vector3::new(lx, ly, 0.0),
                    Vector3::new(lx + leg, ly + leg, h - t),
                );
            }
        }
        other => {
            return Err(Error::InvalidConfig(format!("unknown category {other:?}")));
        }
    }
    b.into_noc_mesh()
}
