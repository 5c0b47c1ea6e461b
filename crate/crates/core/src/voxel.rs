//! Canonical-cube voxelization, surface sampling, farthest-point sampling
//! and single-sided Chamfer distance.
//!
//! Grids cover the NOC cube `[-0.5, 0.5]^3` with cell centers at
//! `(i + 0.5)/res - 0.5` per axis and z-major value layout (z slowest,
//! then y, then x). Point splatting is trilinear: each point distributes
//! unit mass over its 8 surrounding cell centers, with out-of-range corner
//! weights folded into the nearest border cell so total mass is conserved;
//! the density grid is then normalized by its maximum.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Frame, PointCloud};
use crate::parallel;

/// Default grid resolution.
pub const DEFAULT_RESOLUTION: usize = 32;

/// Default number of surface samples for mesh occupancy.
pub const DEFAULT_MESH_SAMPLES: usize = 20_000;

/// A cubic scalar grid over the NOC cube with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    resolution: usize,
    values: Vec<f32>,
}

impl VoxelGrid {
    /// Builds a grid from z-major values, validating range and length.
    pub fn from_values(resolution: usize, values: Vec<f32>) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::rejected(format!("resolution {resolution} < 2")));
        }
        let expected = resolution * resolution * resolution;
        if values.len() != expected {
            return Err(Error::rejected(format!(
                "expected {expected} values for resolution {resolution}, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::rejected("grid value outside [0, 1]"));
        }
        Ok(Self { resolution, values })
    }

    pub fn zeros(resolution: usize) -> Result<Self> {
        Self::from_values(resolution, vec![0.0; resolution * resolution * resolution])
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Linear index of cell `(x, y, z)` in z-major order.
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.resolution + y) * self.resolution + x
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.values[self.index(x, y, z)]
    }

    /// Writes the raw little-endian f32 binary at `bin_path` and a JSON
    /// sidecar at `bin_path + ".json"`.
    pub fn write(&self, bin_path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(bin_path)?.write_all(&bytes)?;
        let sidecar = GridSidecar {
            resolution: self.resolution,
            order: "zyx".to_string(),
            dtype: "f32le".to_string(),
        };
        std::fs::write(
            sidecar_path(bin_path),
            serde_json::to_string_pretty(&sidecar)?,
        )?;
        Ok(())
    }

    /// Reads a grid written by [`VoxelGrid::write`].
    pub fn read(bin_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(sidecar_path(bin_path))?;
        let sidecar: GridSidecar = serde_json::from_str(&text)?;
        if sidecar.order != "zyx" || sidecar.dtype != "f32le" {
            return Err(Error::rejected(format!(
                "unsupported grid layout: order={}, dtype={}",
                sidecar.order, sidecar.dtype
            )));
        }
        let mut bytes = Vec::new();
        std::fs::File::open(bin_path)?.read_to_end(&mut bytes)?;
        let expected = sidecar.resolution.pow(3) * 4;
        if bytes.len() != expected {
            return Err(Error::rejected(format!(
                "grid binary has {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::from_values(sidecar.resolution, values)
    }
}

/// JSON sidecar describing a grid binary.
#[derive(Debug, Serialize, Deserialize)]
pub struct GridSidecar {
    pub resolution: usize,
    pub order: String,
    pub dtype: String,
}

/// Sidecar path for a grid binary: the binary path with `.json` appended.
pub fn sidecar_path(bin_path: &Path) -> PathBuf {
    let mut os = bin_path.as_os_str().to_os_string();
    os.push(".json");
    PathBuf::from(os)
}

/// Triangle mesh in the NOC cube.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::rejected(format!(
                    "triangle {t} references vertex out of range"
                )));
            }
        }
        if vertices.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::rejected("non-finite mesh vertex"));
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [i, j, k] = self.triangles[t];
        let a = self.vertices[i];
        let b = self.vertices[j];
        let c = self.vertices[k];
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.triangle_area(t))
            .sum()
    }
}

/// Unnormalized trilinear density splat; the mass-conserving primitive
/// behind [`voxelize_points`]. Returns z-major cell masses summing to the
/// point count.
pub fn splat_density(points: &[Vector3<f64>], resolution: usize) -> Vec<f64> {
    let res = resolution;
    let mut density = vec![0.0f64; res * res * res];
    let clamp_cell = |i: i64| -> usize { i.clamp(0, res as i64 - 1) as usize };
    for p in points {
        let mut base = [0i64; 3];
        let mut frac = [0.0f64; 3];
        for axis in 0..3 {
            let u = p[axis].clamp(-0.5, 0.5);
            // Continuous cell coordinate: g = i at the center of cell i.
            let g = (u + 0.5) * res as f64 - 0.5;
            let i0 = g.floor();
            base[axis] = i0 as i64;
            frac[axis] = g - i0;
        }
        for corner in 0..8usize {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for axis in 0..3 {
                let hi = (corner >> axis) & 1;
                w *= if hi == 1 {
                    frac[axis]
                } else {
                    1.0 - frac[axis]
                };
                idx[axis] = clamp_cell(base[axis] + hi as i64);
            }
            density[(idx[2] * res + idx[1]) * res + idx[0]] += w;
        }
    }
    density
}

/// Trilinear point voxelization normalized by the grid maximum.
pub fn voxelize_points(pts: &PointCloud, resolution: usize) -> Result<VoxelGrid> {
    if pts.frame() != Frame::Noc {
        return Err(Error::rejected(format!(
            "voxelize_points expects NOC-frame points, got {:?}",
            pts.frame()
        )));
    }
    if resolution < 2 {
        return Err(Error::rejected(format!("resolution {resolution} < 2")));
    }
    let out_of_cube = pts
        .points()
        .iter()
        .filter(|p| p.iter().any(|v| v.abs() > 0.5))
        .count();
    if out_of_cube > 0 {
        log::warn!("voxelize_points: clamped {out_of_cube} points into the NOC cube");
    }
    let density = splat_density(pts.points(), resolution);
    let max = density.iter().cloned().fold(0.0f64, f64::max);
    let values = if max > 0.0 {
        density.iter().map(|&d| (d / max) as f32).collect()
    } else {
        vec![0.0f32; density.len()]
    };
    VoxelGrid::from_values(resolution, values)
}

/// Area-weighted uniform surface samples from a mesh, deterministic in the
/// seed.
pub fn sample_surface(mesh: &Mesh, count: usize, seed: u64) -> Result<Vec<Vector3<f64>>> {
    if count == 0 {
        return Err(Error::rejected("requested zero surface samples"));
    }
    let areas: Vec<f64> = (0..mesh.triangles.len())
        .map(|t| mesh.triangle_area(t))
        .collect();
    let total: f64 = areas.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::rejected("degenerate mesh with zero surface area"));
    }
    let mut cumulative = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for a in &areas {
        acc += a;
        cumulative.push(acc);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let target = rng.gen_range(0.0..total);
        let t = cumulative
            .partition_point(|&c| c <= target)
            .min(areas.len() - 1);
        let [i, j, k] = mesh.triangles[t];
        let (a, b, c) = (mesh.vertices[i], mesh.vertices[j], mesh.vertices[k]);
        let mut u: f64 = rng.gen();
        let mut v: f64 = rng.gen();
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        out.push(a + u * (b - a) + v * (c - a));
    }
    Ok(out)
}

/// Binary surface occupancy of a mesh: a cell is 1 iff at least one of
/// `samples` area-weighted surface samples falls in it.
pub fn occupancy_from_mesh(
    mesh: &Mesh,
    resolution: usize,
    samples: usize,
    seed: u64,
) -> Result<VoxelGrid> {
    if resolution < 2 {
        return Err(Error::rejected(format!("resolution {resolution} < 2")));
    }
    let points = sample_surface(mesh, samples, seed)?;
    let res = resolution;
    let mut values = vec![0.0f32; res * res * res];
    for p in &points {
        let mut idx = [0usize; 3];
        for axis in 0..3 {
            let u = p[axis].clamp(-0.5, 0.5);
            let cell = (((u + 0.5) * res as f64) as i64).clamp(0, res as i64 - 1);
            idx[axis] = cell as usize;
        }
        values[(idx[2] * res + idx[1]) * res + idx[0]] = 1.0;
    }
    VoxelGrid::from_values(resolution, values)
}

/// Greedy farthest-point sampling. Starts at index 0 and repeatedly adds
/// the point farthest from the selected set; deterministic, ties broken by
/// lowest index.
pub fn fps(pts: &PointCloud, k: usize) -> Result<Vec<usize>> {
    let n = pts.len();
    if k == 0 || k > n {
        return Err(Error::rejected(format!("fps k = {k} outside 1..={n}")));
    }
    let points = pts.points();
    let mut selected = Vec::with_capacity(k);
    let mut dist2: Vec<f64> = vec![f64::INFINITY; n];
    let mut current = 0usize;
    selected.push(current);
    for _ in 1..k {
        let mut best = 0usize;
        let mut best_d = f64::NEG_INFINITY;
        for (i, d) in dist2.iter_mut().enumerate() {
            let nd = (points[i] - points[current]).norm_squared();
            if nd < *d {
                *d = nd;
            }
            if *d > best_d {
                best_d = *d;
                best = i;
            }
        }
        current = best;
        selected.push(current);
    }
    Ok(selected)
}

/// Single-sided Chamfer distance: mean over `a` of the squared distance to
/// the nearest point of `b`. Asymmetric by design; suited to matching a
/// partial observation against complete shapes.
pub fn chamfer_one_sided(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.frame() != b.frame() {
        return Err(Error::rejected(format!(
            "chamfer frames differ: {:?} vs {:?}",
            a.frame(),
            b.frame()
        )));
    }
    Ok(chamfer_one_sided_points(a.points(), b.points()))
}

/// [`chamfer_one_sided`] on raw point slices. `b` must be non-empty.
pub fn chamfer_one_sided_points(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "chamfer on empty point set");
    let mins = parallel::map_collect(a, |pa| {
        b.iter()
            .map(|pb| (pa - pb).norm_squared())
            .fold(f64::INFINITY, f64::min)
    });
    mins.iter().sum::<f64>() / a.len() as f64
}
