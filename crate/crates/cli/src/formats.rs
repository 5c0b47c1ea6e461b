//! On-disk formats consumed and produced by the CLI: solve inputs/outputs,
//! retrieval queries, the CAD database manifest and geometry files.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use cadalign_core::geometry::{Frame, PointCloud};
use cadalign_core::metrics::PoseRecord;
use cadalign_core::retrieval::{CadDatabase, CadEntry};
use cadalign_core::voxel::{Mesh, VoxelGrid};

/// Correspondence JSON for `solve`.
#[derive(Debug, Deserialize)]
pub struct SolveInput {
    /// NOC points, one `[x, y, z]` per correspondence.
    pub q: Vec<[f64; 3]>,
    /// Camera points (meters).
    pub p: Vec<[f64; 3]>,
    /// Optional positive weights; default 1.
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    /// Optional mask probabilities in [0, 1]; default 1.
    #[serde(default)]
    pub m: Option<Vec<f64>>,
    /// Per-axis scale; default oracle-free [1, 1, 1].
    #[serde(default)]
    pub scale: Option<[f64; 3]>,
    /// Initial translation; default is the camera-point box center.
    #[serde(default)]
    pub t_init: Option<[f64; 3]>,
}

/// Pose JSON written by `solve`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SolveOutput {
    pub pose: PoseRecord,
    pub degenerate: bool,
    pub singular_values: [f64; 3],
}

/// Retrieval query: either NOC points (Chamfer mode) or a 256-vector
/// embedding.
#[derive(Debug, Deserialize)]
pub struct QueryFile {
    #[serde(default)]
    pub points: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub embedding: Option<Vec<f32>>,
}

/// Geometry file for `voxelize`: a mesh (vertices + triangles) or a bare
/// point list.
#[derive(Debug, Deserialize)]
pub struct GeometryFile {
    #[serde(default)]
    pub vertices: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub triangles: Option<Vec<[usize; 3]>>,
    #[serde(default)]
    pub points: Option<Vec<[f64; 3]>>,
}

/// One database entry in the manifest; paths are relative to the manifest.
#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub category: String,
    /// Raw little-endian f32 x/y/z triplets.
    pub points: String,
    /// Grid binary (with its JSON sidecar alongside).
    pub grid: String,
    /// Optional raw little-endian f32 256-vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<String>,
}

/// CAD database manifest.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Scene id to eligible CAD ids.
    #[serde(default)]
    pub pools: BTreeMap<String, Vec<String>>,
}

pub fn to_vectors(rows: &[[f64; 3]]) -> Vec<Vector3<f64>> {
    rows.iter()
        .map(|r| Vector3::new(r[0], r[1], r[2]))
        .collect()
}

/// Reads raw little-endian f32 triplets.
pub fn read_points_blob(path: &Path) -> Result<Vec<Vector3<f64>>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_end(&mut bytes)?;
    if bytes.len() % 12 != 0 {
        bail!(
            "point blob {} has {} bytes, not a multiple of 12",
            path.display(),
            bytes.len()
        );
    }
    Ok(bytes
        .chunks_exact(12)
        .map(|c| {
            Vector3::new(
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64,
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]) as f64,
                f32::from_le_bytes([c[8], c[9], c[10], c[11]]) as f64,
            )
        })
        .collect())
}

/// Reads a raw little-endian f32 embedding blob.
pub fn read_embedding_blob(path: &Path) -> Result<Vec<f32>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_end(&mut bytes)?;
    if bytes.len() % 4 != 0 {
        bail!(
            "embedding blob {} not a multiple of 4 bytes",
            path.display()
        );
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Loads a CAD database from a manifest, resolving entry paths relative to
/// the manifest's directory.
pub fn load_database(manifest_path: &Path) -> Result<CadDatabase> {
    let text = std::fs::read_to_string(manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", manifest_path.display()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let mut entries = Vec::with_capacity(manifest.entries.len());
    for item in &manifest.entries {
        let points = read_points_blob(&base.join(&item.points))?;
        let cloud = PointCloud::new(points, Frame::Noc)
            .with_context(|| format!("entry {}: invalid NOC points", item.id))?;
        let grid = VoxelGrid::read(&base.join(&item.grid))
            .with_context(|| format!("entry {}: reading grid", item.id))?;
        let embedding = match &item.embedding {
            Some(rel) => Some(read_embedding_blob(&base.join(rel))?),
            None => None,
        };
        entries.push(CadEntry::new(
            item.id.clone(),
            item.category.clone(),
            cloud,
            grid,
            embedding,
        )?);
    }
    let pools: BTreeMap<String, BTreeSet<String>> = manifest
        .pools
        .into_iter()
        .map(|(scene, ids)| (scene, ids.into_iter().collect()))
        .collect();
    Ok(CadDatabase::build(entries, pools)?)
}

/// Builds geometry for `voxelize` from a [`GeometryFile`].
pub enum Geometry {
    Mesh(Mesh),
    Points(Vec<Vector3<f64>>),
}

pub fn parse_geometry(file: GeometryFile) -> Result<Geometry> {
    match (file.vertices, file.triangles, file.points) {
        (Some(v), Some(t), None) => Ok(Geometry::Mesh(Mesh::new(to_vectors(&v), t)?)),
        (None, None, Some(p)) => Ok(Geometry::Points(to_vectors(&p))),
        _ => bail!("geometry file must contain either vertices+triangles or points"),
    }
}
