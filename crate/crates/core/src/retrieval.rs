//! CAD database indexing and nearest-neighbor retrieval.
//!
//! Retrieval is a brute-force linear scan over the candidate set (the
//! requested category intersected with an optional per-scene pool), ranked
//! ascending by squared euclidean embedding distance or by single-sided
//! Chamfer distance from the query points to each entry's sampled points.
//! Ties are broken by lexicographic id order, so rankings are deterministic.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{Frame, PointCloud};
use crate::parallel;
use crate::voxel::{chamfer_one_sided_points, VoxelGrid};

/// Embedding dimension used by the joint image/CAD space.
pub const EMBEDDING_DIM: usize = 256;

/// One CAD model: canonical sampled points, occupancy grid and an optional
/// precomputed embedding.
#[derive(Debug, Clone)]
pub struct CadEntry {
    pub id: String,
    pub category: String,
    pub points: PointCloud,
    pub grid: VoxelGrid,
    pub embedding: Option<Vec<f32>>,
}

impl CadEntry {
    pub fn new(
        id: String,
        category: String,
        points: PointCloud,
        grid: VoxelGrid,
        embedding: Option<Vec<f32>>,
    ) -> Result<Self> {
        if points.frame() != Frame::Noc {
            return Err(Error::rejected(format!(
                "CAD entry {id} points must be NOC-frame, got {:?}",
                points.frame()
            )));
        }
        if let Some(e) = &embedding {
            if e.len() != EMBEDDING_DIM {
                return Err(Error::rejected(format!(
                    "CAD entry {id} embedding has {} dims, expected {EMBEDDING_DIM}",
                    e.len()
                )));
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(Error::rejected(format!(
                    "CAD entry {id} embedding non-finite"
                )));
            }
        }
        Ok(Self {
            id,
            category,
            points,
            grid,
            embedding,
        })
    }
}

/// Immutable indexed CAD database with per-category and per-scene views.
#[derive(Debug)]
pub struct CadDatabase {
    entries: BTreeMap<String, CadEntry>,
    by_category: BTreeMap<String, Vec<String>>,
    pools: BTreeMap<String, BTreeSet<String>>,
}

/// A ranked retrieval result.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedId {
    pub id: String,
    pub distance: f64,
}

impl CadDatabase {
    /// Builds the index. Ids must be unique and every pool id must exist.
    pub fn build(
        entries: Vec<CadEntry>,
        pools: BTreeMap<String, BTreeSet<String>>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut by_category: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for entry in entries {
            by_category
                .entry(entry.category.clone())
                .or_default()
                .push(entry.id.clone());
            let id = entry.id.clone();
            if map.insert(id.clone(), entry).is_some() {
                return Err(Error::rejected(format!("duplicate CAD id {id:?}")));
            }
        }
        for ids in by_category.values_mut() {
            ids.sort();
        }
        for (scene, ids) in &pools {
            for id in ids {
                if !map.contains_key(id) {
                    return Err(Error::rejected(format!(
                        "pool for scene {scene:?} references missing CAD id {id:?}"
                    )));
                }
            }
        }
        Ok(Self {
            entries: map,
            by_category,
            pools,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: &str) -> Option<&CadEntry> {
        self.entries.get(id)
    }

    pub fn category_ids(&self, category: &str) -> Option<&[String]> {
        self.by_category.get(category).map(|v| v.as_slice())
    }

    /// Candidate ids for a query: the category, intersected with the scene
    /// pool when one is named. Errors when the category is unknown, the
    /// pool is unknown, or the intersection is empty.
    fn candidates(&self, category: &str, pool: Option<&str>) -> Result<Vec<&CadEntry>> {
        let ids = self
            .by_category
            .get(category)
            .ok_or_else(|| Error::EmptyPool(format!("unknown category {category:?}")))?;
        let pool_set = match pool {
            Some(scene) => Some(self.pools.get(scene).ok_or_else(|| {
                Error::EmptyPool(format!("no candidate pool for scene {scene:?}"))
            })?),
            None => None,
        };
        let out: Vec<&CadEntry> = ids
            .iter()
            .filter(|id| pool_set.is_none_or(|p| p.contains(*id)))
            .map(|id| &self.entries[id])
            .collect();
        if out.is_empty() {
            return Err(Error::EmptyPool(format!(
                "no candidates for category {category:?} in pool {pool:?}"
            )));
        }
        Ok(out)
    }

    /// Nearest-neighbor lookup by squared euclidean embedding distance.
    pub fn query_embedding(
        &self,
        query: &[f32],
        category: &str,
        pool: Option<&str>,
    ) -> Result<Vec<RankedId>> {
        if query.len() != EMBEDDING_DIM {
            return Err(Error::rejected(format!(
                "query embedding has {} dims, expected {EMBEDDING_DIM}",
                query.len()
            )));
        }
        let candidates = self.candidates(category, pool)?;
        let mut ranked = Vec::with_capacity(candidates.len());
        for entry in candidates {
            let emb = entry.embedding.as_ref().ok_or_else(|| {
                Error::rejected(format!("CAD entry {:?} has no embedding", entry.id))
            })?;
            let d: f64 = query
                .iter()
                .zip(emb)
                .map(|(a, b)| {
                    let diff = *a as f64 - *b as f64;
                    diff * diff
                })
                .sum();
            ranked.push(RankedId {
                id: entry.id.clone(),
                distance: d,
            });
        }
        sort_ranking(&mut ranked);
        Ok(ranked)
    }

    /// Ranking by single-sided Chamfer distance from the query NOC points
    /// to each candidate's sampled points.
    pub fn query_chamfer(
        &self,
        noc_points: &PointCloud,
        category: &str,
        pool: Option<&str>,
    ) -> Result<Vec<RankedId>> {
        if noc_points.frame() != Frame::Noc {
            return Err(Error::rejected(format!(
                "chamfer query expects NOC-frame points, got {:?}",
                noc_points.frame()
            )));
        }
        let candidates = self.candidates(category, pool)?;
        let query: &[Vector3<f64>] = noc_points.points();
        let mut ranked = parallel::map_collect(&candidates, |entry| RankedId {
            id: entry.id.clone(),
            distance: chamfer_one_sided_points(query, entry.points.points()),
        });
        sort_ranking(&mut ranked);
        Ok(ranked)
    }
}

fn sort_ranking(ranked: &mut [RankedId]) {
    ranked.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .unwrap()
            .then_with(|| a.id.cmp(&b.id))
    });
}
