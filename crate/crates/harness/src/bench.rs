//! The robustness benchmark: a sweep over NOC-noise levels and weighting
//! policies on synthetic scenes, scored with the alignment-accuracy
//! protocol and optional Chamfer retrieval.
//!
//! Scenes are processed in parallel with per-scene derived seeds and the
//! reduction is ordered by scene, so identical configurations produce
//! byte-identical reports.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use cadalign_core::geometry::{to_world, Frame, PointCloud};
use cadalign_core::metrics::{
    cluster_world, match_and_score, GtObject, Prediction, ScoreTable, SymmetryClass,
};
use cadalign_core::procrustes::{
    initial_translation, solve_alignment_irls, solve_alignment_weighted, CorrespondenceSet,
    RobustKernel, SolveReport, IRLS_DEFAULT_ROUNDS,
};
use cadalign_core::retrieval::{CadDatabase, CadEntry};
use cadalign_core::voxel::{fps, occupancy_from_mesh, sample_surface, Mesh};

use crate::error::{Error, Result};
use crate::parallel;
use crate::sample::{sample_correspondences, NoiseSpec};
use crate::scene::{gen_scene, RotationMode, SceneConfig, SceneGroundTruth};
use crate::seed;
use crate::shapes::{gen_cad, CATEGORIES};

// Seed-stream tags.
const TAG_DB: u64 = 1;
const TAG_SCENE: u64 = 2;
const TAG_CORR: u64 = 3;
const TAG_GRID: u64 = 4;

/// How per-correspondence weights are chosen for the solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPolicy {
    /// All weights 1.
    Uniform,
    /// Mask probabilities as weights.
    Mask,
    /// Oracle inlier indicators: 1 for inliers, 1e-6 for outliers.
    Oracle,
    /// Iteratively reweighted least squares with a Tukey kernel.
    Irls,
}

impl std::fmt::Display for WeightPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            WeightPolicy::Uniform => "uniform",
            WeightPolicy::Mask => "mask",
            WeightPolicy::Oracle => "oracle",
            WeightPolicy::Irls => "irls",
        };
        f.write_str(s)
    }
}

/// Benchmark configuration; every field has a default so partial JSON
/// configs work.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub seed: u64,
    pub scenes: usize,
    pub objects_per_scene: usize,
    pub points_per_object: usize,
    pub sigmas: Vec<f64>,
    pub outlier_fraction: f64,
    pub depth_sigma: f64,
    pub policies: Vec<WeightPolicy>,
    pub scale_range: (f64, f64),
    pub rotation_mode: RotationMode,
    /// World-space clustering radius (meters).
    pub tau: f64,
    pub db_size: usize,
    /// Points kept per CAD entry after farthest-point sampling.
    pub db_points: usize,
    /// Run Chamfer retrieval and score retrieval-aware accuracy.
    pub retrieval: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenes: 50,
            objects_per_scene: 4,
            points_per_object: 96,
            sigmas: vec![0.0, 0.1, 0.2, 0.3],
            outlier_fraction: 0.0,
            depth_sigma: 0.0,
            policies: vec![WeightPolicy::Uniform, WeightPolicy::Irls],
            scale_range: (0.5, 2.0),
            rotation_mode: RotationMode::Full,
            tau: 0.4,
            db_size: 50,
            db_points: 512,
            retrieval: false,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenes == 0 || self.objects_per_scene == 0 {
            return Err(Error::InvalidConfig(
                "need at least one scene and object".into(),
            ));
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| *s < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bad sigma list {:?}",
                self.sigmas
            )));
        }
        if self.policies.is_empty() {
            return Err(Error::InvalidConfig("empty policy list".into()));
        }
        if self.db_size == 0 || self.db_points < 8 {
            return Err(Error::InvalidConfig("database too small".into()));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tau {} must be positive",
                self.tau
            )));
        }
        NoiseSpec {
            noc_sigma: 0.0,
            depth_sigma: self.depth_sigma,
            outlier_fraction: self.outlier_fraction,
            points_per_object: self.points_per_object,
        }
        .validate()
    }
}

/// Scores for one (sigma, policy) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellReport {
    pub sigma: f64,
    pub policy: WeightPolicy,
    pub alignment: ScoreTable,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retrieval_aware: Option<ScoreTable>,
}

/// Full benchmark output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub scene_seeds: Vec<u64>,
    pub cells: Vec<CellReport>,
}

impl BenchReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Fixed-column CSV: one row per cell, per-category accuracies in
    /// alphabetical order, empty where a category has no ground truth.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["sigma".to_string(), "policy".to_string()];
        header.extend(CATEGORIES.iter().map(|c| c.to_string()));
        header.extend(
            [
                "class_avg",
                "instance_avg",
                "ret_class_avg",
                "ret_instance_avg",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        w.write_record(&header)?;
        for cell in &self.cells {
            let mut row = vec![format!("{}", cell.sigma), cell.policy.to_string()];
            for cat in CATEGORIES {
                match cell.alignment.per_class.get(cat) {
                    Some(score) => row.push(format!("{}", score.accuracy)),
                    None => row.push(String::new()),
                }
            }
            row.push(format!("{}", cell.alignment.class_avg));
            row.push(format!("{}", cell.alignment.instance_avg));
            match &cell.retrieval_aware {
                Some(t) => {
                    row.push(format!("{}", t.class_avg));
                    row.push(format!("{}", t.instance_avg));
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
            w.write_record(&row)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Prebuilt synthetic world shared by all cells.
pub struct World {
    pub db: CadDatabase,
    pub meshes: BTreeMap<String, Mesh>,
    pub scenes: Vec<SceneGroundTruth>,
    pub gts: Vec<GtObject>,
    pub scene_seeds: Vec<u64>,
}

/// Builds the CAD database, scenes, per-scene candidate pools and
/// world-frame ground truth for a configuration.
pub fn build_world(config: &BenchConfig) -> Result<World> {
    config.validate()?;

    let mut entries = Vec::with_capacity(config.db_size);
    let mut meshes = BTreeMap::new();
    let mut cad_ids: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for i in 0..config.db_size {
        let category = CATEGORIES[i % CATEGORIES.len()];
        let cad_seed = seed::derive(config.seed, &[TAG_DB, i as u64]);
        let mesh = gen_cad(category, cad_seed)?;
        let dense = sample_surface(&mesh, 4 * config.db_points, cad_seed)?;
        let dense_cloud = PointCloud::new(dense, Frame::Noc)?;
        let picks = fps(&dense_cloud, config.db_points)?;
        let points = PointCloud::new(
            picks.iter().map(|&k| dense_cloud.points()[k]).collect(),
            Frame::Noc,
        )?;
        let grid = occupancy_from_mesh(
            &mesh,
            32,
            20_000,
            seed::derive(config.seed, &[TAG_GRID, i as u64]),
        )?;
        let id = format!("{category}_{i:03}");
        cad_ids
            .entry(category.to_string())
            .or_default()
            .push(id.clone());
        meshes.insert(id.clone(), mesh);
        entries.push(CadEntry::new(id, category.to_string(), points, grid, None)?);
    }

    let scene_config = SceneConfig {
        objects: config.objects_per_scene,
        scale_range: config.scale_range,
        rotation_mode: config.rotation_mode,
        cad_ids,
    };
    let mut scenes = Vec::with_capacity(config.scenes);
    let mut scene_seeds = Vec::with_capacity(config.scenes);
    let mut pools: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut gts = Vec::new();
    for s in 0..config.scenes {
        let scene_seed = seed::derive(config.seed, &[TAG_SCENE, s as u64]);
        let scene = gen_scene(&scene_config, scene_seed)?;
        pools.insert(
            scene.id.clone(),
            scene.objects.iter().map(|o| o.cad_id.clone()).collect(),
        );
        for obj in &scene.objects {
            gts.push(GtObject {
                scene: scene.id.clone(),
                category: obj.category.clone(),
                pose: to_world(&obj.pose, &scene.extrinsics),
                cad_id: obj.cad_id.clone(),
                symmetry: SymmetryClass::None,
            });
        }
        scene_seeds.push(scene_seed);
        scenes.push(scene);
    }

    let db = CadDatabase::build(entries, pools)?;
    Ok(World {
        db,
        meshes,
        scenes,
        gts,
        scene_seeds,
    })
}

fn solve_with_policy(
    corr: &CorrespondenceSet,
    scale: &Vector3<f64>,
    t_init: &Vector3<f64>,
    inlier: &[bool],
    policy: WeightPolicy,
) -> cadalign_core::Result<(SolveReport, Vec<f64>)> {
    match policy {
        WeightPolicy::Uniform => {
            let w = vec![1.0; corr.len()];
            Ok((solve_alignment_weighted(corr, scale, t_init, &w)?, w))
        }
        WeightPolicy::Mask => {
            let w = corr.m().to_vec();
            Ok((solve_alignment_weighted(corr, scale, t_init, &w)?, w))
        }
        WeightPolicy::Oracle => {
            let w: Vec<f64> = inlier.iter().map(|&i| if i { 1.0 } else { 1e-6 }).collect();
            Ok((solve_alignment_weighted(corr, scale, t_init, &w)?, w))
        }
        WeightPolicy::Irls => {
            let solve = solve_alignment_irls(
                corr,
                scale,
                t_init,
                RobustKernel::Tukey,
                IRLS_DEFAULT_ROUNDS,
            )?;
            Ok((solve.report, solve.weights))
        }
    }
}

/// Weighted RMS residual of the full fit, mapped to a confidence in (0, 1].
fn confidence(corr: &CorrespondenceSet, report: &SolveReport, weights: &[f64]) -> f64 {
    let pose = &report.pose;
    let mut num = 0.0;
    let mut den = 0.0;
    for ((q, p), &w) in corr.q().iter().zip(corr.p()).zip(weights) {
        let r = (pose.transform_point(q) - p).norm_squared();
        num += w * r;
        den += w;
    }
    let rms = (num / den).sqrt();
    1.0 / (1.0 + rms)
}

/// Runs one scene through sampling, solving and optional retrieval for a
/// given noise level and policy.
fn process_scene(
    world: &World,
    config: &BenchConfig,
    scene: &SceneGroundTruth,
    sigma: f64,
    policy: WeightPolicy,
) -> Result<Vec<Prediction>> {
    let noise = NoiseSpec {
        noc_sigma: sigma,
        depth_sigma: config.depth_sigma,
        outlier_fraction: config.outlier_fraction,
        points_per_object: config.points_per_object,
    };
    let mut preds = Vec::with_capacity(scene.objects.len());
    for (oi, obj) in scene.objects.iter().enumerate() {
        let corr_seed = seed::derive(scene.seed, &[TAG_CORR, oi as u64]);
        let mesh = &world.meshes[&obj.cad_id];
        let (corr, inlier) = sample_correspondences(mesh, &obj.pose, &noise, corr_seed)?;

        let camera_cloud = PointCloud::new(corr.p().to_vec(), Frame::Camera)?;
        let t_init = initial_translation(&camera_cloud);
        let (report, weights) =
            solve_with_policy(&corr, &obj.pose.scale, &t_init, &inlier, policy)?;
        let conf = confidence(&corr, &report, &weights);

        let cad_id = if config.retrieval {
            let clamped: Vec<Vector3<f64>> = corr
                .q()
                .iter()
                .map(|q| q.map(|v| v.clamp(-0.5, 0.5)))
                .collect();
            let query = PointCloud::new(clamped, Frame::Noc)?;
            let ranked = world
                .db
                .query_chamfer(&query, &obj.category, Some(&scene.id))?;
            Some(ranked[0].id.clone())
        } else {
            None
        };

        preds.push(Prediction {
            scene: scene.id.clone(),
            category: obj.category.clone(),
            pose: to_world(&report.pose, &scene.extrinsics),
            confidence: conf,
            cad_id,
        });
    }
    Ok(preds)
}

/// Runs one (sigma, policy) cell over all scenes.
pub fn run_cell(
    world: &World,
    config: &BenchConfig,
    sigma: f64,
    policy: WeightPolicy,
) -> Result<CellReport> {
    let per_scene = parallel::map_collect(&world.scenes, |scene| {
        process_scene(world, config, scene, sigma, policy)
    });
    let mut preds = Vec::new();
    for scene_preds in per_scene {
        preds.extend(scene_preds?);
    }
    let clustered = cluster_world(&preds, config.tau);
    let alignment = match_and_score(&clustered, &world.gts, false);
    let retrieval_aware = if config.retrieval {
        Some(match_and_score(&clustered, &world.gts, true))
    } else {
        None
    };
    Ok(CellReport {
        sigma,
        policy,
        alignment,
        retrieval_aware,
    })
}

/// Runs the full sweep: every sigma crossed with every policy.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    let world = build_world(config)?;
    let mut cells = Vec::with_capacity(config.sigmas.len() * config.policies.len());
    for &sigma in &config.sigmas {
        for &policy in &config.policies {
            cells.push(run_cell(&world, config, sigma, policy)?);
        }
    }
    Ok(BenchReport {
        config: config.clone(),
        scene_seeds: world.scene_seeds,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> BenchConfig {
        BenchConfig {
            seed: 7,
            scenes: 3,
            objects_per_scene: 3,
            points_per_object: 48,
            sigmas: vec![0.0],
            policies: vec![WeightPolicy::Uniform],
            db_size: 18,
            db_points: 128,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn noise_free_cell_is_perfect() {
        let report = run_benchmark(&tiny_config()).unwrap();
        assert_eq!(report.cells.len(), 1);
        let cell = &report.cells[0];
        assert_eq!(cell.alignment.instance_avg, 1.0);
        assert_eq!(cell.alignment.class_avg, 1.0);
        assert_eq!(cell.alignment.matched_total, cell.alignment.gt_total);
    }

    #[test]
    fn reports_are_byte_identical() {
        let config = tiny_config();
        let a = run_benchmark(&config).unwrap();
        let b = run_benchmark(&config).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    }

    #[test]
    fn retrieval_cell_scores_both_tables() {
        let mut config = tiny_config();
        config.retrieval = true;
        let report = run_benchmark(&config).unwrap();
        let cell = &report.cells[0];
        let aware = cell.retrieval_aware.as_ref().unwrap();
        assert!(aware.instance_avg <= cell.alignment.instance_avg);
        for (class, score) in &aware.per_class {
            assert!(score.accuracy <= cell.alignment.per_class[class].accuracy);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = tiny_config();
        c.sigmas = vec![];
        assert!(run_benchmark(&c).is_err());
        let mut c = tiny_config();
        c.outlier_fraction = 1.2;
        assert!(c.validate().is_err());
        let mut c = tiny_config();
        c.tau = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn csv_shape() {
        let report = run_benchmark(&tiny_config()).unwrap();
        let csv = report.to_csv().unwrap();
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("sigma,policy,bathtub,"));
        assert_eq!(lines.count(), 1);
    }
}
