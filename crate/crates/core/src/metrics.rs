//! Alignment accuracy and retrieval-aware alignment accuracy with
//! world-space clustering.
//!
//! An alignment is correct when the class matches and translation, rotation
//! and scale errors are within 20 cm / 20 degrees / 20% (inclusive, with a
//! tiny numerical slack so exact-boundary inputs pass). Predictions are
//! deduplicated by greedy confidence-ordered clustering per scene and
//! category, then greedily matched against ground truth, capped at the
//! ground-truth count per scene. All orderings use a canonical total order
//! over record fields, so scores are invariant to input permutation.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_rotation, rot_z, rotation_geodesic, Pose9DoF};

/// Translation threshold in meters.
pub const TRANSLATION_THRESHOLD_M: f64 = 0.20;
/// Rotation threshold in degrees.
pub const ROTATION_THRESHOLD_DEG: f64 = 20.0;
/// Mean per-axis scale-ratio threshold.
pub const SCALE_RATIO_THRESHOLD: f64 = 0.20;
/// Default world-space clustering radius in meters.
pub const DEFAULT_CLUSTER_TAU: f64 = 0.4;

// Numerical slack making the inclusive thresholds robust to rounding.
const THRESHOLD_SLACK: f64 = 1e-9;

/// Rotational symmetry class of a ground-truth object about the canonical
/// z axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryClass {
    #[default]
    None,
    TwoFold,
    FourFold,
    Rotational,
}

/// A world-frame alignment prediction.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub scene: String,
    pub category: String,
    pub pose: Pose9DoF,
    pub confidence: f64,
    pub cad_id: Option<String>,
}

/// A ground-truth object.
#[derive(Debug, Clone)]
pub struct GtObject {
    pub scene: String,
    pub category: String,
    pub pose: Pose9DoF,
    pub cad_id: String,
    pub symmetry: SymmetryClass,
}

/// Rotation error in degrees, minimized over the symmetry group.
pub fn rotation_error(
    r_pred: &Matrix3<f64>,
    r_gt: &Matrix3<f64>,
    symmetry: SymmetryClass,
) -> Result<f64> {
    check_rotation(r_pred)?;
    check_rotation(r_gt)?;
    let err = match symmetry {
        SymmetryClass::None => rotation_geodesic(r_gt, r_pred),
        SymmetryClass::TwoFold => symmetry_min(r_pred, r_gt, &[0.0, PI]),
        SymmetryClass::FourFold => symmetry_min(r_pred, r_gt, &[0.0, PI / 2.0, PI, 3.0 * PI / 2.0]),
        SymmetryClass::Rotational => {
            // Minimize the geodesic over a continuous z rotation: with
            // M = R_gt^T R_pred, tr(M Rz(theta)) is a sinusoid in theta with
            // maximum M22 + hypot(M00 + M11, M01 - M10).
            let m = r_gt.transpose() * r_pred;
            let max_tr = m[(2, 2)] + (m[(0, 0)] + m[(1, 1)]).hypot(m[(0, 1)] - m[(1, 0)]);
            (((max_tr - 1.0) / 2.0).clamp(-1.0, 1.0)).acos()
        }
    };
    Ok(err.to_degrees())
}

fn symmetry_min(r_pred: &Matrix3<f64>, r_gt: &Matrix3<f64>, angles: &[f64]) -> f64 {
    angles
        .iter()
        .map(|&a| rotation_geodesic(r_gt, &(r_pred * rot_z(a))))
        .fold(f64::INFINITY, f64::min)
}

/// Alignment correctness: class match plus translation / rotation /
/// scale errors within the inclusive thresholds.
pub fn is_alignment_correct(pred: &Prediction, gt: &GtObject) -> bool {
    if pred.category != gt.category {
        return false;
    }
    let trans_err = (pred.pose.translation - gt.pose.translation).norm();
    if trans_err > TRANSLATION_THRESHOLD_M + THRESHOLD_SLACK {
        return false;
    }
    let rot_err = match rotation_error(&pred.pose.rotation, &gt.pose.rotation, gt.symmetry) {
        Ok(e) => e,
        Err(_) => return false,
    };
    if rot_err > ROTATION_THRESHOLD_DEG + THRESHOLD_SLACK {
        return false;
    }
    let scale_err = (pred.pose.scale.component_div(&gt.pose.scale) - Vector3::repeat(1.0))
        .abs()
        .mean();
    scale_err <= SCALE_RATIO_THRESHOLD + THRESHOLD_SLACK
}

fn pose_fields(p: &Pose9DoF) -> [f64; 15] {
    let t = p.translation;
    let s = p.scale;
    let r = p.rotation;
    [
        t.x,
        t.y,
        t.z,
        s.x,
        s.y,
        s.z,
        r[(0, 0)],
        r[(0, 1)],
        r[(0, 2)],
        r[(1, 0)],
        r[(1, 1)],
        r[(1, 2)],
        r[(2, 0)],
        r[(2, 1)],
        r[(2, 2)],
    ]
}

fn cmp_pose(a: &Pose9DoF, b: &Pose9DoF) -> Ordering {
    let fa = pose_fields(a);
    let fb = pose_fields(b);
    for (x, y) in fa.iter().zip(&fb) {
        let ord = x.total_cmp(y);
        if ord != Ordering::Equal {
            return ord;
        }
    }
    Ordering::Equal
}

/// Canonical total order: scene, category, descending confidence, then the
/// remaining fields as tie-breaks. Makes every downstream greedy pass
/// independent of input order.
fn cmp_prediction(a: &Prediction, b: &Prediction) -> Ordering {
    a.scene
        .cmp(&b.scene)
        .then_with(|| a.category.cmp(&b.category))
        .then_with(|| b.confidence.total_cmp(&a.confidence))
        .then_with(|| a.cad_id.cmp(&b.cad_id))
        .then_with(|| cmp_pose(&a.pose, &b.pose))
}

fn cmp_gt(a: &GtObject, b: &GtObject) -> Ordering {
    a.scene
        .cmp(&b.scene)
        .then_with(|| a.category.cmp(&b.category))
        .then_with(|| a.cad_id.cmp(&b.cad_id))
        .then_with(|| cmp_pose(&a.pose, &b.pose))
}

/// Greedy world-space deduplication. Within each (scene, category) group,
/// predictions are visited in descending confidence; one joins an existing
/// cluster when its translation is within `tau` of the cluster founder,
/// otherwise it founds a new cluster. Each cluster emits its founder (its
/// highest-confidence member). Idempotent: founders are pairwise more than
/// `tau` apart.
pub fn cluster_world(preds: &[Prediction], tau: f64) -> Vec<Prediction> {
    let mut sorted: Vec<&Prediction> = preds.iter().collect();
    sorted.sort_by(|a, b| cmp_prediction(a, b));

    let mut out: Vec<Prediction> = Vec::new();
    let mut group_key: Option<(&str, &str)> = None;
    let mut reps: Vec<Vector3<f64>> = Vec::new();
    for pred in sorted {
        let key = (pred.scene.as_str(), pred.category.as_str());
        if group_key != Some(key) {
            group_key = Some(key);
            reps.clear();
        }
        let joins = reps
            .iter()
            .any(|rep| (pred.pose.translation - rep).norm() <= tau);
        if !joins {
            reps.push(pred.pose.translation);
            out.push(pred.clone());
        }
    }
    out
}

/// Per-class matched/total counts with the derived accuracy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassScore {
    pub matched: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Accuracy table: per-class scores, the unweighted class average and the
/// instance average (total matched over total ground truth).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreTable {
    pub per_class: BTreeMap<String, ClassScore>,
    pub class_avg: f64,
    pub instance_avg: f64,
    pub matched_total: usize,
    pub gt_total: usize,
}

impl ScoreTable {
    fn from_counts(counts: BTreeMap<String, (usize, usize)>) -> Self {
        let mut per_class = BTreeMap::new();
        let mut matched_total = 0;
        let mut gt_total = 0;
        for (class, (matched, total)) in counts {
            matched_total += matched;
            gt_total += total;
            per_class.insert(
                class,
                ClassScore {
                    matched,
                    total,
                    accuracy: if total > 0 {
                        matched as f64 / total as f64
                    } else {
                        0.0
                    },
                },
            );
        }
        let classes = per_class.values().filter(|c| c.total > 0).count();
        let class_avg = if classes > 0 {
            per_class
                .values()
                .filter(|c| c.total > 0)
                .map(|c| c.accuracy)
                .sum::<f64>()
                / classes as f64
        } else {
            0.0
        };
        let instance_avg = if gt_total > 0 {
            matched_total as f64 / gt_total as f64
        } else {
            0.0
        };
        Self {
            per_class,
            class_avg,
            instance_avg,
            matched_total,
            gt_total,
        }
    }
}

/// Greedy confidence-ordered matching of clustered predictions against
/// ground truth.
///
/// Per scene, predictions are capped at the scene's ground-truth count
/// (excess lowest-confidence predictions are ignored with a warning), then
/// each prediction matches the first unmatched ground-truth object of the
/// same scene satisfying [`is_alignment_correct`] — and, when
/// `retrieval_aware` is set, whose CAD id equals the retrieved one.
pub fn match_and_score(
    preds: &[Prediction],
    gts: &[GtObject],
    retrieval_aware: bool,
) -> ScoreTable {
    let mut gt_sorted: Vec<&GtObject> = gts.iter().collect();
    gt_sorted.sort_by(|a, b| cmp_gt(a, b));
    let mut matched = vec![false; gt_sorted.len()];

    let mut gt_count_per_scene: BTreeMap<&str, usize> = BTreeMap::new();
    for gt in &gt_sorted {
        *gt_count_per_scene.entry(gt.scene.as_str()).or_insert(0) += 1;
    }

    let mut pred_sorted: Vec<&Prediction> = preds.iter().collect();
    pred_sorted.sort_by(|a, b| {
        a.scene
            .cmp(&b.scene)
            .then_with(|| b.confidence.total_cmp(&a.confidence))
            .then_with(|| cmp_prediction(a, b))
    });

    let mut used_per_scene: BTreeMap<&str, usize> = BTreeMap::new();
    for pred in pred_sorted {
        let cap = gt_count_per_scene
            .get(pred.scene.as_str())
            .copied()
            .unwrap_or(0);
        let used = used_per_scene.entry(pred.scene.as_str()).or_insert(0);
        if *used >= cap {
            log::warn!(
                "scene {:?}: prediction count exceeds ground-truth count {cap}, ignoring extras",
                pred.scene
            );
            continue;
        }
        *used += 1;

        for (i, gt) in gt_sorted.iter().enumerate() {
            if matched[i] || gt.scene != pred.scene {
                continue;
            }
            if !is_alignment_correct(pred, gt) {
                continue;
            }
            if retrieval_aware && pred.cad_id.as_deref() != Some(gt.cad_id.as_str()) {
                continue;
            }
            matched[i] = true;
            break;
        }
    }

    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (gt, &hit) in gt_sorted.iter().zip(&matched) {
        let entry = counts.entry(gt.category.clone()).or_insert((0, 0));
        entry.1 += 1;
        if hit {
            entry.0 += 1;
        }
    }
    ScoreTable::from_counts(counts)
}

// ---------------------------------------------------------------------------
// JSONL record formats for predictions and ground truth.
// ---------------------------------------------------------------------------

/// On-disk pose: translation, scale, row-major rotation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseRecord {
    pub t: [f64; 3],
    pub s: [f64; 3],
    pub r: [[f64; 3]; 3],
}

impl PoseRecord {
    pub fn from_pose(p: &Pose9DoF) -> Self {
        let r = p.rotation;
        Self {
            t: [p.translation.x, p.translation.y, p.translation.z],
            s: [p.scale.x, p.scale.y, p.scale.z],
            r: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
        }
    }

    pub fn to_pose(&self) -> Result<Pose9DoF> {
        let r = Matrix3::new(
            self.r[0][0],
            self.r[0][1],
            self.r[0][2],
            self.r[1][0],
            self.r[1][1],
            self.r[1][2],
            self.r[2][0],
            self.r[2][1],
            self.r[2][2],
        );
        Pose9DoF::new(
            Vector3::new(self.t[0], self.t[1], self.t[2]),
            Vector3::new(self.s[0], self.s[1], self.s[2]),
            r,
        )
    }
}

/// One prediction per JSONL line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub scene: String,
    pub category: String,
    pub pose: PoseRecord,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cad_id: Option<String>,
}

/// One ground-truth object per JSONL line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GtRecord {
    pub scene: String,
    pub category: String,
    pub pose: PoseRecord,
    pub cad_id: String,
    #[serde(default)]
    pub symmetry: SymmetryClass,
}

impl PredictionRecord {
    pub fn from_prediction(p: &Prediction) -> Self {
        Self {
            scene: p.scene.clone(),
            category: p.category.clone(),
            pose: PoseRecord::from_pose(&p.pose),
            confidence: p.confidence,
            cad_id: p.cad_id.clone(),
        }
    }

    pub fn to_prediction(&self) -> Result<Prediction> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::rejected(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        Ok(Prediction {
            scene: self.scene.clone(),
            category: self.category.clone(),
            pose: self.pose.to_pose()?,
            confidence: self.confidence,
            cad_id: self.cad_id.clone(),
        })
    }
}

impl GtRecord {
    pub fn from_gt(g: &GtObject) -> Self {
        Self {
            scene: g.scene.clone(),
            category: g.category.clone(),
            pose: PoseRecord::from_pose(&g.pose),
            cad_id: g.cad_id.clone(),
            symmetry: g.symmetry,
        }
    }

    pub fn to_gt(&self) -> Result<GtObject> {
        Ok(GtObject {
            scene: self.scene.clone(),
            category: self.category.clone(),
            pose: self.pose.to_pose()?,
            cad_id: self.cad_id.clone(),
            symmetry: self.symmetry,
        })
    }
}

/// Parses JSONL predictions.
pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| serde_json::from_str::<PredictionRecord>(line)?.to_prediction())
        .collect()
}

/// Parses JSONL ground truth.
pub fn parse_ground_truth(text: &str) -> Result<Vec<GtObject>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| serde_json::from_str::<GtRecord>(line)?.to_gt())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn pred(scene: &str, category: &str, t: Vector3<f64>, conf: f64) -> Prediction {
        Prediction {
            scene: scene.to_string(),
            category: category.to_string(),
            pose: Pose9DoF::new(t, Vector3::repeat(1.0), Matrix3::identity()).unwrap(),
            confidence: conf,
            cad_id: None,
        }
    }

    fn gt(scene: &str, category: &str, t: Vector3<f64>) -> GtObject {
        GtObject {
            scene: scene.to_string(),
            category: category.to_string(),
            pose: Pose9DoF::new(t, Vector3::repeat(1.0), Matrix3::identity()).unwrap(),
            cad_id: "cad".to_string(),
            symmetry: SymmetryClass::None,
        }
    }

    #[test]
    fn rotation_error_cases() {
        let base = rot_z(0.3);
        assert_relative_eq!(
            rotation_error(&base, &base, SymmetryClass::None).unwrap(),
            0.0,
            epsilon = 1e-9
        );
        let off = rot_z(20f64.to_radians()) * base;
        assert_relative_eq!(
            rotation_error(&off, &base, SymmetryClass::None).unwrap(),
            20.0,
            epsilon = 1e-9
        );
        let quarter = rot_z(FRAC_PI_2) * base;
        assert_relative_eq!(
            rotation_error(&quarter, &base, SymmetryClass::FourFold).unwrap(),
            0.0,
            epsilon = 1e-9
        );
        assert_relative_eq!(
            rotation_error(&quarter, &base, SymmetryClass::TwoFold).unwrap(),
            90.0,
            epsilon = 1e-9
        );
        // Any yaw is forgiven for rotationally symmetric objects.
        let yawed = base * rot_z(1.234);
        assert_relative_eq!(
            rotation_error(&yawed, &base, SymmetryClass::Rotational).unwrap(),
            0.0,
            epsilon = 1e-7
        );

        let mut not_rot = Matrix3::identity();
        not_rot[(0, 0)] = 2.0;
        assert!(rotation_error(&not_rot, &base, SymmetryClass::None).is_err());
    }

    #[test]
    fn correctness_thresholds_inclusive() {
        let g = gt("s", "chair", Vector3::new(1.0, 0.0, 2.0));
        let exact = pred("s", "chair", Vector3::new(1.0, 0.0, 2.0), 0.9);
        assert!(is_alignment_correct(&exact, &g));

        // Translation at exactly 0.20 m passes; 0.21 m fails.
        let boundary = pred("s", "chair", Vector3::new(1.2, 0.0, 2.0), 0.9);
        assert!(is_alignment_correct(&boundary, &g));
        let over = pred("s", "chair", Vector3::new(1.21, 0.0, 2.0), 0.9);
        assert!(!is_alignment_correct(&over, &g));

        // Rotation boundary at exactly 20 degrees.
        let mut rot20 = exact.clone();
        rot20.pose.rotation = rot_z(20f64.to_radians());
        assert!(is_alignment_correct(&rot20, &g));
        let mut rot21 = exact.clone();
        rot21.pose.rotation = rot_z(21f64.to_radians());
        assert!(!is_alignment_correct(&rot21, &g));

        // Scale boundary: mean per-axis ratio deviation of exactly 0.20.
        let mut s20 = exact.clone();
        s20.pose.scale = Vector3::new(1.2, 1.2, 1.2);
        assert!(is_alignment_correct(&s20, &g));
        let mut s21 = exact.clone();
        s21.pose.scale = Vector3::new(1.21, 1.21, 1.21);
        assert!(!is_alignment_correct(&s21, &g));

        // Class mismatch is never correct.
        let wrong = pred("s", "table", Vector3::new(1.0, 0.0, 2.0), 0.9);
        assert!(!is_alignment_correct(&wrong, &g));
    }

    #[test]
    fn cluster_world_cases() {
        let single = vec![pred("s", "chair", Vector3::zeros(), 0.8)];
        assert_eq!(cluster_world(&single, DEFAULT_CLUSTER_TAU).len(), 1);

        let close = vec![
            pred("s", "chair", Vector3::new(0.1, 0.0, 0.0), 0.8),
            pred("s", "chair", Vector3::zeros(), 0.9),
        ];
        let out = cluster_world(&close, DEFAULT_CLUSTER_TAU);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].confidence, 0.9);

        let far = vec![
            pred("s", "chair", Vector3::zeros(), 0.9),
            pred("s", "chair", Vector3::new(1.0, 0.0, 0.0), 0.8),
        ];
        assert_eq!(cluster_world(&far, DEFAULT_CLUSTER_TAU).len(), 2);

        // Different categories never merge.
        let mixed = vec![
            pred("s", "chair", Vector3::zeros(), 0.9),
            pred("s", "table", Vector3::zeros(), 0.8),
        ];
        assert_eq!(cluster_world(&mixed, DEFAULT_CLUSTER_TAU).len(), 2);
    }

    #[test]
    fn cluster_world_idempotent() {
        let preds: Vec<Prediction> = (0..20)
            .map(|i| {
                pred(
                    "s",
                    "chair",
                    Vector3::new(i as f64 * 0.17, 0.0, 0.0),
                    0.5 + 0.02 * (i % 7) as f64,
                )
            })
            .collect();
        let once = cluster_world(&preds, DEFAULT_CLUSTER_TAU);
        let twice = cluster_world(&once, DEFAULT_CLUSTER_TAU);
        assert_eq!(once.len(), twice.len());
    }

    #[test]
    fn match_and_score_toy_scene() {
        // Class A (chair): 1 of 2 correct; class B (table): 1 of 1.
        let gts = vec![
            gt("s", "chair", Vector3::zeros()),
            gt("s", "chair", Vector3::new(5.0, 0.0, 0.0)),
            gt("s", "table", Vector3::new(10.0, 0.0, 0.0)),
        ];
        let preds = vec![
            pred("s", "chair", Vector3::new(0.05, 0.0, 0.0), 0.9),
            pred("s", "chair", Vector3::new(7.0, 0.0, 0.0), 0.8), // too far
            pred("s", "table", Vector3::new(10.0, 0.1, 0.0), 0.7),
        ];
        let table = match_and_score(&preds, &gts, false);
        assert_relative_eq!(table.class_avg, 0.75);
        assert_relative_eq!(table.instance_avg, 2.0 / 3.0);
        assert_eq!(table.per_class["chair"].matched, 1);
        assert_eq!(table.per_class["chair"].total, 2);
    }

    #[test]
    fn retrieval_aware_requires_cad_match() {
        let mut g = gt("s", "chair", Vector3::zeros());
        g.cad_id = "right".to_string();
        let mut p = pred("s", "chair", Vector3::zeros(), 0.9);
        p.cad_id = Some("wrong".to_string());

        let plain = match_and_score(std::slice::from_ref(&p), std::slice::from_ref(&g), false);
        assert_relative_eq!(plain.instance_avg, 1.0);
        let aware = match_and_score(std::slice::from_ref(&p), std::slice::from_ref(&g), true);
        assert_relative_eq!(aware.instance_avg, 0.0);

        p.cad_id = Some("right".to_string());
        let aware = match_and_score(&[p], &[g], true);
        assert_relative_eq!(aware.instance_avg, 1.0);
    }

    #[test]
    fn prediction_cap_per_scene() {
        let gts = vec![gt("s", "chair", Vector3::zeros())];
        // Second, lower-confidence prediction would match but is capped out;
        // the higher-confidence one misses.
        let preds = vec![
            pred("s", "chair", Vector3::new(3.0, 0.0, 0.0), 0.9),
            pred("s", "chair", Vector3::zeros(), 0.5),
        ];
        let table = match_and_score(&preds, &gts, false);
        assert_eq!(table.matched_total, 0);
    }

    #[test]
    fn scores_invariant_to_input_order() {
        let gts = vec![
            gt("a", "chair", Vector3::zeros()),
            gt("a", "chair", Vector3::new(2.0, 0.0, 0.0)),
            gt("b", "table", Vector3::zeros()),
        ];
        let preds = vec![
            pred("a", "chair", Vector3::new(0.05, 0.0, 0.0), 0.9),
            pred("a", "chair", Vector3::new(2.1, 0.0, 0.0), 0.6),
            pred("b", "table", Vector3::new(0.3, 0.0, 0.0), 0.7),
        ];
        let base = match_and_score(&preds, &gts, false);

        let mut preds_rev = preds.clone();
        preds_rev.reverse();
        let mut gts_rev = gts.clone();
        gts_rev.reverse();
        let flipped = match_and_score(&preds_rev, &gts_rev, false);

        assert_eq!(base.matched_total, flipped.matched_total);
        assert_eq!(base.class_avg, flipped.class_avg);
        assert_eq!(base.instance_avg, flipped.instance_avg);
    }

    #[test]
    fn instance_average_identity() {
        let gts = vec![
            gt("a", "chair", Vector3::zeros()),
            gt("a", "chair", Vector3::new(2.0, 0.0, 0.0)),
            gt("a", "table", Vector3::new(4.0, 0.0, 0.0)),
            gt("b", "sofa", Vector3::zeros()),
        ];
        let preds = vec![
            pred("a", "chair", Vector3::zeros(), 0.9),
            pred("a", "table", Vector3::new(4.0, 0.0, 0.0), 0.8),
        ];
        let table = match_and_score(&preds, &gts, false);
        // Exact integer identity: instance avg is the GT-weighted class mean.
        let weighted: usize = table.per_class.values().map(|c| c.matched).sum();
        let total: usize = table.per_class.values().map(|c| c.total).sum();
        assert_eq!(weighted, table.matched_total);
        assert_eq!(total, table.gt_total);
        assert_eq!(table.instance_avg, weighted as f64 / total as f64);
    }

    #[test]
    fn jsonl_round_trip() {
        let g = gt("scene0", "chair", Vector3::new(0.1, 0.2, 0.3));
        let line = serde_json::to_string(&GtRecord::from_gt(&g)).unwrap();
        let parsed = parse_ground_truth(&line).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].scene, "scene0");
        assert_eq!(parsed[0].symmetry, SymmetryClass::None);

        let p = pred("scene0", "chair", Vector3::zeros(), 0.5);
        let line = serde_json::to_string(&PredictionRecord::from_prediction(&p)).unwrap();
        let parsed = parse_predictions(&line).unwrap();
        assert_eq!(parsed[0].confidence, 0.5);

        let bad = r#"{"scene":"s","category":"c","pose":{"t":[0,0,0],"s":[1,1,1],"r":[[1,0,0],[0,1,0],[0,0,1]]},"confidence":1.5}"#;
        assert!(parse_predictions(bad).is_err());
    }
}
