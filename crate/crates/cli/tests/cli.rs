//! End-to-end tests of the `cadalign` binary: every subcommand over its
//! documented file formats, plus exit-code behavior.

use std::path::Path;
use std::process::{Command, Output};

use nalgebra::Vector3;

use cadalign_core::geometry::{rot_y, rot_z, Pose9DoF};
use cadalign_core::voxel::VoxelGrid;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cadalign"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

#[test]
fn unknown_subcommand_exits_1() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["solve", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_0() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("solve"));
}

#[test]
fn solve_noise_free_fixture_matches_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let pose = Pose9DoF::new(
        Vector3::new(0.3, -0.4, 2.2),
        Vector3::new(1.4, 0.9, 1.1),
        rot_z(0.6) * rot_y(-0.3),
    )
    .unwrap();

    // A deterministic set of in-cube NOCs and their posed camera points.
    let mut q = Vec::new();
    for i in 0..40 {
        let a = i as f64 * 0.37;
        q.push([
            0.45 * (a.sin() * 0.9),
            0.45 * ((1.7 * a).cos() * 0.9),
            0.45 * ((0.9 * a + 1.0).sin() * 0.9),
        ]);
    }
    let p: Vec<[f64; 3]> = q
        .iter()
        .map(|v| {
            let out = pose.transform_point(&Vector3::new(v[0], v[1], v[2]));
            [out.x, out.y, out.z]
        })
        .collect();

    let input = serde_json::json!({
        "q": q,
        "p": p,
        "scale": [pose.scale.x, pose.scale.y, pose.scale.z],
    });
    let in_path = dir.path().join("corr.json");
    let out_path = dir.path().join("pose.json");
    std::fs::write(&in_path, serde_json::to_string(&input).unwrap()).unwrap();

    let out = run(&[
        "solve",
        "--in",
        in_path.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let solved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let t = solved["pose"]["t"].as_array().unwrap();
    for (axis, gt) in [pose.translation.x, pose.translation.y, pose.translation.z]
        .iter()
        .enumerate()
    {
        assert!((t[axis].as_f64().unwrap() - gt).abs() <= 1e-6);
    }
    let r = solved["pose"]["r"].as_array().unwrap();
    for (i, row) in r.iter().enumerate() {
        for j in 0..3 {
            let got = row.as_array().unwrap()[j].as_f64().unwrap();
            assert!((got - pose.rotation[(i, j)]).abs() <= 1e-6);
        }
    }
    assert_eq!(solved["degenerate"].as_bool(), Some(false));
}

#[test]
fn solve_rejects_bad_input_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let in_path = dir.path().join("bad.json");
    std::fs::write(&in_path, "{\"q\": [[0,0,0]], \"p\": [[0,0,0]]}").unwrap();
    let out = run(&[
        "solve",
        "--in",
        in_path.to_str().unwrap(),
        "--out",
        dir.path().join("pose.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&[
        "solve",
        "--in",
        dir.path().join("missing.json").to_str().unwrap(),
        "--out",
        dir.path().join("pose.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

fn pose_json(t: [f64; 3]) -> serde_json::Value {
    serde_json::json!({
        "t": t,
        "s": [1.0, 1.0, 1.0],
        "r": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    })
}

#[test]
fn eval_toy_scene_prints_class_average() {
    let dir = tempfile::tempdir().unwrap();

    // Class A (chair): 1 of 2 correct; class B (table): 1 of 1.
    let gt_lines = [
        serde_json::json!({"scene": "s", "category": "chair", "pose": pose_json([0.0, 0.0, 0.0]), "cad_id": "c0"}),
        serde_json::json!({"scene": "s", "category": "chair", "pose": pose_json([5.0, 0.0, 0.0]), "cad_id": "c1"}),
        serde_json::json!({"scene": "s", "category": "table", "pose": pose_json([10.0, 0.0, 0.0]), "cad_id": "t0"}),
    ];
    let pred_lines = [
        serde_json::json!({"scene": "s", "category": "chair", "pose": pose_json([0.05, 0.0, 0.0]), "confidence": 0.9}),
        serde_json::json!({"scene": "s", "category": "chair", "pose": pose_json([7.0, 0.0, 0.0]), "confidence": 0.8}),
        serde_json::json!({"scene": "s", "category": "table", "pose": pose_json([10.0, 0.1, 0.0]), "confidence": 0.7}),
    ];
    let gt_path = dir.path().join("gt.jsonl");
    let pred_path = dir.path().join("pred.jsonl");
    let join = |lines: &[serde_json::Value]| {
        lines
            .iter()
            .map(|l| serde_json::to_string(l).unwrap())
            .collect::<Vec<_>>()
            .join("\n")
    };
    std::fs::write(&gt_path, join(&gt_lines)).unwrap();
    std::fs::write(&pred_path, join(&pred_lines)).unwrap();

    let csv_path = dir.path().join("report.csv");
    let out = run(&[
        "eval",
        "--pred",
        pred_path.to_str().unwrap(),
        "--gt",
        gt_path.to_str().unwrap(),
        "--out-csv",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(text.contains("class avg: 0.75"), "stdout: {text}");
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("chair,table,class,instance"));
}

#[test]
fn voxelize_points_and_mesh() {
    let dir = tempfile::tempdir().unwrap();

    // Single point at the center of a cell.
    let geom = serde_json::json!({"points": [[-0.125, -0.125, -0.125]]});
    let in_path = dir.path().join("points.json");
    std::fs::write(&in_path, serde_json::to_string(&geom).unwrap()).unwrap();
    let grid_path = dir.path().join("grid.f32");
    let out = run(&[
        "voxelize",
        "--in",
        in_path.to_str().unwrap(),
        "--out",
        grid_path.to_str().unwrap(),
        "--resolution",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let grid = VoxelGrid::read(&grid_path).unwrap();
    assert_eq!(grid.get(1, 1, 1), 1.0);
    assert_eq!(grid.values().iter().filter(|&&v| v > 0.0).count(), 1);

    // A flat square mesh at z = 0 lands in the two adjacent layers.
    let mesh = serde_json::json!({
        "vertices": [[-0.5, -0.5, 0.0], [0.5, -0.5, 0.0], [0.5, 0.5, 0.0], [-0.5, 0.5, 0.0]],
        "triangles": [[0, 1, 2], [0, 2, 3]],
    });
    let mesh_path = dir.path().join("mesh.json");
    std::fs::write(&mesh_path, serde_json::to_string(&mesh).unwrap()).unwrap();
    let mesh_grid = dir.path().join("mesh.f32");
    let out = run(&[
        "voxelize",
        "--in",
        mesh_path.to_str().unwrap(),
        "--out",
        mesh_grid.to_str().unwrap(),
        "--resolution",
        "8",
        "--samples",
        "2000",
        "--seed",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let grid = VoxelGrid::read(&mesh_grid).unwrap();
    let mut any_occupied = false;
    for z in 0..8 {
        let occupied = (0..8)
            .flat_map(|y| (0..8).map(move |x| (x, y)))
            .any(|(x, y)| grid.get(x, y, z) > 0.0);
        if occupied {
            any_occupied = true;
            // Confined to the layers adjacent to the z = 0 plane.
            assert!(z == 3 || z == 4, "unexpected occupied layer {z}");
        }
    }
    assert!(any_occupied);
}

/// Builds a small on-disk database manifest with point blobs, grids and
/// embeddings.
fn write_manifest(dir: &Path) -> std::path::PathBuf {
    let mut entries = Vec::new();
    for (i, offset) in [0.1f64, 0.2, 0.3].iter().enumerate() {
        let id = format!("chair_{i}");
        let points = [
            [*offset, 0.0, 0.0],
            [0.0, *offset, 0.0],
            [0.0, 0.0, *offset],
            [-*offset, -*offset, 0.0],
        ];
        let mut blob = Vec::new();
        for p in points {
            for v in p {
                blob.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let points_rel = format!("{id}.pts");
        std::fs::write(dir.join(&points_rel), &blob).unwrap();

        let grid_rel = format!("{id}.grid");
        VoxelGrid::zeros(2)
            .unwrap()
            .write(&dir.join(&grid_rel))
            .unwrap();

        let emb_rel = format!("{id}.emb");
        let mut emb = Vec::new();
        for _ in 0..256 {
            emb.extend_from_slice(&(*offset as f32).to_le_bytes());
        }
        std::fs::write(dir.join(&emb_rel), &emb).unwrap();

        entries.push(serde_json::json!({
            "id": id,
            "category": "chair",
            "points": points_rel,
            "grid": grid_rel,
            "embedding": emb_rel,
        }));
    }
    let manifest = serde_json::json!({
        "entries": entries,
        "pools": {"scene0": ["chair_2"]},
    });
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    path
}

#[test]
fn retrieve_chamfer_and_embedding() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest(dir.path());

    // Chamfer: query with chair_1's own points ranks it first at distance 0.
    let query = serde_json::json!({
        "points": [[0.2, 0.0, 0.0], [0.0, 0.2, 0.0], [0.0, 0.0, 0.2], [-0.2, -0.2, 0.0]],
    });
    let query_path = dir.path().join("query.json");
    std::fs::write(&query_path, serde_json::to_string(&query).unwrap()).unwrap();
    let out = run(&[
        "retrieve",
        "--db",
        manifest.to_str().unwrap(),
        "--query",
        query_path.to_str().unwrap(),
        "--category",
        "chair",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(
        text.lines().next().unwrap().starts_with("1 chair_1 0"),
        "stdout: {text}"
    );

    // Pool restriction only returns the pooled entry.
    let out = run(&[
        "retrieve",
        "--db",
        manifest.to_str().unwrap(),
        "--query",
        query_path.to_str().unwrap(),
        "--category",
        "chair",
        "--pool",
        "scene0",
    ]);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1);
    assert!(text.contains("chair_2"));

    // Embedding mode.
    let emb_query = serde_json::json!({ "embedding": vec![0.3f32; 256] });
    let emb_path = dir.path().join("emb_query.json");
    std::fs::write(&emb_path, serde_json::to_string(&emb_query).unwrap()).unwrap();
    let out = run(&[
        "retrieve",
        "--db",
        manifest.to_str().unwrap(),
        "--query",
        emb_path.to_str().unwrap(),
        "--category",
        "chair",
    ]);
    let text = stdout(&out);
    assert!(
        text.lines().next().unwrap().starts_with("1 chair_2 0"),
        "stdout: {text}"
    );

    // Unknown category is an input error.
    let out = run(&[
        "retrieve",
        "--db",
        manifest.to_str().unwrap(),
        "--query",
        query_path.to_str().unwrap(),
        "--category",
        "sofa",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "seed": 11,
        "scenes": 2,
        "objects_per_scene": 2,
        "points_per_object": 32,
        "sigmas": [0.0, 0.1],
        "policies": ["uniform"],
        "db_size": 9,
        "db_points": 64,
    });
    let config_path = dir.path().join("config.json");
    std::fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();

    for sub in ["a", "b"] {
        let out = run(&[
            "bench",
            "--config",
            config_path.to_str().unwrap(),
            "--out-dir",
            dir.path().join(sub).to_str().unwrap(),
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for name in ["report.json", "report.csv"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn gradcheck_seed_7_passes() {
    let out = run(&["gradcheck", "--seed", "7", "--instances", "10"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(text.contains("gradcheck passed"), "stdout: {text}");
}
