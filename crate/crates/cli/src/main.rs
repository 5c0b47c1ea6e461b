//! `cadalign`: command-line front end for the alignment solver, synthetic
//! benchmark, CAD retrieval, evaluation protocol, voxelization and the
//! gradient self-check.
//!
//! Exit codes: 0 on success, 1 on input errors (bad flags, malformed or
//! invalid files), 2 on internal errors (ill-conditioned computations,
//! failed self-checks).

mod formats;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;

use cadalign_core::geometry::{Frame, PointCloud};
use cadalign_core::gradients::gradient_check;
use cadalign_core::metrics::{
    cluster_world, match_and_score, parse_ground_truth, parse_predictions, PoseRecord, ScoreTable,
    DEFAULT_CLUSTER_TAU,
};
use cadalign_core::procrustes::{
    initial_translation, solve_alignment_irls, solve_alignment_weighted, CorrespondenceSet,
    RobustKernel, IRLS_DEFAULT_ROUNDS,
};
use cadalign_core::voxel::{
    occupancy_from_mesh, voxelize_points, DEFAULT_MESH_SAMPLES, DEFAULT_RESOLUTION,
};
use cadalign_harness::{run_benchmark, BenchConfig, WeightPolicy};

use formats::{Geometry, QueryFile, SolveInput, SolveOutput};

#[derive(Parser)]
#[command(
    name = "cadalign",
    version,
    about = "Robust 9-DoF CAD alignment toolkit"
)]
struct Cli {
    /// Worker threads for data-parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SolvePolicy {
    /// Use the weights from the input file.
    Given,
    Uniform,
    Mask,
    Irls,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RetrieveMode {
    /// Pick by query file content.
    Auto,
    Chamfer,
    Embedding,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a 9-DoF alignment from a correspondence JSON file.
    Solve {
        /// Correspondence JSON (q, p, optional c/m/scale/t_init).
        #[arg(long = "in")]
        input: PathBuf,
        /// Output pose JSON.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "given")]
        policy: SolvePolicy,
    },
    /// Run the synthetic robustness benchmark sweep.
    Bench {
        /// Benchmark config JSON; defaults apply for missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory receiving report.json and report.csv.
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the sigma sweep.
        #[arg(long = "sigma", num_args = 1..)]
        sigmas: Option<Vec<f64>>,
        /// Override the weight policies (uniform|mask|oracle|irls).
        #[arg(long = "policy", num_args = 1..)]
        policies: Option<Vec<String>>,
        /// Override the clustering radius (meters).
        #[arg(long)]
        tau: Option<f64>,
        /// Enable Chamfer retrieval and retrieval-aware scoring.
        #[arg(long = "retrieval-aware")]
        retrieval_aware: bool,
    },
    /// Rank database CAD models against a query.
    Retrieve {
        /// Database manifest JSON.
        #[arg(long)]
        db: PathBuf,
        /// Query JSON with either `points` or `embedding`.
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        category: String,
        /// Restrict candidates to a scene pool.
        #[arg(long)]
        pool: Option<String>,
        #[arg(long, value_enum, default_value = "auto")]
        mode: RetrieveMode,
        /// Entries to print.
        #[arg(long, default_value_t = 5)]
        top: usize,
        /// Optional JSON output with the full ranking.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against ground truth (JSONL).
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Clustering radius (meters).
        #[arg(long, default_value_t = DEFAULT_CLUSTER_TAU)]
        tau: f64,
        /// Additionally require the retrieved CAD id to match.
        #[arg(long = "retrieval-aware")]
        retrieval_aware: bool,
        /// Optional JSON report path.
        #[arg(long = "out-json")]
        out_json: Option<PathBuf>,
        /// Optional CSV report path.
        #[arg(long = "out-csv")]
        out_csv: Option<PathBuf>,
    },
    /// Voxelize a mesh or point cloud into a grid binary plus sidecar.
    Voxelize {
        /// Geometry JSON (vertices+triangles or points).
        #[arg(long = "in")]
        input: PathBuf,
        /// Output grid binary path (sidecar written alongside).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
        resolution: usize,
        /// Surface samples for mesh occupancy.
        #[arg(long, default_value_t = DEFAULT_MESH_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Validate analytic solver gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        instances: usize,
        /// Correspondences per instance.
        #[arg(long, default_value_t = 32)]
        points: usize,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let is_help = !e.use_stderr();
            let _ = e.print();
            return if is_help {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };

    #[cfg(feature = "parallel")]
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            log::warn!("could not configure thread pool: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    if cli.threads.is_some() {
        log::warn!("--threads ignored: built without the parallel feature");
    }

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

/// 1 for input errors, 2 for internal ones.
fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<cadalign_core::Error>() {
            return match core {
                cadalign_core::Error::RejectedInput(_)
                | cadalign_core::Error::EmptyPool(_)
                | cadalign_core::Error::Json(_)
                | cadalign_core::Error::Io(_) => 1,
                cadalign_core::Error::IllConditionedGradient(_)
                | cadalign_core::Error::OracleFailure(_) => 2,
            };
        }
        if cause.downcast_ref::<cadalign_harness::Error>().is_some() {
            return 1;
        }
        if cause.downcast_ref::<std::io::Error>().is_some()
            || cause.downcast_ref::<serde_json::Error>().is_some()
        {
            return 1;
        }
        if cause.downcast_ref::<InternalCheckFailed>().is_some() {
            return 2;
        }
    }
    2
}

/// Marker for failed self-checks (exit code 2).
#[derive(Debug)]
struct InternalCheckFailed(String);

impl std::fmt::Display for InternalCheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for InternalCheckFailed {}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Solve { input, out, policy } => cmd_solve(&input, &out, policy),
        Command::Bench {
            config,
            out_dir,
            seed,
            sigmas,
            policies,
            tau,
            retrieval_aware,
        } => cmd_bench(
            config,
            out_dir,
            seed,
            sigmas,
            policies,
            tau,
            retrieval_aware,
        ),
        Command::Retrieve {
            db,
            query,
            category,
            pool,
            mode,
            top,
            out,
        } => cmd_retrieve(&db, &query, &category, pool.as_deref(), mode, top, out),
        Command::Eval {
            pred,
            gt,
            tau,
            retrieval_aware,
            out_json,
            out_csv,
        } => cmd_eval(&pred, &gt, tau, retrieval_aware, out_json, out_csv),
        Command::Voxelize {
            input,
            out,
            resolution,
            samples,
            seed,
        } => cmd_voxelize(&input, &out, resolution, samples, seed),
        Command::Gradcheck {
            seed,
            instances,
            points,
        } => cmd_gradcheck(seed, instances, points),
    }
}

fn cmd_solve(input: &Path, out: &Path, policy: SolvePolicy) -> Result<()> {
    let text =
        std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let parsed: SolveInput = serde_json::from_str(&text).context("parsing correspondence JSON")?;
    let n = parsed.q.len();
    let corr = CorrespondenceSet::new(
        formats::to_vectors(&parsed.q),
        formats::to_vectors(&parsed.p),
        parsed.c.unwrap_or_else(|| vec![1.0; n]),
        parsed.m.unwrap_or_else(|| vec![1.0; n]),
    )?;
    let scale = parsed
        .scale
        .map(|s| Vector3::new(s[0], s[1], s[2]))
        .unwrap_or_else(|| Vector3::repeat(1.0));
    let t_init = match parsed.t_init {
        Some(t) => Vector3::new(t[0], t[1], t[2]),
        None => initial_translation(&PointCloud::new(corr.p().to_vec(), Frame::Camera)?),
    };

    let report = match policy {
        SolvePolicy::Given => solve_alignment_weighted(&corr, &scale, &t_init, corr.c())?,
        SolvePolicy::Uniform => {
            solve_alignment_weighted(&corr, &scale, &t_init, &vec![1.0; corr.len()])?
        }
        SolvePolicy::Mask => solve_alignment_weighted(&corr, &scale, &t_init, corr.m())?,
        SolvePolicy::Irls => {
            solve_alignment_irls(
                &corr,
                &scale,
                &t_init,
                RobustKernel::Tukey,
                IRLS_DEFAULT_ROUNDS,
            )?
            .report
        }
    };

    let output = SolveOutput {
        pose: PoseRecord::from_pose(&report.pose),
        degenerate: report.degenerate,
        singular_values: report.singular_values,
    };
    std::fs::write(out, serde_json::to_string_pretty(&output)?)
        .with_context(|| format!("writing {}", out.display()))?;
    println!(
        "solved {} correspondences; degenerate={}; wrote {}",
        corr.len(),
        report.degenerate,
        out.display()
    );
    Ok(())
}

fn cmd_bench(
    config_path: Option<PathBuf>,
    out_dir: PathBuf,
    seed: Option<u64>,
    sigmas: Option<Vec<f64>>,
    policies: Option<Vec<String>>,
    tau: Option<f64>,
    retrieval_aware: bool,
) -> Result<()> {
    let mut config: BenchConfig = match &config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).context("parsing bench config")?
        }
        None => BenchConfig::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(sigmas) = sigmas {
        config.sigmas = sigmas;
    }
    if let Some(policies) = policies {
        config.policies = policies
            .iter()
            .map(|p| match p.as_str() {
                "uniform" => Ok(WeightPolicy::Uniform),
                "mask" => Ok(WeightPolicy::Mask),
                "oracle" => Ok(WeightPolicy::Oracle),
                "irls" => Ok(WeightPolicy::Irls),
                other => bail!("unknown policy {other:?} (uniform|mask|oracle|irls)"),
            })
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(tau) = tau {
        config.tau = tau;
    }
    if retrieval_aware {
        config.retrieval = true;
    }

    let report = run_benchmark(&config)?;
    std::fs::create_dir_all(&out_dir)?;
    let json_path = out_dir.join("report.json");
    let csv_path = out_dir.join("report.csv");
    std::fs::write(&json_path, report.to_json()?)?;
    std::fs::write(&csv_path, report.to_csv()?)?;
    for cell in &report.cells {
        let aware = cell
            .retrieval_aware
            .as_ref()
            .map(|t| {
                format!(
                    " retrieval_class_avg={} retrieval_instance_avg={}",
                    t.class_avg, t.instance_avg
                )
            })
            .unwrap_or_default();
        println!(
            "sigma={} policy={} class_avg={} instance_avg={}{}",
            cell.sigma, cell.policy, cell.alignment.class_avg, cell.alignment.instance_avg, aware
        );
    }
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

fn cmd_retrieve(
    db: &Path,
    query: &Path,
    category: &str,
    pool: Option<&str>,
    mode: RetrieveMode,
    top: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let db = formats::load_database(db)?;
    let text =
        std::fs::read_to_string(query).with_context(|| format!("reading {}", query.display()))?;
    let parsed: QueryFile = serde_json::from_str(&text).context("parsing query JSON")?;

    let ranked = match (mode, &parsed.points, &parsed.embedding) {
        (RetrieveMode::Chamfer | RetrieveMode::Auto, Some(points), _) => {
            let cloud = PointCloud::new(formats::to_vectors(points), Frame::Noc)?;
            db.query_chamfer(&cloud, category, pool)?
        }
        (RetrieveMode::Embedding | RetrieveMode::Auto, _, Some(embedding)) => {
            db.query_embedding(embedding, category, pool)?
        }
        (RetrieveMode::Chamfer, None, _) => bail!("chamfer mode needs `points` in the query file"),
        (RetrieveMode::Embedding, _, None) => {
            bail!("embedding mode needs `embedding` in the query file")
        }
        (RetrieveMode::Auto, None, None) => bail!("query file has neither points nor embedding"),
    };

    for (rank, item) in ranked.iter().take(top).enumerate() {
        println!("{} {} {}", rank + 1, item.id, item.distance);
    }
    if let Some(out) = out {
        #[derive(serde::Serialize)]
        struct Row<'a> {
            id: &'a str,
            distance: f64,
        }
        let rows: Vec<Row> = ranked
            .iter()
            .map(|r| Row {
                id: &r.id,
                distance: r.distance,
            })
            .collect();
        std::fs::write(&out, serde_json::to_string_pretty(&rows)?)?;
    }
    Ok(())
}

fn score_csv(table: &ScoreTable) -> String {
    let mut header: Vec<String> = table.per_class.keys().cloned().collect();
    header.push("class".to_string());
    header.push("instance".to_string());
    let mut row: Vec<String> = table
        .per_class
        .values()
        .map(|c| format!("{}", c.accuracy))
        .collect();
    row.push(format!("{}", table.class_avg));
    row.push(format!("{}", table.instance_avg));
    format!("{}\n{}\n", header.join(","), row.join(","))
}

fn cmd_eval(
    pred: &Path,
    gt: &Path,
    tau: f64,
    retrieval_aware: bool,
    out_json: Option<PathBuf>,
    out_csv: Option<PathBuf>,
) -> Result<()> {
    let pred_text =
        std::fs::read_to_string(pred).with_context(|| format!("reading {}", pred.display()))?;
    let gt_text =
        std::fs::read_to_string(gt).with_context(|| format!("reading {}", gt.display()))?;
    let preds = parse_predictions(&pred_text)?;
    let gts = parse_ground_truth(&gt_text)?;

    let clustered = cluster_world(&preds, tau);
    let table = match_and_score(&clustered, &gts, retrieval_aware);

    for (class, score) in &table.per_class {
        println!(
            "{class} {} ({}/{})",
            score.accuracy, score.matched, score.total
        );
    }
    println!("class avg: {}", table.class_avg);
    println!("instance avg: {}", table.instance_avg);

    if let Some(path) = out_json {
        std::fs::write(&path, serde_json::to_string_pretty(&table)?)?;
    }
    if let Some(path) = out_csv {
        std::fs::write(&path, score_csv(&table))?;
    }
    Ok(())
}

fn cmd_voxelize(
    input: &Path,
    out: &Path,
    resolution: usize,
    samples: usize,
    seed: u64,
) -> Result<()> {
    let text =
        std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let parsed: formats::GeometryFile =
        serde_json::from_str(&text).context("parsing geometry JSON")?;
    let grid = match formats::parse_geometry(parsed)? {
        Geometry::Mesh(mesh) => occupancy_from_mesh(&mesh, resolution, samples, seed)?,
        Geometry::Points(points) => {
            let out_of_cube = points
                .iter()
                .filter(|p| p.iter().any(|v| v.abs() > 0.5))
                .count();
            if out_of_cube > 0 {
                log::warn!("clamping {out_of_cube} points into the NOC cube");
            }
            let clamped: Vec<Vector3<f64>> = points
                .iter()
                .map(|p| p.map(|v| v.clamp(-0.5, 0.5)))
                .collect();
            voxelize_points(&PointCloud::new(clamped, Frame::Noc)?, resolution)?
        }
    };
    grid.write(out)?;
    let occupied = grid.values().iter().filter(|&&v| v > 0.0).count();
    println!(
        "wrote {} ({}^3, {} occupied cells) with sidecar",
        out.display(),
        grid.resolution(),
        occupied
    );
    Ok(())
}

fn cmd_gradcheck(seed: u64, instances: usize, points: usize) -> Result<()> {
    let report = gradient_check(seed, instances, points)?;
    println!(
        "max relative error: {:e} over {} instances",
        report.max_rel_error, report.instances
    );
    println!(
        "weight-rescaling directional derivative: {:e}",
        report.max_rescale_derivative
    );
    if report.max_rel_error > 1e-4 || report.max_rescale_derivative > 1e-8 {
        return Err(InternalCheckFailed(format!(
            "gradient check failed: max relative error {:e}, rescale derivative {:e}",
            report.max_rel_error, report.max_rescale_derivative
        ))
        .into());
    }
    println!("gradcheck passed");
    Ok(())
}
