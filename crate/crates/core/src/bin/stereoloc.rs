use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stereoloc::config::{ConfigError, ResolvedConfig, RunConfig};
use stereoloc::detection::{read_label_dir, LabelDirError};
use stereoloc::evaluation::{
    depth_error_table, error_table_csv, match_estimates_to_truth, read_estimates_csv, read_ground_truth_csv, run_bench,
    EvalError, DEFAULT_MATCH_RADIUS_M,
};
use stereoloc::fixtures::{load_fixture_dir, run_fixture};
use stereoloc::pipeline::{estimates_csv, localize_stream_posed, parse_poses_csv, FramePoses, POSES_FILE};
use stereoloc::sim::{emit_dataset, generate_scene, SimError, GROUND_TRUTH_FILE};

#[derive(Parser)]
#[command(
    name = "stereoloc",
    version,
    about = "Multi-drone stereo localization from bounding-box detections"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic stereo dataset with ground truth.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to `paths.output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `simulation.rng_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Localize every paired frame in a label directory. A `poses.csv` in the
    /// directory supplies per-frame rig poses.
    Localize {
        #[arg(long)]
        config: PathBuf,
        /// Label directory (defaults to `paths.input_dir`).
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Estimates CSV (defaults to `<paths.output_dir>/estimates.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Score estimates against ground truth.
    Evaluate {
        /// Estimates CSV written by `localize`.
        #[arg(long = "in")]
        input: PathBuf,
        /// Ground-truth CSV; defaults to `ground_truth.csv` beside the estimates.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Directory for `error_table.csv` and `summary.json`.
        #[arg(long)]
        out: PathBuf,
        /// Maximum estimate-to-truth distance for a match, in meters.
        #[arg(long, default_value_t = DEFAULT_MATCH_RADIUS_M)]
        radius: f64,
    },
    /// Time the association and triangulation stages on a seeded workload.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 5)]
        drones: usize,
        #[arg(long, default_value_t = 2000)]
        frames: usize,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also measure a rayon pool of this many threads when > 1.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value = "bench.json")]
        out: PathBuf,
    },
    /// Check a config file and print the resolved depth constant.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every golden fixture in a directory.
    Fixtures {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Io(String),
    Empty(String),
    Schema(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Empty(_) => 4,
            Failure::Schema(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Io(m) | Failure::Empty(m) | Failure::Schema(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Io(e.to_string()),
            ConfigError::Invalid { .. } => Failure::Config(e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io { .. } | SimError::ThreadPool(_) => Failure::Io(e.to_string()),
            SimError::InvalidConfig(_) | SimError::InfeasibleConfig(_) => Failure::Config(format!("simulation: {e}")),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::EmptyInput => Failure::Empty(e.to_string()),
            EvalError::Io { .. } => Failure::Io(e.to_string()),
            EvalError::MissingColumn { .. } | EvalError::Parse { .. } => Failure::Schema(e.to_string()),
        }
    }
}

impl From<LabelDirError> for Failure {
    fn from(e: LabelDirError) -> Self {
        match e {
            LabelDirError::Io { .. } => Failure::Io(e.to_string()),
            LabelDirError::Label { .. } => Failure::Schema(e.to_string()),
        }
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::Io(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn threads_arg(threads: usize) -> Result<usize, Failure> {
    if threads == 0 {
        return Err(Failure::Config("--threads: must be at least 1".into()));
    }
    Ok(threads)
}

fn simulate(config: &Path, out: Option<PathBuf>, seed: Option<u64>, threads: usize) -> Result<(), Failure> {
    let threads = threads_arg(threads)?;
    let ResolvedConfig { config, rig } = RunConfig::load(config)?;
    let mut scene_cfg = config
        .simulation
        .clone()
        .ok_or_else(|| Failure::Config("simulation: section is required for simulate".into()))?;
    if let Some(seed) = seed {
        scene_cfg.rng_seed = seed;
    }
    let out = out
        .or(config.paths.output_dir.clone())
        .ok_or_else(|| Failure::Config("paths.output_dir: no --out given and none configured".into()))?;
    let scene = generate_scene(&scene_cfg, &rig)?;
    let summary = emit_dataset(&scene, &scene_cfg, &rig, &out, threads)?;
    println!(
        "simulated frames={} targets={} seed={} label_files={} truth_rows={} out={}",
        scene_cfg.num_frames,
        scene_cfg.target_count(),
        scene_cfg.rng_seed,
        summary.label_files,
        summary.truth_rows,
        out.display()
    );
    Ok(())
}

fn localize(config: &Path, input: Option<PathBuf>, out: Option<PathBuf>, threads: usize) -> Result<(), Failure> {
    let threads = threads_arg(threads)?;
    let ResolvedConfig { config, rig } = RunConfig::load(config)?;
    let input = input
        .or(config.paths.input_dir.clone())
        .ok_or_else(|| Failure::Config("paths.input_dir: no --in given and none configured".into()))?;
    let out = out
        .or(config.paths.output_dir.as_ref().map(|d| d.join("estimates.csv")))
        .ok_or_else(|| Failure::Config("paths.output_dir: no --out given and none configured".into()))?;
    let dir = read_label_dir(&input)?;
    for id in &dir.incomplete {
        eprintln!("warning: frame {id} is missing its left or right label file; skipped");
    }
    if dir.frames.is_empty() {
        return Err(Failure::Empty(format!(
            "{}: no paired label files found",
            input.display()
        )));
    }
    let cfg = config.localize_config();
    let poses_path = input.join(POSES_FILE);
    let poses = match fs::read(&poses_path) {
        Ok(bytes) => parse_poses_csv(&bytes).map_err(|e| Failure::Schema(format!("{}: {e}", poses_path.display())))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => FramePoses::new(),
        Err(e) => return Err(Failure::Io(format!("{}: {e}", poses_path.display()))),
    };
    let results =
        localize_stream_posed(&dir.frames, &rig, &cfg, &poses, threads).map_err(|e| Failure::Io(e.to_string()))?;
    write(&out, estimates_csv(&results))?;
    let estimates: usize = results.iter().map(|r| r.estimates.len()).sum();
    println!(
        "localized frames={} skipped={} estimates={} out={}",
        results.len(),
        dir.incomplete.len(),
        estimates,
        out.display()
    );
    Ok(())
}

fn evaluate(input: &Path, truth: Option<PathBuf>, out: &Path, radius: f64) -> Result<(), Failure> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Failure::Config("--radius: must be positive".into()));
    }
    let truth = truth.unwrap_or_else(|| input.with_file_name(GROUND_TRUTH_FILE));
    let estimates = read_estimates_csv(input)?;
    let truth = read_ground_truth_csv(&truth)?;
    let outcome = match_estimates_to_truth(&estimates, &truth, radius);
    let (rows, summary) = depth_error_table(&outcome)?;
    write(&out.join("error_table.csv"), error_table_csv(&rows))?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(&out.join("summary.json"), json + "\n")?;
    println!(
        "evaluated samples={} missed={} spurious={} mean_error_pct={:.4} max_error_pct={:.4}",
        summary.n_samples, summary.missed, summary.spurious, summary.mean_error_pct, summary.max_error_pct
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn bench(
    config: &Path,
    drones: usize,
    frames: usize,
    repetitions: usize,
    seed: u64,
    threads: usize,
    out: &Path,
) -> Result<(), Failure> {
    let threads = threads_arg(threads)?;
    if drones == 0 || frames == 0 || repetitions == 0 {
        return Err(Failure::Config(
            "--drones, --frames and --repetitions must be at least 1".into(),
        ));
    }
    let ResolvedConfig { config, rig } = RunConfig::load(config)?;
    let report = run_bench(
        &rig,
        &config.localize_config(),
        drones,
        frames,
        repetitions,
        threads,
        seed,
    )?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write(out, json + "\n")?;
    println!(
        "bench drones={} frames={} p50_us={:.2} p95_us={:.2} fps={:.0} hash={}",
        drones,
        frames,
        report.single_thread.p50_us,
        report.single_thread.p95_us,
        report.single_thread.fps,
        report.workload_hash
    );
    Ok(())
}

fn validate(config: &Path) -> Result<(), Failure> {
    let ResolvedConfig { config, rig } = RunConfig::load(config)?;
    println!(
        "config ok: schema_version={} depth_constant={} focal_length_px={} simulation={}",
        config.schema_version,
        rig.depth_constant(),
        rig.intrinsics().focal_length_px(),
        if config.simulation.is_some() { "yes" } else { "no" }
    );
    Ok(())
}

fn fixtures(dir: &Path) -> Result<(), Failure> {
    let all = load_fixture_dir(dir).map_err(|e| Failure::Schema(e.to_string()))?;
    if all.is_empty() {
        return Err(Failure::Empty(format!("{}: no fixtures", dir.display())));
    }
    let mut failed = 0;
    for f in &all {
        let report = run_fixture(f).map_err(|e| Failure::Schema(e.to_string()))?;
        println!("{} {}", if report.passed() { "PASS" } else { "FAIL" }, report.name);
        for c in report.checks.iter().filter(|c| !c.passed) {
            println!(
                "  {} expected {} got {} (tol {})",
                c.field, c.expected, c.actual, c.tolerance
            );
        }
        failed += usize::from(!report.passed());
    }
    if failed > 0 {
        return Err(Failure::Schema(format!("{failed} of {} fixtures failed", all.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            threads,
        } => simulate(&config, out, seed, threads),
        Command::Localize {
            config,
            input,
            out,
            threads,
        } => localize(&config, input, out, threads),
        Command::Evaluate {
            input,
            truth,
            out,
            radius,
        } => evaluate(&input, truth, &out, radius),
        Command::Bench {
            config,
            drones,
            frames,
            repetitions,
            seed,
            threads,
            out,
        } => bench(&config, drones, frames, repetitions, seed, threads, &out),
        Command::Validate { config } => validate(&config),
        Command::Fixtures { dir } => fixtures(&dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
