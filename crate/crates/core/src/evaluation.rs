//! Scoring estimates against simulator truth, plus the throughput benchmark.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::assignment::{self, CostMatrix};
use crate::detection::{fmt_decimal, write_label_file, StereoFrame};
use crate::geometry::{StereoRig, WorldPoint};
use crate::pipeline::{localize_frame, DroneEstimate, FrameResult, LocalizeConfig, ESTIMATES_HEADER};
use crate::sim::{
    generate_scene, GroundTruthRecord, NoiseModel, SceneConfig, SimError, Viewpoints, GROUND_TRUTH_HEADER,
};

pub const DEFAULT_MATCH_RADIUS_M: f64 = 1.0;
pub const ERROR_TABLE_HEADER: &str = "sample_no,disparity_px,z_depth_m,ground_truth_m,error_pct";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no matched samples to summarize")]
    EmptyInput,
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One estimate as it appears in the estimates CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub frame_id: u64,
    pub target_ordinal: usize,
    pub disparity_px: f64,
    pub depth_m: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub confidence: f64,
}

impl EstimateRow {
    pub fn world(&self) -> WorldPoint {
        WorldPoint::new(self.x_m, self.y_m, self.z_m)
    }
}

impl From<&DroneEstimate> for EstimateRow {
    fn from(e: &DroneEstimate) -> Self {
        Self {
            frame_id: e.frame_id,
            target_ordinal: e.target_ordinal,
            disparity_px: e.disparity_px,
            depth_m: e.depth_m,
            x_m: e.world.x,
            y_m: e.world.y,
            z_m: e.world.z,
            confidence: e.confidence,
        }
    }
}

pub fn estimate_rows(results: &[FrameResult]) -> Vec<EstimateRow> {
    results
        .iter()
        .flat_map(|r| r.estimates.iter().map(EstimateRow::from))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthMatch {
    pub estimate: EstimateRow,
    pub truth: GroundTruthRecord,
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchOutcome {
    /// Ordered by frame, then target ordinal.
    pub matches: Vec<TruthMatch>,
    pub missed: usize,
    pub spurious: usize,
}

/// Per frame, pairs estimates with visible truth records by minimum total
/// world distance, refusing pairs farther apart than `radius_m`.
pub fn match_estimates_to_truth(estimates: &[EstimateRow], truth: &[GroundTruthRecord], radius_m: f64) -> MatchOutcome {
    let mut by_frame: BTreeMap<u64, (Vec<EstimateRow>, Vec<GroundTruthRecord>)> = BTreeMap::new();
    for e in estimates {
        by_frame.entry(e.frame_id).or_default().0.push(*e);
    }
    for t in truth.iter().filter(|t| t.visible) {
        by_frame.entry(t.frame_id).or_default().1.push(*t);
    }

    let mut out = MatchOutcome::default();
    for (_, (mut est, tru)) in by_frame {
        est.sort_by_key(|e| e.target_ordinal);
        let m = CostMatrix::from_fn(est.len(), tru.len(), |i, j| {
            let d = est[i].world().distance(&tru[j].world);
            (d <= radius_m).then_some(d)
        });
        let a = assignment::solve(&m);
        out.missed += tru.len() - a.len();
        out.spurious += est.len() - a.len();
        out.matches.extend(a.pairs.iter().map(|&(i, j)| TruthMatch {
            estimate: est[i],
            truth: tru[j],
            distance_m: m.get(i, j).unwrap_or(0.0),
        }));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub sample_no: usize,
    pub disparity_px: f64,
    pub z_depth_m: f64,
    pub ground_truth_m: f64,
    pub error_pct: f64,
}

impl ErrorRow {
    pub fn new(sample_no: usize, disparity_px: f64, z_depth_m: f64, ground_truth_m: f64) -> Self {
        Self {
            sample_no,
            disparity_px,
            z_depth_m,
            ground_truth_m,
            error_pct: depth_error_pct(z_depth_m, ground_truth_m),
        }
    }
}

/// Absolute depth error relative to ground truth, in percent.
pub fn depth_error_pct(estimate_m: f64, truth_m: f64) -> f64 {
    100.0 * (estimate_m - truth_m).abs() / truth_m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n_samples: usize,
    pub mean_error_pct: f64,
    pub max_error_pct: f64,
    pub mean_abs_error_m: f64,
    pub matched: usize,
    pub missed: usize,
    pub spurious: usize,
}

pub fn error_rows(matches: &[TruthMatch]) -> Vec<ErrorRow> {
    matches
        .iter()
        .enumerate()
        .map(|(i, m)| ErrorRow::new(i + 1, m.estimate.disparity_px, m.estimate.depth_m, m.truth.depth_m))
        .collect()
}

/// Aggregates computed from `rows` alone; counts come from `outcome`.
pub fn summarize(rows: &[ErrorRow], missed: usize, spurious: usize) -> Result<EvalSummary, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = rows.len() as f64;
    Ok(EvalSummary {
        n_samples: rows.len(),
        mean_error_pct: rows.iter().map(|r| r.error_pct).sum::<f64>() / n,
        max_error_pct: rows.iter().map(|r| r.error_pct).fold(0.0, f64::max),
        mean_abs_error_m: rows.iter().map(|r| (r.z_depth_m - r.ground_truth_m).abs()).sum::<f64>() / n,
        matched: rows.len(),
        missed,
        spurious,
    })
}

pub fn depth_error_table(outcome: &MatchOutcome) -> Result<(Vec<ErrorRow>, EvalSummary), EvalError> {
    let rows = error_rows(&outcome.matches);
    let summary = summarize(&rows, outcome.missed, outcome.spurious)?;
    Ok((rows, summary))
}

pub fn error_table_csv(rows: &[ErrorRow]) -> String {
    let mut out = String::from(ERROR_TABLE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.sample_no,
            fmt_decimal(r.disparity_px),
            fmt_decimal(r.z_depth_m),
            fmt_decimal(r.ground_truth_m),
            fmt_decimal(r.error_pct)
        );
    }
    out
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path, header: &str) -> Result<Vec<T>, EvalError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => EvalError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => EvalError::Parse {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    })?;
    let parse_err = |e: csv::Error| EvalError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let headers = reader.headers().map_err(parse_err)?.clone();
    for column in header.split(',') {
        if !headers.iter().any(|h| h.trim() == column) {
            return Err(EvalError::MissingColumn {
                path: path.to_path_buf(),
                column: column.to_string(),
            });
        }
    }
    reader.deserialize().map(|r| r.map_err(parse_err)).collect()
}

pub fn read_estimates_csv(path: &Path) -> Result<Vec<EstimateRow>, EvalError> {
    read_csv(path, ESTIMATES_HEADER)
}

#[derive(Deserialize)]
struct TruthCsvRow {
    frame_id: u64,
    target_id: usize,
    x_m: f64,
    y_m: f64,
    z_m: f64,
    depth_m: f64,
    visible: bool,
}

pub fn read_ground_truth_csv(path: &Path) -> Result<Vec<GroundTruthRecord>, EvalError> {
    let rows: Vec<TruthCsvRow> = read_csv(path, GROUND_TRUTH_HEADER)?;
    Ok(rows
        .into_iter()
        .map(|r| GroundTruthRecord {
            frame_id: r.frame_id,
            target_id: r.target_id,
            world: WorldPoint::new(r.x_m, r.y_m, r.z_m),
            depth_m: r.depth_m,
            visible: r.visible,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthBin {
    pub lo_m: f64,
    pub hi_m: f64,
    pub n: usize,
    pub mean_error_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inversion {
    /// The lower of the two adjacent bins.
    pub bin: usize,
    pub mean_diff_pct: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// The whole confidence interval sits below zero.
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendReport {
    pub bins: Vec<DepthBin>,
    pub inversions: Vec<Inversion>,
}

impl TrendReport {
    /// Non-decreasing up to one adjacent inversion, and no inversion that
    /// the bootstrap says is real.
    pub fn is_non_decreasing(&self) -> bool {
        self.inversions.len() <= 1 && self.inversions.iter().all(|i| !i.significant)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Bins rows by ground-truth depth (`edges` ascending, half-open bins) and
/// checks adjacent-bin means with a percentile bootstrap at `confidence`.
pub fn depth_trend(rows: &[ErrorRow], edges: &[f64], resamples: usize, confidence: f64, seed: u64) -> TrendReport {
    let groups: Vec<Vec<f64>> = edges
        .windows(2)
        .map(|w| {
            rows.iter()
                .filter(|r| r.ground_truth_m >= w[0] && r.ground_truth_m < w[1])
                .map(|r| r.error_pct)
                .collect()
        })
        .collect();
    let bins: Vec<DepthBin> = edges
        .windows(2)
        .zip(&groups)
        .map(|(w, g)| DepthBin {
            lo_m: w[0],
            hi_m: w[1],
            n: g.len(),
            mean_error_pct: if g.is_empty() { f64::NAN } else { mean(g) },
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut resample_mean = |g: &[f64]| -> f64 {
        let s: f64 = (0..g.len()).map(|_| g[rng.random_range(0..g.len())]).sum();
        s / g.len() as f64
    };
    let alpha = (1.0 - confidence) / 2.0;
    let mut inversions = Vec::new();
    for k in 0..bins.len().saturating_sub(1) {
        let diff = bins[k + 1].mean_error_pct - bins[k].mean_error_pct;
        if diff.is_nan() || diff >= 0.0 || groups[k].is_empty() || groups[k + 1].is_empty() {
            continue;
        }
        let mut diffs: Vec<f64> = (0..resamples)
            .map(|_| resample_mean(&groups[k + 1]) - resample_mean(&groups[k]))
            .collect();
        diffs.sort_by(f64::total_cmp);
        let at = |q: f64| diffs[((q * (diffs.len() - 1) as f64).round() as usize).min(diffs.len() - 1)];
        let (ci_low, ci_high) = (at(alpha), at(1.0 - alpha));
        inversions.push(Inversion {
            bin: k,
            mean_diff_pct: diff,
            ci_low,
            ci_high,
            significant: ci_high < 0.0,
        });
    }
    TrendReport { bins, inversions }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub p50_us: f64,
    pub p95_us: f64,
    pub max_us: f64,
    pub mean_us: f64,
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelStats {
    pub threads: usize,
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub drones_per_frame: usize,
    pub n_frames: usize,
    pub repetitions: usize,
    pub workload_seed: u64,
    pub workload_hash: String,
    pub single_thread: LatencyStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multi_thread: Option<ParallelStats>,
}

/// Seeded synthetic frames for benchmarking: `drones_per_frame` targets in
/// front of a fixed rig with half-pixel center noise.
pub fn bench_workload(
    rig: &StereoRig,
    drones_per_frame: usize,
    n_frames: usize,
    seed: u64,
) -> Result<Vec<StereoFrame>, SimError> {
    let cfg = SceneConfig {
        num_targets: drones_per_frame,
        num_frames: n_frames,
        rng_seed: seed,
        depth_range_m: bench_depth_range(rig),
        lateral_range_m: bench_lateral_range(rig),
        vertical_range_m: None,
        viewpoints: Viewpoints::Fixed,
        noise: NoiseModel {
            pixel_sigma: 0.5,
            ..Default::default()
        },
        ..Default::default()
    };
    Ok(generate_scene(&cfg, rig)?.frames)
}

// depths whose disparity spans roughly 10%..50% of the image width
fn bench_depth_range(rig: &StereoRig) -> [f64; 2] {
    let w = rig.intrinsics().width() as f64;
    let k = rig.intrinsics().focal_length_px() * rig.baseline_m();
    [k / (0.5 * w), k / (0.1 * w)]
}

fn bench_lateral_range(rig: &StereoRig) -> [f64; 2] {
    let z = bench_depth_range(rig)[0];
    let intr = rig.intrinsics();
    let half = 0.4 * intr.height().min(intr.width()) as f64 * z / intr.focal_length_px();
    [-half + rig.baseline_m() / 2.0, half + rig.baseline_m() / 2.0]
}

pub fn workload_hash(frames: &[StereoFrame]) -> String {
    let mut h = Sha256::new();
    for f in frames {
        h.update(f.frame_id.to_le_bytes());
        h.update(write_label_file(&f.left));
        h.update(b"|");
        h.update(write_label_file(&f.right));
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Times association + triangulation + back-projection per frame.
pub fn bench_pipeline(
    frames: &[StereoFrame],
    rig: &StereoRig,
    cfg: &LocalizeConfig,
    repetitions: usize,
    threads: usize,
) -> (LatencyStats, Option<ParallelStats>) {
    let repetitions = repetitions.max(1);
    let mut latencies = Vec::with_capacity(frames.len() * repetitions);
    let mut sink = 0usize;
    let start = Instant::now();
    for _ in 0..repetitions {
        for f in frames {
            let t0 = Instant::now();
            let r = localize_frame(f, rig, cfg);
            latencies.push(t0.elapsed().as_secs_f64() * 1e6);
            sink += r.estimates.len();
        }
    }
    let wall = start.elapsed().as_secs_f64();
    std::hint::black_box(sink);
    latencies.sort_by(f64::total_cmp);
    let n = latencies.len().max(1) as f64;
    let stats = LatencyStats {
        p50_us: quantile(&latencies, 0.50),
        p95_us: quantile(&latencies, 0.95),
        max_us: latencies.last().copied().unwrap_or(0.0),
        mean_us: latencies.iter().sum::<f64>() / n,
        fps: n / wall,
    };

    let parallel = (threads > 1).then(|| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        let start = Instant::now();
        let count: usize = pool.install(|| {
            (0..repetitions)
                .map(|_| {
                    frames
                        .par_iter()
                        .map(|f| localize_frame(f, rig, cfg).estimates.len())
                        .sum::<usize>()
                })
                .sum()
        });
        std::hint::black_box(count);
        ParallelStats {
            threads,
            fps: (frames.len() * repetitions) as f64 / start.elapsed().as_secs_f64(),
        }
    });
    (stats, parallel)
}

pub fn run_bench(
    rig: &StereoRig,
    cfg: &LocalizeConfig,
    drones_per_frame: usize,
    n_frames: usize,
    repetitions: usize,
    threads: usize,
    seed: u64,
) -> Result<BenchReport, SimError> {
    let frames = bench_workload(rig, drones_per_frame, n_frames, seed)?;
    let (single_thread, multi_thread) = bench_pipeline(&frames, rig, cfg, repetitions, threads);
    Ok(BenchReport {
        drones_per_frame,
        n_frames,
        repetitions,
        workload_seed: seed,
        workload_hash: workload_hash(&frames),
        single_thread,
        multi_thread,
    })
}
