//! Acceptance criteria A1-A8. Each test writes one `A<n> PASS|FAIL ...` line
//! straight to stdout so the verdicts show up without `--nocapture`.
//!
//! Run with `cargo test -p stereoloc --test acceptance`.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use stereoloc::association::{associate_boxes, brute_force_associate, total_cost, AssociationConfig};
use stereoloc::config::RunConfig;
use stereoloc::detection::{parse_label_file, read_label_dir, write_label_file, BoundingBox, DetectionSet};
use stereoloc::evaluation::{
    depth_error_table, depth_trend, estimate_rows, match_estimates_to_truth, read_ground_truth_csv, run_bench,
    summarize, BenchReport, ErrorRow,
};
use stereoloc::geometry::{triangulate_depth, CameraIntrinsics, RigPose, Side, StereoRig};
use stereoloc::pipeline::{localize_stream, parse_poses_csv, LocalizeConfig, POSES_FILE};
use stereoloc::sim::{emit_dataset, generate_scene, NoiseModel, SceneConfig, Viewpoints, GROUND_TRUTH_FILE};
use stereoloc::StereoFrame;

// criteria share the machine; A7 times itself, so run them one at a time
static SERIAL: Mutex<()> = Mutex::new(());

const PUBLISHED_K: f64 = 9070.86;
const PUBLISHED_DISPARITIES: [f64; 8] = [1412.0, 1274.0, 1173.0, 1104.0, 1089.0, 1028.0, 898.0, 963.0];
const PUBLISHED_DEPTHS: [f64; 8] = [6.42, 7.12, 7.73, 8.21, 8.33, 8.82, 10.10, 9.42];
const PUBLISHED_TRUTH: [f64; 8] = [5.71, 5.93, 6.37, 6.54, 6.73, 6.93, 7.59, 7.70];
const PUBLISHED_ERROR_PCT: [f64; 8] = [12.32, 19.97, 21.24, 25.62, 23.75, 27.25, 32.95, 22.27];

fn report(id: &str, passed: bool, detail: String, elapsed: Duration, budget: Duration) -> bool {
    let in_time = elapsed <= budget;
    let ok = passed && in_time;
    let line = format!(
        "{id} {} {detail} [{:.2}s / {:.0}s budget]\n",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    ok
}

fn config_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn rig(f_px: f64, w: u32, h: u32, baseline: f64) -> StereoRig {
    let intr = CameraIntrinsics::from_focal_px(f_px, w, h).unwrap();
    StereoRig::new(intr, baseline, RigPose::identity()).unwrap()
}

#[test]
fn a1_published_depths() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let rig = RunConfig::load(&config_path("published_rig.json")).unwrap().rig;
    assert_eq!(rig.depth_constant(), PUBLISHED_K);
    let mut worst: f64 = 0.0;
    for (d, expected) in PUBLISHED_DISPARITIES.iter().zip(PUBLISHED_DEPTHS) {
        let z = triangulate_depth(*d, &rig).unwrap();
        worst = worst.max((z - expected).abs());
    }
    let ok = report(
        "A1",
        worst <= 0.01,
        format!("8 depths, max |dZ| = {worst:.4} m (tol 0.01 m)"),
        t0.elapsed(),
        Duration::from_secs(1),
    );
    assert!(ok);
}

#[test]
fn a2_published_error_table() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let rig = RunConfig::load(&config_path("published_rig.json")).unwrap().rig;
    let rows: Vec<ErrorRow> = PUBLISHED_DISPARITIES
        .iter()
        .zip(PUBLISHED_TRUTH)
        .enumerate()
        .map(|(i, (&d, gt))| ErrorRow::new(i + 1, d, triangulate_depth(d, &rig).unwrap(), gt))
        .collect();
    let worst = rows
        .iter()
        .zip(PUBLISHED_ERROR_PCT)
        .map(|(r, e)| (r.error_pct - e).abs())
        .fold(0.0, f64::max);
    let mean = summarize(&rows, 0, 0).unwrap().mean_error_pct;
    let ok = report(
        "A2",
        worst <= 0.25 && (mean - 23.2).abs() <= 0.5,
        format!("max row deviation {worst:.3} pp (tol 0.25), mean {mean:.3}% (23.2 +/- 0.5)"),
        t0.elapsed(),
        Duration::from_secs(1),
    );
    assert!(ok);
}

#[test]
fn a3_simulated_loop_within_quantization_bound() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let cfg_path = config_path("simulate_band.json");
    let resolved = RunConfig::load(&cfg_path).unwrap();
    let sim = resolved.config.simulation.as_ref().unwrap();
    assert_eq!((sim.num_frames, sim.target_count()), (50, 1));
    assert_eq!(sim.depth_range_m, [5.0, 8.0]);
    assert!(sim.noise.quantize && sim.noise.pixel_sigma == 0.0);

    let tmp = TempDir::new().unwrap();
    let ds = tmp.path().join("ds");
    let est = ds.join("estimates.csv");
    let eval = tmp.path().join("eval");
    let bin = env!("CARGO_BIN_EXE_stereoloc");
    let cfg = cfg_path.to_str().unwrap();
    for args in [
        vec!["simulate", "--config", cfg, "--out", ds.to_str().unwrap()],
        vec![
            "localize",
            "--config",
            cfg,
            "--in",
            ds.to_str().unwrap(),
            "--out",
            est.to_str().unwrap(),
        ],
        vec![
            "evaluate",
            "--in",
            est.to_str().unwrap(),
            "--out",
            eval.to_str().unwrap(),
        ],
    ] {
        let o = Command::new(bin).args(&args).output().unwrap();
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }

    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(eval.join("summary.json")).unwrap()).unwrap();
    let k = resolved.rig.intrinsics().focal_length_px() * resolved.rig.baseline_m();
    let q = 1.0;
    let table = std::fs::read_to_string(eval.join("error_table.csv")).unwrap();
    let mut worst_ratio: f64 = 0.0;
    let mut n = 0;
    for line in table.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let (z_est, z) = (f[2], f[3]);
        let bound = z * z * q / (k - z * q);
        worst_ratio = worst_ratio.max((z_est - z).abs() / bound);
        n += 1;
    }
    let missed = summary["missed"].as_u64().unwrap();
    let spurious = summary["spurious"].as_u64().unwrap();
    let ok = report(
        "A3",
        n == 50 && missed == 0 && spurious == 0 && worst_ratio <= 1.0,
        format!("{n} samples, missed {missed}, spurious {spurious}, max |dZ|/bound = {worst_ratio:.3}"),
        t0.elapsed(),
        Duration::from_secs(5),
    );
    assert!(ok);
}

#[test]
fn a4_noiseless_scenes_are_exact() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let rig = rig(1000.0, 1280, 720, 0.5);
    let cfg = LocalizeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut scenes, mut visible, mut bad) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    for seed in 0..1000u64 {
        let scene_cfg = SceneConfig {
            num_targets: rng.random_range(1..=5),
            num_frames: 1,
            rng_seed: seed,
            depth_range_m: [1.0, 100.0],
            lateral_range_m: [-0.1, 0.6],
            vertical_range_m: Some([-0.3, 0.3]),
            drone_extent_m: [0.5, 0.3, 0.5],
            viewpoints: Viewpoints::Fixed,
            noise: NoiseModel::default(),
            ..Default::default()
        };
        let scene = generate_scene(&scene_cfg, &rig).unwrap();
        let rows = estimate_rows(&localize_stream(&scene.frames, &rig, &cfg));
        let outcome = match_estimates_to_truth(&rows, &scene.truth, 1e-6);
        scenes += 1;
        visible += scene.truth.iter().filter(|t| t.visible).count();
        if outcome.missed + outcome.spurious > 0 {
            bad += 1;
        }
        for m in &outcome.matches {
            worst = worst.max(m.distance_m);
        }
    }
    let ok = report(
        "A4",
        bad == 0 && scenes >= 1000,
        format!("{scenes} scenes, {visible} visible drones, {bad} scenes off by > 1e-6 m, max error {worst:.2e} m"),
        t0.elapsed(),
        Duration::from_secs(10),
    );
    assert!(ok);
}

fn random_box(rng: &mut ChaCha8Rng) -> BoundingBox {
    let w = rng.random_range(0.01..0.2);
    let h = rng.random_range(0.01..0.2);
    BoundingBox::new(0, rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), w, h)
}

#[test]
fn a5_association_matches_brute_force() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let intr = CameraIntrinsics::from_focal_px(1000.0, 1280, 720).unwrap();
    let cfg = AssociationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut frames, mut mismatches, mut pairs_seen) = (0, 0, 0);
    for i in 0..2000u64 {
        let nl = rng.random_range(0..=5);
        let nr = rng.random_range(0..=5);
        let left: Vec<BoundingBox> = (0..nl).map(|_| random_box(&mut rng)).collect();
        // most right boxes are shifted copies of left ones so the gate admits
        // several candidates per row
        let right: Vec<BoundingBox> = (0..nr)
            .map(|_| {
                if !left.is_empty() && rng.random_bool(0.7) {
                    let b = left[rng.random_range(0..left.len())];
                    BoundingBox::new(
                        0,
                        (b.cx_norm - rng.random_range(0.0..0.5)).max(0.0),
                        (b.cy_norm + rng.random_range(-0.04..0.04)).clamp(0.0, 1.0),
                        (b.w_norm * rng.random_range(0.7..1.3)).min(1.0),
                        (b.h_norm * rng.random_range(0.7..1.3)).min(1.0),
                    )
                } else {
                    random_box(&mut rng)
                }
            })
            .collect();
        let frame = StereoFrame::new(i, left, right);
        let fast = associate_boxes(&frame.left.boxes, &frame.right.boxes, &intr, &cfg);
        let oracle = brute_force_associate(&frame, &intr, &cfg).unwrap();
        let same_pairs = fast
            .iter()
            .map(|p| (p.left_index, p.right_index))
            .eq(oracle.iter().map(|p| (p.left_index, p.right_index)));
        if !(same_pairs && total_cost(&fast) == total_cost(&oracle)) {
            mismatches += 1;
        }
        pairs_seen += fast.len();
        frames += 1;
    }
    let ok = report(
        "A5",
        mismatches == 0 && frames >= 1000,
        format!("{frames} frames, {pairs_seen} pairs, {mismatches} differ from brute force"),
        t0.elapsed(),
        Duration::from_secs(10),
    );
    assert!(ok);
}

#[test]
fn a6_error_grows_with_depth() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let rig = rig(1000.0, 1280, 720, 0.5);
    let scene_cfg = SceneConfig {
        num_targets: 1,
        num_frames: 2400,
        rng_seed: 6,
        depth_range_m: [3.0, 12.0],
        lateral_range_m: [-0.5, 1.0],
        vertical_range_m: Some([-0.5, 0.5]),
        viewpoints: Viewpoints::Fixed,
        noise: NoiseModel {
            pixel_sigma: 1.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let scene = generate_scene(&scene_cfg, &rig).unwrap();
    let rows = estimate_rows(&localize_stream(&scene.frames, &rig, &LocalizeConfig::default()));
    let outcome = match_estimates_to_truth(&rows, &scene.truth, 1.0);
    let (table, _) = depth_error_table(&outcome).unwrap();
    let trend = depth_trend(&table, &[3.0, 5.25, 7.5, 9.75, 12.0], 2000, 0.95, 6);
    let means: Vec<String> = trend.bins.iter().map(|b| format!("{:.3}", b.mean_error_pct)).collect();
    let ok = report(
        "A6",
        table.len() >= 2000 && trend.bins.iter().all(|b| b.n > 0) && trend.is_non_decreasing(),
        format!(
            "{} samples, bin means [{}]%, {} inversion(s), {} significant at 95%",
            table.len(),
            means.join(", "),
            trend.inversions.len(),
            trend.inversions.iter().filter(|i| i.significant).count()
        ),
        t0.elapsed(),
        Duration::from_secs(30),
    );
    assert!(ok);
}

#[test]
fn a7_throughput_floor() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let resolved = RunConfig::load(&config_path("simulate_band.json")).unwrap();
    let report_data = run_bench(&resolved.rig, &resolved.config.localize_config(), 5, 2000, 5, 1, 0).unwrap();
    let json = serde_json::to_value(&report_data).unwrap();
    let back: Result<BenchReport, _> = serde_json::from_value(json.clone());
    let st = &json["single_thread"];
    let schema_ok = back.is_ok_and(|b| b == report_data)
        && ["p50_us", "p95_us", "max_us", "mean_us", "fps"]
            .iter()
            .all(|k| st[k].as_f64().is_some_and(|v| v >= 0.0))
        && json["workload_hash"].as_str().is_some_and(|h| h.len() == 64)
        && report_data.single_thread.p50_us <= report_data.single_thread.p95_us
        && report_data.single_thread.p95_us <= report_data.single_thread.max_us;
    let fps = report_data.single_thread.fps;
    let ok = report(
        "A7",
        schema_ok && fps >= 10_000.0,
        format!(
            "{fps:.0} frames/s at 5 drones/frame single-threaded (floor 10000), p50 {:.1} us, schema {}",
            report_data.single_thread.p50_us,
            if schema_ok { "valid" } else { "INVALID" }
        ),
        t0.elapsed(),
        Duration::from_secs(30),
    );
    assert!(ok);
}

fn boxes_close(a: &[BoundingBox], b: &[BoundingBox], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.class_id == y.class_id
                && [
                    (x.cx_norm, y.cx_norm),
                    (x.cy_norm, y.cy_norm),
                    (x.w_norm, y.w_norm),
                    (x.h_norm, y.h_norm),
                    (x.confidence, y.confidence),
                ]
                .iter()
                .all(|(p, q)| (p - q).abs() <= tol)
        })
}

#[test]
fn a8_file_round_trips() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let tol = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    let mut label_failures = 0;
    for i in 0..100u64 {
        let n = rng.random_range(0..8);
        let boxes = (0..n)
            .map(|_| {
                let mut b = random_box(&mut rng).with_confidence(rng.random_range(0.0..=1.0));
                b.class_id = rng.random_range(0..5);
                b
            })
            .collect();
        let side = if rng.random_bool(0.5) { Side::Left } else { Side::Right };
        let set = DetectionSet::new(i, side, boxes);
        let back = parse_label_file(&write_label_file(&set), i, side).unwrap();
        if !boxes_close(&set.boxes, &back.boxes, tol) {
            label_failures += 1;
        }
    }

    let tmp = TempDir::new().unwrap();
    let rig = rig(1000.0, 1280, 720, 0.5);
    let mut dataset_failures = 0;
    for i in 0..100u64 {
        let cfg = SceneConfig {
            num_targets: rng.random_range(1..=4),
            num_frames: 3,
            rng_seed: i,
            depth_range_m: [2.0, 30.0],
            lateral_range_m: [-1.0, 1.5],
            noise: NoiseModel {
                pixel_sigma: rng.random_range(0.0..2.0),
                quantize: rng.random_bool(0.3),
                miss_rate: rng.random_range(0.0..0.3),
            },
            ..Default::default()
        };
        let scene = generate_scene(&cfg, &rig).unwrap();
        let dir = tmp.path().join(i.to_string());
        emit_dataset(&scene, &cfg, &rig, &dir, 1).unwrap();
        let labels = read_label_dir(&dir).unwrap();
        let truth = read_ground_truth_csv(&dir.join(GROUND_TRUTH_FILE)).unwrap();
        let poses = parse_poses_csv(&std::fs::read(dir.join(POSES_FILE)).unwrap()).unwrap();
        let frames_ok = labels.incomplete.is_empty()
            && labels.frames.len() == scene.frames.len()
            && labels.frames.iter().zip(&scene.frames).all(|(a, b)| {
                a.frame_id == b.frame_id
                    && boxes_close(&a.left.boxes, &b.left.boxes, tol)
                    && boxes_close(&a.right.boxes, &b.right.boxes, tol)
            });
        let truth_ok = truth.len() == scene.truth.len()
            && truth.iter().zip(&scene.truth).all(|(a, b)| {
                a.frame_id == b.frame_id
                    && a.target_id == b.target_id
                    && a.visible == b.visible
                    && a.world.distance(&b.world) <= tol
                    && (a.depth_m - b.depth_m).abs() <= tol
            });
        let poses_ok = poses.len() == scene.poses.len()
            && poses.values().zip(&scene.poses).all(|(a, b)| {
                (a.rotation() - b.rotation()).abs().max() <= tol
                    && (a.translation() - b.translation()).abs().max() <= tol
            });
        if !(frames_ok && truth_ok && poses_ok) {
            dataset_failures += 1;
        }
    }
    let ok = report(
        "A8",
        label_failures == 0 && dataset_failures == 0,
        format!(
            "100 label files ({label_failures} failed), 100 emitted datasets ({dataset_failures} failed), tol 1e-6"
        ),
        t0.elapsed(),
        Duration::from_secs(5),
    );
    assert!(ok);
}
