use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stereoloc"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_writes_labels_and_truth() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("ds");
    let o = run(&[
        "simulate",
        "--config",
        s(&config("simulate_band.json")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let labels = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "txt"))
        .count();
    assert_eq!(labels, 100);
    let truth = fs::read_to_string(out.join("ground_truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), 51);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("frames=50") && stdout.contains("seed=7"), "{stdout}");
}

#[test]
fn simulate_seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let cfg = config("simulate_band.json");
    run(&["simulate", "--config", s(&cfg), "--out", s(&a)]);
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&b), "--seed", "99"]);
    assert!(String::from_utf8(o.stdout).unwrap().contains("seed=99"));
    assert_ne!(
        fs::read(a.join("ground_truth.csv")).unwrap(),
        fs::read(b.join("ground_truth.csv")).unwrap()
    );
}

#[test]
fn simulate_without_section_is_config_error() {
    let tmp = TempDir::new().unwrap();
    let o = run(&[
        "simulate",
        "--config",
        s(&config("published_rig.json")),
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("simulation"), "{}", stderr(&o));
}

#[test]
fn simulate_into_unwritable_dir_is_io_error() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = run(&[
        "simulate",
        "--config",
        s(&config("simulate_band.json")),
        "--out",
        s(&blocker.join("ds")),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn invalid_config_names_field() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(config("published_rig.json")).unwrap();
    let cfg = write_config(tmp.path(), &text.replace("\"baseline_m\": 1.2", "\"baseline_m\": -1.2"));
    let o = run(&["validate", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rig.baseline_m"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), &text.replace("9070.86", "-1"));
    let o = run(&["validate", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rig.depth_constant"), "{}", stderr(&o));

    let o = run(&["validate", "--config", s(&tmp.path().join("missing.json"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn localize_empty_dir_is_empty_input() {
    let tmp = TempDir::new().unwrap();
    let o = run(&[
        "localize",
        "--config",
        s(&config("published_rig.json")),
        "--in",
        s(tmp.path()),
        "--out",
        s(&tmp.path().join("e.csv")),
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn localize_published_disparity() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("labels");
    fs::create_dir(&dir).unwrap();
    // centroids 1100 px and 137 px apart by 963 px in a 1280 px image
    fs::write(
        dir.join("frame_000000_left.txt"),
        format!("0 {} 0.5 0.05 0.05\n", 1100.0 / 1280.0),
    )
    .unwrap();
    fs::write(
        dir.join("frame_000000_right.txt"),
        format!("0 {} 0.5 0.05 0.05\n", 137.0 / 1280.0),
    )
    .unwrap();
    // unpaired frame is skipped with a warning
    fs::write(dir.join("frame_000001_left.txt"), "0 0.5 0.5 0.05 0.05\n").unwrap();
    let out = tmp.path().join("est.csv");
    let o = run(&[
        "localize",
        "--config",
        s(&config("published_rig.json")),
        "--in",
        s(&dir),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("frame 1"), "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().contains("skipped=1"));

    let csv = fs::read_to_string(&out).unwrap();
    let rows: Vec<_> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    let fields: Vec<f64> = rows[0].split(',').map(|f| f.parse().unwrap()).collect();
    assert!((fields[2] - 963.0).abs() < 1e-9);
    assert!((fields[3] - 9.42).abs() < 0.01, "{}", fields[3]);
}

#[test]
fn evaluate_identical_estimates_have_zero_error() {
    let tmp = TempDir::new().unwrap();
    let est = tmp.path().join("est.csv");
    let truth = tmp.path().join("truth.csv");
    fs::write(
        &est,
        "frame_id,target_ordinal,disparity_px,depth_m,x_m,y_m,z_m,confidence\n0,0,100,10,1,0,10,1\n1,0,50,20,-1,0,20,1\n",
    )
    .unwrap();
    fs::write(
        &truth,
        "frame_id,target_id,x_m,y_m,z_m,depth_m,visible\n0,0,1,0,10,10,true\n1,0,-1,0,20,20,true\n",
    )
    .unwrap();
    let out = tmp.path().join("eval");
    let o = run(&["evaluate", "--in", s(&est), "--truth", s(&truth), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["mean_error_pct"], 0.0);
    assert_eq!(summary["n_samples"], 2);
    let table = fs::read_to_string(out.join("error_table.csv")).unwrap();
    assert!(table.starts_with("sample_no,disparity_px,z_depth_m,ground_truth_m,error_pct"));
}

#[test]
fn evaluate_missing_column_is_schema_error() {
    let tmp = TempDir::new().unwrap();
    let est = tmp.path().join("est.csv");
    let truth = tmp.path().join("truth.csv");
    fs::write(
        &est,
        "frame_id,target_ordinal,disparity_px,depth_m,x_m,y_m,z_m,confidence\n0,0,100,10,1,0,10,1\n",
    )
    .unwrap();
    fs::write(&truth, "frame_id,target_id,x_m,y_m,z_m,visible\n0,0,1,0,10,true\n").unwrap();
    let o = run(&[
        "evaluate",
        "--in",
        s(&est),
        "--truth",
        s(&truth),
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("depth_m"), "{}", stderr(&o));
}

#[test]
fn noiseless_loop_is_exact_and_idempotent() {
    let tmp = TempDir::new().unwrap();
    let cfg = config("noiseless_multi.json");
    let mut snapshots = Vec::new();
    for round in 0..2 {
        let root = tmp.path().join(format!("r{round}"));
        let ds = root.join("ds");
        let est = ds.join("estimates.csv");
        let eval = root.join("eval");
        for args in [
            vec!["simulate", "--config", s(&cfg), "--out", s(&ds), "--threads", "3"],
            vec![
                "localize",
                "--config",
                s(&cfg),
                "--in",
                s(&ds),
                "--out",
                s(&est),
                "--threads",
                "2",
            ],
            vec!["evaluate", "--in", s(&est), "--out", s(&eval)],
        ] {
            let o = run(&args);
            assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
        }
        let summary: serde_json::Value = serde_json::from_slice(&fs::read(eval.join("summary.json")).unwrap()).unwrap();
        assert!(summary["mean_error_pct"].as_f64().unwrap() < 1e-4, "{summary}");
        assert_eq!(summary["missed"], 0);
        assert_eq!(summary["spurious"], 0);
        snapshots.push((read_dir_sorted(&ds), read_dir_sorted(&eval)));
    }
    assert_eq!(snapshots[0], snapshots[1]);
}

#[test]
fn bench_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = config("simulate_band.json");
    let mut reports = Vec::new();
    for (drones, name) in [(1, "a.json"), (10, "b.json"), (10, "c.json")] {
        let out = tmp.path().join(name);
        let d = drones.to_string();
        let o = run(&[
            "bench",
            "--config",
            s(&cfg),
            "--drones",
            &d,
            "--frames",
            "300",
            "--out",
            s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let v: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
        assert!(v["single_thread"]["fps"].as_f64().unwrap() > 0.0);
        reports.push(v);
    }
    assert_eq!(reports[1]["workload_hash"], reports[2]["workload_hash"]);
    assert_ne!(reports[0]["workload_hash"], reports[1]["workload_hash"]);
    let p50 = |v: &serde_json::Value| v["single_thread"]["p50_us"].as_f64().unwrap();
    assert!(p50(&reports[0]) <= p50(&reports[1]));

    let o = run(&[
        "bench",
        "--config",
        s(&cfg),
        "--drones",
        "0",
        "--out",
        s(&tmp.path().join("z.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_fixtures_pass() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let o = run(&["fixtures", "--dir", s(&dir)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}
