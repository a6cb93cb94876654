use std::path::Path;

use stereoloc::fixtures::{load_fixture_dir, run_fixture, FixtureError, GoldenFixture, Provenance};

fn shipped() -> Vec<GoldenFixture> {
    load_fixture_dir(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")).unwrap()
}

#[test]
fn every_shipped_fixture_passes() {
    let all = shipped();
    assert!(all.len() >= 4);
    for f in &all {
        let report = run_fixture(f).unwrap();
        let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).collect();
        assert!(failed.is_empty(), "{}: {failed:?}", f.name);
    }
}

#[test]
fn shipped_set_covers_each_provenance() {
    let all = shipped();
    for p in [Provenance::Published, Provenance::Trivial, Provenance::Derived] {
        assert!(all.iter().any(|f| f.provenance == p), "{p:?}");
    }
}

#[test]
fn published_depth_rows() {
    let f = shipped()
        .into_iter()
        .find(|f| f.name == "published_depth_table")
        .unwrap();
    let report = run_fixture(&f).unwrap();
    assert_eq!(report.checks.len(), 8);
    let last = &report.checks[7];
    assert!((last.actual - 9.42).abs() < 0.01);
}

#[test]
fn malformed_file_is_rejected() {
    let text = r#"{"name": "x", "operation": "triangulate_depth", "inputs": {"depth_constant": 1.0},
                   "expected": {"depths_m": [1.0]}, "tolerance": 0.1, "provenance": "trivial"}"#;
    let f: GoldenFixture = serde_json::from_str(text).unwrap();
    assert!(matches!(run_fixture(&f), Err(FixtureError::FixtureMalformed { .. })));

    let no_provenance = r#"{"name": "x", "operation": "triangulate_depth", "inputs": {},
                            "expected": {}, "tolerance": 0.1}"#;
    assert!(serde_json::from_str::<GoldenFixture>(no_provenance).is_err());
}
