//! Golden-data fixtures: JSON files naming an operation, its inputs, the
//! expected outputs and their tolerances. The same files back the docs and
//! the test suite.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::evaluation::{summarize, ErrorRow};
use crate::geometry::{
    depth_constant, disparity, project, triangulate_depth, CameraIntrinsics, RigPose, Side, StereoRig, WorldPoint,
};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("fixture `{name}` is malformed: {reason}")]
    FixtureMalformed { name: String, reason: String },
    #[error("{path}: {message}")]
    Load { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Reported in the published results.
    Published,
    Trivial,
    /// Computed independently by hand or by an oracle.
    Derived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tolerance {
    Uniform(f64),
    PerField(BTreeMap<String, f64>),
}

impl Tolerance {
    fn for_field(&self, field: &str) -> Option<f64> {
        match self {
            Tolerance::Uniform(t) => Some(*t),
            Tolerance::PerField(m) => m.get(field).copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldenFixture {
    pub name: String,
    pub operation: String,
    pub inputs: Value,
    pub expected: BTreeMap<String, Value>,
    pub tolerance: Tolerance,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub field: String,
    pub expected: f64,
    pub actual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureReport {
    pub name: String,
    pub provenance: Provenance,
    pub checks: Vec<Check>,
}

impl FixtureReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DepthInputs {
    depth_constant: f64,
    disparities: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ErrorTableInputs {
    depth_constant: f64,
    disparities: Vec<f64>,
    ground_truths: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PinholeInputs {
    focal_length_px: f64,
    baseline_m: f64,
    resolution: [u32; 2],
    point: [f64; 3],
}

// the intrinsics are irrelevant once K is fixed
fn rig_with_constant(k: f64) -> Result<StereoRig, String> {
    let intr = CameraIntrinsics::from_focal_px(1.0, 1, 1).map_err(|e| e.to_string())?;
    StereoRig::new(intr, 1.0, RigPose::identity())
        .and_then(|r| r.with_depth_constant(k))
        .map_err(|e| e.to_string())
}

/// Executes the fixture's operation and compares every expected field.
pub fn run_fixture(fixture: &GoldenFixture) -> Result<FixtureReport, FixtureError> {
    let malformed = |reason: String| FixtureError::FixtureMalformed {
        name: fixture.name.clone(),
        reason,
    };
    let inputs = fixture.inputs.clone();

    let actual: BTreeMap<String, Vec<f64>> = match fixture.operation.as_str() {
        "triangulate_depth" => {
            let i: DepthInputs = serde_json::from_value(inputs).map_err(|e| malformed(e.to_string()))?;
            let rig = rig_with_constant(i.depth_constant).map_err(malformed)?;
            let depths = i
                .disparities
                .iter()
                .map(|&d| triangulate_depth(d, &rig))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| malformed(e.to_string()))?;
            BTreeMap::from([("depths_m".to_string(), depths)])
        }
        "depth_error_table" => {
            let i: ErrorTableInputs = serde_json::from_value(inputs).map_err(|e| malformed(e.to_string()))?;
            if i.disparities.len() != i.ground_truths.len() {
                return Err(malformed("disparities and ground_truths differ in length".into()));
            }
            let rig = rig_with_constant(i.depth_constant).map_err(malformed)?;
            let rows = i
                .disparities
                .iter()
                .zip(&i.ground_truths)
                .enumerate()
                .map(|(n, (&d, &gt))| Ok(ErrorRow::new(n + 1, d, triangulate_depth(d, &rig)?, gt)))
                .collect::<Result<Vec<_>, crate::geometry::GeometryError>>()
                .map_err(|e| malformed(e.to_string()))?;
            let summary = summarize(&rows, 0, 0).map_err(|e| malformed(e.to_string()))?;
            BTreeMap::from([
                ("depths_m".to_string(), rows.iter().map(|r| r.z_depth_m).collect()),
                ("error_pct".to_string(), rows.iter().map(|r| r.error_pct).collect()),
                ("mean_error_pct".to_string(), vec![summary.mean_error_pct]),
            ])
        }
        "pinhole_stereo" => {
            let i: PinholeInputs = serde_json::from_value(inputs).map_err(|e| malformed(e.to_string()))?;
            let intr = CameraIntrinsics::from_focal_px(i.focal_length_px, i.resolution[0], i.resolution[1])
                .map_err(|e| malformed(e.to_string()))?;
            let rig = StereoRig::new(intr, i.baseline_m, RigPose::identity()).map_err(|e| malformed(e.to_string()))?;
            let p = WorldPoint::new(i.point[0], i.point[1], i.point[2]);
            let l = project(p, &rig, Side::Left).map_err(|e| malformed(e.to_string()))?;
            let r = project(p, &rig, Side::Right).map_err(|e| malformed(e.to_string()))?;
            let d = disparity(l.u, r.u);
            let z = triangulate_depth(d, &rig).map_err(|e| malformed(e.to_string()))?;
            BTreeMap::from([
                ("left_u".to_string(), vec![l.u]),
                ("left_v".to_string(), vec![l.v]),
                ("right_u".to_string(), vec![r.u]),
                ("disparity_px".to_string(), vec![d]),
                ("depth_m".to_string(), vec![z]),
                ("depth_constant".to_string(), vec![depth_constant(&rig)]),
            ])
        }
        other => return Err(malformed(format!("unknown operation `{other}`"))),
    };

    let mut checks = Vec::new();
    for (field, value) in &fixture.expected {
        let expected: Vec<f64> = match value {
            Value::Array(_) => serde_json::from_value(value.clone()).map_err(|e| malformed(format!("{field}: {e}")))?,
            _ => vec![value
                .as_f64()
                .ok_or_else(|| malformed(format!("{field}: not a number")))?],
        };
        let got = actual
            .get(field)
            .ok_or_else(|| malformed(format!("operation produces no field `{field}`")))?;
        if got.len() != expected.len() {
            return Err(malformed(format!(
                "{field}: expected {} values, produced {}",
                expected.len(),
                got.len()
            )));
        }
        let tolerance = fixture
            .tolerance
            .for_field(field)
            .ok_or_else(|| malformed(format!("no tolerance for `{field}`")))?;
        for (k, (&e, &a)) in expected.iter().zip(got).enumerate() {
            let name = if expected.len() == 1 {
                field.clone()
            } else {
                format!("{field}[{k}]")
            };
            checks.push(Check {
                field: name,
                expected: e,
                actual: a,
                tolerance,
                passed: (a - e).abs() <= tolerance,
            });
        }
    }
    if checks.is_empty() {
        return Err(malformed("no expected values".into()));
    }
    Ok(FixtureReport {
        name: fixture.name.clone(),
        provenance: fixture.provenance,
        checks,
    })
}

pub fn load_fixture(path: &Path) -> Result<GoldenFixture, FixtureError> {
    let load = |message: String| FixtureError::Load {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| load(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| load(e.to_string()))
}

/// Every `*.json` fixture in `dir`, sorted by file name.
pub fn load_fixture_dir(dir: &Path) -> Result<Vec<GoldenFixture>, FixtureError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| FixtureError::Load {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_fixture(p)).collect()
}
