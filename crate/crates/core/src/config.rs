//! JSON run configuration shared by every CLI command.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::AssociationConfig;
use crate::geometry::{CameraIntrinsics, GeometryError, RigPose, StereoRig};
use crate::pipeline::LocalizeConfig;
use crate::sim::SceneConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub fn invalid(path: impl Into<String>, message: impl ToString) -> Self {
        Self::Invalid {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    /// Row-major rig-to-world rotation.
    pub rotation: [[f64; 3]; 3],
    /// World position of the left optical center.
    pub translation: [f64; 3],
}

impl Default for PoseSpec {
    fn default() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigSpec {
    pub focal_length_m: f64,
    pub pixel_pitch_m: f64,
    /// Defaults to the image center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principal_point: Option<[f64; 2]>,
    pub resolution: [u32; 2],
    pub baseline_m: f64,
    /// Overrides `focal_length_px * baseline_m` for triangulation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_constant: Option<f64>,
    #[serde(default)]
    pub pose: PoseSpec,
}

impl RigSpec {
    pub fn build(&self) -> Result<StereoRig, ConfigError> {
        let pp = self
            .principal_point
            .unwrap_or([self.resolution[0] as f64 / 2.0, self.resolution[1] as f64 / 2.0]);
        let intr = CameraIntrinsics::new(
            self.focal_length_m,
            self.pixel_pitch_m,
            (pp[0], pp[1]),
            (self.resolution[0], self.resolution[1]),
        )
        .map_err(|e| ConfigError::invalid("rig", e))?;
        let r = &self.pose.rotation;
        let rotation = Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        );
        let pose = RigPose::new(rotation, Vector3::from(self.pose.translation))
            .map_err(|e| ConfigError::invalid("rig.pose", e))?;
        let rig = StereoRig::new(intr, self.baseline_m, pose).map_err(|e| ConfigError::invalid("rig.baseline_m", e))?;
        match self.depth_constant {
            Some(k) => rig
                .with_depth_constant(k)
                .map_err(|e: GeometryError| ConfigError::invalid("rig.depth_constant", e)),
            None => Ok(rig),
        }
    }

    pub fn from_rig(rig: &StereoRig) -> Self {
        let intr = rig.intrinsics();
        let (cx, cy) = intr.principal_point();
        let rot = rig.pose().rotation();
        let t = rig.pose().translation();
        Self {
            focal_length_m: intr.focal_length_m(),
            pixel_pitch_m: intr.pixel_pitch_m(),
            principal_point: Some([cx, cy]),
            resolution: [intr.width(), intr.height()],
            baseline_m: rig.baseline_m(),
            depth_constant: rig.depth_constant_override(),
            pose: PoseSpec {
                rotation: [
                    [rot[(0, 0)], rot[(0, 1)], rot[(0, 2)]],
                    [rot[(1, 0)], rot[(1, 1)], rot[(1, 2)]],
                    [rot[(2, 0)], rot[(2, 1)], rot[(2, 2)]],
                ],
                translation: [t.x, t.y, t.z],
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_class_filter() -> Vec<u32> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub rig: RigSpec,
    #[serde(default)]
    pub association: AssociationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SceneConfig>,
    #[serde(default)]
    pub paths: PathsSpec,
    #[serde(default = "default_class_filter")]
    pub class_filter: Vec<u32>,
    #[serde(default)]
    pub confidence_threshold: f64,
}

/// Config plus the rig it describes, both checked.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub config: RunConfig,
    pub rig: StereoRig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        parse_config(de)
    }

    pub fn load(path: &Path) -> Result<ResolvedConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)?.resolve()
    }

    pub fn resolve(self) -> Result<ResolvedConfig, ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::invalid(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        let rig = self.rig.build()?;
        self.association
            .validate()
            .map_err(|e| ConfigError::invalid("association", e))?;
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(ConfigError::invalid("confidence_threshold", "must be in [0, 1]"));
        }
        if let Some(sim) = &self.simulation {
            sim.validate().map_err(|e| ConfigError::invalid("simulation", e))?;
        }
        Ok(ResolvedConfig { config: self, rig })
    }

    pub fn localize_config(&self) -> LocalizeConfig {
        LocalizeConfig {
            association: self.association,
            class_filter: self.class_filter.clone(),
            confidence_threshold: self.confidence_threshold,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn parse_config(de: &mut serde_json::Deserializer<serde_json::de::StrRead<'_>>) -> Result<RunConfig, ConfigError> {
    // serde_json reports line/column; pair it with the top-level key when we can
    RunConfig::deserialize(de).map_err(|e| {
        let msg = e.to_string();
        let path = [
            "rig",
            "association",
            "simulation",
            "paths",
            "class_filter",
            "confidence_threshold",
            "schema_version",
        ]
        .into_iter()
        .find(|k| msg.contains(&format!("`{k}`")))
        .unwrap_or("$");
        ConfigError::invalid(path, msg)
    })
}
