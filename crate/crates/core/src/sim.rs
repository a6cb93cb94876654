//! Analytic stereo scene generator with exact ground truth.
//!
//! Each frame places target drones (axis-aligned boxes of fixed extent) in
//! front of the rig, projects them into both cameras and turns each
//! projection into a normalized detection. The rig pose for each frame is
//! drawn from a ring of viewpoints around the targets.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RigSpec;
use crate::detection::{fmt_decimal, label_file_name, write_label_file, BoundingBox, StereoFrame};
use crate::geometry::{project_rig_frame, ImagePoint, RigPose, Side, StereoRig, WorldPoint};
use crate::pipeline::{poses_csv, FramePoses, POSES_FILE};

pub const LABEL_PREFIX: &str = "frame";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const GROUND_TRUTH_HEADER: &str = "frame_id,target_id,x_m,y_m,z_m,depth_m,visible";
pub const SCENE_FILE: &str = "scene.json";

/// Boxes narrower or shorter than this, in pixels, are not detectable.
pub const MIN_BOX_PX: f64 = 2.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("infeasible scene config: {0}")]
    InfeasibleConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Gaussian sigma in pixels applied to each box center, per camera.
    pub pixel_sigma: f64,
    /// Round centers to whole pixels.
    pub quantize: bool,
    /// Chance that a visible drone goes undetected in one image.
    pub miss_rate: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            pixel_sigma: 0.0,
            quantize: false,
            miss_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Viewpoints {
    /// `count` rigs evenly spaced in yaw on a circle around the targets;
    /// each frame uses one at random. Radius defaults to the middle of the
    /// depth range.
    Ring {
        count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius_m: Option<f64>,
    },
    /// Every frame uses the rig's configured pose.
    Fixed,
}

impl Default for Viewpoints {
    fn default() -> Self {
        Viewpoints::Ring {
            count: 4,
            radius_m: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub num_targets: usize,
    /// Rig-frame Z range for target placement.
    pub depth_range_m: [f64; 2],
    /// Rig-frame X range.
    pub lateral_range_m: [f64; 2],
    /// Rig-frame Y range; falls back to `lateral_range_m`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertical_range_m: Option<[f64; 2]>,
    /// Physical size along world (x, y, z); y is vertical.
    pub drone_extent_m: [f64; 3],
    pub num_frames: usize,
    pub rng_seed: u64,
    pub noise: NoiseModel,
    pub viewpoints: Viewpoints,
    /// Explicit rig-frame positions, used for every frame instead of sampling.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_targets: Option<Vec<[f64; 3]>>,
    pub class_id: u32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            num_targets: 1,
            depth_range_m: [5.0, 8.0],
            lateral_range_m: [-1.0, 1.0],
            vertical_range_m: None,
            drone_extent_m: [0.5, 0.2, 0.5],
            num_frames: 50,
            rng_seed: 0,
            noise: NoiseModel::default(),
            viewpoints: Viewpoints::default(),
            fixed_targets: None,
            class_id: 0,
        }
    }
}

impl SceneConfig {
    pub fn vertical_range(&self) -> [f64; 2] {
        self.vertical_range_m.unwrap_or(self.lateral_range_m)
    }

    pub fn target_count(&self) -> usize {
        self.fixed_targets.as_ref().map_or(self.num_targets, Vec::len)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        let range_ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if self.target_count() == 0 {
            return bad("num_targets must be >= 1");
        }
        let [zmin, zmax] = self.depth_range_m;
        if !(range_ok(self.depth_range_m) && zmin > 0.0 && zmin < zmax) {
            return bad("depth_range_m must satisfy 0 < min < max");
        }
        if !range_ok(self.lateral_range_m) || !range_ok(self.vertical_range()) {
            return bad("lateral/vertical ranges must be finite with min <= max");
        }
        if self.drone_extent_m.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return bad("drone_extent_m must be positive");
        }
        if self.num_frames == 0 {
            return bad("num_frames must be >= 1");
        }
        let n = self.noise;
        if !(n.pixel_sigma.is_finite() && n.pixel_sigma >= 0.0) {
            return bad("noise.pixel_sigma must be >= 0");
        }
        if !(0.0..=1.0).contains(&n.miss_rate) {
            return bad("noise.miss_rate must be in [0, 1]");
        }
        if let Viewpoints::Ring { count, radius_m } = self.viewpoints {
            if count == 0 {
                return bad("viewpoints.count must be >= 1");
            }
            if radius_m.is_some_and(|r| !(r.is_finite() && r >= 0.0)) {
                return bad("viewpoints.radius_m must be >= 0");
            }
        }
        if let Some(targets) = &self.fixed_targets {
            if targets.iter().flatten().any(|x| !x.is_finite()) || targets.iter().any(|t| t[2] <= 0.0) {
                return bad("fixed_targets must be finite with positive depth");
            }
        }
        Ok(())
    }

    /// Rejects placement boxes where no target center could land inside
    /// both images. The visible X and Y windows widen with depth, so the far
    /// end of the depth range is the most permissive.
    fn check_feasible(&self, rig: &StereoRig) -> Result<(), SimError> {
        if self.fixed_targets.is_some() {
            return Ok(());
        }
        let intr = rig.intrinsics();
        let f = intr.focal_length_px();
        let (cx, cy) = intr.principal_point();
        let (w, h) = (intr.width() as f64, intr.height() as f64);
        let z = self.depth_range_m[1];
        let x_window = [rig.baseline_m() - cx * z / f, (w - cx) * z / f];
        let y_window = [-cy * z / f, (h - cy) * z / f];
        let overlaps = |a: [f64; 2], b: [f64; 2]| a[0].max(b[0]) <= a[1].min(b[1]);
        if !overlaps(x_window, self.lateral_range_m) {
            return Err(SimError::InfeasibleConfig(format!(
                "no lateral position in {:?} is visible to both cameras (visible x at {z} m: {:?})",
                self.lateral_range_m, x_window
            )));
        }
        if !overlaps(y_window, self.vertical_range()) {
            return Err(SimError::InfeasibleConfig(format!(
                "no vertical position in {:?} is inside the image (visible y at {z} m: {:?})",
                self.vertical_range(),
                y_window
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub frame_id: u64,
    pub target_id: usize,
    pub world: WorldPoint,
    /// Rig-frame Z.
    pub depth_m: f64,
    /// Resolvable in both images, independent of detector misses.
    pub visible: bool,
}

/// Target id behind each emitted box, in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameCorrespondence {
    pub left_targets: Vec<usize>,
    pub right_targets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedScene {
    pub frames: Vec<StereoFrame>,
    pub truth: Vec<GroundTruthRecord>,
    pub correspondences: Vec<FrameCorrespondence>,
    pub poses: Vec<RigPose>,
}

impl SimulatedScene {
    pub fn truth_for(&self, frame_id: u64) -> impl Iterator<Item = &GroundTruthRecord> {
        self.truth.iter().filter(move |t| t.frame_id == frame_id)
    }
}

/// Image footprint of one drone in one camera.
#[derive(Debug, Clone, Copy)]
struct Footprint {
    center: ImagePoint,
    width_px: f64,
    height_px: f64,
}

fn footprint(
    center_rig: Vector3<f64>,
    corners_rig: &[Vector3<f64>; 8],
    rig: &StereoRig,
    side: Side,
) -> Option<Footprint> {
    let intr = rig.intrinsics();
    let (w, h) = (intr.width() as f64, intr.height() as f64);
    let center = project_rig_frame(center_rig, rig, side).ok()?;
    if !intr.contains(center) {
        return None;
    }
    let (mut u0, mut v0, mut u1, mut v1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in corners_rig {
        let p = project_rig_frame(*c, rig, side).ok()?;
        u0 = u0.min(p.u);
        v0 = v0.min(p.v);
        u1 = u1.max(p.u);
        v1 = v1.max(p.v);
    }
    let width_px = u1.min(w) - u0.max(0.0);
    let height_px = v1.min(h) - v0.max(0.0);
    if width_px < MIN_BOX_PX || height_px < MIN_BOX_PX {
        return None;
    }
    Some(Footprint {
        center,
        width_px,
        height_px,
    })
}

fn ring_pose(index: usize, count: usize, radius: f64) -> RigPose {
    let yaw = TAU * index as f64 / count as f64;
    let forward = Vector3::new(yaw.sin(), 0.0, yaw.cos());
    RigPose::from_yaw(yaw, -radius * forward)
}

fn sample(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

/// Deterministic in `(cfg, rig)`.
pub fn generate_scene(cfg: &SceneConfig, rig: &StereoRig) -> Result<SimulatedScene, SimError> {
    cfg.validate()?;
    cfg.check_feasible(rig)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let noise = Normal::new(0.0, cfg.noise.pixel_sigma.max(f64::MIN_POSITIVE)).expect("sigma is finite");
    let intr = *rig.intrinsics();
    let (w, h) = (intr.width() as f64, intr.height() as f64);
    let half = Vector3::from(cfg.drone_extent_m) / 2.0;

    let mut scene = SimulatedScene {
        frames: Vec::with_capacity(cfg.num_frames),
        truth: Vec::new(),
        correspondences: Vec::with_capacity(cfg.num_frames),
        poses: Vec::with_capacity(cfg.num_frames),
    };

    for frame_idx in 0..cfg.num_frames {
        let frame_id = frame_idx as u64;
        let pose = match cfg.viewpoints {
            Viewpoints::Fixed => *rig.pose(),
            Viewpoints::Ring { count, radius_m } => {
                let radius = radius_m.unwrap_or(0.5 * (cfg.depth_range_m[0] + cfg.depth_range_m[1]));
                ring_pose(rng.random_range(0..count), count, radius)
            }
        };

        let positions: Vec<Vector3<f64>> = match &cfg.fixed_targets {
            Some(fixed) => fixed.iter().map(|p| Vector3::from(*p)).collect(),
            None => (0..cfg.num_targets)
                .map(|_| {
                    let x = sample(&mut rng, cfg.lateral_range_m);
                    let y = sample(&mut rng, cfg.vertical_range());
                    let z = sample(&mut rng, cfg.depth_range_m);
                    Vector3::new(x, y, z)
                })
                .collect(),
        };

        let mut left = Vec::new();
        let mut right = Vec::new();
        let mut corr = FrameCorrespondence::default();
        for (target_id, rig_pos) in positions.iter().enumerate() {
            let world = pose.rig_to_world(*rig_pos);
            // world-aligned box corners, expressed in the rig frame
            let corners: [Vector3<f64>; 8] = std::array::from_fn(|k| {
                let sign = |bit: usize| if k & bit == 0 { -1.0 } else { 1.0 };
                let offset = Vector3::new(sign(1) * half.x, sign(2) * half.y, sign(4) * half.z);
                pose.world_to_rig(world + offset)
            });
            let feet = [Side::Left, Side::Right].map(|side| footprint(*rig_pos, &corners, rig, side));
            let visible = feet.iter().all(Option::is_some);
            scene.truth.push(GroundTruthRecord {
                frame_id,
                target_id,
                world: WorldPoint::from_vector(world),
                depth_m: rig_pos.z,
                visible,
            });
            if !visible {
                continue;
            }
            for (fp, (boxes, ids)) in feet.into_iter().flatten().zip([
                (&mut left, &mut corr.left_targets),
                (&mut right, &mut corr.right_targets),
            ]) {
                if cfg.noise.miss_rate > 0.0 && rng.random_bool(cfg.noise.miss_rate) {
                    continue;
                }
                let mut c = fp.center;
                if cfg.noise.pixel_sigma > 0.0 {
                    c.u += noise.sample(&mut rng);
                    c.v += noise.sample(&mut rng);
                }
                if cfg.noise.quantize {
                    c.u = c.u.round();
                    c.v = c.v.round();
                }
                c.u = c.u.clamp(0.0, w);
                c.v = c.v.clamp(0.0, h);
                boxes.push(BoundingBox::new(
                    cfg.class_id,
                    c.u / w,
                    c.v / h,
                    (fp.width_px / w).min(1.0),
                    (fp.height_px / h).min(1.0),
                ));
                ids.push(target_id);
            }
        }

        // right-image order is independent of target order
        let mut order: Vec<usize> = (0..right.len()).collect();
        order.shuffle(&mut rng);
        let right: Vec<BoundingBox> = order.iter().map(|&i| right[i]).collect();
        corr.right_targets = order.iter().map(|&i| corr.right_targets[i]).collect();

        scene.frames.push(StereoFrame::new(frame_id, left, right));
        scene.correspondences.push(corr);
        scene.poses.push(pose);
    }
    Ok(scene)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmitSummary {
    pub label_files: usize,
    pub truth_rows: usize,
}

#[derive(Serialize)]
struct SceneEcho<'a> {
    scene: &'a SceneConfig,
    rig: RigSpec,
}

pub fn ground_truth_csv(truth: &[GroundTruthRecord]) -> String {
    let mut out = String::from(GROUND_TRUTH_HEADER);
    out.push('\n');
    for t in truth {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t.frame_id,
            t.target_id,
            fmt_decimal(t.world.x),
            fmt_decimal(t.world.y),
            fmt_decimal(t.world.z),
            fmt_decimal(t.depth_m),
            t.visible
        );
    }
    out
}

fn write_file(path: PathBuf, bytes: &[u8]) -> Result<(), SimError> {
    fs::write(&path, bytes).map_err(|source| SimError::Io { path, source })
}

/// Writes label files, `ground_truth.csv`, `poses.csv` and `scene.json` into `dir`.
pub fn emit_dataset(
    scene: &SimulatedScene,
    cfg: &SceneConfig,
    rig: &StereoRig,
    dir: &Path,
    threads: usize,
) -> Result<EmitSummary, SimError> {
    fs::create_dir_all(dir).map_err(|source| SimError::Io {
        path: dir.to_path_buf(),
        source,
    })?;

    let write_frame = |frame: &StereoFrame| -> Result<(), SimError> {
        for set in [&frame.left, &frame.right] {
            write_file(
                dir.join(label_file_name(LABEL_PREFIX, set.frame_id, set.side)),
                &write_label_file(set),
            )?;
        }
        Ok(())
    };
    if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| SimError::ThreadPool(e.to_string()))?;
        pool.install(|| scene.frames.par_iter().try_for_each(write_frame))?;
    } else {
        scene.frames.iter().try_for_each(write_frame)?;
    }

    write_file(dir.join(GROUND_TRUTH_FILE), ground_truth_csv(&scene.truth).as_bytes())?;
    let poses: FramePoses = scene
        .frames
        .iter()
        .map(|f| f.frame_id)
        .zip(scene.poses.iter().copied())
        .collect();
    write_file(dir.join(POSES_FILE), poses_csv(&poses).as_bytes())?;
    let echo = SceneEcho {
        scene: cfg,
        rig: RigSpec::from_rig(rig),
    };
    let json = serde_json::to_string_pretty(&echo).expect("scene config serializes");
    write_file(dir.join(SCENE_FILE), json.as_bytes())?;

    Ok(EmitSummary {
        label_files: scene.frames.len() * 2,
        truth_rows: scene.truth.len(),
    })
}
