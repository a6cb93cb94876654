//! Per-frame localization: filter detections, associate left/right boxes,
//! difference the centroid columns, triangulate depth, and back-project the
//! left centroid into the world frame.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::{associate_boxes, AssociationConfig};
use crate::detection::{centroid, fmt_decimal, BoundingBox, StereoFrame};
use crate::geometry::{back_project, depth_constant, disparity, triangulate_depth, RigPose, StereoRig, WorldPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizeConfig {
    pub association: AssociationConfig,
    /// Classes kept for localization; empty keeps everything.
    pub class_filter: Vec<u32>,
    pub confidence_threshold: f64,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self {
            association: AssociationConfig::default(),
            class_filter: vec![0],
            confidence_threshold: 0.0,
        }
    }
}

impl LocalizeConfig {
    pub fn accepts(&self, b: &BoundingBox) -> bool {
        (self.class_filter.is_empty() || self.class_filter.contains(&b.class_id))
            && b.confidence >= self.confidence_threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroneEstimate {
    pub frame_id: u64,
    pub target_ordinal: usize,
    /// Index into the frame's left/right detection lists, before filtering.
    pub left_index: usize,
    pub right_index: usize,
    pub disparity_px: f64,
    /// Rig-frame Z.
    pub depth_m: f64,
    pub world: WorldPoint,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame_id: u64,
    pub estimates: Vec<DroneEstimate>,
    pub dropped_left: usize,
    pub dropped_right: usize,
}

pub fn localize_frame(frame: &StereoFrame, rig: &StereoRig, cfg: &LocalizeConfig) -> FrameResult {
    let intr = rig.intrinsics();
    let (left_idx, left): (Vec<usize>, Vec<BoundingBox>) = filtered(&frame.left.boxes, cfg);
    let (right_idx, right): (Vec<usize>, Vec<BoundingBox>) = filtered(&frame.right.boxes, cfg);

    let pairs = associate_boxes(&left, &right, intr, &cfg.association);

    let estimates: Vec<DroneEstimate> = pairs
        .iter()
        .enumerate()
        .map(|(ordinal, pair)| {
            let lb = &left[pair.left_index];
            let rb = &right[pair.right_index];
            let cl = centroid(lb, intr);
            let cr = centroid(rb, intr);
            let disparity_px = disparity(cl.u, cr.u);
            // the association gate keeps disparity >= min_disparity_px > 0
            let depth_m = triangulate_depth(disparity_px, rig).expect("gated disparity is positive");
            let world = back_project(cl, depth_m, rig).expect("triangulated depth is positive");
            DroneEstimate {
                frame_id: frame.frame_id,
                target_ordinal: ordinal,
                left_index: left_idx[pair.left_index],
                right_index: right_idx[pair.right_index],
                disparity_px,
                depth_m,
                world,
                confidence: lb.confidence.min(rb.confidence),
            }
        })
        .collect();

    FrameResult {
        frame_id: frame.frame_id,
        dropped_left: left.len() - estimates.len(),
        dropped_right: right.len() - estimates.len(),
        estimates,
    }
}

fn filtered(boxes: &[BoundingBox], cfg: &LocalizeConfig) -> (Vec<usize>, Vec<BoundingBox>) {
    boxes
        .iter()
        .enumerate()
        .filter(|(_, b)| cfg.accepts(b))
        .map(|(i, b)| (i, *b))
        .unzip()
}

/// Frames are independent, so this equals mapping [`localize_frame`].
pub fn localize_stream(frames: &[StereoFrame], rig: &StereoRig, cfg: &LocalizeConfig) -> Vec<FrameResult> {
    frames.iter().map(|f| localize_frame(f, rig, cfg)).collect()
}

/// Parallel variant of [`localize_stream`]; output order matches input order.
pub fn localize_stream_parallel(
    frames: &[StereoFrame],
    rig: &StereoRig,
    cfg: &LocalizeConfig,
    threads: usize,
) -> Result<Vec<FrameResult>, rayon::ThreadPoolBuildError> {
    if threads <= 1 {
        return Ok(localize_stream(frames, rig, cfg));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(|| frames.par_iter().map(|f| localize_frame(f, rig, cfg)).collect()))
}

/// Per-frame rig poses, for datasets captured from moving viewpoints.
pub type FramePoses = BTreeMap<u64, RigPose>;

pub const POSES_FILE: &str = "poses.csv";
pub const POSES_HEADER: &str = "frame_id,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz";

#[derive(Debug, Error)]
pub enum PoseFileError {
    #[error("poses: {0}")]
    Csv(#[from] csv::Error),
    #[error("poses: header must be `{POSES_HEADER}`")]
    Header,
    #[error("poses: frame {frame_id}: {source}")]
    Pose {
        frame_id: u64,
        #[source]
        source: crate::geometry::GeometryError,
    },
    #[error("poses: frame {0} listed twice")]
    Duplicate(u64),
}

pub fn poses_csv(poses: &FramePoses) -> String {
    let mut out = String::from(POSES_HEADER);
    out.push('\n');
    for (id, pose) in poses {
        let r = pose.rotation();
        let t = pose.translation();
        let _ = write!(out, "{id}");
        for v in r.transpose().iter().chain(t.iter()) {
            let _ = write!(out, ",{}", fmt_decimal(*v));
        }
        out.push('\n');
    }
    out
}

pub fn parse_poses_csv(bytes: &[u8]) -> Result<FramePoses, PoseFileError> {
    let mut reader = csv::Reader::from_reader(bytes);
    if reader.headers()?.iter().map(str::trim).ne(POSES_HEADER.split(',')) {
        return Err(PoseFileError::Header);
    }
    let mut poses = FramePoses::new();
    for record in reader.deserialize() {
        let (frame_id, r, t): (u64, [f64; 9], [f64; 3]) = record?;
        let pose = RigPose::new(Matrix3::from_row_slice(&r), Vector3::from(t))
            .map_err(|source| PoseFileError::Pose { frame_id, source })?;
        if poses.insert(frame_id, pose).is_some() {
            return Err(PoseFileError::Duplicate(frame_id));
        }
    }
    Ok(poses)
}

/// Like [`localize_stream_parallel`], but frames listed in `poses` are
/// back-projected with their own rig pose. Unlisted frames use `rig`'s.
pub fn localize_stream_posed(
    frames: &[StereoFrame],
    rig: &StereoRig,
    cfg: &LocalizeConfig,
    poses: &FramePoses,
    threads: usize,
) -> Result<Vec<FrameResult>, rayon::ThreadPoolBuildError> {
    let one = |f: &StereoFrame| match poses.get(&f.frame_id) {
        Some(p) => localize_frame(f, &rig.with_pose(*p), cfg),
        None => localize_frame(f, rig, cfg),
    };
    if threads <= 1 {
        return Ok(frames.iter().map(one).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(|| frames.par_iter().map(one).collect()))
}

pub const ESTIMATES_HEADER: &str = "frame_id,target_ordinal,disparity_px,depth_m,x_m,y_m,z_m,confidence";

pub fn estimates_csv(results: &[FrameResult]) -> String {
    let mut out = String::from(ESTIMATES_HEADER);
    out.push('\n');
    for e in results.iter().flat_map(|r| &r.estimates) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            e.frame_id,
            e.target_ordinal,
            fmt_decimal(e.disparity_px),
            fmt_decimal(e.depth_m),
            fmt_decimal(e.world.x),
            fmt_decimal(e.world.y),
            fmt_decimal(e.world.z),
            fmt_decimal(e.confidence)
        );
    }
    out
}

/// Relative deviation of `depth * disparity` from the rig's depth constant.
pub fn depth_consistency(e: &DroneEstimate, rig: &StereoRig) -> f64 {
    let k = depth_constant(rig);
    (e.depth_m * e.disparity_px - k).abs() / k
}
