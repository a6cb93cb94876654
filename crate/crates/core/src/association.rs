//! Left/right correspondence for frames with several drones.
//!
//! Candidate pairs must pass an epipolar row gate and a disparity window.
//! Surviving pairs are scored by row residual plus a log box-area ratio, and
//! the optimal injective matching is taken.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{self, CostMatrix};
use crate::detection::{centroid, BoundingBox, StereoFrame};
use crate::geometry::CameraIntrinsics;

/// Enumeration limit for [`brute_force_associate`] on the smaller side.
pub const BRUTE_FORCE_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssociationError {
    #[error("brute-force association limited to {limit} boxes on the smaller side, got {got}")]
    TooLarge { limit: usize, got: usize },
    #[error("invalid association config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationConfig {
    /// Row gate as a fraction of image height.
    pub max_y_diff_frac: f64,
    /// Weight of the log area ratio term.
    pub size_weight: f64,
    pub min_disparity_px: f64,
    /// Defaults to the image width when unset.
    pub max_disparity_px: Option<f64>,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            max_y_diff_frac: 0.05,
            size_weight: 0.5,
            min_disparity_px: 1.0,
            max_disparity_px: None,
        }
    }
}

impl AssociationConfig {
    pub fn validate(&self) -> Result<(), AssociationError> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(self.max_y_diff_frac) || self.max_y_diff_frac > 1.0 {
            return Err(AssociationError::InvalidConfig("max_y_diff_frac must be in (0, 1]"));
        }
        if !pos(self.size_weight) {
            return Err(AssociationError::InvalidConfig("size_weight must be > 0"));
        }
        if !pos(self.min_disparity_px) {
            return Err(AssociationError::InvalidConfig("min_disparity_px must be > 0"));
        }
        if let Some(max) = self.max_disparity_px {
            if !pos(max) || max < self.min_disparity_px {
                return Err(AssociationError::InvalidConfig(
                    "max_disparity_px must be > 0 and >= min_disparity_px",
                ));
            }
        }
        Ok(())
    }

    pub fn max_disparity(&self, intrinsics: &CameraIntrinsics) -> f64 {
        self.max_disparity_px.unwrap_or(intrinsics.width() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub left_index: usize,
    pub right_index: usize,
    pub cost: f64,
}

/// Gate and score one candidate pair. `None` when a gate rejects it.
pub fn pair_cost(
    left: &BoundingBox,
    right: &BoundingBox,
    intrinsics: &CameraIntrinsics,
    cfg: &AssociationConfig,
) -> Option<f64> {
    let l = centroid(left, intrinsics);
    let r = centroid(right, intrinsics);
    let disparity = l.u - r.u;
    if disparity < cfg.min_disparity_px || disparity > cfg.max_disparity(intrinsics) {
        return None;
    }
    let height = intrinsics.height() as f64;
    let dy = (l.v - r.v).abs();
    if dy > cfg.max_y_diff_frac * height {
        return None;
    }
    let size_term = (left.area_norm() / right.area_norm()).ln().abs();
    Some(dy / height + cfg.size_weight * size_term)
}

fn cost_matrix(
    left: &[BoundingBox],
    right: &[BoundingBox],
    intrinsics: &CameraIntrinsics,
    cfg: &AssociationConfig,
) -> CostMatrix {
    CostMatrix::from_fn(left.len(), right.len(), |i, j| {
        pair_cost(&left[i], &right[j], intrinsics, cfg)
    })
}

fn to_pairs(m: &CostMatrix, a: assignment::Assignment) -> Vec<MatchedPair> {
    a.pairs
        .into_iter()
        .map(|(left_index, right_index)| MatchedPair {
            left_index,
            right_index,
            cost: m.get(left_index, right_index).unwrap_or(0.0),
        })
        .collect()
}

/// Optimal association over raw box lists. Pairs come back sorted by left index.
pub fn associate_boxes(
    left: &[BoundingBox],
    right: &[BoundingBox],
    intrinsics: &CameraIntrinsics,
    cfg: &AssociationConfig,
) -> Vec<MatchedPair> {
    let m = cost_matrix(left, right, intrinsics, cfg);
    let a = assignment::solve_lexicographic(&m);
    to_pairs(&m, a)
}

pub fn associate(frame: &StereoFrame, intrinsics: &CameraIntrinsics, cfg: &AssociationConfig) -> Vec<MatchedPair> {
    associate_boxes(&frame.left.boxes, &frame.right.boxes, intrinsics, cfg)
}

/// Exhaustive reference for [`associate`].
pub fn brute_force_associate(
    frame: &StereoFrame,
    intrinsics: &CameraIntrinsics,
    cfg: &AssociationConfig,
) -> Result<Vec<MatchedPair>, AssociationError> {
    let smaller = frame.left.boxes.len().min(frame.right.boxes.len());
    if smaller > BRUTE_FORCE_LIMIT {
        return Err(AssociationError::TooLarge {
            limit: BRUTE_FORCE_LIMIT,
            got: smaller,
        });
    }
    let m = cost_matrix(&frame.left.boxes, &frame.right.boxes, intrinsics, cfg);
    Ok(to_pairs(&m, assignment::brute_force(&m)))
}

pub fn total_cost(pairs: &[MatchedPair]) -> f64 {
    pairs.iter().map(|p| p.cost).sum()
}
