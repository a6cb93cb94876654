//! Multi-drone localization from a rectified stereo pair and per-image
//! bounding-box detections.
//!
//! The flow is: parse labels ([`detection`]), pair left and right boxes
//! ([`association`]), triangulate and back-project each pair ([`pipeline`],
//! [`geometry`]). [`sim`] produces synthetic datasets with ground truth and
//! [`evaluation`] scores estimates against it.

pub mod assignment;
pub mod association;
pub mod config;
pub mod detection;
pub mod evaluation;
pub mod fixtures;
pub mod geometry;
pub mod pipeline;
pub mod sim;

pub use association::{associate, associate_boxes, AssociationConfig, MatchedPair};
pub use config::{ConfigError, ResolvedConfig, RunConfig};
pub use detection::{BoundingBox, DetectionSet, StereoFrame};
pub use geometry::{
    back_project, depth_constant, disparity, project, triangulate_depth, CameraIntrinsics, GeometryError, ImagePoint,
    RigPose, Side, StereoRig, WorldPoint,
};
pub use pipeline::{localize_frame, localize_stream, DroneEstimate, FrameResult, LocalizeConfig};
