//! Pinhole camera and rectified parallel stereo-rig math.
//!
//! Rig frame: origin at the left optical center, +x toward the right camera,
//! +y down, +z forward along the optical axis. The right camera center sits
//! at `(baseline_m, 0, 0)`. The left camera is the localization reference.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("non-finite value in geometry input")]
    NonFinite,
    #[error("point is behind the camera (z_cam = {0})")]
    BehindCamera(f64),
    #[error("disparity must be positive, got {0} px")]
    NonPositiveDisparity(f64),
    #[error("depth must be positive, got {0} m")]
    NonPositiveDepth(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("baseline must be positive and finite, got {0} m")]
    InvalidBaseline(f64),
    #[error("depth constant must be positive and finite, got {0}")]
    InvalidDepthConstant(f64),
    #[error("rotation is not orthonormal with det +1")]
    InvalidRotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// Image coordinates in pixels; `u` rightward, `v` downward. Sub-pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
}

impl ImagePoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn distance(&self, other: &WorldPoint) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    focal_length_m: f64,
    pixel_pitch_m: f64,
    principal_point: (f64, f64),
    resolution: (u32, u32),
}

impl CameraIntrinsics {
    pub fn new(
        focal_length_m: f64,
        pixel_pitch_m: f64,
        principal_point: (f64, f64),
        resolution: (u32, u32),
    ) -> Result<Self, GeometryError> {
        if !(focal_length_m.is_finite() && focal_length_m > 0.0) {
            return Err(GeometryError::InvalidIntrinsics("focal_length_m must be > 0"));
        }
        if !(pixel_pitch_m.is_finite() && pixel_pitch_m > 0.0) {
            return Err(GeometryError::InvalidIntrinsics("pixel_pitch_m must be > 0"));
        }
        if resolution.0 == 0 || resolution.1 == 0 {
            return Err(GeometryError::InvalidIntrinsics("resolution must be at least 1x1"));
        }
        if !(principal_point.0.is_finite() && principal_point.1.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("principal point must be finite"));
        }
        let f_px = focal_length_m / pixel_pitch_m;
        if !(f_px.is_finite() && f_px > 0.0) {
            return Err(GeometryError::InvalidIntrinsics("focal length in pixels is not finite"));
        }
        Ok(Self {
            focal_length_m,
            pixel_pitch_m,
            principal_point,
            resolution,
        })
    }

    /// Intrinsics given directly in pixels, principal point at the image center.
    /// The pixel pitch is fixed at 1 so `focal_length_m` equals the pixel value.
    pub fn from_focal_px(focal_length_px: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        Self::new(
            focal_length_px,
            1.0,
            (width as f64 / 2.0, height as f64 / 2.0),
            (width, height),
        )
    }

    pub fn focal_length_m(&self) -> f64 {
        self.focal_length_m
    }

    pub fn pixel_pitch_m(&self) -> f64 {
        self.pixel_pitch_m
    }

    pub fn focal_length_px(&self) -> f64 {
        self.focal_length_m / self.pixel_pitch_m
    }

    pub fn principal_point(&self) -> (f64, f64) {
        self.principal_point
    }

    pub fn width(&self) -> u32 {
        self.resolution.0
    }

    pub fn height(&self) -> u32 {
        self.resolution.1
    }

    pub fn contains(&self, p: ImagePoint) -> bool {
        p.u >= 0.0 && p.v >= 0.0 && p.u <= self.width() as f64 && p.v <= self.height() as f64
    }
}

/// Rigid transform from the rig frame into the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

const ROTATION_TOLERANCE: f64 = 1e-9;

impl RigPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let residual = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if residual > ROTATION_TOLERANCE || (rotation.determinant() - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::InvalidRotation);
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rig at `position`, yawed by `yaw_rad` about the world +y (down) axis.
    pub fn from_yaw(yaw_rad: f64, position: Vector3<f64>) -> Self {
        let (s, c) = yaw_rad.sin_cos();
        let rotation = Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c);
        Self {
            rotation,
            translation: position,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rig_to_world(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn world_to_rig(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }
}

impl Default for RigPose {
    fn default() -> Self {
        Self::identity()
    }
}

/// Two identical cameras with parallel optical axes separated by `baseline_m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoRig {
    intrinsics: CameraIntrinsics,
    baseline_m: f64,
    pose: RigPose,
    depth_constant_override: Option<f64>,
}

impl StereoRig {
    pub fn new(intrinsics: CameraIntrinsics, baseline_m: f64, pose: RigPose) -> Result<Self, GeometryError> {
        if !(baseline_m.is_finite() && baseline_m > 0.0) {
            return Err(GeometryError::InvalidBaseline(baseline_m));
        }
        Ok(Self {
            intrinsics,
            baseline_m,
            pose,
            depth_constant_override: None,
        })
    }

    /// Replaces `f_px * B` as the triangulation numerator. Projection and
    /// back-projection still use the intrinsics.
    pub fn with_depth_constant(mut self, k: f64) -> Result<Self, GeometryError> {
        if !(k.is_finite() && k > 0.0) {
            return Err(GeometryError::InvalidDepthConstant(k));
        }
        self.depth_constant_override = Some(k);
        Ok(self)
    }

    pub fn with_pose(mut self, pose: RigPose) -> Self {
        self.pose = pose;
        self
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn baseline_m(&self) -> f64 {
        self.baseline_m
    }

    pub fn pose(&self) -> &RigPose {
        &self.pose
    }

    pub fn depth_constant_override(&self) -> Option<f64> {
        self.depth_constant_override
    }

    pub fn depth_constant(&self) -> f64 {
        depth_constant(self)
    }

    /// Optical center of the selected camera in the rig frame.
    pub fn camera_offset(&self, which: Side) -> Vector3<f64> {
        match which {
            Side::Left => Vector3::zeros(),
            Side::Right => Vector3::new(self.baseline_m, 0.0, 0.0),
        }
    }
}

/// Projects a world point into the selected camera. The result may fall
/// outside the image.
///
/// ```
/// use stereoloc::geometry::{project, CameraIntrinsics, RigPose, Side, StereoRig, WorldPoint};
///
/// let intr = CameraIntrinsics::from_focal_px(1000.0, 1280, 720).unwrap();
/// let rig = StereoRig::new(intr, 1.0, RigPose::identity()).unwrap();
/// let p = WorldPoint::new(0.5, 0.0, 10.0);
/// assert_eq!(project(p, &rig, Side::Left).unwrap().u, 690.0);
/// assert_eq!(project(p, &rig, Side::Right).unwrap().u, 590.0);
/// ```
pub fn project(point: WorldPoint, rig: &StereoRig, which: Side) -> Result<ImagePoint, GeometryError> {
    if !point.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    let rig_point = rig.pose.world_to_rig(point.to_vector());
    project_rig_frame(rig_point, rig, which)
}

/// Same as [`project`] for a point already expressed in the rig frame.
pub fn project_rig_frame(rig_point: Vector3<f64>, rig: &StereoRig, which: Side) -> Result<ImagePoint, GeometryError> {
    let cam = rig_point - rig.camera_offset(which);
    if cam.z.is_nan() || cam.z <= 0.0 {
        return Err(GeometryError::BehindCamera(cam.z));
    }
    let f = rig.intrinsics.focal_length_px();
    let (cx, cy) = rig.intrinsics.principal_point();
    Ok(ImagePoint::new(cx + f * cam.x / cam.z, cy + f * cam.y / cam.z))
}

pub fn disparity(x_left: f64, x_right: f64) -> f64 {
    x_left - x_right
}

/// Depth along the optical axis, `Z = K / disparity`.
///
/// ```
/// use stereoloc::geometry::{triangulate_depth, CameraIntrinsics, RigPose, StereoRig};
///
/// let intr = CameraIntrinsics::from_focal_px(1000.0, 1280, 720).unwrap();
/// let rig = StereoRig::new(intr, 1.0, RigPose::identity())
///     .unwrap()
///     .with_depth_constant(9070.86)
///     .unwrap();
/// let z = triangulate_depth(963.0, &rig).unwrap();
/// assert!((z - 9.42).abs() < 0.01);
/// assert!(triangulate_depth(0.0, &rig).is_err());
/// ```
pub fn triangulate_depth(disparity_px: f64, rig: &StereoRig) -> Result<f64, GeometryError> {
    if !disparity_px.is_finite() {
        return Err(GeometryError::NonFinite);
    }
    if disparity_px <= 0.0 {
        return Err(GeometryError::NonPositiveDisparity(disparity_px));
    }
    Ok(depth_constant(rig) / disparity_px)
}

/// Lifts a left-image point at known depth into the world frame.
///
/// ```
/// use nalgebra::Vector3;
/// use stereoloc::geometry::{back_project, CameraIntrinsics, ImagePoint, RigPose, StereoRig};
///
/// let intr = CameraIntrinsics::from_focal_px(1000.0, 1280, 720).unwrap();
/// let pose = RigPose::from_translation(Vector3::new(5.0, 0.0, 0.0));
/// let rig = StereoRig::new(intr, 1.0, pose).unwrap();
/// let w = back_project(ImagePoint::new(740.0, 360.0), 10.0, &rig).unwrap();
/// assert_eq!((w.x, w.y, w.z), (6.0, 0.0, 10.0));
/// ```
pub fn back_project(centroid: ImagePoint, depth_m: f64, rig: &StereoRig) -> Result<WorldPoint, GeometryError> {
    if !(centroid.u.is_finite() && centroid.v.is_finite() && depth_m.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    if depth_m <= 0.0 {
        return Err(GeometryError::NonPositiveDepth(depth_m));
    }
    let f = rig.intrinsics.focal_length_px();
    let (cx, cy) = rig.intrinsics.principal_point();
    let cam = Vector3::new(
        (centroid.u - cx) * depth_m / f,
        (centroid.v - cy) * depth_m / f,
        depth_m,
    );
    Ok(WorldPoint::from_vector(rig.pose.rig_to_world(cam)))
}

/// `K = f_px * B` unless the rig carries an explicit override.
pub fn depth_constant(rig: &StereoRig) -> f64 {
    rig.depth_constant_override
        .unwrap_or_else(|| rig.intrinsics.focal_length_px() * rig.baseline_m)
}
