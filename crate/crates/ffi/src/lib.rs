//! C ABI over the stereoloc core.
//!
//! Handles are opaque and owned by the caller once returned; release them with
//! the matching `*_free` function. Every fallible call returns an [`SlStatus`]
//! and records a message retrievable with [`stereoloc_last_error_message`] on
//! the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use stereoloc::config::RunConfig;
use stereoloc::geometry::{self, CameraIntrinsics, ImagePoint, RigPose, Side, StereoRig, WorldPoint};
use stereoloc::{BoundingBox, LocalizeConfig, StereoFrame};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Geometry = 3,
    BufferTooSmall = 4,
    Config = 5,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlSide {
    Left = 0,
    Right = 1,
}

impl From<SlSide> for Side {
    fn from(s: SlSide) -> Self {
        match s {
            SlSide::Left => Side::Left,
            SlSide::Right => Side::Right,
        }
    }
}

/// Rig description. Set `depth_constant` to 0 to use `focal_px * baseline`.
/// A negative principal point selects the image center.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SlRigParams {
    pub focal_length_m: f64,
    pub pixel_pitch_m: f64,
    pub principal_x: f64,
    pub principal_y: f64,
    pub width: u32,
    pub height: u32,
    pub baseline_m: f64,
    pub depth_constant: f64,
}

/// One detection in normalized image coordinates.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SlBox {
    pub class_id: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SlEstimate {
    pub target_ordinal: u32,
    pub left_index: u32,
    pub right_index: u32,
    pub disparity_px: f64,
    pub depth_m: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub confidence: f64,
}

/// Opaque stereo rig.
pub struct SlRig {
    rig: StereoRig,
}

/// Opaque rig plus association settings.
pub struct SlLocalizer {
    rig: StereoRig,
    config: LocalizeConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

type Failure = (SlStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SlStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            SlStatus::Panic
        }
    }
}

fn geometry_err(e: geometry::GeometryError) -> Failure {
    (SlStatus::Geometry, e.to_string())
}

fn null(what: &str) -> Failure {
    (SlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (SlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn boxes<'a>(p: *const SlBox, n: usize, what: &str) -> Result<&'a [SlBox], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn build_rig(p: &SlRigParams) -> Result<StereoRig, Failure> {
    let pp = if p.principal_x < 0.0 || p.principal_y < 0.0 {
        (p.width as f64 / 2.0, p.height as f64 / 2.0)
    } else {
        (p.principal_x, p.principal_y)
    };
    let intr =
        CameraIntrinsics::new(p.focal_length_m, p.pixel_pitch_m, pp, (p.width, p.height)).map_err(geometry_err)?;
    let rig = StereoRig::new(intr, p.baseline_m, RigPose::identity()).map_err(geometry_err)?;
    if p.depth_constant == 0.0 {
        Ok(rig)
    } else {
        rig.with_depth_constant(p.depth_constant).map_err(geometry_err)
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn stereoloc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated) and returns the full message length excluding the NUL.
/// Returns 0 when the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn stereoloc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// # Safety
/// `params` must point to a valid `SlRigParams`; `out_rig` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stereoloc_rig_new(params: *const SlRigParams, out_rig: *mut *mut SlRig) -> SlStatus {
    guard(|| {
        let params = deref(params, "params")?;
        let out_rig = out(out_rig, "out_rig")?;
        *out_rig = ptr::null_mut();
        let rig = build_rig(params)?;
        *out_rig = Box::into_raw(Box::new(SlRig { rig }));
        Ok(())
    })
}

/// Builds a rig from a JSON run configuration (the same format the CLI reads).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_rig` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stereoloc_rig_from_config_json(json: *const c_char, out_rig: *mut *mut SlRig) -> SlStatus {
    guard(|| {
        let json = c_str(json, "json")?;
        let out_rig = out(out_rig, "out_rig")?;
        *out_rig = ptr::null_mut();
        let resolved = RunConfig::from_json(json)
            .and_then(RunConfig::resolve)
            .map_err(|e| (SlStatus::Config, e.to_string()))?;
        *out_rig = Box::into_raw(Box::new(SlRig { rig: resolved.rig }));
        Ok(())
    })
}

/// # Safety
/// `rig` must be null or a handle from a `stereoloc_rig_*` constructor that
/// has not been freed.
#[no_mangle]
pub unsafe extern "C" fn stereoloc_rig_free(rig: *mut SlRig) {
    if !rig.is_null() {
        drop(Box::from_raw(rig));
    }
}

/// # Safety
/// `rig` must be a live handle; `out_k` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stereoloc_depth_constant(rig: *const SlRig, out_k: *mut f64) -> SlStatus {
    guard(|| {
        let rig = deref(rig, "rig")?;
        *out(out_k, "out_k")? = geometry::depth_constant(&rig.rig);
        Ok(())
    })
}

/// Projects a world point into one camera, in pixels.
///
/// # Safety
/// `rig` must be a live handle; `out_u` and `out_v` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stereoloc_project(
    rig: *const SlRig,
    x: f64,
    y: f64,
    z: f64,
    side: SlSide,
    out_u: *mut f64,
    out_v: *mut f64,
) -> SlStatus {
    guard(|| {
        let rig = deref(rig, "rig")?;
        let out_u = out(out_u, "out_u")?;
        let out_v = out(out_v, "out_v")?;
        let p = geometry::project(WorldPoint::new(x, y, z), &rig.rig, side.into()).map_err(geometry_err)?;
        *out_u = p.u;
        *out_v = p.v;
        Ok(())
    })
}

/// # Safety
/// `rig` must be a live handle; `out_depth` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stereoloc_triangulate_depth(
    rig: *const SlRig,
    disparity_px: f64,
    out_depth: *mut f64,
) -> SlStatus {
    guard(|| {
        let rig = deref(rig, "rig")?;
        let out_depth = out(out_depth, "out_depth")?;
        *out_depth = geometry::triangulate_depth(disparity_px, &rig.rig).map_err(geometry_err)?;
        Ok(())
    })
}

/// Back-projects a left-image pixel at the given depth into the world frame.
///
/// # Safety
/// `rig` must be a live handle; `out_xyz` must point to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn stereoloc_back_project(
    rig: *const SlRig,
    u: f64,
    v: f64,
    depth_m: f64,
    out_xyz: *mut f64,
) -> SlStatus {
    guard(|| {
        let rig = deref(rig, "rig")?;
        if out_xyz.is_null() {
            return Err(null("out_xyz"));
        }
        let w = geometry::back_project(ImagePoint::new(u, v), depth_m, &rig.rig).map_err(geometry_err)?;
        let xyz = std::slice::from_raw_parts_mut(out_xyz, 3);
        xyz.copy_from_slice(&[w.x, w.y, w.z]);
        Ok(())
    })
}

/// Creates a localizer over a copy of `rig` with default association
/// settings, keeping class 0 only.
///
/// # Safety
/// `rig` must be a live handle; `out_localizer` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stereoloc_localizer_new(rig: *const SlRig, out_localizer: *mut *mut SlLocalizer) -> SlStatus {
    guard(|| {
        let rig = deref(rig, "rig")?;
        let out_localizer = out(out_localizer, "out_localizer")?;
        *out_localizer = Box::into_raw(Box::new(SlLocalizer {
            rig: rig.rig,
            config: LocalizeConfig::default(),
        }));
        Ok(())
    })
}

/// Creates a localizer from a JSON run configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_localizer` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stereoloc_localizer_from_config_json(
    json: *const c_char,
    out_localizer: *mut *mut SlLocalizer,
) -> SlStatus {
    guard(|| {
        let json = c_str(json, "json")?;
        let out_localizer = out(out_localizer, "out_localizer")?;
        *out_localizer = ptr::null_mut();
        let resolved = RunConfig::from_json(json)
            .and_then(RunConfig::resolve)
            .map_err(|e| (SlStatus::Config, e.to_string()))?;
        *out_localizer = Box::into_raw(Box::new(SlLocalizer {
            config: resolved.config.localize_config(),
            rig: resolved.rig,
        }));
        Ok(())
    })
}

/// # Safety
/// `localizer` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stereoloc_localizer_free(localizer: *mut SlLocalizer) {
    if !localizer.is_null() {
        drop(Box::from_raw(localizer));
    }
}

/// Localizes one stereo frame. `*out_count` always receives the number of
/// estimates; if it exceeds `capacity` nothing is written and
/// `SL_STATUS_BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// `left`/`right` must point to `n_left`/`n_right` boxes (either may be null
/// when its count is 0). `out` must point to `capacity` writable estimates
/// (null allowed when `capacity` is 0). `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stereoloc_localize_frame(
    localizer: *const SlLocalizer,
    frame_id: u64,
    left: *const SlBox,
    n_left: usize,
    right: *const SlBox,
    n_right: usize,
    out: *mut SlEstimate,
    capacity: usize,
    out_count: *mut usize,
) -> SlStatus {
    guard(|| {
        let loc = deref(localizer, "localizer")?;
        let out_count = self::out(out_count, "out_count")?;
        *out_count = 0;
        let to_boxes = |b: &[SlBox]| -> Vec<BoundingBox> {
            b.iter()
                .map(|b| BoundingBox::new(b.class_id, b.cx, b.cy, b.w, b.h).with_confidence(b.confidence))
                .collect()
        };
        let left = to_boxes(boxes(left, n_left, "left")?);
        let right = to_boxes(boxes(right, n_right, "right")?);
        if let Some(k) = left.iter().chain(&right).position(|b| !b.is_valid()) {
            return Err((SlStatus::InvalidArgument, format!("box {k} is out of range")));
        }
        let frame = StereoFrame::new(frame_id, left, right);
        let result = stereoloc::localize_frame(&frame, &loc.rig, &loc.config);
        *out_count = result.estimates.len();
        if result.estimates.len() > capacity {
            return Err((
                SlStatus::BufferTooSmall,
                format!("{} estimates, buffer holds {capacity}", result.estimates.len()),
            ));
        }
        if result.estimates.is_empty() {
            return Ok(());
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let dst = std::slice::from_raw_parts_mut(out, result.estimates.len());
        for (d, e) in dst.iter_mut().zip(&result.estimates) {
            *d = SlEstimate {
                target_ordinal: e.target_ordinal as u32,
                left_index: e.left_index as u32,
                right_index: e.right_index as u32,
                disparity_px: e.disparity_px,
                depth_m: e.depth_m,
                x_m: e.world.x,
                y_m: e.world.y,
                z_m: e.world.z,
                confidence: e.confidence,
            };
        }
        Ok(())
    })
}
