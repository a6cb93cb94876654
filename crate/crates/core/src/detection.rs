//! Darknet-style label files: one box per line, `class cx cy w h [confidence]`,
//! center and size normalized to the image.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::geometry::{CameraIntrinsics, ImagePoint, Side};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabelError {
    #[error("line {0}: expected `class cx cy w h [confidence]`")]
    MalformedLine(usize),
    #[error("line {0}: value out of range")]
    OutOfRange(usize),
    #[error("label data is not valid UTF-8")]
    InvalidUtf8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub class_id: u32,
    pub cx_norm: f64,
    pub cy_norm: f64,
    pub w_norm: f64,
    pub h_norm: f64,
    pub confidence: f64,
}

impl BoundingBox {
    pub fn new(class_id: u32, cx_norm: f64, cy_norm: f64, w_norm: f64, h_norm: f64) -> Self {
        Self {
            class_id,
            cx_norm,
            cy_norm,
            w_norm,
            h_norm,
            confidence: 1.0,
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    /// Center inside the image, size in (0, 1], confidence in [0, 1].
    /// The box itself may extend past the image border.
    pub fn is_valid(&self) -> bool {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        unit(self.cx_norm)
            && unit(self.cy_norm)
            && self.w_norm > 0.0
            && self.w_norm <= 1.0
            && self.h_norm > 0.0
            && self.h_norm <= 1.0
            && unit(self.confidence)
    }

    pub fn area_norm(&self) -> f64 {
        self.w_norm * self.h_norm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub frame_id: u64,
    pub side: Side,
    pub boxes: Vec<BoundingBox>,
}

impl DetectionSet {
    pub fn new(frame_id: u64, side: Side, boxes: Vec<BoundingBox>) -> Self {
        Self { frame_id, side, boxes }
    }

    pub fn empty(frame_id: u64, side: Side) -> Self {
        Self::new(frame_id, side, Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoFrame {
    pub frame_id: u64,
    pub left: DetectionSet,
    pub right: DetectionSet,
}

impl StereoFrame {
    pub fn new(frame_id: u64, left: Vec<BoundingBox>, right: Vec<BoundingBox>) -> Self {
        Self {
            frame_id,
            left: DetectionSet::new(frame_id, Side::Left, left),
            right: DetectionSet::new(frame_id, Side::Right, right),
        }
    }

    /// Pairs two detection sets, checking ids and sides agree.
    pub fn from_sets(left: DetectionSet, right: DetectionSet) -> Option<Self> {
        if left.frame_id != right.frame_id || left.side != Side::Left || right.side != Side::Right {
            return None;
        }
        Some(Self {
            frame_id: left.frame_id,
            left,
            right,
        })
    }
}

pub fn parse_label_file(bytes: &[u8], frame_id: u64, side: Side) -> Result<DetectionSet, LabelError> {
    let text = std::str::from_utf8(bytes).map_err(|_| LabelError::InvalidUtf8)?;
    let mut boxes = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 && fields.len() != 6 {
            return Err(LabelError::MalformedLine(line_no));
        }
        let class_id = parse_class(fields[0]).ok_or(LabelError::MalformedLine(line_no))?;
        let mut nums = [1.0f64; 5];
        for (slot, field) in nums.iter_mut().zip(&fields[1..]) {
            *slot = field.parse::<f64>().map_err(|_| LabelError::MalformedLine(line_no))?;
            if !slot.is_finite() {
                return Err(LabelError::MalformedLine(line_no));
            }
        }
        let bbox = BoundingBox {
            class_id,
            cx_norm: nums[0],
            cy_norm: nums[1],
            w_norm: nums[2],
            h_norm: nums[3],
            confidence: nums[4],
        };
        if !bbox.is_valid() {
            return Err(LabelError::OutOfRange(line_no));
        }
        boxes.push(bbox);
    }
    Ok(DetectionSet::new(frame_id, side, boxes))
}

// Darknet writes class ids as integers; tolerate "0.0" style exports too.
fn parse_class(field: &str) -> Option<u32> {
    if let Ok(c) = field.parse::<u32>() {
        return Some(c);
    }
    let f = field.parse::<f64>().ok()?;
    (f >= 0.0 && f.fract() == 0.0 && f <= u32::MAX as f64).then_some(f as u32)
}

pub fn write_label_file(set: &DetectionSet) -> Vec<u8> {
    let mut out = String::new();
    for b in &set.boxes {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            b.class_id,
            fmt_decimal(b.cx_norm),
            fmt_decimal(b.cy_norm),
            fmt_decimal(b.w_norm),
            fmt_decimal(b.h_norm),
            fmt_decimal(b.confidence)
        );
    }
    out.into_bytes()
}

/// Shortest round-trip decimal, padded to at least six fractional digits.
pub fn fmt_decimal(x: f64) -> String {
    let mut s = format!("{x}");
    if !x.is_finite() || s.contains('e') {
        return s;
    }
    let decimals = match s.find('.') {
        Some(dot) => s.len() - dot - 1,
        None => {
            s.push('.');
            0
        }
    };
    for _ in decimals..6 {
        s.push('0');
    }
    s
}

/// Box center in pixels, not rounded.
pub fn centroid(bbox: &BoundingBox, intrinsics: &CameraIntrinsics) -> ImagePoint {
    ImagePoint::new(
        bbox.cx_norm * intrinsics.width() as f64,
        bbox.cy_norm * intrinsics.height() as f64,
    )
}

pub fn label_file_name(prefix: &str, frame_id: u64, side: Side) -> String {
    format!("{prefix}_{frame_id:06}_{}.txt", side.as_str())
}

/// Splits `<prefix>_<frame_id>_<left|right>.txt` into its parts.
pub fn parse_label_file_name(path: &Path) -> Option<(String, u64, Side)> {
    let name = path.file_name()?.to_str()?;
    let stem = name.strip_suffix(".txt")?;
    let (rest, side) = stem
        .strip_suffix("_left")
        .map(|r| (r, Side::Left))
        .or_else(|| stem.strip_suffix("_right").map(|r| (r, Side::Right)))?;
    let (prefix, id) = rest.rsplit_once('_')?;
    if id.is_empty() || !id.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((prefix.to_string(), id.parse().ok()?, side))
}

#[derive(Debug, Error)]
pub enum LabelDirError {
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Label {
        path: std::path::PathBuf,
        #[source]
        source: LabelError,
    },
}

/// Label files found in a directory, paired into frames.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelDir {
    /// Complete frames, sorted by frame id.
    pub frames: Vec<StereoFrame>,
    /// Frame ids with only one side present.
    pub incomplete: Vec<u64>,
}

/// Reads every `<prefix>_<frame_id>_<side>.txt` file in `dir`. Files with
/// other names are ignored.
pub fn read_label_dir(dir: &Path) -> Result<LabelDir, LabelDirError> {
    use std::collections::BTreeMap;

    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| LabelDirError::Io { path, source }
    };
    let mut sides: BTreeMap<u64, (Option<DetectionSet>, Option<DetectionSet>)> = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(io(dir))? {
        let path = entry.map_err(io(dir))?.path();
        let Some((_, frame_id, side)) = parse_label_file_name(&path) else {
            continue;
        };
        let bytes = std::fs::read(&path).map_err(io(&path))?;
        let set = parse_label_file(&bytes, frame_id, side).map_err(|source| LabelDirError::Label {
            path: path.clone(),
            source,
        })?;
        let slot = sides.entry(frame_id).or_default();
        match side {
            Side::Left => slot.0 = Some(set),
            Side::Right => slot.1 = Some(set),
        }
    }
    let mut out = LabelDir::default();
    for (frame_id, pair) in sides {
        match pair {
            (Some(left), Some(right)) => out
                .frames
                .push(StereoFrame::from_sets(left, right).expect("sides and ids agree")),
            _ => out.incomplete.push(frame_id),
        }
    }
    Ok(out)
}
