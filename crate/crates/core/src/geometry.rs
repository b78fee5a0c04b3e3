//! Axis-aligned box arithmetic.
//!
//! Boxes use continuous pixel coordinates: `area = (right - left) * (bottom - top)`,
//! with no `+1` pixel-inclusive convention. Zero-area boxes are legal but have an
//! IoU of 0 against everything.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kitti::Detection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl Box2D {
    pub const fn new(left: f64, top: f64, right: f64, bottom: f64) -> Self {
        Box2D {
            left,
            top,
            right,
            bottom,
        }
    }

    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        Box2D::new(cx - width / 2.0, cy - height / 2.0, cx + width / 2.0, cy + height / 2.0)
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }

    #[inline]
    pub fn center(&self) -> (f64, f64) {
        ((self.left + self.right) / 2.0, (self.top + self.bottom) / 2.0)
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.left.is_finite()
            && self.top.is_finite()
            && self.right.is_finite()
            && self.bottom.is_finite()
            && self.left <= self.right
            && self.top <= self.bottom
    }

    pub fn has_positive_area(&self) -> bool {
        self.is_valid() && self.width() > 0.0 && self.height() > 0.0
    }

    /// Multiplies every coordinate by `factor` (maps between image resolutions).
    pub fn scaled(&self, factor: f64) -> Box2D {
        Box2D::new(
            self.left * factor,
            self.top * factor,
            self.right * factor,
            self.bottom * factor,
        )
    }

    pub fn intersection_area(&self, other: &Box2D) -> f64 {
        let w = self.right.min(other.right) - self.left.max(other.left);
        let h = self.bottom.min(other.bottom) - self.top.max(other.top);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

/// Image extent in pixels, written `WxH` on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageDims {
    pub width: u32,
    pub height: u32,
}

impl ImageDims {
    pub const KITTI: ImageDims = ImageDims {
        width: 1242,
        height: 375,
    };

    pub const fn new(width: u32, height: u32) -> Self {
        ImageDims { width, height }
    }
}

impl fmt::Display for ImageDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl FromStr for ImageDims {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("expected WIDTHxHEIGHT, got `{s}`"));
        let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let width: u32 = w.trim().parse().map_err(|_| bad())?;
        let height: u32 = h.trim().parse().map_err(|_| bad())?;
        if width == 0 || height == 0 {
            return Err(bad());
        }
        Ok(ImageDims { width, height })
    }
}

/// Regression target relating an anchor to a proposal: center offsets in units of
/// anchor size, and log-scale size factors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoxDelta {
    pub tx: f64,
    pub ty: f64,
    pub tw: f64,
    pub th: f64,
}

impl BoxDelta {
    pub const ZERO: BoxDelta = BoxDelta {
        tx: 0.0,
        ty: 0.0,
        tw: 0.0,
        th: 0.0,
    };
}

/// Intersection over union. Returns 0 when either box has zero area.
pub fn iou(a: &Box2D, b: &Box2D) -> f64 {
    let area_a = a.area();
    let area_b = b.area();
    if area_a <= 0.0 || area_b <= 0.0 {
        return 0.0;
    }
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / (area_a + area_b - inter)).clamp(0.0, 1.0)
}

pub fn apply_delta(anchor: &Box2D, d: &BoxDelta) -> Result<Box2D> {
    if !anchor.has_positive_area() {
        return Err(Error::InvalidArgument(format!(
            "anchor must have positive width and height: {anchor:?}"
        )));
    }
    let (cx, cy) = anchor.center();
    let (w, h) = (anchor.width(), anchor.height());
    let out = Box2D::from_center(cx + d.tx * w, cy + d.ty * h, w * d.tw.exp(), h * d.th.exp());
    if out.is_valid() {
        Ok(out)
    } else {
        Err(Error::NonFinite(format!("apply_delta({anchor:?}, {d:?})")))
    }
}

pub fn compute_delta(anchor: &Box2D, target: &Box2D) -> Result<BoxDelta> {
    if !anchor.has_positive_area() {
        return Err(Error::InvalidArgument(format!(
            "anchor must have positive width and height: {anchor:?}"
        )));
    }
    if !target.has_positive_area() {
        return Err(Error::InvalidArgument(format!(
            "target must have positive width and height: {target:?}"
        )));
    }
    let (acx, acy) = anchor.center();
    let (tcx, tcy) = target.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    Ok(BoxDelta {
        tx: (tcx - acx) / aw,
        ty: (tcy - acy) / ah,
        tw: (target.width() / aw).ln(),
        th: (target.height() / ah).ln(),
    })
}

/// Intersects `b` with the image rectangle `[0, width] x [0, height]`.
///
/// A box entirely outside the image collapses onto the nearest edge.
pub fn clip_box(b: &Box2D, image: ImageDims) -> Box2D {
    let (w, h) = (f64::from(image.width), f64::from(image.height));
    Box2D::new(
        b.left.clamp(0.0, w),
        b.top.clamp(0.0, h),
        b.right.clamp(0.0, w),
        b.bottom.clamp(0.0, h),
    )
}

/// Scales `b` about its center by `factor` along each axis, then clips to the image.
pub fn context_window(b: &Box2D, factor: f64, image: ImageDims) -> Result<Box2D> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "context factor must be positive, got {factor}"
        )));
    }
    let (cx, cy) = b.center();
    let grown = Box2D::from_center(cx, cy, b.width() * factor, b.height() * factor);
    Ok(clip_box(&grown, image))
}

/// Greedy non-maximum suppression.
///
/// Returns indices into `boxes` in descending score order. Equal scores keep
/// their input order. A box is suppressed when its IoU with an already kept box
/// exceeds `iou_threshold`.
pub fn nms_indices(boxes: &[Box2D], scores: &[f64], iou_threshold: f64) -> Vec<usize> {
    assert_eq!(boxes.len(), scores.len(), "one score per box");
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));

    let mut keep: Vec<usize> = Vec::new();
    for idx in order {
        if keep.iter().all(|&k| iou(&boxes[k], &boxes[idx]) <= iou_threshold) {
            keep.push(idx);
        }
    }
    keep
}

pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let boxes: Vec<Box2D> = dets.iter().map(|d| d.object.bbox).collect();
    let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    nms_indices(&boxes, &scores, iou_threshold)
        .into_iter()
        .map(|i| dets[i].clone())
        .collect()
}
