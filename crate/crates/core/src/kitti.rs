//! KITTI object label and result files.
//!
//! Ground-truth rows carry 15 whitespace-separated fields:
//!
//! ```text
//! type truncated occluded alpha left top right bottom h w l x y z rotation_y
//! ```
//!
//! Result rows append a 16th field, the detection score.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Box2D;

pub const LABEL_FIELDS: usize = 15;
pub const RESULT_FIELDS: usize = 16;
pub const DONT_CARE: &str = "DontCare";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub class_name: String,
    pub truncation: f64,
    pub occlusion: i32,
    pub alpha: f64,
    pub bbox: Box2D,
    /// (height, width, length) in meters.
    pub dims3d: [f64; 3],
    /// (x, y, z) in camera coordinates, meters.
    pub location3d: [f64; 3],
    pub rotation_y: f64,
}

impl GroundTruthObject {
    /// A minimal object with only the fields used by 2D evaluation set.
    pub fn with_box(class_name: impl Into<String>, bbox: Box2D) -> Self {
        GroundTruthObject {
            class_name: class_name.into(),
            truncation: 0.0,
            occlusion: 0,
            alpha: -10.0,
            bbox,
            dims3d: [-1.0; 3],
            location3d: [-1000.0; 3],
            rotation_y: -10.0,
        }
    }

    /// `DontCare` rows mark unlabeled regions; detections inside them are ignored.
    pub fn is_dont_care(&self) -> bool {
        self.class_name == DONT_CARE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub object: GroundTruthObject,
    pub score: f64,
}

impl Detection {
    pub fn new(object: GroundTruthObject, score: f64) -> Self {
        Detection { object, score }
    }

    pub fn bbox(&self) -> &Box2D {
        &self.object.bbox
    }
}

/// KITTI difficulty regime, ordered from easiest to hardest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DifficultyBin {
    Easy,
    Moderate,
    Hard,
    Ignored,
}

impl DifficultyBin {
    /// The three evaluated bins.
    pub const EVALUATED: [DifficultyBin; 3] = [DifficultyBin::Easy, DifficultyBin::Moderate, DifficultyBin::Hard];

    pub fn name(self) -> &'static str {
        match self {
            DifficultyBin::Easy => "easy",
            DifficultyBin::Moderate => "moderate",
            DifficultyBin::Hard => "hard",
            DifficultyBin::Ignored => "ignored",
        }
    }

    fn thresholds(self) -> Option<DifficultyThresholds> {
        match self {
            DifficultyBin::Easy => Some(DifficultyThresholds {
                min_height: 40.0,
                max_occlusion: 0,
                max_truncation: 0.15,
            }),
            DifficultyBin::Moderate => Some(DifficultyThresholds {
                min_height: 25.0,
                max_occlusion: 1,
                max_truncation: 0.30,
            }),
            DifficultyBin::Hard => Some(DifficultyThresholds {
                min_height: 25.0,
                max_occlusion: 2,
                max_truncation: 0.50,
            }),
            DifficultyBin::Ignored => None,
        }
    }
}

struct DifficultyThresholds {
    min_height: f64,
    max_occlusion: i32,
    max_truncation: f64,
}

/// Returns the easiest bin whose thresholds the object satisfies.
///
/// Depends only on box height, occlusion and truncation.
pub fn classify_difficulty(obj: &GroundTruthObject) -> DifficultyBin {
    let height = obj.bbox.height();
    DifficultyBin::EVALUATED
        .into_iter()
        .find(|bin| {
            let t = bin.thresholds().expect("evaluated bins have thresholds");
            height >= t.min_height && obj.occlusion <= t.max_occlusion && obj.truncation <= t.max_truncation
        })
        .unwrap_or(DifficultyBin::Ignored)
}

fn parse_real(token: &str, what: &str, line: usize) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| Error::parse(line, format!("{what}: `{token}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("{what}: `{token}` is not finite")));
    }
    Ok(v)
}

fn parse_object(fields: &[&str], line: usize) -> Result<GroundTruthObject> {
    let real = |i: usize, what: &str| parse_real(fields[i], what, line);

    let class_name = fields[0].to_string();
    let truncation = real(1, "truncated")?;
    let occ = real(2, "occluded")?;
    if occ.fract() != 0.0 {
        return Err(Error::parse(
            line,
            format!("occluded: `{}` is not an integer", fields[2]),
        ));
    }
    let occlusion = occ as i32;
    let alpha = real(3, "alpha")?;
    let bbox = Box2D::new(real(4, "left")?, real(5, "top")?, real(6, "right")?, real(7, "bottom")?);
    let dims3d = [real(8, "height")?, real(9, "width")?, real(10, "length")?];
    let location3d = [real(11, "x")?, real(12, "y")?, real(13, "z")?];
    let rotation_y = real(14, "rotation_y")?;

    let obj = GroundTruthObject {
        class_name,
        truncation,
        occlusion,
        alpha,
        bbox,
        dims3d,
        location3d,
        rotation_y,
    };
    validate_object(&obj, line)?;
    Ok(obj)
}

fn validate_object(obj: &GroundTruthObject, line: usize) -> Result<()> {
    let b = &obj.bbox;
    if !(b.left < b.right && b.top < b.bottom) {
        return Err(Error::parse(
            line,
            format!(
                "bbox ({}, {}, {}, {}) is empty or inverted",
                b.left, b.top, b.right, b.bottom
            ),
        ));
    }
    // DontCare rows use -1 sentinels for truncation and occlusion.
    if obj.is_dont_care() {
        return Ok(());
    }
    if !(0.0..=1.0).contains(&obj.truncation) {
        return Err(Error::parse(
            line,
            format!("truncated {} outside [0, 1]", obj.truncation),
        ));
    }
    if !(0..=3).contains(&obj.occlusion) {
        return Err(Error::parse(
            line,
            format!("occluded {} not in {{0, 1, 2, 3}}", obj.occlusion),
        ));
    }
    Ok(())
}

fn parse_rows<T>(text: &str, expected: usize, build: impl Fn(&[&str], usize) -> Result<T>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != expected {
            return Err(Error::parse(
                line,
                format!("expected {expected} fields, found {}", fields.len()),
            ));
        }
        out.push(build(&fields, line)?);
    }
    Ok(out)
}

pub fn parse_label_file(text: &str) -> Result<Vec<GroundTruthObject>> {
    parse_rows(text, LABEL_FIELDS, parse_object)
}

pub fn parse_result_file(text: &str) -> Result<Vec<Detection>> {
    parse_rows(text, RESULT_FIELDS, |fields, line| {
        let object = parse_object(&fields[..LABEL_FIELDS], line)?;
        let score = parse_real(fields[LABEL_FIELDS], "score", line)?;
        Ok(Detection { object, score })
    })
}

fn write_object(out: &mut String, o: &GroundTruthObject) {
    let b = &o.bbox;
    write!(
        out,
        "{} {:.2} {} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2}",
        o.class_name,
        o.truncation,
        o.occlusion,
        o.alpha,
        b.left,
        b.top,
        b.right,
        b.bottom,
        o.dims3d[0],
        o.dims3d[1],
        o.dims3d[2],
        o.location3d[0],
        o.location3d[1],
        o.location3d[2],
        o.rotation_y
    )
    .expect("writing to a String cannot fail");
}

/// Serializes ground-truth rows, one per line, with two decimals per real field.
pub fn serialize_labels(objects: &[GroundTruthObject]) -> String {
    let mut out = String::new();
    for o in objects {
        write_object(&mut out, o);
        out.push('\n');
    }
    out
}

/// Serializes result rows. Scores keep six decimals so that rank order survives.
pub fn serialize_results(dets: &[Detection]) -> String {
    let mut out = String::new();
    for d in dets {
        write_object(&mut out, &d.object);
        write!(out, " {:.6}", d.score).expect("writing to a String cannot fail");
        out.push('\n');
    }
    out
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_label_file(path: &Path) -> Result<Vec<GroundTruthObject>> {
    parse_label_file(&read_text(path)?).map_err(|e| e.in_file(path))
}

pub fn read_result_file(path: &Path) -> Result<Vec<Detection>> {
    parse_result_file(&read_text(path)?).map_err(|e| e.in_file(path))
}

/// Lists `<frame_id>.txt` files in `dir`, sorted by frame id.
pub fn list_frames(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if !path.is_file() || path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            frames.push((stem.to_string(), path));
        }
    }
    frames.sort();
    Ok(frames)
}

/// One parsed frame of a label directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    pub id: String,
    pub rows: Vec<T>,
}

/// Parses every label file in `dir` (in parallel). Output is sorted by frame id.
pub fn read_label_dir(dir: &Path) -> Result<Vec<Frame<GroundTruthObject>>> {
    list_frames(dir)?
        .into_par_iter()
        .map(|(id, path)| read_label_file(&path).map(|rows| Frame { id, rows }))
        .collect()
}

pub fn read_result_dir(dir: &Path) -> Result<Vec<Frame<Detection>>> {
    list_frames(dir)?
        .into_par_iter()
        .map(|(id, path)| read_result_file(&path).map(|rows| Frame { id, rows }))
        .collect()
}
