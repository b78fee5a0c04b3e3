//! Synthetic detections made by perturbing ground truth.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`). Each frame gets its own
//! generator, seeded with the run seed and switched to the stream given by the
//! 64-bit FNV-1a hash of the frame id, so output does not depend on the order
//! in which frames are processed. Every ground-truth object consumes the same
//! number of draws whatever the configuration, so two runs that differ only in
//! noise magnitudes see the same underlying samples.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{apply_delta, clip_box, iou, Box2D, BoxDelta, ImageDims};
use crate::kitti::{self, Detection, Frame, GroundTruthObject};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScoreModel {
    /// Score is the IoU between the perturbed box and its source object.
    IouBased,
    Random,
}

impl FromStr for ScoreModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "iou_based" | "iou" => Ok(ScoreModel::IouBased),
            "random" => Ok(ScoreModel::Random),
            _ => Err(Error::InvalidArgument(format!("unknown score model `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbConfig {
    /// Standard deviation of the center shift, pixels.
    pub center_noise_sigma: f64,
    /// Standard deviation of the log width / log height change.
    pub scale_noise_sigma: f64,
    pub drop_rate: f64,
    /// Expected number of spurious boxes per image.
    pub false_positive_rate: f64,
    pub score_model: ScoreModel,
    pub seed: u64,
    pub image: ImageDims,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            center_noise_sigma: 0.0,
            scale_noise_sigma: 0.0,
            drop_rate: 0.0,
            false_positive_rate: 0.0,
            score_model: ScoreModel::IouBased,
            seed: 0,
            image: ImageDims::KITTI,
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !nonneg(self.center_noise_sigma) || !nonneg(self.scale_noise_sigma) {
            return Err(Error::InvalidArgument("noise sigmas must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(Error::InvalidArgument(format!(
                "drop rate must lie in [0, 1], got {}",
                self.drop_rate
            )));
        }
        if !nonneg(self.false_positive_rate) {
            return Err(Error::InvalidArgument("false-positive rate must be >= 0".into()));
        }
        Ok(())
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn frame_rng(seed: u64, frame_id: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a64(frame_id.as_bytes()));
    rng
}

/// Perturbed detections for one frame.
pub fn perturb_frame(frame_id: &str, gts: &[GroundTruthObject], config: &PerturbConfig) -> Result<Vec<Detection>> {
    config.validate()?;
    let mut rng = frame_rng(config.seed, frame_id);
    let sources: Vec<&GroundTruthObject> = gts
        .iter()
        .filter(|g| !g.is_dont_care() && g.bbox.has_positive_area())
        .collect();

    let mut dets = Vec::new();
    for gt in &sources {
        let z: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let keep = rng.random::<f64>() >= config.drop_rate;
        let random_score: f64 = rng.random();
        if !keep {
            continue;
        }
        let b = &gt.bbox;
        let delta = BoxDelta {
            tx: z[0] * config.center_noise_sigma / b.width(),
            ty: z[1] * config.center_noise_sigma / b.height(),
            tw: z[2] * config.scale_noise_sigma,
            th: z[3] * config.scale_noise_sigma,
        };
        let moved = clip_box(&apply_delta(b, &delta)?, config.image);
        if !moved.has_positive_area() {
            continue;
        }
        let score = match config.score_model {
            ScoreModel::IouBased => iou(&moved, b),
            ScoreModel::Random => random_score,
        };
        dets.push(Detection::new(
            GroundTruthObject {
                bbox: moved,
                ..(*gt).clone()
            },
            score,
        ));
    }

    if config.false_positive_rate > 0.0 && !sources.is_empty() {
        let count = Poisson::new(config.false_positive_rate)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(&mut rng) as usize;
        let (w, h) = (f64::from(config.image.width), f64::from(config.image.height));
        for _ in 0..count {
            let template = sources[rng.random_range(0..sources.len())];
            let cx = rng.random::<f64>() * w;
            let cy = rng.random::<f64>() * h;
            let random_score: f64 = rng.random();
            let b = clip_box(
                &Box2D::from_center(cx, cy, template.bbox.width(), template.bbox.height()),
                config.image,
            );
            if !b.has_positive_area() {
                continue;
            }
            let score = match config.score_model {
                ScoreModel::IouBased => sources.iter().map(|g| iou(&b, &g.bbox)).fold(0.0, f64::max),
                ScoreModel::Random => random_score,
            };
            dets.push(Detection::new(
                GroundTruthObject {
                    bbox: b,
                    ..template.clone()
                },
                score,
            ));
        }
    }
    Ok(dets)
}

pub fn perturb_frames(gt_frames: &[Frame<GroundTruthObject>], config: &PerturbConfig) -> Result<Vec<Frame<Detection>>> {
    gt_frames
        .par_iter()
        .map(|f| perturb_frame(&f.id, &f.rows, config).map(|rows| Frame { id: f.id.clone(), rows }))
        .collect()
}

/// Reads every label file in `gt_dir` and writes a result file of the same name
/// into `out_dir`. Returns the number of files written.
pub fn perturb(gt_dir: &Path, out_dir: &Path, config: &PerturbConfig) -> Result<usize> {
    let frames = kitti::read_label_dir(gt_dir)?;
    let dets = perturb_frames(&frames, config)?;
    write_result_frames(out_dir, &dets)?;
    Ok(dets.len())
}

pub fn write_result_frames(dir: &Path, frames: &[Frame<Detection>]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in frames {
        let path = dir.join(format!("{}.txt", f.id));
        fs::write(&path, kitti::serialize_results(&f.rows)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn write_label_frames(dir: &Path, frames: &[Frame<GroundTruthObject>]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in frames {
        let path = dir.join(format!("{}.txt", f.id));
        fs::write(&path, kitti::serialize_labels(&f.rows)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Random, well-formed "Car" ground truth spread over all difficulty bins.
///
/// Values are quantized to the two decimals of the label format so a written
/// fixture parses back to exactly these objects. Frame ids are zero-padded
/// six-digit numbers as in KITTI.
pub fn generate_ground_truth(
    frames: usize,
    objects_per_frame: usize,
    image: ImageDims,
    seed: u64,
) -> Vec<Frame<GroundTruthObject>> {
    let q = |v: f64| (v * 100.0).round() / 100.0;
    let (iw, ih) = (f64::from(image.width), f64::from(image.height));
    (0..frames)
        .map(|i| {
            let id = format!("{i:06}");
            let mut rng = frame_rng(seed, &id);
            let rows = (0..objects_per_frame)
                .map(|_| {
                    let height = rng.random_range(18.0..(ih * 0.6).max(19.0));
                    let width = height * rng.random_range(0.8..2.5);
                    let left = rng.random_range(0.0..(iw - width).max(1.0));
                    let top = rng.random_range(0.0..(ih - height).max(1.0));
                    let bbox = Box2D::new(q(left), q(top), q((left + width).min(iw)), q((top + height).min(ih)));
                    GroundTruthObject {
                        class_name: "Car".to_string(),
                        truncation: q(rng.random_range(0.0..0.6)),
                        occlusion: rng.random_range(0..=3),
                        alpha: q(rng.random_range(-PI..PI)),
                        bbox,
                        dims3d: [1.5, 1.6, 3.9],
                        location3d: [q(rng.random_range(-10.0..10.0)), 1.7, q(rng.random_range(5.0..60.0))],
                        rotation_y: q(rng.random_range(-PI..PI)),
                    }
                })
                .collect();
            Frame { id, rows }
        })
        .collect()
}
