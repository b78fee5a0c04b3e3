//! KITTI-style 2D detection evaluation: greedy per-image matching, precision /
//! recall curves and interpolated average precision for each difficulty bin.
//!
//! When bin `D` is evaluated, ground-truth objects of the evaluated class whose
//! difficulty is `D` or easier are positives. Objects of that class in a harder
//! bin, and `DontCare` regions, are ignored: a detection whose only match is an
//! ignored object counts neither as a true nor as a false positive.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::kitti::{self, classify_difficulty, Detection, DifficultyBin, Frame, GroundTruthObject};

pub const CAR_IOU_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Interpolation {
    /// 11 recall samples `{0, 0.1, ..., 1}`.
    #[default]
    R11,
    /// 40 recall samples `{1/40, ..., 1}`.
    R40,
}

impl Interpolation {
    pub fn recall_samples(self) -> Vec<f64> {
        match self {
            Interpolation::R11 => (0..=10).map(|i| f64::from(i) / 10.0).collect(),
            Interpolation::R40 => (1..=40).map(|i| f64::from(i) / 40.0).collect(),
        }
    }
}

impl FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "r11" => Ok(Interpolation::R11),
            "r40" => Ok(Interpolation::R40),
            _ => Err(Error::InvalidArgument(format!("unknown interpolation `{s}`"))),
        }
    }
}

impl fmt::Display for Interpolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interpolation::R11 => "r11",
            Interpolation::R40 => "r40",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchConfig {
    pub iou_threshold: f64,
    pub class_name: String,
    pub difficulty: DifficultyBin,
    pub interpolation: Interpolation,
}

impl MatchConfig {
    pub fn new(class_name: impl Into<String>, difficulty: DifficultyBin) -> Self {
        MatchConfig {
            iou_threshold: CAR_IOU_THRESHOLD,
            class_name: class_name.into(),
            difficulty,
            interpolation: Interpolation::R11,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "IoU threshold must lie in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        if self.difficulty == DifficultyBin::Ignored {
            return Err(Error::InvalidArgument("cannot evaluate the ignored bin".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MatchFlag {
    TruePositive,
    FalsePositive,
    /// Matched only an ignored object or region.
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GtRole {
    Positive,
    Ignored,
    Unrelated,
}

fn gt_role(gt: &GroundTruthObject, cfg: &MatchConfig) -> GtRole {
    if gt.is_dont_care() {
        return GtRole::Ignored;
    }
    if gt.class_name != cfg.class_name {
        return GtRole::Unrelated;
    }
    match classify_difficulty(gt) {
        DifficultyBin::Ignored => GtRole::Ignored,
        bin if bin <= cfg.difficulty => GtRole::Positive,
        _ => GtRole::Ignored,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageMatch {
    /// One entry per input detection; `None` for detections of other classes.
    pub det_flags: Vec<Option<MatchFlag>>,
    /// One entry per input ground-truth object: matched by a true positive.
    pub gt_matched: Vec<bool>,
    /// Ground-truth objects counted as positives for this bin.
    pub positives: usize,
    /// Ground-truth objects (and `DontCare` regions) ignored for this bin.
    pub ignored_gt: usize,
}

/// Greedy matching in descending score order (ties keep input order). Each
/// detection takes the unmatched positive with the highest IoU at or above
/// the threshold.
pub fn match_image(dets: &[Detection], gts: &[GroundTruthObject], cfg: &MatchConfig) -> ImageMatch {
    let roles: Vec<GtRole> = gts.iter().map(|g| gt_role(g, cfg)).collect();
    let mut det_flags = vec![None; dets.len()];
    let mut gt_matched = vec![false; gts.len()];

    let mut order: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].object.class_name == cfg.class_name)
        .collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));

    for di in order {
        let bbox = dets[di].bbox();
        let mut best: Option<(usize, f64)> = None;
        let mut hits_ignored = false;
        for (gi, gt) in gts.iter().enumerate() {
            let role = roles[gi];
            if role == GtRole::Unrelated {
                continue;
            }
            let overlap = iou(bbox, &gt.bbox);
            if overlap < cfg.iou_threshold {
                continue;
            }
            match role {
                GtRole::Positive if !gt_matched[gi] => {
                    if best.is_none_or(|(_, o)| overlap > o) {
                        best = Some((gi, overlap));
                    }
                }
                GtRole::Ignored => hits_ignored = true,
                _ => {}
            }
        }
        det_flags[di] = Some(match best {
            Some((gi, _)) => {
                gt_matched[gi] = true;
                MatchFlag::TruePositive
            }
            None if hits_ignored => MatchFlag::Ignored,
            None => MatchFlag::FalsePositive,
        });
    }

    ImageMatch {
        det_flags,
        gt_matched,
        positives: roles.iter().filter(|&&r| r == GtRole::Positive).count(),
        ignored_gt: roles.iter().filter(|&&r| r == GtRole::Ignored).count(),
    }
}

/// A detection after matching: its score and whether it was a true positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredMatch {
    pub score: f64,
    pub true_positive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    /// Score threshold: detections scoring at least this much are kept.
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub positives: usize,
}

/// Sweeps the score threshold over every distinct score, highest first.
pub fn pr_curve(matches: &[ScoredMatch], positives: usize) -> PrCurve {
    let mut sorted = matches.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].score;
        while i < sorted.len() && sorted[i].score == threshold {
            if sorted[i].true_positive {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = if positives == 0 {
            0.0
        } else {
            tp as f64 / positives as f64
        };
        points.push(PrPoint {
            threshold,
            recall,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    PrCurve { points, positives }
}

/// Mean of the interpolated precision `max_{r' >= r} p(r')` over the recall
/// samples of `interpolation`. Zero when there are no positives.
pub fn average_precision(curve: &PrCurve, interpolation: Interpolation) -> f64 {
    if curve.positives == 0 || curve.points.is_empty() {
        return 0.0;
    }
    // running maximum of precision from the high-recall end
    let mut envelope: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.recall, p.precision)).collect();
    envelope.sort_by(|a, b| a.0.total_cmp(&b.0));
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i].1 = envelope[i].1.max(envelope[i + 1].1);
    }

    let samples = interpolation.recall_samples();
    let total: f64 = samples
        .iter()
        .map(|&r| {
            let idx = envelope.partition_point(|&(recall, _)| recall < r);
            envelope.get(idx).map_or(0.0, |&(_, p)| p)
        })
        .sum();
    total / samples.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinReport {
    pub difficulty: DifficultyBin,
    pub ap: f64,
    /// Positives (ground truth counted for this bin).
    pub gt: usize,
    pub tp: usize,
    pub fp: usize,
    /// Ignored ground truth plus detections that matched only ignored objects.
    pub ignored: usize,
    pub curve: PrCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApReport {
    pub class_name: String,
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
    pub frames: usize,
    pub bins: Vec<BinReport>,
}

impl ApReport {
    pub fn bin(&self, difficulty: DifficultyBin) -> Option<&BinReport> {
        self.bins.iter().find(|b| b.difficulty == difficulty)
    }

    pub fn ap(&self, difficulty: DifficultyBin) -> f64 {
        self.bin(difficulty).map_or(0.0, |b| b.ap)
    }
}

#[derive(Default)]
struct FrameTally {
    matches: Vec<ScoredMatch>,
    positives: usize,
    ignored: usize,
}

fn evaluate_bin(pairs: &[(&[GroundTruthObject], &[Detection])], cfg: &MatchConfig) -> BinReport {
    let tallies: Vec<FrameTally> = pairs
        .par_iter()
        .map(|(gts, dets)| {
            let m = match_image(dets, gts, cfg);
            let mut tally = FrameTally {
                positives: m.positives,
                ignored: m.ignored_gt,
                ..Default::default()
            };
            for (det, flag) in dets.iter().zip(&m.det_flags) {
                match flag {
                    Some(MatchFlag::TruePositive) => tally.matches.push(ScoredMatch {
                        score: det.score,
                        true_positive: true,
                    }),
                    Some(MatchFlag::FalsePositive) => tally.matches.push(ScoredMatch {
                        score: det.score,
                        true_positive: false,
                    }),
                    Some(MatchFlag::Ignored) => tally.ignored += 1,
                    None => {}
                }
            }
            tally
        })
        .collect();

    let mut all = Vec::new();
    let (mut positives, mut ignored) = (0, 0);
    for t in tallies {
        positives += t.positives;
        ignored += t.ignored;
        all.extend(t.matches);
    }
    let tp = all.iter().filter(|m| m.true_positive).count();
    let curve = pr_curve(&all, positives);
    BinReport {
        difficulty: cfg.difficulty,
        ap: average_precision(&curve, cfg.interpolation),
        gt: positives,
        tp,
        fp: all.len() - tp,
        ignored,
        curve,
    }
}

/// Evaluates in-memory frames. Detection frames are looked up by id; a ground
/// truth frame without detections contributes only positives.
pub fn evaluate_frames(
    gt_frames: &[Frame<GroundTruthObject>],
    det_frames: &[Frame<Detection>],
    class_name: &str,
    iou_threshold: f64,
    interpolation: Interpolation,
) -> Result<ApReport> {
    let by_id: BTreeMap<&str, &[Detection]> = det_frames.iter().map(|f| (f.id.as_str(), f.rows.as_slice())).collect();
    let pairs: Vec<(&[GroundTruthObject], &[Detection])> = gt_frames
        .iter()
        .map(|g| {
            let dets = by_id.get(g.id.as_str()).copied().unwrap_or(&[]);
            (g.rows.as_slice(), dets)
        })
        .collect();

    let mut bins = Vec::with_capacity(3);
    for difficulty in DifficultyBin::EVALUATED {
        let cfg = MatchConfig {
            iou_threshold,
            class_name: class_name.to_string(),
            difficulty,
            interpolation,
        };
        cfg.validate()?;
        bins.push(evaluate_bin(&pairs, &cfg));
    }
    Ok(ApReport {
        class_name: class_name.to_string(),
        iou_threshold,
        interpolation,
        frames: gt_frames.len(),
        bins,
    })
}

/// Evaluates a result directory against a label directory (`<frame_id>.txt`
/// files in both). Missing result files count as frames with no detections.
pub fn evaluate_dataset(
    det_dir: &Path,
    gt_dir: &Path,
    class_name: &str,
    iou_threshold: f64,
    interpolation: Interpolation,
) -> Result<ApReport> {
    let gt_frames = kitti::read_label_dir(gt_dir)?;
    let det_frames = kitti::read_result_dir(det_dir)?;
    let det_ids: std::collections::BTreeSet<&str> = det_frames.iter().map(|f| f.id.as_str()).collect();
    for g in &gt_frames {
        if !det_ids.contains(g.id.as_str()) {
            warn!("no result file for frame {}; treating as zero detections", g.id);
        }
    }
    evaluate_frames(&gt_frames, &det_frames, class_name, iou_threshold, interpolation)
}
