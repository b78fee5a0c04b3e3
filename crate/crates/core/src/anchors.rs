//! Anchor shapes: the default scale/ratio scheme, K-Means selection from
//! ground-truth shapes, placement over a feature grid, and anchor-density
//! statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, Box2D, ImageDims};

pub const DEFAULT_BASE: f64 = 16.0;
pub const DEFAULT_SCALES: [f64; 3] = [8.0, 16.0, 32.0];
pub const DEFAULT_RATIOS: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorShape {
    pub width: f64,
    pub height: f64,
}

impl AnchorShape {
    pub fn new(width: f64, height: f64) -> Result<Self> {
        if width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite() {
            Ok(AnchorShape { width, height })
        } else {
            Err(Error::InvalidArgument(format!(
                "anchor shape must be positive, got {width}x{height}"
            )))
        }
    }

    pub fn of_box(b: &Box2D) -> Result<Self> {
        AnchorShape::new(b.width(), b.height())
    }

    pub fn centered_at(&self, cx: f64, cy: f64) -> Box2D {
        Box2D::from_center(cx, cy, self.width, self.height)
    }

    fn sq_dist(&self, other: &AnchorShape) -> f64 {
        let dw = self.width - other.width;
        let dh = self.height - other.height;
        dw * dw + dh * dh
    }
}

/// `|scales| * |ratios|` shapes, scale-major. Ratio is height / width; each
/// shape keeps the area `(base * scale)^2`.
pub fn default_anchor_shapes(base: f64, scales: &[f64], ratios: &[f64]) -> Result<Vec<AnchorShape>> {
    let positive = |v: f64| v > 0.0 && v.is_finite();
    if !positive(base) || !scales.iter().all(|&s| positive(s)) || !ratios.iter().all(|&r| positive(r)) {
        return Err(Error::InvalidArgument(
            "base, scales and ratios must be positive".into(),
        ));
    }
    let mut shapes = Vec::with_capacity(scales.len() * ratios.len());
    for &scale in scales {
        let side = base * scale;
        for &ratio in ratios {
            let root = ratio.sqrt();
            shapes.push(AnchorShape::new(side / root, side * root)?);
        }
    }
    Ok(shapes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Stop once no centroid moves farther than this (pixels).
    pub tolerance: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 9,
            seed: 0,
            max_iterations: 300,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMeansResult {
    pub shapes: Vec<AnchorShape>,
    /// Sum of squared (w, h) distances from each observation to its nearest shape.
    pub objective: f64,
    /// Sum of plain Euclidean distances to the nearest shape.
    pub euclidean_sum: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after the seeding assignment and after every Lloyd iteration.
    pub objective_history: Vec<f64>,
    /// Index of the nearest shape for each observation.
    pub assignments: Vec<usize>,
}

fn nearest(point: &AnchorShape, centroids: &[AnchorShape]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = point.sq_dist(c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn assign(points: &[AnchorShape], centroids: &[AnchorShape]) -> (Vec<usize>, Vec<f64>) {
    points.par_iter().map(|p| nearest(p, centroids)).unzip()
}

fn kmeans_pp(points: &[AnchorShape], k: usize, rng: &mut ChaCha8Rng) -> Vec<AnchorShape> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| p.sq_dist(&centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` a hair below `target`
            chosen.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("total > 0"))
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(p.sq_dist(&c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm over (width, height) with k-means++ seeding.
///
/// Deterministic for a given `(observations, config)`; the parallel assignment
/// step does not affect the result.
pub fn kmeans_anchor_shapes(observations: &[AnchorShape], config: &KMeansConfig) -> Result<KMeansResult> {
    let k = config.k;
    if observations.is_empty() {
        return Err(Error::InvalidArgument("no observations to cluster".into()));
    }
    if k == 0 || k > observations.len() {
        return Err(Error::InvalidArgument(format!(
            "k must be in 1..={}, got {k}",
            observations.len()
        )));
    }
    if let Some(bad) = observations
        .iter()
        .find(|o| !(o.width > 0.0 && o.height > 0.0 && o.width.is_finite() && o.height.is_finite()))
    {
        return Err(Error::InvalidArgument(format!(
            "observation {}x{} is not positive",
            bad.width, bad.height
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centroids = kmeans_pp(observations, k, &mut rng);
    let (mut assignments, mut dists) = assign(observations, &centroids);
    let mut history = vec![dists.iter().sum::<f64>()];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iterations {
        iterations += 1;

        let mut sums = vec![(0.0f64, 0.0f64, 0usize); k];
        for (p, &c) in observations.iter().zip(&assignments) {
            sums[c].0 += p.width;
            sums[c].1 += p.height;
            sums[c].2 += 1;
        }
        let mut updated: Vec<AnchorShape> = sums
            .iter()
            .zip(&centroids)
            .map(|(&(sw, sh, n), old)| {
                if n == 0 {
                    *old
                } else {
                    AnchorShape {
                        width: sw / n as f64,
                        height: sh / n as f64,
                    }
                }
            })
            .collect();

        // Empty clusters take the observations farthest from their current centroid.
        let empty: Vec<usize> = (0..k).filter(|&c| sums[c].2 == 0).collect();
        if !empty.is_empty() {
            let mut order: Vec<usize> = (0..observations.len()).collect();
            order.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
            for (c, &obs) in empty.iter().zip(&order) {
                updated[*c] = observations[obs];
            }
        }

        let movement = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| a.sq_dist(b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;

        let (next, next_dists) = assign(observations, &centroids);
        history.push(next_dists.iter().sum());
        let stable = next == assignments;
        assignments = next;
        dists = next_dists;
        if stable || movement < config.tolerance {
            converged = true;
            break;
        }
    }

    let euclidean_sum = dists.iter().map(|d| d.sqrt()).sum();
    Ok(KMeansResult {
        shapes: centroids,
        objective: *history.last().expect("history is never empty"),
        euclidean_sum,
        iterations,
        converged,
        objective_history: history,
        assignments,
    })
}

/// Anchors placed at every cell center of a feature grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorGrid {
    pub cols: u32,
    pub rows: u32,
    /// Image pixels per feature cell.
    pub stride: u32,
    pub shapes: Vec<AnchorShape>,
}

impl AnchorGrid {
    pub fn anchor_count(&self) -> usize {
        self.cols as usize * self.rows as usize * self.shapes.len()
    }

    pub fn cell_center(&self, col: u32, row: u32) -> (f64, f64) {
        let s = f64::from(self.stride);
        ((f64::from(col) + 0.5) * s, (f64::from(row) + 0.5) * s)
    }

    /// Nearest cell center to `(x, y)`, clamped to the grid.
    pub fn nearest_center(&self, x: f64, y: f64) -> (f64, f64) {
        let s = f64::from(self.stride);
        let col = (x / s).floor().clamp(0.0, f64::from(self.cols - 1)) as u32;
        let row = (y / s).floor().clamp(0.0, f64::from(self.rows - 1)) as u32;
        self.cell_center(col, row)
    }

    /// All anchors, row-major over cells, shapes innermost.
    pub fn anchors(&self) -> impl Iterator<Item = Box2D> + '_ {
        (0..self.rows).flat_map(move |row| {
            (0..self.cols).flat_map(move |col| {
                let (cx, cy) = self.cell_center(col, row);
                self.shapes.iter().map(move |s| s.centered_at(cx, cy))
            })
        })
    }
}

pub fn place_anchors(image: ImageDims, stride: u32, shapes: &[AnchorShape]) -> Result<AnchorGrid> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    if stride > image.width || stride > image.height {
        return Err(Error::InvalidArgument(format!("stride {stride} exceeds image {image}")));
    }
    Ok(AnchorGrid {
        cols: image.width / stride,
        rows: image.height / stride,
        stride,
        shapes: shapes.to_vec(),
    })
}

/// Largest possible distance from a point to the nearest cell center: half the
/// diagonal of one cell.
pub fn worst_case_center_distance(stride: f64) -> f64 {
    stride * std::f64::consts::SQRT_2 / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GtCoverage {
    pub best_iou: f64,
    /// Distance to the nearest anchor center, original-image pixels.
    pub center_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageStats {
    pub per_gt: Vec<GtCoverage>,
    pub mean_best_iou: f64,
    pub mean_center_distance: f64,
    pub max_center_distance: f64,
    /// Center distances bucketed over `[0, worst case]`; overflow lands in the last bin.
    pub distance_histogram: Vec<HistogramBin>,
}

pub const HISTOGRAM_BINS: usize = 10;

/// Best-anchor IoU and nearest-anchor distance for each ground-truth box.
///
/// `gt_boxes` are in original-image coordinates; the grid lives in network
/// coordinates, i.e. the original image upsampled by `upsample`. Distances are
/// reported back in original-image pixels.
pub fn coverage_report(gt_boxes: &[Box2D], grid: &AnchorGrid, upsample: f64) -> Result<CoverageStats> {
    if grid.anchor_count() == 0 {
        return Err(Error::InvalidArgument("anchor grid is empty".into()));
    }
    if !(upsample > 0.0 && upsample.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "upsampling factor must be positive, got {upsample}"
        )));
    }

    let per_gt: Vec<GtCoverage> = gt_boxes
        .iter()
        .map(|gt| {
            let net_box = gt.scaled(upsample);
            let (gx, gy) = net_box.center();
            // For a fixed shape, overlap along each axis shrinks as the center
            // moves away, so the nearest cell center maximizes IoU.
            let (ax, ay) = grid.nearest_center(gx, gy);
            let best_iou = grid
                .shapes
                .iter()
                .map(|s| iou(&s.centered_at(ax, ay), &net_box))
                .fold(0.0, f64::max);
            let center_distance = (gx - ax).hypot(gy - ay) / upsample;
            GtCoverage {
                best_iou,
                center_distance,
            }
        })
        .collect();

    let n = per_gt.len();
    let mean = |f: fn(&GtCoverage) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_gt.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let limit = worst_case_center_distance(f64::from(grid.stride)) / upsample;
    let width = limit / HISTOGRAM_BINS as f64;
    let mut distance_histogram: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|i| HistogramBin {
            lower: i as f64 * width,
            upper: (i + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for g in &per_gt {
        let bin = ((g.center_distance / width) as usize).min(HISTOGRAM_BINS - 1);
        distance_histogram[bin].count += 1;
    }

    Ok(CoverageStats {
        mean_best_iou: mean(|g| g.best_iou),
        mean_center_distance: mean(|g| g.center_distance),
        max_center_distance: per_gt.iter().map(|g| g.center_distance).fold(0.0, f64::max),
        distance_histogram,
        per_gt,
    })
}
