//! Layer-by-layer CNN shape arithmetic: activation dimensions, cumulative
//! feature stride, ROI pooling, input resizing and an activation-memory model.
//!
//! Convolutions use floor-mode output sizes and pooling layers use ceil-mode,
//! as in Caffe:
//!
//! ```text
//! conv: out = floor((in + 2*pad - kernel) / stride) + 1
//! pool: out = ceil((in + 2*pad - kernel) / stride) + 1
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Box2D, ImageDims};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Pool,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Conv => "conv",
            LayerKind::Pool => "pool",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub kernel: u32,
    pub stride: u32,
    pub padding: u32,
    pub output_channels: u32,
}

impl LayerSpec {
    pub fn conv(name: &str, kernel: u32, stride: u32, padding: u32, channels: u32) -> Self {
        LayerSpec {
            name: name.to_string(),
            kind: LayerKind::Conv,
            kernel,
            stride,
            padding,
            output_channels: channels,
        }
    }

    pub fn pool(name: &str, kernel: u32, stride: u32, channels: u32) -> Self {
        LayerSpec {
            name: name.to_string(),
            kind: LayerKind::Pool,
            kernel,
            stride,
            padding: 0,
            output_channels: channels,
        }
    }

    /// Output length along one axis, or `None` if the layer collapses it.
    pub fn output_len(&self, input: u32) -> Option<u32> {
        let span = i64::from(input) + 2 * i64::from(self.padding) - i64::from(self.kernel);
        let stride = i64::from(self.stride);
        let out = match self.kind {
            LayerKind::Conv => span.div_euclid(stride) + 1,
            LayerKind::Pool => {
                let mut out = (span + stride - 1).div_euclid(stride) + 1;
                // the last window must start inside the (left-padded) input
                if self.padding > 0 && (out - 1) * stride >= i64::from(input) + i64::from(self.padding) {
                    out -= 1;
                }
                out
            }
        };
        u32::try_from(out).ok().filter(|&o| o >= 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

impl NetSpec {
    pub fn new(name: impl Into<String>, layers: Vec<LayerSpec>) -> Result<Self> {
        let name = name.into();
        if layers.is_empty() {
            return Err(Error::InvalidArgument(format!("network `{name}` has no layers")));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.kernel == 0 || l.stride == 0 {
                return Err(Error::InvalidArgument(format!(
                    "layer `{}` needs kernel >= 1 and stride >= 1",
                    l.name
                )));
            }
            if layers[..i].iter().any(|o| o.name == l.name) {
                return Err(Error::InvalidArgument(format!("duplicate layer name `{}`", l.name)));
            }
        }
        Ok(NetSpec { name, layers })
    }

    pub fn layer_index(&self, layer: &str) -> Result<usize> {
        self.layers
            .iter()
            .position(|l| l.name == layer)
            .ok_or_else(|| Error::UnknownLayer {
                net: self.name.clone(),
                layer: layer.to_string(),
            })
    }
}

pub const BUILTIN_NETS: [&str; 2] = ["vgg16", "alexnet"];

fn vgg16() -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let blocks: [(u32, u32); 5] = [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)];
    for (b, &(convs, channels)) in blocks.iter().enumerate() {
        for c in 1..=convs {
            layers.push(LayerSpec::conv(&format!("conv{}_{}", b + 1, c), 3, 1, 1, channels));
        }
        layers.push(LayerSpec::pool(&format!("pool{}", b + 1), 2, 2, channels));
    }
    layers
}

fn alexnet() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv("conv1", 11, 4, 1, 96),
        LayerSpec::pool("pool1", 3, 2, 96),
        LayerSpec::conv("conv2", 5, 1, 2, 256),
        LayerSpec::pool("pool2", 3, 2, 256),
        LayerSpec::conv("conv3", 3, 1, 1, 384),
        LayerSpec::conv("conv4", 3, 1, 1, 384),
        LayerSpec::conv("conv5", 3, 1, 1, 256),
        LayerSpec::pool("pool5", 3, 2, 256),
    ]
}

/// `vgg16` (13 conv + 5 pool, through pool5) or `alexnet` (5 conv + 3 pool).
pub fn builtin_net(name: &str) -> Result<NetSpec> {
    let layers = match name.to_ascii_lowercase().as_str() {
        "vgg16" => vgg16(),
        "alexnet" => alexnet(),
        _ => return Err(Error::UnknownNet(name.to_string())),
    };
    NetSpec::new(name.to_ascii_lowercase(), layers)
}

/// Conventional input size for a builtin network (227 for AlexNet, 224 otherwise).
pub fn canonical_input(net: &NetSpec) -> ImageDims {
    if net.name == "alexnet" {
        ImageDims::new(227, 227)
    } else {
        ImageDims::new(224, 224)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    pub name: String,
    pub kind: LayerKind,
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    /// Product of the strides of this and all earlier layers.
    pub cumulative_stride: u32,
    /// Activation elements `width * height * channels`.
    pub elements: u64,
}

impl LayerReport {
    pub fn activation_bytes(&self, bytes_per_element: u64) -> u64 {
        self.elements * bytes_per_element
    }
}

pub fn layer_dims(net: &NetSpec, input: ImageDims) -> Result<Vec<LayerReport>> {
    dims_for_layers(&net.layers, input)
}

fn dims_for_layers(layers: &[LayerSpec], input: ImageDims) -> Result<Vec<LayerReport>> {
    let (mut w, mut h) = (input.width, input.height);
    if w == 0 || h == 0 {
        return Err(Error::InvalidArgument(format!("input {input} must be at least 1x1")));
    }
    let mut stride = 1u32;
    let mut out = Vec::with_capacity(layers.len());
    for layer in layers {
        let (nw, nh) = match (layer.output_len(w), layer.output_len(h)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                let raw = |len: u32| {
                    (i64::from(len) + 2 * i64::from(layer.padding) - i64::from(layer.kernel))
                        .div_euclid(i64::from(layer.stride))
                        + 1
                };
                return Err(Error::EmptyLayerOutput {
                    layer: layer.name.clone(),
                    width: raw(w),
                    height: raw(h),
                });
            }
        };
        w = nw;
        h = nh;
        stride *= layer.stride;
        out.push(LayerReport {
            name: layer.name.clone(),
            kind: layer.kind,
            width: w,
            height: h,
            channels: layer.output_channels,
            cumulative_stride: stride,
            elements: u64::from(w) * u64::from(h) * u64::from(layer.output_channels),
        });
    }
    Ok(out)
}

pub fn feature_stride(net: &NetSpec, layer: &str) -> Result<u32> {
    let idx = net.layer_index(layer)?;
    Ok(net.layers[..=idx].iter().map(|l| l.stride).product())
}

/// ROI pooling output grid for the layers used as detector features.
pub fn roi_pool_window(net: &NetSpec, layer: &str) -> Result<(u32, u32)> {
    match (net.name.as_str(), layer) {
        ("vgg16", "conv5_3") => Ok((7, 7)),
        ("vgg16", "conv4_3") => Ok((13, 13)),
        ("alexnet", "conv5") => Ok((6, 6)),
        _ => Err(Error::InvalidArgument(format!(
            "no ROI pooling window defined for {}/{layer}",
            net.name
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResizePolicy {
    /// Scale so the longer side has exactly this many pixels.
    LongSide(u32),
    Scale(f64),
}

/// Returns the resized dimensions and the scale applied. The aspect ratio is
/// kept and the resized side lengths are rounded to the nearest pixel.
pub fn resize_for_input(image: ImageDims, policy: ResizePolicy) -> Result<(ImageDims, f64)> {
    if image.width == 0 || image.height == 0 {
        return Err(Error::InvalidArgument(format!("image {image} must be non-empty")));
    }
    let (w, h) = (f64::from(image.width), f64::from(image.height));
    let (dims, scale) = match policy {
        ResizePolicy::LongSide(long) => {
            if long == 0 {
                return Err(Error::InvalidArgument("long side must be positive".into()));
            }
            let scale = f64::from(long) / w.max(h);
            let short = |side: f64| (side * scale).round().max(1.0) as u32;
            let dims = if image.width >= image.height {
                ImageDims::new(long, short(h))
            } else {
                ImageDims::new(short(w), long)
            };
            (dims, scale)
        }
        ResizePolicy::Scale(scale) => {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
            }
            let side = |v: f64| (v * scale).round().max(1.0) as u32;
            (ImageDims::new(side(w), side(h)), scale)
        }
    };
    Ok((dims, scale))
}

/// Activation bytes of every layer up to and including `up_to_layer`, times
/// `training_multiplier` (2 accounts for stored activations plus gradients).
/// Weights, workspace and detector heads are not counted.
pub fn estimate_activation_memory(
    net: &NetSpec,
    up_to_layer: &str,
    input: ImageDims,
    bytes_per_element: u64,
    training_multiplier: f64,
) -> Result<f64> {
    let idx = net.layer_index(up_to_layer)?;
    let reports = dims_for_layers(&net.layers[..=idx], input)?;
    let bytes: u64 = reports.iter().map(|r| r.activation_bytes(bytes_per_element)).sum();
    Ok(bytes as f64 * training_multiplier)
}

/// Dense activation volume indexed `[channel][row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        FeatureMap {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_fn(width: usize, height: usize, channels: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        FeatureMap {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }
}

/// Half-open cell range `[floor(start), ceil(end))` clipped to `[0, limit)`.
fn bin_range(start: f64, end: f64, limit: usize) -> (usize, usize) {
    let lo = start.floor().clamp(0.0, limit as f64) as usize;
    let hi = end.ceil().clamp(0.0, limit as f64) as usize;
    (lo, hi)
}

/// Max-pools the region `roi` (image pixels) of `features` into a fixed
/// `output = (width, height)` grid.
///
/// The region is projected onto the feature grid by dividing by `stride`, then
/// split evenly into bins. A bin that falls entirely outside the grid yields 0.
pub fn roi_pool(features: &FeatureMap, roi: &Box2D, stride: f64, output: (usize, usize)) -> Result<FeatureMap> {
    let (out_w, out_h) = output;
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidArgument("ROI pooling output must be at least 1x1".into()));
    }
    if !(stride > 0.0 && stride.is_finite()) {
        return Err(Error::InvalidArgument(format!("stride must be positive, got {stride}")));
    }
    let proj = roi.scaled(1.0 / stride);
    if !proj.has_positive_area() {
        return Err(Error::InvalidArgument(format!("ROI {roi:?} has no area")));
    }
    let grid = Box2D::new(0.0, 0.0, features.width as f64, features.height as f64);
    if proj.intersection_area(&grid) <= 0.0 {
        return Err(Error::RoiOutside);
    }

    let (rw, rh) = (proj.width(), proj.height());
    let mut out = FeatureMap::zeros(out_w, out_h, features.channels);
    for py in 0..out_h {
        let (y0, y1) = bin_range(
            proj.top + py as f64 * rh / out_h as f64,
            proj.top + (py + 1) as f64 * rh / out_h as f64,
            features.height,
        );
        for px in 0..out_w {
            let (x0, x1) = bin_range(
                proj.left + px as f64 * rw / out_w as f64,
                proj.left + (px + 1) as f64 * rw / out_w as f64,
                features.width,
            );
            if y0 >= y1 || x0 >= x1 {
                continue;
            }
            for c in 0..features.channels {
                let mut best = f64::NEG_INFINITY;
                for y in y0..y1 {
                    for x in x0..x1 {
                        best = best.max(features.get(c, y, x));
                    }
                }
                out.set(c, py, px, best);
            }
        }
    }
    Ok(out)
}
