//! Forward evaluation of small stride-1 convolutional pipelines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FeatureMap, GridSize};
use crate::resize::bilinear_resize;

/// How a convolution extends its input beyond the border.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mode", content = "pad", rename_all = "snake_case")]
pub enum PaddingMode {
    /// Valid convolution.
    None,
    /// Literal zeros.
    Zero(usize),
    /// Mirror without repeating the border sample: index -1 reads 1, index H reads H-2.
    Reflect(usize),
    /// Wrap modulo the extent.
    Circular(usize),
}

impl PaddingMode {
    pub fn pad(&self) -> usize {
        match *self {
            PaddingMode::None => 0,
            PaddingMode::Zero(p) | PaddingMode::Reflect(p) | PaddingMode::Circular(p) => p,
        }
    }

    pub fn with_pad(&self, pad: usize) -> PaddingMode {
        match self {
            PaddingMode::None => PaddingMode::None,
            PaddingMode::Zero(_) => PaddingMode::Zero(pad),
            PaddingMode::Reflect(_) => PaddingMode::Reflect(pad),
            PaddingMode::Circular(_) => PaddingMode::Circular(pad),
        }
    }

    /// Maps padded coordinate `r` (in `-pad .. n + pad`) to a source index;
    /// `None` for a zero-padding tap.
    #[inline]
    pub fn source_index(&self, r: isize, n: usize) -> Option<usize> {
        let n_i = n as isize;
        if (0..n_i).contains(&r) {
            return Some(r as usize);
        }
        match self {
            PaddingMode::None | PaddingMode::Zero(_) => None,
            PaddingMode::Reflect(_) => {
                let m = if r < 0 { -r } else { 2 * (n_i - 1) - r };
                debug_assert!((0..n_i).contains(&m));
                Some(m as usize)
            }
            PaddingMode::Circular(_) => Some(r.rem_euclid(n_i) as usize),
        }
    }

    /// Source index for every padded coordinate along an axis of extent `n`.
    pub(crate) fn axis_map(&self, n: usize) -> Vec<Option<usize>> {
        let p = self.pad() as isize;
        (-p..n as isize + p).map(|r| self.source_index(r, n)).collect()
    }
}

/// A stride-1 convolution (cross-correlation) layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConvLayerDoc", into = "ConvLayerDoc")]
pub struct ConvLayer {
    out_channels: usize,
    in_channels: usize,
    kernel_h: usize,
    kernel_w: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    padding: PaddingMode,
}

impl ConvLayer {
    /// `weights` are laid out `out x in x kh x kw`; `bias` has one entry per output channel.
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel: (usize, usize),
        weights: Vec<f64>,
        bias: Vec<f64>,
        padding: PaddingMode,
    ) -> Result<Self> {
        let (kernel_h, kernel_w) = kernel;
        if out_channels == 0 || in_channels == 0 || kernel_h == 0 || kernel_w == 0 {
            return Err(Error::Dimension(format!(
                "conv shape {out_channels}x{in_channels}x{kernel_h}x{kernel_w} has a zero extent"
            )));
        }
        let n = out_channels * in_channels * kernel_h * kernel_w;
        if weights.len() != n {
            return Err(Error::Dimension(format!(
                "expected {n} kernel weights, got {}",
                weights.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::Dimension(format!(
                "expected {out_channels} bias entries, got {}",
                bias.len()
            )));
        }
        if let Some(pos) = weights.iter().chain(&bias).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Self {
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            weights,
            bias,
            padding,
        })
    }

    /// Single-channel layer with every weight equal to one.
    pub fn ones(kh: usize, kw: usize, bias: f64, padding: PaddingMode) -> Result<Self> {
        Self::new(1, 1, (kh, kw), vec![1.0; kh * kw], vec![bias], padding)
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.kernel_h, self.kernel_w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn padding(&self) -> PaddingMode {
        self.padding
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize, u: usize, v: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * self.kernel_h + u) * self.kernel_w + v]
    }

    pub fn with_padding(&self, padding: PaddingMode) -> Self {
        Self {
            padding,
            ..self.clone()
        }
    }

    pub fn with_bias(&self, bias: Vec<f64>) -> Result<Self> {
        Self::new(
            self.out_channels,
            self.in_channels,
            (self.kernel_h, self.kernel_w),
            self.weights.clone(),
            bias,
            self.padding,
        )
    }

    /// Output spatial size for an input of `size`, checking every precondition.
    pub fn output_size(&self, size: GridSize) -> Result<GridSize> {
        let pad = self.padding.pad();
        if let PaddingMode::Reflect(p) = self.padding {
            if p >= size.height() || p >= size.width() {
                return Err(Error::ReflectPadTooLarge {
                    pad: p,
                    height: size.height(),
                    width: size.width(),
                });
            }
        }
        let padded_h = size.height() + 2 * pad;
        let padded_w = size.width() + 2 * pad;
        if padded_h < self.kernel_h || padded_w < self.kernel_w {
            return Err(Error::KernelTooLarge {
                kernel_h: self.kernel_h,
                kernel_w: self.kernel_w,
                padded_h,
                padded_w,
            });
        }
        GridSize::new(padded_h - self.kernel_h + 1, padded_w - self.kernel_w + 1)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvLayerDoc {
    out_channels: usize,
    in_channels: usize,
    kernel: [usize; 2],
    weights: Vec<f64>,
    bias: Vec<f64>,
    padding: PaddingMode,
}

impl TryFrom<ConvLayerDoc> for ConvLayer {
    type Error = Error;

    fn try_from(d: ConvLayerDoc) -> Result<Self> {
        ConvLayer::new(
            d.out_channels,
            d.in_channels,
            (d.kernel[0], d.kernel[1]),
            d.weights,
            d.bias,
            d.padding,
        )
    }
}

impl From<ConvLayer> for ConvLayerDoc {
    fn from(l: ConvLayer) -> Self {
        ConvLayerDoc {
            out_channels: l.out_channels,
            in_channels: l.in_channels,
            kernel: [l.kernel_h, l.kernel_w],
            weights: l.weights,
            bias: l.bias,
            padding: l.padding,
        }
    }
}

/// Pointwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Identity,
    LeakyRelu { gamma: f64 },
}

/// Negative slope used by the built-in presets.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

impl Activation {
    pub fn leaky_relu(gamma: f64) -> Result<Self> {
        let a = Activation::LeakyRelu { gamma };
        a.validate()?;
        Ok(a)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Activation::Identity => Ok(()),
            Activation::LeakyRelu { gamma } if (0.0..1.0).contains(&gamma) => Ok(()),
            Activation::LeakyRelu { gamma } => Err(Error::InvalidParameter(format!(
                "LeakyReLU slope must lie in [0, 1), got {gamma}"
            ))),
        }
    }

    #[inline]
    pub fn apply(&self, y: f64) -> f64 {
        match *self {
            Activation::Identity => y,
            Activation::LeakyRelu { gamma } => {
                if y >= 0.0 {
                    y
                } else {
                    gamma * y
                }
            }
        }
    }
}

/// One step of a pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Stage {
    Conv(ConvLayer),
    Act(Activation),
    Upsample { size: GridSize },
}

/// Version tag written into serialized network documents.
pub const NETWORK_SCHEMA: &str = "padlab.network/v1";

/// An ordered pipeline of stages with a declared input channel count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkDoc", into = "NetworkDoc")]
pub struct NetworkSpec {
    input_channels: usize,
    stages: Vec<Stage>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    schema: String,
    input_channels: usize,
    stages: Vec<Stage>,
}

impl TryFrom<NetworkDoc> for NetworkSpec {
    type Error = Error;

    fn try_from(d: NetworkDoc) -> Result<Self> {
        if d.schema != NETWORK_SCHEMA {
            return Err(Error::Unsupported(format!(
                "network schema '{}' (expected '{NETWORK_SCHEMA}')",
                d.schema
            )));
        }
        NetworkSpec::new(d.input_channels, d.stages)
    }
}

impl From<NetworkSpec> for NetworkDoc {
    fn from(n: NetworkSpec) -> Self {
        NetworkDoc {
            schema: NETWORK_SCHEMA.to_string(),
            input_channels: n.input_channels,
            stages: n.stages,
        }
    }
}

impl NetworkSpec {
    /// Validates channel chaining and activation slopes.
    pub fn new(input_channels: usize, stages: Vec<Stage>) -> Result<Self> {
        if input_channels == 0 {
            return Err(Error::Dimension("network needs at least one input channel".into()));
        }
        let mut channels = input_channels;
        for (index, stage) in stages.iter().enumerate() {
            let wrap = |e| Error::Stage {
                index,
                source: Box::new(e),
            };
            match stage {
                Stage::Conv(layer) => {
                    if layer.in_channels() != channels {
                        return Err(wrap(Error::ChannelMismatch {
                            expected: layer.in_channels(),
                            actual: channels,
                        }));
                    }
                    channels = layer.out_channels();
                }
                Stage::Act(a) => a.validate().map_err(wrap)?,
                Stage::Upsample { .. } => {}
            }
        }
        Ok(Self {
            input_channels,
            stages,
        })
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn output_channels(&self) -> usize {
        self.stages
            .iter()
            .rev()
            .find_map(|s| match s {
                Stage::Conv(l) => Some(l.out_channels()),
                _ => None,
            })
            .unwrap_or(self.input_channels)
    }

    /// True when every activation is the identity.
    pub fn is_linear(&self) -> bool {
        self.stages
            .iter()
            .all(|s| !matches!(s, Stage::Act(Activation::LeakyRelu { .. })))
    }

    /// Spatial size entering each stage, followed by the final size.
    pub fn stage_sizes(&self, input: GridSize) -> Result<Vec<GridSize>> {
        let mut sizes = Vec::with_capacity(self.stages.len() + 1);
        let mut size = input;
        sizes.push(size);
        for (index, stage) in self.stages.iter().enumerate() {
            size = match stage {
                Stage::Conv(layer) => layer.output_size(size).map_err(|e| Error::Stage {
                    index,
                    source: Box::new(e),
                })?,
                Stage::Act(_) => size,
                Stage::Upsample { size } => *size,
            };
            sizes.push(size);
        }
        Ok(sizes)
    }

    pub fn output_size(&self, input: GridSize) -> Result<GridSize> {
        Ok(*self.stage_sizes(input)?.last().expect("non-empty"))
    }
}

/// Stride-1 cross-correlation with the layer's padding.
pub fn conv2d(input: &FeatureMap, layer: &ConvLayer) -> Result<FeatureMap> {
    if input.channels() != layer.in_channels() {
        return Err(Error::ChannelMismatch {
            expected: layer.in_channels(),
            actual: input.channels(),
        });
    }
    let out_size = layer.output_size(input.size())?;
    let rows = layer.padding().axis_map(input.height());
    let cols = layer.padding().axis_map(input.width());
    let (kh, kw) = layer.kernel();
    let (h, w) = (input.height(), input.width());
    let x = input.values();
    let mut out = Vec::with_capacity(layer.out_channels() * out_size.area());
    for o in 0..layer.out_channels() {
        for i in 0..out_size.height() {
            for j in 0..out_size.width() {
                let mut acc = layer.bias()[o];
                for c in 0..layer.in_channels() {
                    let plane = &x[c * h * w..(c + 1) * h * w];
                    for u in 0..kh {
                        let Some(r) = rows[i + u] else { continue };
                        let line = &plane[r * w..(r + 1) * w];
                        for v in 0..kw {
                            if let Some(s) = cols[j + v] {
                                acc += layer.weight(o, c, u, v) * line[s];
                            }
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    FeatureMap::from_values(layer.out_channels(), out_size, out)
}

pub fn activate(input: &FeatureMap, act: Activation) -> Result<FeatureMap> {
    match act {
        Activation::Identity => Ok(input.clone()),
        _ => input.map(|v| act.apply(v)),
    }
}

/// Applies every stage in order. Errors carry the failing stage index.
pub fn forward(net: &NetworkSpec, input: &FeatureMap) -> Result<FeatureMap> {
    if input.channels() != net.input_channels() {
        return Err(Error::ChannelMismatch {
            expected: net.input_channels(),
            actual: input.channels(),
        });
    }
    let mut x = input.clone();
    for (index, stage) in net.stages().iter().enumerate() {
        let y = match stage {
            Stage::Conv(layer) => conv2d(&x, layer),
            Stage::Act(a) => activate(&x, *a),
            Stage::Upsample { size } => bilinear_resize(&x, *size),
        };
        x = y.map_err(|e| Error::Stage {
            index,
            source: Box::new(e),
        })?;
    }
    Ok(x)
}

/// A padding-free rewrite of a zero-padded pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct StrippedNet {
    pub net: NetworkSpec,
    /// Input size the rewritten net must be fed.
    pub input_size: GridSize,
    /// Output size, equal to the original net's output at its original input size.
    pub final_size: GridSize,
}

/// Removes all zero padding from `net` (evaluated at `input_size`).
///
/// Every conv becomes a valid conv. Each upsample target grows to absorb the
/// shrinkage of the convs after it, and the convs before the first upsample
/// are fed a larger input instead. Sizes entering each upsample are left as in
/// the original net.
pub fn strip_padding(net: &NetworkSpec, input_size: GridSize) -> Result<StrippedNet> {
    let sizes = net.stage_sizes(input_size)?;
    let final_size = *sizes.last().expect("non-empty");
    let mut stages = net.stages().to_vec();
    let (mut need_h, mut need_w) = (final_size.height(), final_size.width());
    for index in (0..stages.len()).rev() {
        match &mut stages[index] {
            Stage::Conv(layer) => {
                match layer.padding() {
                    PaddingMode::None | PaddingMode::Zero(_) => {}
                    other => {
                        return Err(Error::Stage {
                            index,
                            source: Box::new(Error::Unsupported(format!(
                                "cannot strip {other:?} padding, only zero padding"
                            ))),
                        })
                    }
                }
                *layer = layer.with_padding(PaddingMode::None);
                let (kh, kw) = layer.kernel();
                need_h += kh - 1;
                need_w += kw - 1;
            }
            Stage::Act(_) => {}
            Stage::Upsample { size } => {
                *size = GridSize::new(need_h, need_w)?;
                need_h = sizes[index].height();
                need_w = sizes[index].width();
            }
        }
    }
    Ok(StrippedNet {
        net: NetworkSpec::new(net.input_channels(), stages)?,
        input_size: GridSize::new(need_h, need_w)?,
        final_size,
    })
}
