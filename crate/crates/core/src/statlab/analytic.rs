//! Exact moments of linear pipelines.
//!
//! Every output of a pipeline without nonlinearities is an affine form
//! `constant + sum_k coeff_k * x_k` in the i.i.d. N(0, 1) input variables. We
//! build that form by composing per-stage index maps: a zero-padding tap reads
//! the null variable, a reflect tap reads the mirrored variable, a circular tap
//! reads the wrapped variable. Then `E[y_a] = constant_a` and
//! `E[y_a y_b] = constant_a * constant_b + sum over shared variables of
//! coefficient products`.

use crate::convnet::{conv2d, Activation, ConvLayer, NetworkSpec, Stage};
use crate::error::{Error, Result};
use crate::grid::{FeatureMap, GridSize};
use crate::resize::{axis_taps, bilinear_weights};

use super::{AutocorrMap, OffsetSet};

/// Affine form of one feature value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineRow {
    pub constant: f64,
    /// `(input variable id, coefficient)`, sorted by id. The id is the flat
    /// channel-major index into the input map.
    pub terms: Vec<(u32, f64)>,
    /// Coefficient on the null variable (taps that landed in zero padding).
    /// The null variable is identically zero, so this never enters a moment.
    pub null_coeff: f64,
}

impl AffineRow {
    fn input(id: u32) -> Self {
        Self {
            constant: 0.0,
            terms: vec![(id, 1.0)],
            null_coeff: 0.0,
        }
    }

    /// `sum_k coeff_k^2`, the variance of the form.
    pub fn variance(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c * c).sum()
    }
}

/// Sum of coefficient products over variables shared by both rows.
fn shared_dot(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut p, mut q) = (0, 0);
    let mut acc = 0.0;
    while p < a.len() && q < b.len() {
        match a[p].0.cmp(&b[q].0) {
            std::cmp::Ordering::Less => p += 1,
            std::cmp::Ordering::Greater => q += 1,
            std::cmp::Ordering::Equal => {
                acc += a[p].1 * b[q].1;
                p += 1;
                q += 1;
            }
        }
    }
    acc
}

/// Dense scratch row for accumulating a linear combination of sparse rows.
struct Scratch {
    acc: Vec<f64>,
    hit: Vec<bool>,
    touched: Vec<u32>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            acc: vec![0.0; n],
            hit: vec![false; n],
            touched: Vec::new(),
        }
    }

    fn add(&mut self, row: &AffineRow, w: f64) {
        for &(id, c) in &row.terms {
            let k = id as usize;
            if !self.hit[k] {
                self.hit[k] = true;
                self.touched.push(id);
            }
            self.acc[k] += w * c;
        }
    }

    fn drain(&mut self) -> Vec<(u32, f64)> {
        self.touched.sort_unstable();
        let mut terms = Vec::with_capacity(self.touched.len());
        for &id in &self.touched {
            let k = id as usize;
            if self.acc[k] != 0.0 {
                terms.push((id, self.acc[k]));
            }
            self.acc[k] = 0.0;
            self.hit[k] = false;
        }
        self.touched.clear();
        terms
    }
}

/// The whole linear pipeline as one large-kernel operator on its input.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCoeffMap {
    pub input_channels: usize,
    pub input_size: GridSize,
    pub channels: usize,
    pub size: GridSize,
    rows: Vec<AffineRow>,
}

impl LinearCoeffMap {
    /// Composes every stage of `net`. Fails on any nonlinear activation.
    pub fn build(net: &NetworkSpec, input_size: GridSize) -> Result<Self> {
        net.output_size(input_size)?;
        let n_vars = net.input_channels() * input_size.area();
        let mut rows: Vec<AffineRow> = (0..n_vars as u32).map(AffineRow::input).collect();
        let mut channels = net.input_channels();
        let mut size = input_size;
        let mut scratch = Scratch::new(n_vars);
        for (index, stage) in net.stages().iter().enumerate() {
            match stage {
                Stage::Conv(layer) => {
                    let out = layer.output_size(size)?;
                    rows = conv_rows(layer, &rows, size, out, &mut scratch);
                    channels = layer.out_channels();
                    size = out;
                }
                Stage::Act(Activation::Identity) => {}
                Stage::Act(a) => {
                    return Err(Error::Stage {
                        index,
                        source: Box::new(Error::Unsupported(format!(
                            "nonlinear activation {a:?} has no exact linear moments; use Monte Carlo"
                        ))),
                    })
                }
                Stage::Upsample { size: target } => {
                    rows = upsample_rows(&rows, channels, size, *target, &mut scratch);
                    size = *target;
                }
            }
        }
        Ok(Self {
            input_channels: net.input_channels(),
            input_size,
            channels,
            size,
            rows,
        })
    }

    pub fn row(&self, c: usize, i: usize, j: usize) -> &AffineRow {
        &self.rows[(c * self.size.height() + i) * self.size.width() + j]
    }

    pub fn expectation(&self, a: (usize, usize, usize)) -> f64 {
        self.row(a.0, a.1, a.2).constant
    }

    /// Raw second moment `E[y_a y_b]`.
    pub fn correlation(&self, a: (usize, usize, usize), b: (usize, usize, usize)) -> f64 {
        let (ra, rb) = (self.row(a.0, a.1, a.2), self.row(b.0, b.1, b.2));
        ra.constant * rb.constant + shared_dot(&ra.terms, &rb.terms)
    }
}

fn conv_rows(
    layer: &ConvLayer,
    rows: &[AffineRow],
    size: GridSize,
    out: GridSize,
    scratch: &mut Scratch,
) -> Vec<AffineRow> {
    let rmap = layer.padding().axis_map(size.height());
    let cmap = layer.padding().axis_map(size.width());
    let (kh, kw) = layer.kernel();
    let mut next = Vec::with_capacity(layer.out_channels() * out.area());
    for o in 0..layer.out_channels() {
        for i in 0..out.height() {
            for j in 0..out.width() {
                let mut constant = layer.bias()[o];
                let mut null_coeff = 0.0;
                for c in 0..layer.in_channels() {
                    for u in 0..kh {
                        for v in 0..kw {
                            let w = layer.weight(o, c, u, v);
                            match (rmap[i + u], cmap[j + v]) {
                                (Some(r), Some(s)) => {
                                    let src = &rows[(c * size.height() + r) * size.width() + s];
                                    constant += w * src.constant;
                                    null_coeff += w * src.null_coeff;
                                    scratch.add(src, w);
                                }
                                _ => null_coeff += w,
                            }
                        }
                    }
                }
                next.push(AffineRow {
                    constant,
                    terms: scratch.drain(),
                    null_coeff,
                });
            }
        }
    }
    next
}

fn upsample_rows(
    rows: &[AffineRow],
    channels: usize,
    size: GridSize,
    target: GridSize,
    scratch: &mut Scratch,
) -> Vec<AffineRow> {
    let rtaps = axis_taps(size.height(), target.height());
    let ctaps = axis_taps(size.width(), target.width());
    let mut next = Vec::with_capacity(channels * target.area());
    for c in 0..channels {
        for rt in &rtaps {
            for ct in &ctaps {
                let mut constant = 0.0;
                let mut null_coeff = 0.0;
                for ((r, s), w) in bilinear_weights(*rt, *ct) {
                    if w == 0.0 {
                        continue;
                    }
                    let src = &rows[(c * size.height() + r) * size.width() + s];
                    constant += w * src.constant;
                    null_coeff += w * src.null_coeff;
                    scratch.add(src, w);
                }
                next.push(AffineRow {
                    constant,
                    terms: scratch.drain(),
                    null_coeff,
                });
            }
        }
    }
    next
}

/// Exact moments of a linear pipeline in the same layout as a Monte Carlo report.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticMoments {
    pub expectation: FeatureMap,
    pub variance: FeatureMap,
    pub autocorr: Vec<AutocorrMap>,
    pub coeffs: LinearCoeffMap,
}

pub fn analytic_moments(
    net: &NetworkSpec,
    input_size: GridSize,
    offsets: &OffsetSet,
) -> Result<AnalyticMoments> {
    let coeffs = LinearCoeffMap::build(net, input_size)?;
    let (channels, size) = (coeffs.channels, coeffs.size);
    offsets.check_within(size)?;
    let expectation = FeatureMap::from_fn(channels, size, |c, i, j| coeffs.expectation((c, i, j)))?;
    let variance = FeatureMap::from_fn(channels, size, |c, i, j| coeffs.row(c, i, j).variance())?;
    let mut autocorr = Vec::with_capacity(offsets.as_slice().len());
    for o in offsets.as_slice() {
        let (origin, ext) = o.overlap(size)?;
        let values = FeatureMap::from_fn(channels, ext, |c, r, s| {
            let (i, j) = (r + origin.0, s + origin.1);
            let (i2, j2) = ((i as i64 + o.di) as usize, (j as i64 + o.dj) as usize);
            coeffs.correlation((c, i, j), (c, i2, j2))
        })?;
        autocorr.push(AutocorrMap {
            offset: *o,
            origin,
            values,
        });
    }
    Ok(AnalyticMoments {
        expectation,
        variance,
        autocorr,
        coeffs,
    })
}

fn std_normal_pdf(a: f64) -> f64 {
    (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_normal_cdf(a: f64) -> f64 {
    0.5 * libm::erfc(-a / std::f64::consts::SQRT_2)
}

/// `E[LeakyReLU_gamma(Y)]` for `Y ~ N(mu, sigma^2)`.
///
/// `mu (Phi(a) + gamma Phi(-a)) + (1 - gamma) sigma phi(a)` with `a = mu / sigma`;
/// at `mu = 0` this is `(1 - gamma) sigma / sqrt(2 pi)`.
pub(crate) fn leaky_relu_gaussian_mean(mu: f64, sigma: f64, gamma: f64) -> f64 {
    if sigma == 0.0 {
        return if mu >= 0.0 { mu } else { gamma * mu };
    }
    let a = mu / sigma;
    mu * (std_normal_cdf(a) + gamma * std_normal_cdf(-a)) + (1.0 - gamma) * sigma * std_normal_pdf(a)
}

/// Closed-form expectation of `conv2 -> LeakyReLU(gamma) -> conv1` applied to
/// i.i.d. N(0, 1) input. Each layer-1 output is Gaussian with mean equal to its
/// bias and variance equal to the sum of its squared non-padding tap weights,
/// so its post-activation mean is known exactly; layer 2 is linear.
///
/// Only single-channel layers are accepted.
pub fn two_layer_expectation(
    layer1: &ConvLayer,
    gamma: f64,
    layer2: &ConvLayer,
    input_size: GridSize,
) -> Result<FeatureMap> {
    for (name, l) in [("layer 1", layer1), ("layer 2", layer2)] {
        if l.in_channels() != 1 || l.out_channels() != 1 {
            return Err(Error::Unsupported(format!(
                "{name} has {}->{} channels; the closed form covers single-channel layers only",
                l.in_channels(),
                l.out_channels()
            )));
        }
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "LeakyReLU slope must lie in [0, 1], got {gamma}"
        )));
    }
    let first = NetworkSpec::new(1, vec![Stage::Conv(layer1.clone())])?;
    let coeffs = LinearCoeffMap::build(&first, input_size)?;
    let hidden_mean = FeatureMap::from_fn(1, coeffs.size, |c, i, j| {
        let row = coeffs.row(c, i, j);
        leaky_relu_gaussian_mean(row.constant, row.variance().sqrt(), gamma)
    })?;
    // Expectation commutes with the linear second layer, padding included.
    conv2d(&hidden_mean, layer2)
}

/// Checks that adding a constant `bias` to the output of a zero-bias linear
/// pipeline shifts every autocorrelation by exactly `bias^2`. Returns the
/// largest `|R_with(a, d) - R_without(a, d) - bias^2|`.
pub fn bias_shift_check(
    net: &NetworkSpec,
    input_size: GridSize,
    offsets: &OffsetSet,
    bias: f64,
) -> Result<f64> {
    let zeroed: Vec<Stage> = net
        .stages()
        .iter()
        .map(|s| match s {
            Stage::Conv(l) => l.with_bias(vec![0.0; l.out_channels()]).map(Stage::Conv),
            other => Ok(other.clone()),
        })
        .collect::<Result<_>>()?;
    let last_conv = zeroed
        .iter()
        .rposition(|s| matches!(s, Stage::Conv(_)))
        .ok_or_else(|| Error::InvalidParameter("network has no convolution to bias".into()))?;
    let mut biased = zeroed.clone();
    if let Stage::Conv(l) = &biased[last_conv] {
        biased[last_conv] = Stage::Conv(l.with_bias(vec![bias; l.out_channels()])?);
    }
    let without = analytic_moments(&NetworkSpec::new(net.input_channels(), zeroed)?, input_size, offsets)?;
    let with = analytic_moments(&NetworkSpec::new(net.input_channels(), biased)?, input_size, offsets)?;
    let shift = bias * bias;
    let mut worst: f64 = 0.0;
    for (a, b) in with.autocorr.iter().zip(&without.autocorr) {
        for (x, y) in a.values.values().iter().zip(b.values.values()) {
            worst = worst.max((x - y - shift).abs());
        }
    }
    Ok(worst)
}
