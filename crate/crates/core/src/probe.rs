//! Linear readout of position from per-location feature statistics.
//!
//! Each location is described by the mean and standard deviation of every
//! output channel across Monte Carlo samples. A ridge regression maps that
//! vector to the location's normalized Cartesian coordinates
//! `2 * (i / H - 1/2), 2 * (j / W - 1/2)`; held-out R² measures how much
//! position the statistics reveal.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::convnet::NetworkSpec;
use crate::error::{Error, Result};
use crate::grid::{FeatureMap, GridSize};
use crate::posenc::csg;
use crate::statlab::{run_samples, SamplingPlan};

/// Per-location statistics: channels `0..C` hold means, `C..2C` standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationStats {
    pub features: FeatureMap,
    pub samples: usize,
}

impl LocationStats {
    pub fn size(&self) -> GridSize {
        self.features.size()
    }

    pub fn dim(&self) -> usize {
        self.features.channels()
    }
}

/// Mean and standard deviation of each output channel at each location, from
/// the same sample stream [`estimate_moments`](crate::statlab::estimate_moments) uses.
pub fn location_statistics(
    net: &NetworkSpec,
    input_size: GridSize,
    plan: &SamplingPlan,
) -> Result<LocationStats> {
    let out = net.output_size(input_size)?;
    let channels = net.output_channels();
    let n = channels * out.area();
    let acc = run_samples(net, input_size, plan, n, |y, obs| obs.extend_from_slice(y.values()))?;
    let mut values = acc.mean().to_vec();
    values.extend(acc.variance().into_iter().map(f64::sqrt));
    Ok(LocationStats {
        features: FeatureMap::from_values(2 * channels, out, values)?,
        samples: plan.samples,
    })
}

/// Partition of locations into training and held-out sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationSplit {
    /// Train where `(i + j)` is even, hold out where it is odd.
    Checkerboard,
    /// Row-major mask, `true` marks a training location.
    Mask(Vec<bool>),
}

impl LocationSplit {
    fn is_train(&self, size: GridSize, i: usize, j: usize) -> bool {
        match self {
            LocationSplit::Checkerboard => (i + j).is_multiple_of(2),
            LocationSplit::Mask(m) => m[i * size.width() + j],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub lambda: f64,
    pub split: LocationSplit,
    /// One row per feature, one column per target coordinate.
    pub coefficients: Vec<[f64; 2]>,
    pub intercept: [f64; 2],
    /// Held-out R² for the row and column coordinate.
    pub r_squared: [f64; 2],
    /// Mean squared error (both coordinates summed) over training locations.
    pub train_mse: f64,
    /// Predicted coordinates at every location (2 channels).
    pub predictions: FeatureMap,
    /// Squared prediction error at every location, summed over both coordinates.
    pub error_map: FeatureMap,
}

impl ProbeResult {
    /// True when each of the four corner locations has an error no larger than
    /// any non-corner location.
    pub fn corners_minimal(&self) -> bool {
        let e = &self.error_map;
        let (h, w) = (e.height(), e.width());
        let corners = [(0, 0), (0, w - 1), (h - 1, 0), (h - 1, w - 1)];
        let worst_corner = corners.iter().map(|&(i, j)| e.get(0, i, j)).fold(f64::MIN, f64::max);
        (0..h)
            .flat_map(|i| (0..w).map(move |j| (i, j)))
            .filter(|loc| !corners.contains(loc))
            .all(|(i, j)| worst_corner <= e.get(0, i, j))
    }

    /// R² per coordinate over the locations selected by `keep`.
    pub fn r_squared_where(&self, keep: impl Fn(usize, usize) -> bool) -> Result<[f64; 2]> {
        let size = self.predictions.size();
        let targets = csg(size)?;
        let mut out = [0.0; 2];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut truth = Vec::new();
            let mut pred = Vec::new();
            for i in 0..size.height() {
                for j in 0..size.width() {
                    if keep(i, j) {
                        truth.push(targets.get(k, i, j));
                        pred.push(self.predictions.get(k, i, j));
                    }
                }
            }
            *slot = r_squared(&truth, &pred)?;
        }
        Ok(out)
    }
}

fn r_squared(truth: &[f64], pred: &[f64]) -> Result<f64> {
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::InvalidParameter(
            "R² undefined: evaluation locations share one coordinate".into(),
        ));
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Closed-form ridge fit from location statistics to normalized coordinates.
/// The intercept is not penalized.
pub fn fit_probe(stats: &LocationStats, lambda: f64, split: &LocationSplit) -> Result<ProbeResult> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ridge strength must be finite and non-negative, got {lambda}"
        )));
    }
    let size = stats.size();
    if let LocationSplit::Mask(m) = split {
        if m.len() != size.area() {
            return Err(Error::Dimension(format!(
                "split mask has {} entries for a {size} grid",
                m.len()
            )));
        }
    }
    let p = stats.dim();
    let targets = csg(size)?;
    let locations: Vec<(usize, usize)> = (0..size.height())
        .flat_map(|i| (0..size.width()).map(move |j| (i, j)))
        .collect();
    let (train, held): (Vec<_>, Vec<_>) = locations
        .iter()
        .partition(|&&(i, j)| split.is_train(size, i, j));
    if train.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "probe needs at least 4 training locations, got {}",
            train.len()
        )));
    }
    if held.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "probe needs at least 2 held-out locations, got {}",
            held.len()
        )));
    }

    let feat = |&(i, j): &(usize, usize)| stats.features.location(i, j);
    let n = train.len() as f64;
    let mut x_mean = vec![0.0; p];
    let mut y_mean = [0.0; 2];
    for loc in &train {
        for (m, v) in x_mean.iter_mut().zip(feat(loc)) {
            *m += v / n;
        }
        for (k, m) in y_mean.iter_mut().enumerate() {
            *m += targets.get(k, loc.0, loc.1) / n;
        }
    }
    let xc = DMatrix::from_fn(train.len(), p, |r, c| feat(&train[r])[c] - x_mean[c]);
    let gram = xc.transpose() * &xc;
    let max_diag = gram.diagonal().iter().fold(0.0f64, |a, &b| a.max(b));
    let system = &gram + DMatrix::identity(p, p) * lambda;
    let degenerate = || {
        Error::DegenerateDesign(format!(
            "{p}x{p} normal equations are singular at lambda = {lambda}"
        ))
    };
    let chol = system.clone().cholesky().ok_or_else(degenerate)?;
    if lambda == 0.0 {
        let min_pivot = chol.l().diagonal().iter().fold(f64::INFINITY, |a, &b| a.min(b * b));
        if max_diag == 0.0 || min_pivot <= 1e-12 * max_diag {
            return Err(degenerate());
        }
    }
    let mut coefficients = vec![[0.0; 2]; p];
    let mut intercept = [0.0; 2];
    for k in 0..2 {
        let yc = DVector::from_fn(train.len(), |r, _| targets.get(k, train[r].0, train[r].1) - y_mean[k]);
        let beta = chol.solve(&(xc.transpose() * yc));
        for c in 0..p {
            coefficients[c][k] = beta[c];
        }
        intercept[k] = y_mean[k] - (0..p).map(|c| x_mean[c] * beta[c]).sum::<f64>();
    }

    let predictions = FeatureMap::from_fn(2, size, |k, i, j| {
        let f = stats.features.location(i, j);
        intercept[k] + (0..p).map(|c| coefficients[c][k] * f[c]).sum::<f64>()
    })?;
    let error_map = FeatureMap::from_fn(1, size, |_, i, j| {
        (0..2)
            .map(|k| (predictions.get(k, i, j) - targets.get(k, i, j)).powi(2))
            .sum()
    })?;
    let train_mse = train.iter().map(|&(i, j)| error_map.get(0, i, j)).sum::<f64>() / n;
    let mut result = ProbeResult {
        lambda,
        split: split.clone(),
        coefficients,
        intercept,
        r_squared: [0.0; 2],
        train_mse,
        predictions,
        error_map,
    };
    result.r_squared = result.r_squared_where(|i, j| !split.is_train(size, i, j))?;
    Ok(result)
}

/// Mean held-out R² over both coordinates.
pub fn positional_info_score(result: &ProbeResult) -> f64 {
    0.5 * (result.r_squared[0] + result.r_squared[1])
}
