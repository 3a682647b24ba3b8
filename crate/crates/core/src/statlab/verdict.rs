use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::FeatureMap;

use super::{AnalyticMoments, Offset, StatReport};

/// Stand-in for an infinite z-score (a non-zero deviation with zero standard error),
/// kept finite so it fits in a [`FeatureMap`].
pub const Z_INFINITE: f64 = f64::MAX;

/// `|deviation| / se`, treating a zero standard error as exact.
pub fn z_score(deviation: f64, se: f64, scale: f64) -> f64 {
    if se > 0.0 {
        deviation.abs() / se
    } else if deviation.abs() <= 1e-12 * (1.0 + scale.abs()) {
        0.0
    } else {
        Z_INFINITE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetVerdict {
    pub offset: Offset,
    pub consistent: bool,
    pub max_z: f64,
    /// `(channel, row, col)` of the first member of the worst pair.
    pub worst: (usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityVerdict {
    pub threshold: f64,
    pub expectation_uniform: bool,
    pub expectation_max_z: f64,
    pub expectation_worst: (usize, usize, usize),
    pub offsets: Vec<OffsetVerdict>,
    /// `|E(a) - spatial median of E| / SE(a)` per channel and location.
    pub anchor_map: FeatureMap,
}

impl StationarityVerdict {
    pub fn offsets_consistent(&self) -> bool {
        self.offsets.iter().all(|o| o.consistent)
    }

    pub fn stationary(&self) -> bool {
        self.expectation_uniform && self.offsets_consistent()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Largest per-channel z-score of `values` against its own spatial mean.
fn max_dev_from_mean(values: &FeatureMap, se: &FeatureMap) -> (f64, (usize, usize, usize)) {
    let mut worst = (0.0, (0, 0, 0));
    for c in 0..values.channels() {
        let centre = mean(values.channel(c));
        for i in 0..values.height() {
            for j in 0..values.width() {
                let z = z_score(values.get(c, i, j) - centre, se.get(c, i, j), centre);
                if z > worst.0 {
                    worst = (z, (c, i, j));
                }
            }
        }
    }
    worst
}

/// Tests the weak-stationarity conditions on a Monte Carlo report.
///
/// The expectation is uniform when no location deviates from its channel's
/// spatial mean by more than `z_threshold` standard errors; each offset is
/// consistent under the same rule applied to its autocorrelation map.
pub fn stationarity_verdict(report: &StatReport, z_threshold: f64) -> Result<StationarityVerdict> {
    let (expectation_max_z, expectation_worst) =
        max_dev_from_mean(&report.expectation, &report.expectation_se);
    let offsets = report
        .autocorr
        .iter()
        .zip(&report.autocorr_se)
        .map(|(ac, se)| {
            let (max_z, (c, r, s)) = max_dev_from_mean(&ac.values, se);
            let (i, j) = ac.location(r, s);
            OffsetVerdict {
                offset: ac.offset,
                consistent: max_z <= z_threshold,
                max_z,
                worst: (c, i, j),
            }
        })
        .collect();
    let e = &report.expectation;
    let medians: Vec<f64> = (0..e.channels()).map(|c| median(e.channel(c))).collect();
    let anchor_map = FeatureMap::from_fn(e.channels(), e.size(), |c, i, j| {
        z_score(e.get(c, i, j) - medians[c], report.expectation_se.get(c, i, j), medians[c])
    })?;
    Ok(StationarityVerdict {
        threshold: z_threshold,
        expectation_uniform: expectation_max_z <= z_threshold,
        expectation_max_z,
        expectation_worst,
        offsets,
        anchor_map,
    })
}

/// How well a Monte Carlo report matches exact moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub entries: usize,
    pub within: usize,
    pub max_z: f64,
}

impl Agreement {
    pub fn fraction(&self) -> f64 {
        self.within as f64 / self.entries as f64
    }

    pub fn combine(self, other: Agreement) -> Agreement {
        Agreement {
            entries: self.entries + other.entries,
            within: self.within + other.within,
            max_z: self.max_z.max(other.max_z),
        }
    }
}

/// Counts expectation and autocorrelation entries whose Monte Carlo estimate
/// lies within `z_threshold` standard errors of the exact value.
pub fn compare_with_analytic(report: &StatReport, exact: &AnalyticMoments, z_threshold: f64) -> Agreement {
    let mut out = Agreement {
        entries: 0,
        within: 0,
        max_z: 0.0,
    };
    let mut tally = |est: &[f64], se: &[f64], truth: &[f64]| {
        for ((e, s), t) in est.iter().zip(se).zip(truth) {
            let z = z_score(e - t, *s, *t);
            out.entries += 1;
            if z <= z_threshold {
                out.within += 1;
            }
            out.max_z = out.max_z.max(z);
        }
    };
    tally(
        report.expectation.values(),
        report.expectation_se.values(),
        exact.expectation.values(),
    );
    for ((ac, se), truth) in report.autocorr.iter().zip(&report.autocorr_se).zip(&exact.autocorr) {
        debug_assert_eq!(ac.offset, truth.offset);
        tally(ac.values.values(), se.values(), truth.values.values());
    }
    out
}
