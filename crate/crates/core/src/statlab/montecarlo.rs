use rayon::prelude::*;

use crate::convnet::{forward, NetworkSpec};
use crate::error::{Error, Result};
use crate::grid::{FeatureMap, GridSize};
use crate::rng::{sample_gaussian, RngSpec};

use super::welford::{tree_merge, WelfordVec};
use super::{AutocorrMap, OffsetSet};

/// Samples per accumulation chunk. Fixed so the reduction tree depends only on
/// the sample count, never on the worker count.
const CHUNK: usize = 512;

/// How many samples to draw, from which stream, on how many workers.
///
/// Sample `m` is the network applied to `sample_gaussian(.., rng.advance(m))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingPlan {
    pub samples: usize,
    pub rng: RngSpec,
    /// Worker threads; 0 uses the ambient rayon pool. Never affects results.
    pub workers: usize,
}

impl SamplingPlan {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            rng: RngSpec::new(seed, 0),
            workers: 0,
        }
    }

    pub fn with_workers(self, workers: usize) -> Self {
        Self { workers, ..self }
    }
}

/// Monte Carlo moments of a network's output.
#[derive(Debug, Clone, PartialEq)]
pub struct StatReport {
    pub expectation: FeatureMap,
    pub expectation_se: FeatureMap,
    /// Centered per-location sample variance.
    pub variance: FeatureMap,
    pub autocorr: Vec<AutocorrMap>,
    /// Standard errors matching `autocorr` entry by entry.
    pub autocorr_se: Vec<FeatureMap>,
    pub samples: usize,
    pub rng: RngSpec,
}

impl StatReport {
    /// Centered covariance `R(a, a + d) - E(a) E(a + d)` for autocorrelation entry `k`.
    pub fn centered_autocorr(&self, k: usize) -> Result<FeatureMap> {
        let ac = &self.autocorr[k];
        let (di, dj) = (ac.offset.di, ac.offset.dj);
        let e = &self.expectation;
        FeatureMap::from_fn(ac.values.channels(), ac.values.size(), |c, r, s| {
            let (i, j) = ac.location(r, s);
            let (i2, j2) = ((i as i64 + di) as usize, (j as i64 + dj) as usize);
            ac.values.get(c, r, s) - e.get(c, i, j) * e.get(c, i2, j2)
        })
    }
}

/// Runs `plan.samples` forwards and feeds each output to `observe`, which
/// appends exactly `obs_len` observations. Chunks are accumulated in parallel
/// and merged by a fixed pairwise tree.
pub fn run_samples<F>(
    net: &NetworkSpec,
    input_size: GridSize,
    plan: &SamplingPlan,
    obs_len: usize,
    observe: F,
) -> Result<WelfordVec>
where
    F: Fn(&FeatureMap, &mut Vec<f64>) + Sync,
{
    if plan.samples < 2 {
        return Err(Error::TooFewSamples(plan.samples));
    }
    net.output_size(input_size)?;
    let chunks = plan.samples.div_ceil(CHUNK);
    let run_chunk = |chunk: usize| -> Result<WelfordVec> {
        let start = chunk * CHUNK;
        let end = (start + CHUNK).min(plan.samples);
        let mut acc = WelfordVec::new(obs_len);
        let mut obs = Vec::with_capacity(obs_len);
        for m in start..end {
            let x = sample_gaussian(net.input_channels(), input_size, plan.rng.advance(m as u64))?;
            let y = forward(net, &x)?;
            obs.clear();
            observe(&y, &mut obs);
            acc.push(&obs);
        }
        Ok(acc)
    };
    let parts = if plan.workers == 0 {
        (0..chunks).into_par_iter().map(run_chunk).collect::<Result<Vec<_>>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(plan.workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(|| (0..chunks).into_par_iter().map(run_chunk).collect::<Result<Vec<_>>>())?
    };
    Ok(tree_merge(parts).expect("at least one chunk"))
}

/// Estimates the per-location expectation and, for each offset, the raw
/// autocorrelation `E[y(a) y(a + offset)]`, with standard errors.
pub fn estimate_moments(
    net: &NetworkSpec,
    input_size: GridSize,
    offsets: &OffsetSet,
    plan: &SamplingPlan,
) -> Result<StatReport> {
    let out_size = net.output_size(input_size)?;
    offsets.check_within(out_size)?;
    let channels = net.output_channels();
    let regions: Vec<_> = offsets
        .as_slice()
        .iter()
        .map(|o| o.overlap(out_size))
        .collect::<Result<_>>()?;
    let base = channels * out_size.area();
    let obs_len = base + regions.iter().map(|(_, e)| channels * e.area()).sum::<usize>();

    let acc = run_samples(net, input_size, plan, obs_len, |y, obs| {
        obs.extend_from_slice(y.values());
        let w = out_size.width();
        for (o, &((oi, oj), ext)) in offsets.as_slice().iter().zip(&regions) {
            for c in 0..channels {
                let plane = y.channel(c);
                for r in 0..ext.height() {
                    let a = (r + oi) * w + oj;
                    let b = ((r + oi) as i64 + o.di) as usize * w + (oj as i64 + o.dj) as usize;
                    let (row_a, row_b) = (&plane[a..a + ext.width()], &plane[b..b + ext.width()]);
                    obs.extend(row_a.iter().zip(row_b).map(|(p, q)| p * q));
                }
            }
        }
    })?;

    let mean = acc.mean();
    let var = acc.variance();
    let se = acc.standard_error();
    let mut autocorr = Vec::with_capacity(regions.len());
    let mut autocorr_se = Vec::with_capacity(regions.len());
    let mut at = base;
    for (o, &(origin, ext)) in offsets.as_slice().iter().zip(&regions) {
        let n = channels * ext.area();
        autocorr.push(AutocorrMap {
            offset: *o,
            origin,
            values: FeatureMap::from_values(channels, ext, mean[at..at + n].to_vec())?,
        });
        autocorr_se.push(FeatureMap::from_values(channels, ext, se[at..at + n].to_vec())?);
        at += n;
    }
    Ok(StatReport {
        expectation: FeatureMap::from_values(channels, out_size, mean[..base].to_vec())?,
        expectation_se: FeatureMap::from_values(channels, out_size, se[..base].to_vec())?,
        variance: FeatureMap::from_values(channels, out_size, var[..base].to_vec())?,
        autocorr,
        autocorr_se,
        samples: plan.samples,
        rng: plan.rng,
    })
}
