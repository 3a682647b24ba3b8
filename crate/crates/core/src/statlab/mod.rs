//! Expectation and autocorrelation of convolutional features on i.i.d.
//! standard-normal input, estimated by Monte Carlo and predicted exactly.
//!
//! Autocorrelation is the raw second moment `E[y_a * y_b]` between two
//! locations of the same channel, bias included.

mod analytic;
mod montecarlo;
mod verdict;
pub mod welford;

pub use analytic::{
    analytic_moments, bias_shift_check, two_layer_expectation, AffineRow, AnalyticMoments,
    LinearCoeffMap,
};
pub use montecarlo::{estimate_moments, run_samples, SamplingPlan, StatReport};
pub use verdict::{
    compare_with_analytic, stationarity_verdict, z_score, Agreement, OffsetVerdict,
    StationarityVerdict,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FeatureMap, GridSize};

/// Spatial offset `(di, dj)` between the two locations of an autocorrelation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Offset {
    pub di: i64,
    pub dj: i64,
}

impl Offset {
    pub const fn new(di: i64, dj: i64) -> Self {
        Self { di, dj }
    }

    /// Region of locations `a` such that both `a` and `a + offset` lie in a
    /// grid of `size`: returns `(origin, extent)`.
    pub fn overlap(&self, size: GridSize) -> Result<((usize, usize), GridSize)> {
        let (h, w) = (size.height() as i64, size.width() as i64);
        if self.di.abs() >= h || self.dj.abs() >= w {
            return Err(Error::OffsetOutOfRange {
                di: self.di,
                dj: self.dj,
                height: size.height(),
                width: size.width(),
            });
        }
        let origin = ((-self.di).max(0) as usize, (-self.dj).max(0) as usize);
        let extent = GridSize::new((h - self.di.abs()) as usize, (w - self.dj.abs()) as usize)?;
        Ok((origin, extent))
    }
}

impl std::fmt::Display for Offset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.di, self.dj)
    }
}

/// Non-empty list of offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Offset>", into = "Vec<Offset>")]
pub struct OffsetSet(Vec<Offset>);

impl OffsetSet {
    pub fn new(offsets: Vec<Offset>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::InvalidParameter("offset set must be non-empty".into()));
        }
        Ok(Self(offsets))
    }

    pub fn from_pairs(pairs: &[(i64, i64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(di, dj)| Offset::new(di, dj)).collect())
    }

    /// `(0,0), (0,1), (1,1), (2,2), (3,0)`.
    pub fn standard() -> Self {
        Self::from_pairs(&[(0, 0), (0, 1), (1, 1), (2, 2), (3, 0)]).expect("non-empty")
    }

    pub fn as_slice(&self) -> &[Offset] {
        &self.0
    }

    pub fn check_within(&self, size: GridSize) -> Result<()> {
        self.0.iter().try_for_each(|o| o.overlap(size).map(|_| ()))
    }
}

impl TryFrom<Vec<Offset>> for OffsetSet {
    type Error = Error;

    fn try_from(v: Vec<Offset>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<OffsetSet> for Vec<Offset> {
    fn from(s: OffsetSet) -> Self {
        s.0
    }
}

/// Per-channel autocorrelation over the overlap region of one offset.
/// Entry `(c, r, s)` belongs to the pair `(r + origin.0, s + origin.1)` and
/// `(r + origin.0 + di, s + origin.1 + dj)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrMap {
    pub offset: Offset,
    pub origin: (usize, usize),
    pub values: FeatureMap,
}

impl AutocorrMap {
    /// Absolute location of the first member of the pair stored at `(r, s)`.
    pub fn location(&self, r: usize, s: usize) -> (usize, usize) {
        (r + self.origin.0, s + self.origin.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_regions() {
        let size = GridSize::new(5, 4).unwrap();
        let (origin, ext) = Offset::new(2, -1).overlap(size).unwrap();
        assert_eq!(origin, (0, 1));
        assert_eq!(ext, GridSize::new(3, 3).unwrap());
        assert!(Offset::new(5, 0).overlap(size).is_err());
        assert!(Offset::new(0, -4).overlap(size).is_err());
        assert!(OffsetSet::new(vec![]).is_err());
    }
}
