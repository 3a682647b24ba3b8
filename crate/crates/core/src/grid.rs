//! Grid sizes and dense channel-major feature maps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial extent of a feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[usize; 2]", into = "[usize; 2]")]
pub struct GridSize {
    height: usize,
    width: usize,
}

impl GridSize {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "grid size must be positive, got {height}x{width}"
            )));
        }
        Ok(Self { height, width })
    }

    /// Square grid, `n x n`.
    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn area(&self) -> usize {
        self.height * self.width
    }
}

impl fmt::Display for GridSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

impl FromStr for GridSize {
    type Err = Error;

    /// Parses `HxW` (or a single `N` for a square grid).
    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidParameter(format!("bad grid size '{s}', expected HxW")))
        };
        match s.split_once(['x', 'X']) {
            Some((h, w)) => Self::new(parse(h)?, parse(w)?),
            None => Self::square(parse(s)?),
        }
    }
}

impl TryFrom<[usize; 2]> for GridSize {
    type Error = Error;

    fn try_from(v: [usize; 2]) -> Result<Self> {
        Self::new(v[0], v[1])
    }
}

impl From<GridSize> for [usize; 2] {
    fn from(g: GridSize) -> Self {
        [g.height, g.width]
    }
}

/// A `channels x height x width` grid of finite reals, stored channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    size: GridSize,
    values: Vec<f64>,
}

impl FeatureMap {
    /// Map with every entry equal to `fill`.
    pub fn filled(channels: usize, size: GridSize, fill: f64) -> Result<Self> {
        check_channels(channels)?;
        if !fill.is_finite() {
            return Err(Error::NonFinite(0));
        }
        Ok(Self {
            channels,
            size,
            values: vec![fill; channels * size.area()],
        })
    }

    pub fn from_values(channels: usize, size: GridSize, values: Vec<f64>) -> Result<Self> {
        check_channels(channels)?;
        let expected = channels * size.area();
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {expected} values for {channels}x{size}, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Self {
            channels,
            size,
            values,
        })
    }

    /// Builds a map by evaluating `f(channel, row, col)` at every entry.
    pub fn from_fn(
        channels: usize,
        size: GridSize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        check_channels(channels)?;
        let mut values = Vec::with_capacity(channels * size.area());
        for c in 0..channels {
            for i in 0..size.height() {
                for j in 0..size.width() {
                    values.push(f(c, i, j));
                }
            }
        }
        Self::from_values(channels, size, values)
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn size(&self) -> GridSize {
        self.size
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.size.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.size.width
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn index(&self, c: usize, i: usize, j: usize) -> usize {
        (c * self.size.height + i) * self.size.width + j
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.values[self.index(c, i, j)]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.size.area();
        &self.values[c * n..(c + 1) * n]
    }

    /// The channel vector at spatial location `(i, j)`.
    pub fn location(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.get(c, i, j)).collect()
    }

    /// Applies `f` elementwise. The result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_values(self.channels, self.size, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise sum of two maps of identical shape.
    pub fn add(&self, other: &FeatureMap) -> Result<Self> {
        if self.channels != other.channels || self.size != other.size {
            return Err(Error::Dimension(format!(
                "shape mismatch {}x{} vs {}x{}",
                self.channels, self.size, other.channels, other.size
            )));
        }
        Self::from_values(
            self.channels,
            self.size,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// Per-channel `(min, max)`.
    pub fn channel_range(&self, c: usize) -> (f64, f64) {
        self.channel(c)
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

fn check_channels(channels: usize) -> Result<()> {
    if channels == 0 {
        return Err(Error::Dimension("channel count must be positive".into()));
    }
    Ok(())
}
