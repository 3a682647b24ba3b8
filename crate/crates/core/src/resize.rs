//! Bilinear resizing with align-corners semantics.
//!
//! Target index `t` samples source coordinate `t * (src - 1) / (dst - 1)`, so the
//! first and last samples along each axis map onto each other exactly. A target
//! extent of 1 samples source coordinate 0; a source extent of 1 broadcasts.

use crate::error::Result;
use crate::grid::{FeatureMap, GridSize};

/// Interpolation taps along one axis: `(lower index, upper index, upper weight)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct AxisTap {
    pub lo: usize,
    pub hi: usize,
    pub frac: f64,
}

pub(crate) fn axis_taps(src: usize, dst: usize) -> Vec<AxisTap> {
    (0..dst)
        .map(|t| {
            if src == 1 || dst == 1 {
                return AxisTap { lo: 0, hi: 0, frac: 0.0 };
            }
            // Integer numerator keeps corner samples exact.
            let num = t * (src - 1);
            let den = dst - 1;
            let lo = num / den;
            let rem = num % den;
            if rem == 0 {
                AxisTap { lo, hi: lo, frac: 0.0 }
            } else {
                AxisTap {
                    lo,
                    hi: lo + 1,
                    frac: rem as f64 / den as f64,
                }
            }
        })
        .collect()
}

/// The (up to four) source taps and weights feeding target location `(i, j)`.
pub(crate) fn bilinear_weights(row: AxisTap, col: AxisTap) -> [((usize, usize), f64); 4] {
    [
        ((row.lo, col.lo), (1.0 - row.frac) * (1.0 - col.frac)),
        ((row.lo, col.hi), (1.0 - row.frac) * col.frac),
        ((row.hi, col.lo), row.frac * (1.0 - col.frac)),
        ((row.hi, col.hi), row.frac * col.frac),
    ]
}

/// Per-channel bilinear resize to `target` (align-corners).
pub fn bilinear_resize(map: &FeatureMap, target: GridSize) -> Result<FeatureMap> {
    if map.size() == target {
        return Ok(map.clone());
    }
    let rows = axis_taps(map.height(), target.height());
    let cols = axis_taps(map.width(), target.width());
    let mut out = Vec::with_capacity(map.channels() * target.area());
    for c in 0..map.channels() {
        for r in &rows {
            for q in &cols {
                let v = if r.frac == 0.0 && q.frac == 0.0 {
                    map.get(c, r.lo, q.lo)
                } else {
                    let top = (1.0 - q.frac) * map.get(c, r.lo, q.lo) + q.frac * map.get(c, r.lo, q.hi);
                    let bottom =
                        (1.0 - q.frac) * map.get(c, r.hi, q.lo) + q.frac * map.get(c, r.hi, q.hi);
                    (1.0 - r.frac) * top + r.frac * bottom
                };
                out.push(v);
            }
        }
    }
    FeatureMap::from_values(map.channels(), target, out)
}
