//! Explicit positional encodings and their resize behaviour.
//!
//! * Cartesian spatial grid (CSG): two channels holding `2 * (i / H - 1/2)` and
//!   `2 * (j / W - 1/2)`. Under this literal convention the top-left location is
//!   `(-1, -1)` for every grid size but the bottom-right is `(1 - 2/H, 1 - 2/W)`.
//!   [`CsgConvention::AlignCorners`] uses `i / (H - 1)` instead so both corners
//!   sit at `±1`.
//! * Sinusoidal encoding (SPE) with `C` channels: the first `C/2` channels encode
//!   the row, the last `C/2` the column. Each half is laid out
//!   `[sin(w0 t), cos(w0 t), sin(w1 t), cos(w1 t), ...]` with
//!   `w_k = 10000^(-2k/d)`, `d = C/2`.
//! * Fixed constant: a frozen standard-normal map standing in for a learned
//!   constant input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FeatureMap, GridSize};
use crate::resize::bilinear_resize;
use crate::rng::{sample_gaussian, CounterRng, RngSpec};

/// Index normalization used by the Cartesian grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsgConvention {
    /// `2 * (i / H - 1/2)`.
    #[default]
    Literal,
    /// `2 * (i / (H - 1) - 1/2)`, with a single row mapping to `-1`.
    AlignCorners,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncodingKind {
    Csg { convention: CsgConvention },
    Spe { channels: usize },
    FixedConstant { channels: usize, rng: RngSpec },
}

impl EncodingKind {
    pub fn channels(&self) -> usize {
        match *self {
            EncodingKind::Csg { .. } => 2,
            EncodingKind::Spe { channels } | EncodingKind::FixedConstant { channels, .. } => channels,
        }
    }

    /// Generates the encoding at `size`.
    pub fn generate(&self, size: GridSize) -> Result<FeatureMap> {
        match *self {
            EncodingKind::Csg { convention } => csg_with(size, convention),
            EncodingKind::Spe { channels } => spe(size, channels),
            EncodingKind::FixedConstant { channels, rng } => fixed_constant(channels, size, rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizeMode {
    Interp,
    Expand,
}

#[inline]
fn csg_coord(t: usize, n: usize, convention: CsgConvention) -> f64 {
    match convention {
        CsgConvention::Literal => 2.0 * (t as f64 / n as f64 - 0.5),
        CsgConvention::AlignCorners if n == 1 => -1.0,
        CsgConvention::AlignCorners => 2.0 * (t as f64 / (n - 1) as f64 - 0.5),
    }
}

/// Two-channel Cartesian grid under the literal convention.
pub fn csg(size: GridSize) -> Result<FeatureMap> {
    csg_with(size, CsgConvention::Literal)
}

pub fn csg_with(size: GridSize, convention: CsgConvention) -> Result<FeatureMap> {
    FeatureMap::from_fn(2, size, |c, i, j| {
        if c == 0 {
            csg_coord(i, size.height(), convention)
        } else {
            csg_coord(j, size.width(), convention)
        }
    })
}

/// CSG vector at a single location (literal convention).
pub fn csg_at(size: GridSize, loc: (usize, usize)) -> Result<[f64; 2]> {
    check_location(size, loc.0 as i64, loc.1 as i64)?;
    Ok([
        csg_coord(loc.0, size.height(), CsgConvention::Literal),
        csg_coord(loc.1, size.width(), CsgConvention::Literal),
    ])
}

fn check_location(size: GridSize, i: i64, j: i64) -> Result<()> {
    if i < 0 || j < 0 || i >= size.height() as i64 || j >= size.width() as i64 {
        return Err(Error::InvalidParameter(format!(
            "location ({i}, {j}) outside {size} grid"
        )));
    }
    Ok(())
}

/// Carries the CSG vector at `from` to `from + offset` using only the offset
/// and the grid size: `csg(from) + 2 * (di / H, dj / W)`.
pub fn csg_translate(size: GridSize, from: (usize, usize), offset: (i64, i64)) -> Result<[f64; 2]> {
    let base = csg_at(size, from)?;
    check_location(size, from.0 as i64 + offset.0, from.1 as i64 + offset.1)?;
    Ok([
        base[0] + 2.0 * (offset.0 as f64 / size.height() as f64),
        base[1] + 2.0 * (offset.1 as f64 / size.width() as f64),
    ])
}

/// Per-axis frequencies `w_k = 10000^(-2k/d)` for an SPE with `channels` total
/// channels (`d = channels / 2`, `k = 0 .. d/2`).
pub fn spe_frequencies(channels: usize) -> Result<Vec<f64>> {
    if channels == 0 || !channels.is_multiple_of(4) {
        return Err(Error::InvalidParameter(format!(
            "sinusoidal encoding needs a positive channel count divisible by 4, got {channels}"
        )));
    }
    let d = (channels / 2) as f64;
    Ok((0..channels / 4)
        .map(|k| 1.0 / 10000f64.powf(2.0 * k as f64 / d))
        .collect())
}

pub fn spe(size: GridSize, channels: usize) -> Result<FeatureMap> {
    let omega = spe_frequencies(channels)?;
    let half = channels / 2;
    FeatureMap::from_fn(channels, size, |c, i, j| {
        let (t, k) = if c < half { (i, c) } else { (j, c - half) };
        let angle = omega[k / 2] * t as f64;
        if k % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Moves a `(sin, cos)` pair at position `t` to position `t + phi` with the
/// rotation `[[cos wφ, sin wφ], [-sin wφ, cos wφ]]`.
pub fn spe_rotate(pair: (f64, f64), phi: i64, omega: f64) -> (f64, f64) {
    let (s, c) = pair;
    let (rs, rc) = (omega * phi as f64).sin_cos();
    (rc * s + rs * c, -rs * s + rc * c)
}

/// Frozen standard-normal constant input.
pub fn fixed_constant(channels: usize, size: GridSize, rng: RngSpec) -> Result<FeatureMap> {
    sample_gaussian(channels, size, rng)
}

/// Resizes an encoding. `Interp` interpolates bilinearly; `Expand` regenerates
/// the SPE at the target size, which leaves the shared index range unchanged.
pub fn resize_encoding(
    kind: &EncodingKind,
    current: &FeatureMap,
    target: GridSize,
    mode: ResizeMode,
) -> Result<FeatureMap> {
    match (mode, kind) {
        (ResizeMode::Interp, _) => bilinear_resize(current, target),
        (ResizeMode::Expand, EncodingKind::Spe { channels }) => {
            if current.channels() != *channels {
                return Err(Error::Dimension(format!(
                    "encoding has {} channels, kind declares {channels}",
                    current.channels()
                )));
            }
            spe(target, *channels)
        }
        (ResizeMode::Expand, other) => Err(Error::Unsupported(format!(
            "expand resize applies only to sinusoidal encodings, not {other:?}"
        ))),
    }
}

/// Adds scaled standard-normal noise to an encoding: `pe + noise_std * N(0, 1)`.
pub fn compose_noise_pe(pe: &FeatureMap, rng: RngSpec, noise_std: f64) -> Result<FeatureMap> {
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise standard deviation must be finite and non-negative, got {noise_std}"
        )));
    }
    let gen = CounterRng::new(rng);
    let mut noise = vec![0.0; pe.values().len()];
    gen.fill_normal(&mut noise);
    FeatureMap::from_values(
        pe.channels(),
        pe.size(),
        pe.values()
            .iter()
            .zip(noise)
            .map(|(p, n)| p + noise_std * n)
            .collect(),
    )
}
