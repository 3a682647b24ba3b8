//! Scale-dependent pieces of multi-scale training with positional encodings:
//! drawing the training scale, preparing the encoding at that scale, and the
//! 2x2 adaptive average pool that makes a discriminator head size-agnostic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FeatureMap, GridSize};
use crate::posenc::{resize_encoding, EncodingKind, ResizeMode};
use crate::rng::{CounterRng, RngSpec};

/// Training scales with their sampling probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleDoc", into = "ScheduleDoc")]
pub struct ScaleSchedule {
    scales: Vec<GridSize>,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleDoc {
    scales: Vec<GridSize>,
    probs: Vec<f64>,
}

impl TryFrom<ScheduleDoc> for ScaleSchedule {
    type Error = Error;

    fn try_from(doc: ScheduleDoc) -> Result<Self> {
        ScaleSchedule::new(doc.scales, doc.probs)
    }
}

impl From<ScaleSchedule> for ScheduleDoc {
    fn from(s: ScaleSchedule) -> Self {
        ScheduleDoc { scales: s.scales, probs: s.probs }
    }
}

impl ScaleSchedule {
    /// Scales must grow in both dimensions; probabilities must be non-negative,
    /// non-increasing and sum to 1 within 1e-12.
    pub fn new(scales: Vec<GridSize>, probs: Vec<f64>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if scales.is_empty() {
            return bad("schedule needs at least one scale".into());
        }
        if scales.len() != probs.len() {
            return bad(format!("{} scales but {} probabilities", scales.len(), probs.len()));
        }
        for w in scales.windows(2) {
            if w[1] == w[0] || w[1].height() < w[0].height() || w[1].width() < w[0].width() {
                return bad(format!("scales must ascend, got {} after {}", w[1], w[0]));
            }
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return bad(format!("probabilities must be finite and non-negative, got {p}"));
        }
        if probs.windows(2).any(|w| w[1] > w[0]) {
            return bad(format!("probabilities must not increase with scale, got {probs:?}"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("probabilities sum to {total}, expected 1"));
        }
        Ok(Self { scales, probs })
    }

    pub fn scales(&self) -> &[GridSize] {
        &self.scales
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

impl Default for ScaleSchedule {
    /// 256, 384 and 512 square with probabilities 0.5, 0.25, 0.25.
    fn default() -> Self {
        let sq = |n| GridSize::square(n).expect("positive");
        Self::new(vec![sq(256), sq(384), sq(512)], vec![0.5, 0.25, 0.25]).expect("valid default")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleDraw {
    pub step: u64,
    pub scale_index: usize,
    pub scale: GridSize,
    pub rng: RngSpec,
}

/// Categorical draw for one training step. The uniform variate comes from
/// stream `step` of `seed`, so every step is independent of every other.
pub fn sample_scale(schedule: &ScaleSchedule, seed: u64, step: u64) -> ScaleDraw {
    let rng = RngSpec::new(seed, step);
    let u = CounterRng::new(rng).uniform(0);
    let mut cum = 0.0;
    let mut scale_index = None;
    for (k, &p) in schedule.probs.iter().enumerate() {
        cum += p;
        if p > 0.0 && u < cum {
            scale_index = Some(k);
            break;
        }
    }
    // Rounding can leave the cumulative sum just below u; fall back to the
    // last scale with positive mass.
    let scale_index = scale_index.unwrap_or_else(|| {
        schedule.probs.iter().rposition(|&p| p > 0.0).expect("probabilities sum to 1")
    });
    ScaleDraw { step, scale_index, scale: schedule.scales[scale_index], rng }
}

/// Brings an encoding to the drawn scale.
pub fn prepare_scale_input(
    kind: &EncodingKind,
    base: &FeatureMap,
    scale: GridSize,
    mode: ResizeMode,
) -> Result<FeatureMap> {
    resize_encoding(kind, base, scale, mode)
}

#[inline]
fn bins(n: usize) -> [(usize, usize); 2] {
    [(0, n / 2), (n / 2, n)]
}

/// Per-channel mean over a 2x2 partition with row bins
/// `[floor(r*H/2), floor((r+1)*H/2))`, columns likewise.
pub fn adaptive_avg_pool_2x2(map: &FeatureMap) -> Result<FeatureMap> {
    let (h, w) = (map.height(), map.width());
    if h < 2 || w < 2 {
        return Err(Error::Dimension(format!(
            "adaptive 2x2 pooling needs at least 2x2 input, got {}",
            map.size()
        )));
    }
    let (rows, cols) = (bins(h), bins(w));
    FeatureMap::from_fn(map.channels(), GridSize::new(2, 2)?, |c, r, s| {
        let (r0, r1) = rows[r];
        let (s0, s1) = cols[s];
        let plane = map.channel(c);
        let sum: f64 = (r0..r1).flat_map(|i| &plane[i * w + s0..i * w + s1]).sum();
        sum / ((r1 - r0) * (s1 - s0)) as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posenc::{spe, CsgConvention};
    use proptest::prelude::*;

    fn sq(n: usize) -> GridSize {
        GridSize::square(n).unwrap()
    }

    #[test]
    fn default_schedule_json() {
        let s = ScaleSchedule::default();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"scales":[[256,256],[384,384],[512,512]],"probs":[0.5,0.25,0.25]}"#);
        assert_eq!(serde_json::from_str::<ScaleSchedule>(&json).unwrap(), s);
    }

    #[test]
    fn invalid_schedules() {
        let p = |v: &[f64]| ScaleSchedule::new(vec![sq(4), sq(8), sq(16)], v.to_vec());
        assert!(p(&[0.25, 0.5, 0.25]).is_err());
        assert!(p(&[0.5, 0.25, 0.2]).is_err());
        assert!(p(&[1.5, -0.25, -0.25]).is_err());
        assert!(p(&[0.5, 0.5]).is_err());
        assert!(ScaleSchedule::new(vec![sq(8), sq(4)], vec![0.5, 0.5]).is_err());
        assert!(ScaleSchedule::new(vec![], vec![]).is_err());
        assert!(serde_json::from_str::<ScaleSchedule>(r#"{"scales":[[4,4]],"probs":[0.9]}"#).is_err());
    }

    #[test]
    fn degenerate_schedule_always_first() {
        let s = ScaleSchedule::new(vec![sq(4), sq(8), sq(16)], vec![1.0, 0.0, 0.0]).unwrap();
        for step in 0..10_000 {
            assert_eq!(sample_scale(&s, 3, step).scale_index, 0);
        }
    }

    #[test]
    fn draws_are_reproducible() {
        let s = ScaleSchedule::default();
        for step in [0, 1, 17, u64::MAX] {
            assert_eq!(sample_scale(&s, 11, step), sample_scale(&s, 11, step));
        }
    }

    #[test]
    fn pool_examples() {
        let c = FeatureMap::filled(2, sq(4), 3.5).unwrap();
        assert!(adaptive_avg_pool_2x2(&c).unwrap().values().iter().all(|&v| v == 3.5));
        let x = FeatureMap::from_fn(1, sq(2), |_, i, j| (i * 2 + j) as f64).unwrap();
        assert_eq!(adaptive_avg_pool_2x2(&x).unwrap(), x);
        let x = FeatureMap::from_fn(1, sq(3), |_, i, j| (i * 3 + j) as f64).unwrap();
        let p = adaptive_avg_pool_2x2(&x).unwrap();
        assert_eq!(p.values(), &[0.0, 1.5, 4.5, 6.0]);
        assert!(adaptive_avg_pool_2x2(&FeatureMap::filled(1, GridSize::new(1, 4).unwrap(), 0.0).unwrap()).is_err());
    }

    #[test]
    fn prepare_examples() {
        let kind = EncodingKind::Spe { channels: 8 };
        let base = spe(sq(8), 8).unwrap();
        let big = prepare_scale_input(&kind, &base, sq(16), ResizeMode::Expand).unwrap();
        assert_eq!(big.size(), sq(16));
        for c in 0..8 {
            for i in 0..8 {
                for j in 0..8 {
                    assert_eq!(big.get(c, i, j), base.get(c, i, j));
                }
            }
        }
        let kind = EncodingKind::Csg { convention: CsgConvention::Literal };
        let base = kind.generate(sq(8)).unwrap();
        let big = prepare_scale_input(&kind, &base, sq(16), ResizeMode::Interp).unwrap();
        assert_eq!((big.get(0, 0, 0), big.get(1, 0, 0)), (-1.0, -1.0));
        assert!(prepare_scale_input(&kind, &base, sq(16), ResizeMode::Expand).is_err());
    }

    proptest! {
        #[test]
        fn pool_keeps_mean_for_even_sizes(h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
            let size = GridSize::new(2 * h, 2 * w).unwrap();
            let x = crate::rng::sample_gaussian(2, size, RngSpec::new(seed, 0)).unwrap();
            let p = adaptive_avg_pool_2x2(&x).unwrap();
            for c in 0..2 {
                let a = x.channel(c).iter().sum::<f64>() / size.area() as f64;
                let b = p.channel(c).iter().sum::<f64>() / 4.0;
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }
}
