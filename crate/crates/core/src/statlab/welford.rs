//! Streaming mean/variance over fixed-length observation vectors.

/// Welford accumulator for `len` scalar series advanced in lock-step.
#[derive(Debug, Clone, PartialEq)]
pub struct WelfordVec {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl WelfordVec {
    pub fn new(len: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, obs: &[f64]) {
        assert_eq!(obs.len(), self.mean.len(), "observation length");
        self.count += 1;
        let inv_n = 1.0 / self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(obs) {
            let delta = x - *m;
            *m += delta * inv_n;
            *s += delta * (x - *m);
        }
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&self, other: &WelfordVec) -> WelfordVec {
        assert_eq!(self.len(), other.len(), "accumulator length");
        if other.count == 0 {
            return self.clone();
        }
        if self.count == 0 {
            return other.clone();
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let mut out = WelfordVec::new(self.len());
        out.count = self.count + other.count;
        for k in 0..self.len() {
            let delta = other.mean[k] - self.mean[k];
            out.mean[k] = self.mean[k] + delta * (nb / n);
            out.m2[k] = self.m2[k] + other.m2[k] + delta * delta * (na * nb / n);
        }
        out
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased sample variance (`n - 1` denominator).
    pub fn variance(&self) -> Vec<f64> {
        let d = (self.count.max(2) - 1) as f64;
        self.m2.iter().map(|s| (s / d).max(0.0)).collect()
    }

    /// Standard error of each mean: `sample std / sqrt(n)`.
    pub fn standard_error(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.variance().into_iter().map(|v| (v / n).sqrt()).collect()
    }
}

/// Merges adjacent pairs level by level. The tree shape depends only on
/// `parts.len()`, so the result is independent of how the parts were produced.
pub fn tree_merge(mut parts: Vec<WelfordVec>) -> Option<WelfordVec> {
    while parts.len() > 1 {
        parts = parts
            .chunks(2)
            .map(|pair| match pair {
                [a, b] => a.merge(b),
                [a] => a.clone(),
                _ => unreachable!(),
            })
            .collect();
    }
    parts.pop()
}
