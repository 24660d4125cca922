//! Probability distributions on the support interval, represented by their
//! quantile functions tabulated on a probability grid.

use crate::error::{AtmError, Result};
use crate::grid::{enforce_monotone, Grid, ProbGrid};
use serde::{Deserialize, Serialize};

/// A distribution on `[s1, s2]`, stored as quantile values Q(u) at the
/// probability-grid levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    support: Grid,
    prob: ProbGrid,
    quantile: Vec<f64>,
}

/// Raw observations drawn from the distribution at one time index.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub time_index: i64,
    pub values: Vec<f64>,
}

impl SampleBatch {
    pub fn new(time_index: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(AtmError::Degenerate("empty sample batch".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AtmError::Degenerate("sample batch contains non-finite values".into()));
        }
        Ok(SampleBatch { time_index, values })
    }
}

impl Distribution {
    pub fn new(support: Grid, prob: ProbGrid, quantile: Vec<f64>) -> Result<Self> {
        if quantile.len() != prob.len() {
            return Err(AtmError::GridMismatch(format!(
                "expected {} quantile values, got {}",
                prob.len(),
                quantile.len()
            )));
        }
        if quantile.iter().any(|v| !v.is_finite()) {
            return Err(AtmError::Parameter("quantile values must be finite".into()));
        }
        let mut q = quantile;
        enforce_monotone(&mut q, support.s1(), support.s2());
        Ok(Distribution { support, prob, quantile: q })
    }

    /// Uniform distribution on the support interval.
    pub fn uniform(support: Grid, prob: ProbGrid) -> Self {
        let span = support.s2() - support.s1();
        let quantile = prob.levels().iter().map(|u| support.s1() + span * u).collect();
        Distribution { support, prob, quantile }
    }

    /// Empirical quantiles from raw samples (order statistics with linear
    /// interpolation, the standard type-7 rule), clamped into the support.
    pub fn from_samples(batch: &SampleBatch, support: Grid, prob: ProbGrid) -> Result<Self> {
        let mut sorted = batch.values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted[sorted.len() - 1] < support.s1() || sorted[0] > support.s2() {
            return Err(AtmError::Degenerate(
                "all sample values lie outside the support interval".into(),
            ));
        }
        let n = sorted.len();
        let quantile = prob
            .levels()
            .iter()
            .map(|&u| {
                let h = (n - 1) as f64 * u;
                let lo = h.floor() as usize;
                let v = if lo + 1 < n {
                    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
                } else {
                    sorted[n - 1]
                };
                v.clamp(support.s1(), support.s2())
            })
            .collect();
        Distribution::new(support, prob, quantile)
    }

    pub fn support(&self) -> Grid {
        self.support
    }

    pub fn prob(&self) -> &ProbGrid {
        &self.prob
    }

    pub fn quantile_values(&self) -> &[f64] {
        &self.quantile
    }

    /// Q(u) by piecewise-linear interpolation over the levels, extended
    /// flat beyond the first and last level.
    pub fn quantile_at(&self, u: f64) -> f64 {
        let levels = self.prob.levels();
        let k = levels.len();
        if u <= levels[0] {
            return self.quantile[0];
        }
        if u >= levels[k - 1] {
            return self.quantile[k - 1];
        }
        let j = levels.partition_point(|v| *v <= u);
        let (u0, u1) = (levels[j - 1], levels[j]);
        let frac = (u - u0) / (u1 - u0);
        self.quantile[j - 1] + frac * (self.quantile[j] - self.quantile[j - 1])
    }

    /// F(x) = sup { u : Q(u) <= x }, the cdf dual to the left-continuous
    /// quantile convention; F(s2) = 1.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if !self.support.contains(x) {
            return Err(AtmError::Domain { value: x, lo: self.support.s1(), hi: self.support.s2() });
        }
        Ok(self.cdf_clamped(x))
    }

    pub fn cdf_clamped(&self, x: f64) -> f64 {
        let x = x.clamp(self.support.s1(), self.support.s2());
        let levels = self.prob.levels();
        let k = levels.len();
        if x >= self.quantile[k - 1] {
            return 1.0;
        }
        if x < self.quantile[0] {
            return 0.0;
        }
        // largest j with quantile[j] <= x
        let j = self.quantile.partition_point(|q| *q <= x) - 1;
        let (q0, q1) = (self.quantile[j], self.quantile[j + 1]);
        if q1 > q0 {
            let frac = (x - q0) / (q1 - q0);
            levels[j] + frac * (levels[j + 1] - levels[j])
        } else {
            levels[j]
        }
    }

    /// Mean via the quantile representation: ∫₀¹ Q(u) du.
    pub fn mean(&self) -> f64 {
        integrate_prob(&self.prob, &self.quantile)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let sq: Vec<f64> = self.quantile.iter().map(|q| (q - m) * (q - m)).collect();
        integrate_prob(&self.prob, &sq).max(0.0)
    }

    /// Affine rescale of the quantile values onto a new support interval.
    pub fn rescale(&self, new_support: Grid) -> Distribution {
        let (a1, a2) = (self.support.s1(), self.support.s2());
        let (b1, b2) = (new_support.s1(), new_support.s2());
        let slope = (b2 - b1) / (a2 - a1);
        let quantile = self.quantile.iter().map(|q| b1 + slope * (q - a1)).collect();
        Distribution { support: new_support, prob: self.prob.clone(), quantile }
    }
}

/// Pointwise average of quantile functions: the 1-D Wasserstein barycenter.
pub fn frechet_mean(dists: &[Distribution]) -> Result<Distribution> {
    let first = dists.first().ok_or_else(|| AtmError::Degenerate("empty distribution list".into()))?;
    let k = first.prob().len();
    let mut acc = vec![0.0; k];
    for d in dists {
        if d.support() != first.support() || d.prob() != first.prob() {
            return Err(AtmError::GridMismatch("Fréchet mean requires shared grids".into()));
        }
        for (a, q) in acc.iter_mut().zip(d.quantile_values()) {
            *a += q;
        }
    }
    let n = dists.len() as f64;
    for a in acc.iter_mut() {
        *a /= n;
    }
    Distribution::new(first.support(), first.prob().clone(), acc)
}

/// Trapezoid integral of values tabulated at the probability levels,
/// extended flat to the boundary of [0, 1].
fn integrate_prob(prob: &ProbGrid, values: &[f64]) -> f64 {
    let levels = prob.levels();
    let k = levels.len();
    if k == 1 {
        return values[0];
    }
    let mut acc = levels[0] * values[0] + (1.0 - levels[k - 1]) * values[k - 1];
    for j in 1..k {
        acc += 0.5 * (values[j] + values[j - 1]) * (levels[j] - levels[j - 1]);
    }
    acc
}

/// 2-Wasserstein distance: L2 distance between quantile functions.
pub fn wasserstein_distance(mu1: &Distribution, mu2: &Distribution) -> Result<f64> {
    if mu1.support() != mu2.support() || mu1.prob() != mu2.prob() {
        return Err(AtmError::GridMismatch("Wasserstein distance requires shared grids".into()));
    }
    let sq: Vec<f64> = mu1
        .quantile_values()
        .iter()
        .zip(mu2.quantile_values())
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    Ok(integrate_prob(mu1.prob(), &sq).max(0.0).sqrt())
}

/// Inverse log-quantile-density transform: reads `f` (tabulated uniformly on
/// [0,1]) as a log quantile density and reconstructs the quantile function by
/// normalized exponentiated integration onto the target support.
pub fn lqd_inverse(f: &[f64], support: Grid, prob: ProbGrid) -> Result<Distribution> {
    if f.len() < 2 {
        return Err(AtmError::Parameter("lqd_inverse needs at least 2 tabulation points".into()));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(AtmError::Parameter("lqd_inverse input must be finite".into()));
    }
    let n = f.len();
    let h = 1.0 / (n - 1) as f64;
    let expf: Vec<f64> = f.iter().map(|v| v.exp()).collect();
    let mut cum = vec![0.0; n];
    for i in 1..n {
        cum[i] = cum[i - 1] + 0.5 * (expf[i] + expf[i - 1]) * h;
    }
    let total = cum[n - 1];
    let span = support.s2() - support.s1();
    let quantile = prob
        .levels()
        .iter()
        .map(|&u| {
            let pos = u * (n - 1) as f64;
            let lo = (pos.floor() as usize).min(n - 2);
            let frac = pos - lo as f64;
            let c = cum[lo] + frac * (cum[lo + 1] - cum[lo]);
            support.s1() + span * (c / total)
        })
        .collect();
    Distribution::new(support, prob, quantile)
}
