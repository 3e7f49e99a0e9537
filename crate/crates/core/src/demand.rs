//! Discrete, bounded demand distributions.
//!
//! Every distribution lives on an integer support `[support_min, support_max]`
//! and carries its cumulative table alongside the pmf. Cycle demand (the sum
//! of several independent periods) is obtained by convolving the per-period
//! tables, so the solver, the heuristics and the simulator all see the same
//! truncated probability model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tail mass dropped when truncating an unbounded distribution.
pub const DEFAULT_TAIL_MASS: f64 = 1e-6;

const PMF_SUM_TOLERANCE: f64 = 1e-12;
const QUANTILE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DemandDistribution {
    support_min: i64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl DemandDistribution {
    /// Builds a distribution from a pmf starting at `support_min`.
    ///
    /// Trailing zero-probability entries are trimmed so that `support_max` is
    /// always a value with positive mass.
    pub fn new(support_min: i64, pmf: Vec<f64>) -> Result<Self> {
        if support_min < 0 {
            return Err(Error::InvalidDemand(format!(
                "support minimum {support_min} is negative"
            )));
        }
        if pmf.is_empty() {
            return Err(Error::InvalidDemand("empty pmf".into()));
        }
        if let Some(bad) = pmf.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidDemand(format!(
                "pmf entry {bad} is not a probability"
            )));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOLERANCE {
            return Err(Error::InvalidDemand(format!(
                "pmf sums to {total}, expected 1"
            )));
        }
        Ok(Self::from_raw(support_min, pmf))
    }

    /// Normalizes arbitrary nonnegative weights into a distribution.
    pub fn from_weights(support_min: i64, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::InvalidDemand(
                "weights do not have positive mass".into(),
            ));
        }
        let pmf = weights.into_iter().map(|w| w / total).collect();
        Self::new(support_min, pmf)
    }

    pub fn point_mass(value: i64) -> Result<Self> {
        Self::new(value, vec![1.0])
    }

    fn from_raw(mut support_min: i64, mut pmf: Vec<f64>) -> Self {
        while pmf.len() > 1 && pmf.last() == Some(&0.0) {
            pmf.pop();
        }
        let leading = pmf
            .iter()
            .take_while(|v| **v == 0.0)
            .count()
            .min(pmf.len() - 1);
        if leading > 0 {
            pmf.drain(..leading);
            support_min += leading as i64;
        }
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for v in &pmf {
            acc += v;
            cdf.push(acc);
        }
        // the top of the support carries all the remaining mass
        *cdf.last_mut().expect("non-empty") = 1.0;
        Self {
            support_min,
            pmf,
            cdf,
        }
    }

    /// Poisson demand truncated at the smallest `D_u` whose cumulative mass
    /// reaches `1 - tail_mass`, renormalized over `[0, D_u]`.
    pub fn truncated_poisson(mean: f64, tail_mass: f64) -> Result<Self> {
        if !mean.is_finite() || mean <= 0.0 {
            return Err(Error::InvalidDemand(format!(
                "Poisson mean {mean} must be positive"
            )));
        }
        if !(tail_mass > 0.0 && tail_mass < 1.0) {
            return Err(Error::InvalidDemand(format!(
                "tail mass {tail_mass} outside (0, 1)"
            )));
        }
        let target = 1.0 - tail_mass;
        let ln_mean = mean.ln();
        let mut ln_p = -mean;
        let mut weights = Vec::new();
        let mut acc = 0.0;
        let mut k = 0u64;
        loop {
            let p = ln_p.exp();
            weights.push(p);
            acc += p;
            // past the mode the pmf only shrinks; stop once the mass is reached
            if acc >= target {
                break;
            }
            k += 1;
            ln_p += ln_mean - (k as f64).ln();
            if k > 10_000_000 {
                return Err(Error::InvalidDemand(format!(
                    "Poisson mean {mean} is too large"
                )));
            }
        }
        let total: f64 = weights.iter().sum();
        let pmf = weights.into_iter().map(|w| w / total).collect();
        Ok(Self::from_raw(0, pmf))
    }

    pub fn support_min(&self) -> i64 {
        self.support_min
    }

    pub fn support_max(&self) -> i64 {
        self.support_min + self.pmf.len() as i64 - 1
    }

    /// Probabilities for `support_min..=support_max`.
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn prob(&self, d: i64) -> f64 {
        if d < self.support_min || d > self.support_max() {
            0.0
        } else {
            self.pmf[(d - self.support_min) as usize]
        }
    }

    /// `P(demand <= y)`.
    pub fn cdf(&self, y: i64) -> f64 {
        if y < self.support_min {
            0.0
        } else if y >= self.support_max() {
            1.0
        } else {
            self.cdf[(y - self.support_min) as usize]
        }
    }

    /// Iterates `(demand, probability)` pairs over the support.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let lo = self.support_min;
        self.pmf
            .iter()
            .enumerate()
            .map(move |(i, p)| (lo + i as i64, *p))
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(d, p)| d as f64 * p).sum()
    }

    /// Smallest `y` with `P(demand <= y) >= q`.
    pub fn inverse_cdf(&self, q: f64) -> i64 {
        let idx = self.cdf.partition_point(|c| *c < q - QUANTILE_TOLERANCE);
        self.support_min + idx.min(self.pmf.len() - 1) as i64
    }

    /// Inverse-transform sample for a uniform draw `u` in `[0, 1)`.
    pub fn sample_from_uniform(&self, u: f64) -> i64 {
        let idx = self.cdf.partition_point(|c| *c <= u);
        self.support_min + idx.min(self.pmf.len() - 1) as i64
    }

    /// `E[min(demand, y)]`.
    pub fn expected_sales(&self, y: i64) -> f64 {
        self.iter().map(|(d, p)| d.min(y) as f64 * p).sum()
    }

    /// `E[(y - demand)^+]`.
    pub fn expected_leftover(&self, y: i64) -> f64 {
        self.iter().map(|(d, p)| (y - d).max(0) as f64 * p).sum()
    }

    /// Distribution of the sum of two independent demands.
    pub fn convolve_with(&self, other: &DemandDistribution) -> DemandDistribution {
        let mut out = vec![0.0; self.pmf.len() + other.pmf.len() - 1];
        for (i, a) in self.pmf.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in other.pmf.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        let total: f64 = out.iter().sum();
        out.iter_mut().for_each(|v| *v /= total);
        Self::from_raw(self.support_min + other.support_min, out)
    }
}

/// Convolution of consecutive periods' demand, tagged with the 1-based
/// inclusive period range it aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolvedDemand {
    pub first_period: usize,
    pub last_period: usize,
    pub distribution: DemandDistribution,
}

/// Sums the independent demands of `dists`. Panics on an empty slice.
pub fn convolve(dists: &[DemandDistribution]) -> DemandDistribution {
    let (first, rest) = dists
        .split_first()
        .expect("convolve needs at least one distribution");
    rest.iter()
        .fold(first.clone(), |acc, d| acc.convolve_with(d))
}

/// Convolves periods `first..=last` (1-based) of `demands`.
pub fn convolve_periods(
    demands: &[DemandDistribution],
    first: usize,
    last: usize,
) -> ConvolvedDemand {
    assert!(
        first >= 1 && first <= last && last <= demands.len(),
        "bad period range"
    );
    ConvolvedDemand {
        first_period: first,
        last_period: last,
        distribution: convolve(&demands[first - 1..last]),
    }
}

/// Serialized form of one empirical pmf table.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PmfTable {
    #[serde(default)]
    pub support_min: i64,
    pub pmf: Vec<f64>,
}

impl From<&DemandDistribution> for PmfTable {
    fn from(d: &DemandDistribution) -> Self {
        PmfTable {
            support_min: d.support_min,
            pmf: d.pmf.clone(),
        }
    }
}
