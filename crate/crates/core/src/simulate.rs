//! Monte Carlo evaluation of ordering policies.
//!
//! Paths are generated in fixed-size batches. Batch `b` draws from a ChaCha8
//! stream selected by `b` under the user seed, and batch sums are combined
//! in batch order with exact integer arithmetic, so the report does not
//! depend on the number of worker threads.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{inventory_transition, Money, ProblemInstance, Units};
use crate::policy::ScsPolicy;
use crate::sdp::SdpSolution;

/// Paths per random stream.
pub const BATCH_SIZE: u64 = 4096;

pub const RNG_ALGORITHM: &str =
    "chacha8 (rand_chacha 0.9), stream = batch index, batch = 4096 paths";

/// Anything that picks an order quantity from a state.
pub trait OrderPolicy: Sync {
    fn horizon(&self) -> usize;

    /// Order quantity in period `n` (1-based).
    fn order(&self, n: usize, inventory: Units, cash: Money, instance: &ProblemInstance) -> Units;
}

impl OrderPolicy for ScsPolicy {
    fn horizon(&self) -> usize {
        ScsPolicy::horizon(self)
    }

    fn order(&self, n: usize, inventory: Units, cash: Money, instance: &ProblemInstance) -> Units {
        ScsPolicy::order(self, n, inventory, cash, instance)
    }
}

/// The optimal action table. States off the tabulated grid are not
/// reachable from the solved initial state.
impl OrderPolicy for SdpSolution {
    fn horizon(&self) -> usize {
        SdpSolution::horizon(self)
    }

    fn order(&self, n: usize, inventory: Units, cash: Money, _: &ProblemInstance) -> Units {
        SdpSolution::order(self, n, inventory, cash)
            .unwrap_or_else(|| panic!("state ({inventory}, {cash}) not tabulated in period {n}"))
    }
}

/// Never orders.
#[derive(Debug, Clone, Copy)]
pub struct NeverOrder {
    pub horizon: usize,
}

impl OrderPolicy for NeverOrder {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn order(&self, _: usize, _: Units, _: Money, _: &ProblemInstance) -> Units {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    /// Mean terminal cash increment `R_N + gamma x_N - R_0`.
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
    pub seed: u64,
    pub rng: String,
    /// Orders the policy asked for beyond what cash allowed, cut to capacity.
    pub clamped_orders: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
}

impl SimulationReport {
    pub fn with_reference(mut self, reference: f64) -> Result<Self> {
        self.gap = Some(gap(reference, self.mean)?);
        self.reference = Some(reference);
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

/// Relative shortfall `(reference - achieved) / |reference|`.
pub fn gap(reference: f64, achieved: f64) -> Result<f64> {
    if reference == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((reference - achieved) / reference.abs())
}

#[derive(Default)]
struct Totals {
    sum: i128,
    sum_sq: i128,
    clamped: u64,
}

/// One path from the initial state; returns the terminal cash increment and
/// the number of clamped orders.
pub fn simulate_path<P: OrderPolicy + ?Sized, R: Rng>(
    instance: &ProblemInstance,
    policy: &P,
    rng: &mut R,
) -> (Money, u64) {
    let start = instance.initial_state();
    let (mut x, mut cash) = (start.inventory, start.cash);
    let mut clamped = 0;
    for n in 1..=instance.horizon() {
        let wanted = policy.order(n, x, cash, instance).max(0);
        let q = wanted.min(instance.order_capacity(cash));
        if q < wanted {
            clamped += 1;
        }
        let d = instance.demand(n).sample_from_uniform(rng.random::<f64>());
        let y = x + q;
        cash += instance
            .cash_increment(x, y, d)
            .expect("order is non-negative");
        x = inventory_transition(y, d);
    }
    (cash + instance.salvage * x - start.cash, clamped)
}

pub fn simulate<P: OrderPolicy + ?Sized>(
    instance: &ProblemInstance,
    policy: &P,
    samples: u64,
    seed: u64,
) -> Result<SimulationReport> {
    if samples == 0 {
        return Err(Error::NoSamples);
    }
    if policy.horizon() != instance.horizon() {
        return Err(Error::HorizonMismatch {
            policy: policy.horizon(),
            instance: instance.horizon(),
        });
    }
    let batches = samples.div_ceil(BATCH_SIZE);
    let per_batch: Vec<Totals> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let count = BATCH_SIZE.min(samples - b * BATCH_SIZE);
            let mut t = Totals::default();
            for _ in 0..count {
                let (v, clamped) = simulate_path(instance, policy, &mut rng);
                t.sum += v as i128;
                t.sum_sq += (v as i128) * (v as i128);
                t.clamped += clamped;
            }
            t
        })
        .collect();
    let total = per_batch
        .into_iter()
        .fold(Totals::default(), |a, b| Totals {
            sum: a.sum + b.sum,
            sum_sq: a.sum_sq + b.sum_sq,
            clamped: a.clamped + b.clamped,
        });

    let n = samples as f64;
    let mean = total.sum as f64 / n;
    let std_error = if samples > 1 {
        // exact integer numerator keeps the variance free of cancellation
        let num = samples as i128 * total.sum_sq - total.sum * total.sum;
        (num as f64 / (n * (n - 1.0))).sqrt() / n.sqrt()
    } else {
        0.0
    };
    Ok(SimulationReport {
        mean,
        std_error,
        samples,
        seed,
        rng: RNG_ALGORITHM.to_string(),
        clamped_orders: total.clamped,
        reference: None,
        gap: None,
    })
}
