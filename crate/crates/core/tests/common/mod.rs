//! Instance generators and table checks shared by the integration suites.
#![allow(dead_code)]

use std::collections::HashMap;

use cashlot::demand::PmfTable;
use cashlot::mip::cycle_profit;
use cashlot::model::DemandSpec;
use cashlot::sdp::{
    conservative_c, last_period_policy, optimal_last_period_order, s_threshold, SdpSolution,
};
use cashlot::simulate::simulate;
use cashlot::{Money, ProblemInstance, Units};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-9;

/// Raw parameters of a small random instance.
#[derive(Debug, Clone)]
pub struct SmallInstance {
    pub weights: Vec<(i64, Vec<u32>)>,
    pub fixed_order_cost: Money,
    pub unit_cost: Money,
    pub margin: Money,
    pub salvage: Money,
    pub overhead: Money,
    pub initial_inventory: Units,
    pub initial_cash: Money,
}

impl SmallInstance {
    pub fn build(&self) -> ProblemInstance {
        let tables = self
            .weights
            .iter()
            .map(|(lo, w)| {
                let total: u32 = w.iter().sum();
                let pmf = w.iter().map(|v| *v as f64 / total as f64).collect();
                PmfTable {
                    support_min: *lo,
                    pmf,
                }
            })
            .collect();
        ProblemInstance::new(
            self.fixed_order_cost,
            self.unit_cost,
            self.unit_cost + self.margin,
            self.salvage,
            self.overhead,
            self.initial_inventory,
            self.initial_cash,
            DemandSpec::Pmf { tables },
        )
        .expect("generated instance is valid")
    }
}

/// Demand support stays within `0..=max_demand`; every period has positive
/// total weight.
pub fn random_instance(rng: &mut impl Rng, max_periods: usize, max_demand: i64) -> SmallInstance {
    let periods = rng.random_range(1..=max_periods);
    let weights = (0..periods)
        .map(|_| {
            let lo = rng.random_range(0..=3.min(max_demand));
            let hi = rng.random_range(lo..=max_demand);
            let mut w: Vec<u32> = (lo..=hi).map(|_| rng.random_range(0..10)).collect();
            w[0] += 1;
            (lo, w)
        })
        .collect();
    let unit_cost = rng.random_range(1..=2);
    SmallInstance {
        weights,
        fixed_order_cost: rng.random_range(0..=25),
        unit_cost,
        margin: rng.random_range(1..=5),
        salvage: rng.random_range(0..unit_cost),
        overhead: rng.random_range(0..=3),
        initial_inventory: rng.random_range(0..=4),
        initial_cash: rng.random_range(0..=50),
    }
}

/// The fixed suite of small instances used by the acceptance checks.
pub fn property_suite(count: usize) -> Vec<ProblemInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    (0..count)
        .map(|_| random_instance(&mut rng, 4, 12).build())
        .collect()
}

pub type Check = Result<(), String>;

pub fn monotone_in_cash(inst: &ProblemInstance, sol: &SdpSolution) -> Check {
    for n in 1..=inst.horizon() {
        let grid = sol.grid(n);
        for s in grid.states() {
            if let Some(up) = sol.value(n, s.inventory, s.cash + 1) {
                let here = sol.value(n, s.inventory, s.cash).unwrap();
                if up < here - TOL {
                    return Err(format!(
                        "F_{n}({}, {}) = {here} > F at R+1 = {up}",
                        s.inventory, s.cash
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Buying `b` units with `K + c b` extra cash reaches the stocked state
/// only when the overhead is covered too, so states with `R < W` are
/// skipped unless `literal` is set.
pub fn exchange_violations(
    inst: &ProblemInstance,
    sol: &SdpSolution,
    literal: bool,
) -> Vec<String> {
    let (k, c) = (inst.fixed_order_cost, inst.unit_cost);
    let mut out = Vec::new();
    for n in 1..=inst.horizon() {
        for s in sol.grid(n).states() {
            if !literal && s.cash < inst.overhead {
                continue;
            }
            for b in 1.. {
                let richer = sol.value(n, s.inventory, s.cash + k + c * b);
                let stocked = sol.value(n, s.inventory + b, s.cash);
                let (Some(richer), Some(stocked)) = (richer, stocked) else {
                    if !sol.grid(n).contains(s.inventory + b, s.cash) {
                        break;
                    }
                    continue;
                };
                if richer + ((k + c * b) as f64) < stocked - TOL {
                    out.push(format!(
                        "period {n} state {s:?} b={b}: {richer} + K + cb < {stocked}"
                    ));
                }
            }
        }
    }
    out
}

pub fn exchange(inst: &ProblemInstance, sol: &SdpSolution) -> Check {
    match exchange_violations(inst, sol, false).into_iter().next() {
        Some(v) => Err(v),
        None => Ok(()),
    }
}

pub fn no_order_above_threshold(inst: &ProblemInstance, sol: &SdpSolution) -> Check {
    for n in 1..=inst.horizon() {
        let threshold = s_threshold(inst, n);
        for (s, _, q) in sol.period(n).entries() {
            if s.inventory >= threshold && q > 0 {
                return Err(format!(
                    "period {n} state {s:?} orders {q} above threshold {threshold}"
                ));
            }
        }
    }
    Ok(())
}

pub fn no_order_below_conservative_cash(inst: &ProblemInstance, sol: &SdpSolution) -> Check {
    for n in 1..=inst.horizon() {
        for (s, _, q) in sol.period(n).entries() {
            let limit = conservative_c(inst, n, s.inventory);
            if s.cash <= limit && q > 0 {
                return Err(format!(
                    "period {n} state {s:?} orders {q} at or below cash {limit}"
                ));
            }
        }
    }
    Ok(())
}

pub fn last_period_closed_form(inst: &ProblemInstance, sol: &SdpSolution) -> Check {
    let n = inst.horizon();
    let lp = last_period_policy(inst);
    for (s, _, q) in sol.period(n).entries() {
        let expected = optimal_last_period_order(inst, &lp, s.inventory, s.cash);
        if q != expected {
            return Err(format!(
                "state {s:?}: solver orders {q}, closed form {expected}"
            ));
        }
    }
    Ok(())
}

fn concave(values: &[f64]) -> bool {
    values
        .windows(3)
        .all(|w| w[2] - 2.0 * w[1] + w[0] <= TOL * (1.0 + w[1].abs()))
}

pub fn profit_concavity(inst: &ProblemInstance) -> Check {
    let n = inst.horizon();
    let top = inst.max_demand() * n as i64 + 2;
    for i in 1..=n {
        let one: Vec<f64> = (0..=top).map(|y| inst.expected_profit(i, y)).collect();
        if !concave(&one) {
            return Err(format!("one-period profit of period {i} is not concave"));
        }
        for last in i..=n {
            let cycle: Vec<f64> = (0..=top).map(|y| cycle_profit(inst, i, last, y)).collect();
            if !concave(&cycle) {
                return Err(format!("cycle profit {i}..{last} is not concave"));
            }
        }
    }
    Ok(())
}

/// Simulated mean of the optimal table within four standard errors of its
/// value.
pub fn simulation_matches_value(
    inst: &ProblemInstance,
    sol: &SdpSolution,
    samples: u64,
    seed: u64,
) -> Check {
    let rep = simulate(inst, sol, samples, seed).map_err(|e| e.to_string())?;
    let value = sol.optimal_value();
    let allowed = 4.0 * rep.std_error + 1e-9 * (1.0 + value.abs());
    if (rep.mean - value).abs() > allowed {
        return Err(format!(
            "simulated {} vs value {value} (std error {})",
            rep.mean, rep.std_error
        ));
    }
    Ok(())
}

/// Exhaustive backward search over every feasible order quantity at every
/// reachable state, memoized on `(period, x, R)`.
pub fn brute_force_value(inst: &ProblemInstance) -> f64 {
    fn go(
        inst: &ProblemInstance,
        n: usize,
        x: i64,
        r: i64,
        memo: &mut HashMap<(usize, i64, i64), f64>,
    ) -> f64 {
        if n > inst.horizon() {
            return (inst.salvage * x) as f64;
        }
        if let Some(v) = memo.get(&(n, x, r)) {
            return *v;
        }
        let (k, c, p, w) = (
            inst.fixed_order_cost,
            inst.unit_cost,
            inst.price,
            inst.overhead,
        );
        let spare = r - k - w;
        let most = if spare > 0 { spare / c } else { 0 };
        let mut best = f64::NEG_INFINITY;
        for q in 0..=most {
            let y = x + q;
            let mut total = 0.0;
            for (d, prob) in inst.demand(n).iter() {
                let sold = d.min(y);
                let step = p * sold - if q > 0 { k } else { 0 } - c * q - w;
                total += prob * (step as f64 + go(inst, n + 1, y - sold, r + step, memo));
            }
            if total > best {
                best = total;
            }
        }
        memo.insert((n, x, r), best);
        best
    }
    let s = inst.initial_state();
    go(inst, 1, s.inventory, s.cash, &mut HashMap::new())
}
