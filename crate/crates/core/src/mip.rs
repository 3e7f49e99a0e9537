//! Expected-value replenishment plan plus per-cycle newsvendor thresholds.
//!
//! The plan fixes the ordering periods up front by maximizing the terminal
//! cash of the deterministic (expected-demand) model. Each run of periods
//! served by one order becomes an ordering cycle, and `(s, C(x), S)` for the
//! periods of a cycle come from newsvendor approximations on the cycle's
//! convolved demand. The plan is found by enumerating all `2^N` order
//! patterns, which is exact for the horizons this is meant for.

use rayon::prelude::*;

use crate::demand::convolve;
use crate::error::{Error, Result};
use crate::model::{Money, ProblemInstance, Units};
use crate::policy::{last_period_parameters, CashThreshold, PeriodPolicy, ScsPolicy};
use crate::sdp::TIE_TOLERANCE;

/// Longest horizon accepted by [`solve_plan`].
pub const MAX_PLAN_HORIZON: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplenishmentPlan {
    /// `z_n`: whether period `n` orders.
    pub orders: Vec<bool>,
    /// Expected order-up-to level per period.
    pub order_up_to: Vec<f64>,
    /// Expected end-of-period inventory, starting with `x_0`.
    pub inventory: Vec<f64>,
    /// Expected end-of-period cash, starting with `R_0`.
    pub cash: Vec<f64>,
    /// Expected demand per period.
    pub expected_demand: Vec<f64>,
    /// Expected terminal cash increment.
    pub objective: f64,
}

impl ReplenishmentPlan {
    pub fn horizon(&self) -> usize {
        self.orders.len()
    }

    /// Ordering cycles as 1-based inclusive `(first, last)` period pairs.
    pub fn cycles(&self) -> Vec<(usize, usize)> {
        let n = self.orders.len();
        let starts: Vec<usize> = (0..n).filter(|i| self.orders[*i]).map(|i| i + 1).collect();
        starts
            .iter()
            .enumerate()
            .map(|(k, first)| {
                let last = starts.get(k + 1).map(|next| next - 1).unwrap_or(n);
                (*first, last)
            })
            .collect()
    }
}

fn real_capacity(instance: &ProblemInstance, cash: f64) -> f64 {
    let spare = cash - (instance.fixed_order_cost + instance.overhead) as f64;
    (spare / instance.unit_cost as f64).max(0.0)
}

/// Forward pass of the expected-value model for one order pattern. Returns
/// `None` when an ordering period cannot pay its fixed cost and overhead.
pub fn evaluate_pattern(instance: &ProblemInstance, orders: &[bool]) -> Option<ReplenishmentPlan> {
    let n = instance.horizon();
    assert_eq!(orders.len(), n, "pattern length must match the horizon");
    let demand: Vec<f64> = instance.demands().iter().map(|d| d.mean()).collect();
    let (p, c) = (instance.price as f64, instance.unit_cost as f64);
    let (k, w) = (instance.fixed_order_cost as f64, instance.overhead as f64);

    let mut x = instance.initial_inventory as f64;
    let mut r = instance.initial_cash as f64;
    let mut inventory = vec![x];
    let mut cash = vec![r];
    let mut levels = Vec::with_capacity(n);
    for t in 0..n {
        let level = if orders[t] {
            if r < k + w {
                return None;
            }
            let next = (t + 1..n).find(|m| orders[*m]).unwrap_or(n);
            let cycle_demand: f64 = demand[t..next].iter().sum();
            (x + real_capacity(instance, r)).min(cycle_demand).max(x)
        } else {
            x
        };
        let fixed = if orders[t] { k } else { 0.0 };
        r += p * level.min(demand[t]) - fixed - c * (level - x) - w;
        x = (level - demand[t]).max(0.0);
        levels.push(level);
        inventory.push(x);
        cash.push(r);
    }
    let objective = r + instance.salvage as f64 * x - instance.initial_cash as f64;
    Some(ReplenishmentPlan {
        orders: orders.to_vec(),
        order_up_to: levels,
        inventory,
        cash,
        expected_demand: demand,
        objective,
    })
}

fn pattern(bits: u32, n: usize) -> Vec<bool> {
    (0..n).map(|i| bits >> i & 1 == 1).collect()
}

/// Best order pattern by exhaustive enumeration; ties go to the pattern with
/// the smallest bit encoding (period `n` is bit `n - 1`).
pub fn solve_plan(instance: &ProblemInstance) -> Result<ReplenishmentPlan> {
    let n = instance.horizon();
    if n > MAX_PLAN_HORIZON {
        return Err(Error::HorizonTooLong {
            horizon: n,
            limit: MAX_PLAN_HORIZON,
        });
    }
    let best = (0..1u32 << n)
        .into_par_iter()
        .filter_map(|bits| {
            evaluate_pattern(instance, &pattern(bits, n)).map(|p| (bits, p.objective))
        })
        .reduce_with(|a, b| {
            if b.1 > a.1 + TIE_TOLERANCE || (b.1 > a.1 - TIE_TOLERANCE && b.0 < a.0) {
                b
            } else {
                a
            }
        })
        .expect("the never-order pattern is always feasible");
    Ok(evaluate_pattern(instance, &pattern(best.0, n)).expect("feasible"))
}

/// Newsvendor profit over periods `first..=last` without fixed or overhead
/// costs, with salvage when the cycle ends the horizon.
pub fn cycle_profit(instance: &ProblemInstance, first: usize, last: usize, y: Units) -> f64 {
    let total = convolve(&instance.demands()[first - 1..last]);
    cycle_profit_on(instance, &total, last == instance.horizon(), y)
}

fn cycle_profit_on(
    instance: &ProblemInstance,
    total: &crate::demand::DemandDistribution,
    ends_horizon: bool,
    y: Units,
) -> f64 {
    let mut v = instance.price as f64 * total.expected_sales(y) - (instance.unit_cost * y) as f64;
    if ends_horizon {
        v += instance.salvage as f64 * total.expected_leftover(y);
    }
    v
}

/// `(s, S, C(x))` for every period of the cycle `first..=last`.
pub fn cycle_policy(
    instance: &ProblemInstance,
    plan: &ReplenishmentPlan,
    first: usize,
    last: usize,
) -> Vec<PeriodPolicy> {
    let (p, c, gamma) = (instance.price, instance.unit_cost, instance.salvage);
    let k = instance.fixed_order_cost as f64;
    let ends_horizon = last == instance.horizon();
    (first..=last)
        .map(|i| {
            let total = convolve(&instance.demands()[i - 1..last]);
            let fractile = if ends_horizon {
                (p - c) as f64 / (p - gamma) as f64
            } else {
                (p - c) as f64 / p as f64
            };
            let best_level = total.inverse_cdf(fractile);
            let reach = plan.inventory[i - 1] + real_capacity(instance, plan.cash[i - 1]);
            let big_s = (reach.floor() as Units).min(best_level).max(0);

            let profit = |y: Units| cycle_profit_on(instance, &total, ends_horizon, y);
            let target = profit(big_s) - k - TIE_TOLERANCE;
            let s = (0..=big_s).find(|y| profit(*y) >= target).unwrap_or(big_s);

            let mut pp = PeriodPolicy::new(i);
            pp.s = s;
            pp.big_s = big_s;
            for x in 0..s {
                pp.thresholds
                    .insert(x, single_period_threshold(instance, i, x));
            }
            pp
        })
        .collect()
}

/// One-period cash threshold: the largest cash whose affordable order does
/// not earn back the fixed cost, or `Never` when even the best single-period
/// order cannot.
fn single_period_threshold(instance: &ProblemInstance, i: usize, x: Units) -> CashThreshold {
    let demand = instance.demand(i);
    let (p, c) = (instance.price, instance.unit_cost);
    let k = instance.fixed_order_cost as f64;
    let profit = |y: Units| p as f64 * demand.expected_sales(y) - (c * y) as f64;
    let peak = demand.inverse_cdf((p - c) as f64 / p as f64);
    if profit(peak) < k {
        return CashThreshold::Never;
    }
    let base = profit(x) + TIE_TOLERANCE;
    match (1..=peak - x).find(|b| profit(x + b) - k > base) {
        Some(b) => CashThreshold::Cash(threshold_cash(instance, b)),
        None => CashThreshold::Never,
    }
}

/// Largest cash that affords fewer than `b` units.
fn threshold_cash(instance: &ProblemInstance, b: Units) -> Money {
    instance.fixed_order_cost + instance.overhead + instance.unit_cost * b - 1
}

/// Full heuristic policy: plan, cycle thresholds, closed-form last period.
pub fn build_policy(instance: &ProblemInstance) -> Result<ScsPolicy> {
    let plan = solve_plan(instance)?;
    Ok(policy_from_plan(instance, &plan))
}

pub fn policy_from_plan(instance: &ProblemInstance, plan: &ReplenishmentPlan) -> ScsPolicy {
    let n = instance.horizon();
    let mut periods: Vec<PeriodPolicy> = (1..=n).map(PeriodPolicy::new).collect();
    for (first, last) in plan.cycles() {
        for pp in cycle_policy(instance, plan, first, last) {
            let idx = pp.period - 1;
            periods[idx] = pp;
        }
    }
    periods[n - 1] = last_period_parameters(instance);
    ScsPolicy::new(periods)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{last_period_policy, last_period_profit};

    fn table3() -> ProblemInstance {
        ProblemInstance::poisson(&[20.0, 7.0, 2.0, 14.0], 24, 1, 2, 4, 0, 0, 33).unwrap()
    }

    #[test]
    fn single_profitable_period_orders() {
        let inst = ProblemInstance::poisson(&[20.0], 10, 1, 2, 5, 0, 0, 60).unwrap();
        let plan = solve_plan(&inst).unwrap();
        assert_eq!(plan.orders, vec![true]);
    }

    #[test]
    fn unprofitable_fixed_cost_never_orders() {
        let inst = ProblemInstance::poisson(&[5.0, 5.0, 5.0], 1000, 1, 2, 5, 0, 0, 2000).unwrap();
        let plan = solve_plan(&inst).unwrap();
        assert_eq!(plan.orders, vec![false; 3]);
        assert!((plan.objective + 6.0).abs() < 1e-12);
    }

    #[test]
    fn plan_invariants() {
        let inst = table3().with_price(5).unwrap();
        let plan = solve_plan(&inst).unwrap();
        let (k, c, w) = (24.0, 1.0, 2.0);
        for t in 0..inst.horizon() {
            if plan.orders[t] {
                let spend = k + c * (plan.order_up_to[t] - plan.inventory[t]) + w;
                assert!(plan.cash[t] >= spend - 1e-9);
            } else {
                assert_eq!(plan.order_up_to[t], plan.inventory[t]);
            }
        }
    }

    #[test]
    fn enumeration_matches_reenumeration() {
        let inst = ProblemInstance::poisson(&[6.0, 3.0, 9.0, 4.0, 7.0, 2.0], 8, 1, 1, 4, 0, 0, 20)
            .unwrap();
        let plan = solve_plan(&inst).unwrap();
        let mut best = f64::NEG_INFINITY;
        for bits in 0..64u32 {
            let z: Vec<bool> = (0..6).map(|i| (bits >> i) & 1 == 1).collect();
            if let Some(p) = evaluate_pattern(&inst, &z) {
                best = best.max(p.objective);
            }
        }
        assert!((plan.objective - best).abs() < 1e-9);
    }

    #[test]
    fn rejects_long_horizons() {
        let inst = ProblemInstance::poisson(&[3.0; 25], 5, 1, 1, 3, 0, 0, 20).unwrap();
        assert!(matches!(
            solve_plan(&inst),
            Err(Error::HorizonTooLong { .. })
        ));
    }

    #[test]
    fn cycles_follow_pattern() {
        let inst = ProblemInstance::poisson(&[3.0; 5], 5, 1, 1, 3, 0, 0, 200).unwrap();
        let plan = evaluate_pattern(&inst, &[true, false, false, true, false]).unwrap();
        assert_eq!(plan.cycles(), vec![(1, 3), (4, 5)]);
    }

    #[test]
    fn cycle_profit_last_period_is_salvage_profit_without_overhead() {
        let inst = ProblemInstance::poisson(&[5.0, 8.0], 10, 3, 2, 5, 1, 0, 30).unwrap();
        for y in 0..20 {
            let a = cycle_profit(&inst, 2, 2, y);
            let b = last_period_profit(&inst, y) + inst.overhead as f64;
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(cycle_profit(&inst, 1, 2, 0), 0.0);
    }

    #[test]
    fn zero_fixed_cost_gives_s_equal_big_s() {
        let inst = ProblemInstance::poisson(&[6.0, 6.0, 6.0], 0, 1, 1, 4, 0, 0, 100).unwrap();
        let plan = evaluate_pattern(&inst, &[true, false, false]).unwrap();
        for pp in cycle_policy(&inst, &plan, 1, 3) {
            assert_eq!(pp.s, pp.big_s);
        }
    }

    #[test]
    fn never_marker_when_single_period_cannot_cover_k() {
        // a tiny period-2 demand can never earn back K = 24
        let inst = table3();
        let plan = evaluate_pattern(&inst, &[true, true, false, false]).unwrap();
        let pol = cycle_policy(&inst, &plan, 2, 4);
        let p3 = &pol[1];
        assert!(p3.thresholds.values().all(|c| *c == CashThreshold::Never));
    }

    #[test]
    fn one_period_policy_is_the_closed_form() {
        let inst = ProblemInstance::poisson(&[11.0], 12, 1, 2, 4, 0, 0, 40).unwrap();
        let pol = build_policy(&inst).unwrap();
        let lp = last_period_policy(&inst);
        assert_eq!(pol.period(1).s, lp.reorder_point);
        assert_eq!(pol.period(1).big_s, lp.order_up_to);
        for x in 0..lp.reorder_point {
            assert_eq!(
                pol.period(1).thresholds[&x],
                CashThreshold::Cash(lp.cash_thresholds[x as usize])
            );
        }
    }

    #[test]
    fn cycle_levels_are_ordered() {
        let inst = table3().with_price(5).unwrap();
        let plan = solve_plan(&inst).unwrap();
        for (first, last) in plan.cycles() {
            for pp in cycle_policy(&inst, &plan, first, last) {
                let total = convolve(&inst.demands()[pp.period - 1..last]);
                // (p - c) / p and (p - c) / (p - gamma) coincide when gamma = 0
                let q = 0.8;
                assert!(pp.s <= pp.big_s);
                assert!(pp.big_s <= total.inverse_cdf(q));
            }
        }
    }
}
