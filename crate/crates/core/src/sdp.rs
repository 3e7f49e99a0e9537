//! Exact backward induction over integer (inventory, cash) states.
//!
//! Each period's state space is a ragged grid: inventory in
//! `[0, max_inventory]`, cash in `[min_cash, max_wealth - c * x]`. Bounding
//! `R + c x` ("wealth") instead of `R` alone keeps the grid closed under the
//! transitions while staying far smaller than a full rectangle, since wealth
//! can only grow by `(p - c)` per unit sold.
//!
//! The Bellman update is split in two passes. First the post-order value
//!
//! ```text
//! G(y, r) = E[p min(D, y) + F_{n+1}((y - D)^+, r + p min(D, y))]
//! ```
//!
//! is tabulated for every order-up-to level `y` and post-order cash `r`.
//! Then, since an order from `(x, R)` up to `y` leaves `r = u - c y` with
//! `u = R - K - W + c x` and the affordable levels are exactly
//! `y <= floor(u / c)`, every state on the same `u` diagonal shares one
//! suffix maximum over `y`.

use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::demand::convolve;
use crate::error::{Error, Result};
use crate::model::{Money, ProblemInstance, State, Units};

/// Two candidate values closer than this are treated as equal; the smaller
/// order wins.
pub const TIE_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_CELL_BUDGET: usize = 60_000_000;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Inventory range tabulated in the first period.
    pub first_inventory: (Units, Units),
    /// Cash range tabulated in the first period.
    pub first_cash: (Money, Money),
    /// Upper bound on the total number of tabulated cells.
    pub cell_budget: usize,
    /// Wall-clock limit, checked between periods.
    pub time_budget: Option<Duration>,
}

impl SolverConfig {
    /// Tabulates period one at the instance's initial state only.
    pub fn for_instance(instance: &ProblemInstance) -> Self {
        let s = instance.initial_state();
        Self {
            first_inventory: (s.inventory, s.inventory),
            first_cash: (s.cash, s.cash),
            cell_budget: DEFAULT_CELL_BUDGET,
            time_budget: None,
        }
    }

    /// Tabulates period one over a rectangle of states (the initial state is
    /// always included).
    pub fn with_first_period_grid(
        instance: &ProblemInstance,
        inventory: (Units, Units),
        cash: (Money, Money),
    ) -> Self {
        let s = instance.initial_state();
        Self {
            first_inventory: (inventory.0.min(s.inventory), inventory.1.max(s.inventory)),
            first_cash: (cash.0.min(s.cash), cash.1.max(s.cash)),
            cell_budget: DEFAULT_CELL_BUDGET,
            time_budget: None,
        }
    }

    pub fn cell_budget(mut self, cells: usize) -> Self {
        self.cell_budget = cells;
        self
    }

    pub fn time_budget(mut self, limit: Duration) -> Self {
        self.time_budget = Some(limit);
        self
    }
}

/// Ragged state grid `{(x, R): 0 <= x <= max_inventory,
/// min_cash <= R <= max_wealth - c x}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateGrid {
    max_inventory: Units,
    min_cash: Money,
    max_wealth: Money,
    unit_cost: Money,
    offsets: Vec<usize>,
}

impl StateGrid {
    fn new(max_inventory: Units, min_cash: Money, max_wealth: Money, unit_cost: Money) -> Self {
        let mut offsets = Vec::with_capacity(max_inventory.max(0) as usize + 2);
        let mut acc = 0usize;
        offsets.push(0);
        for x in 0..=max_inventory {
            let len = (max_wealth - unit_cost * x - min_cash + 1).max(0) as usize;
            acc += len;
            offsets.push(acc);
        }
        Self {
            max_inventory,
            min_cash,
            max_wealth,
            unit_cost,
            offsets,
        }
    }

    pub fn max_inventory(&self) -> Units {
        self.max_inventory
    }

    pub fn min_cash(&self) -> Money {
        self.min_cash
    }

    /// Upper bound on `R + c x`.
    pub fn max_wealth(&self) -> Money {
        self.max_wealth
    }

    pub fn max_cash(&self, x: Units) -> Money {
        self.max_wealth - self.unit_cost * x
    }

    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, x: Units, cash: Money) -> bool {
        (0..=self.max_inventory).contains(&x) && cash >= self.min_cash && cash <= self.max_cash(x)
    }

    pub fn index(&self, x: Units, cash: Money) -> Option<usize> {
        self.contains(x, cash)
            .then(|| self.offsets[x as usize] + (cash - self.min_cash) as usize)
    }

    fn row(&self, x: Units) -> std::ops::Range<usize> {
        self.offsets[x as usize]..self.offsets[x as usize + 1]
    }

    /// All states, row by row in increasing cash.
    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..=self.max_inventory)
            .flat_map(move |x| (self.min_cash..=self.max_cash(x)).map(move |r| State::new(x, r)))
    }
}

#[derive(Debug, Clone)]
pub struct PeriodTable {
    pub grid: StateGrid,
    values: Vec<f64>,
    orders: Vec<u32>,
}

impl PeriodTable {
    pub fn value(&self, x: Units, cash: Money) -> Option<f64> {
        self.grid.index(x, cash).map(|i| self.values[i])
    }

    pub fn order(&self, x: Units, cash: Money) -> Option<Units> {
        self.grid.index(x, cash).map(|i| self.orders[i] as Units)
    }

    /// `(state, value, order quantity)` over the whole grid.
    pub fn entries(&self) -> impl Iterator<Item = (State, f64, Units)> + '_ {
        self.grid
            .states()
            .zip(self.values.iter().zip(&self.orders))
            .map(|(s, (v, q))| (s, *v, *q as Units))
    }
}

/// Value and optimal-order tables for every period.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    periods: Vec<PeriodTable>,
    salvage: Money,
    initial: State,
}

impl SdpSolution {
    pub fn horizon(&self) -> usize {
        self.periods.len()
    }

    /// Table of period `n` (1-based).
    pub fn period(&self, n: usize) -> &PeriodTable {
        &self.periods[n - 1]
    }

    pub fn grid(&self, n: usize) -> &StateGrid {
        &self.period(n).grid
    }

    /// `F_n(x, R)`; period `N + 1` is the salvage boundary `gamma x`.
    pub fn value(&self, n: usize, x: Units, cash: Money) -> Option<f64> {
        if n == self.periods.len() + 1 {
            return Some(self.salvage as f64 * x as f64);
        }
        self.period(n).value(x, cash)
    }

    /// Optimal order quantity `Q*_n(x, R)`.
    pub fn order(&self, n: usize, x: Units, cash: Money) -> Option<Units> {
        self.period(n).order(x, cash)
    }

    /// Expected terminal cash increment of the optimal policy from the
    /// instance's initial state.
    pub fn optimal_value(&self) -> f64 {
        self.value(1, self.initial.inventory, self.initial.cash)
            .expect("initial state is always tabulated")
    }

    pub fn initial_state(&self) -> State {
        self.initial
    }

    /// Writes `period,x,R,F,Q` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["period", "x", "R", "F", "Q"])?;
        for (n, table) in self.periods.iter().enumerate() {
            for (s, v, q) in table.entries() {
                w.write_record(&[
                    (n + 1).to_string(),
                    s.inventory.to_string(),
                    s.cash.to_string(),
                    format!("{v:.10}"),
                    q.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Largest useful order-up-to level per period: stock beyond the largest
/// possible remaining demand can never be sold.
pub fn order_up_to_caps(instance: &ProblemInstance) -> Vec<Units> {
    let mut caps = vec![0; instance.horizon()];
    let mut acc = 0;
    for n in (0..instance.horizon()).rev() {
        acc += instance.demands()[n].support_max();
        caps[n] = acc;
    }
    caps
}

/// Per-period state grids reachable from the first-period rectangle.
pub fn state_grids(instance: &ProblemInstance, config: &SolverConfig) -> Vec<StateGrid> {
    let c = instance.unit_cost;
    let caps = order_up_to_caps(instance);
    let (x_lo, x_hi) = config.first_inventory;
    let (r_lo, r_hi) = config.first_cash;
    debug_assert!(x_lo <= x_hi && r_lo <= r_hi);
    let mut grids = Vec::with_capacity(instance.horizon());
    let mut grid = StateGrid::new(x_hi.max(0), r_lo, r_hi + c * x_hi.max(0), c);
    for (demand, cap) in instance.demands().iter().zip(&caps) {
        let min_cash = (grid.min_cash - instance.overhead).min(0);
        let max_wealth =
            grid.max_wealth - instance.overhead + (instance.price - c) * demand.support_max();
        let by_stock = (grid.max_inventory.max(*cap) - demand.support_min()).max(0);
        let by_wealth = (max_wealth - min_cash).div_euclid(c);
        let next = StateGrid::new(by_stock.min(by_wealth), min_cash, max_wealth, c);
        grids.push(std::mem::replace(&mut grid, next));
    }
    grids
}

/// Grid of post-order `(y, r)` pairs needed to evaluate `grid`.
fn post_order_grid(instance: &ProblemInstance, grid: &StateGrid, cap: Units) -> StateGrid {
    let c = instance.unit_cost;
    let min_cash = (grid.min_cash - instance.overhead).min(0);
    let max_wealth = grid.max_wealth - instance.overhead;
    let by_wealth = (max_wealth - min_cash).div_euclid(c);
    StateGrid::new(
        grid.max_inventory.max(cap).min(by_wealth),
        min_cash,
        max_wealth,
        c,
    )
}

/// Solves the optimality equation on the grids implied by `config`.
pub fn solve_with(instance: &ProblemInstance, config: &SolverConfig) -> Result<SdpSolution> {
    let grids = state_grids(instance, config);
    let caps = order_up_to_caps(instance);
    let tabulated: usize = grids.iter().map(StateGrid::len).sum();
    let scratch = grids
        .iter()
        .zip(&caps)
        .map(|(g, cap)| post_order_grid(instance, g, *cap).len())
        .max()
        .unwrap_or(0);
    let needed = tabulated + scratch;
    if needed > config.cell_budget {
        return Err(Error::GridTooLarge {
            needed,
            budget: config.cell_budget,
        });
    }

    let started = Instant::now();
    let n_periods = instance.horizon();
    let mut tables: Vec<Option<PeriodTable>> = vec![None; n_periods];
    for n in (1..=n_periods).rev() {
        let next = if n == n_periods {
            None
        } else {
            tables[n].as_ref()
        };
        let table = solve_period(instance, n, &grids[n - 1], caps[n - 1], next);
        tables[n - 1] = Some(table);
        if let Some(limit) = config.time_budget {
            if n > 1 && started.elapsed() > limit {
                return Err(Error::TimeBudget {
                    seconds: limit.as_secs_f64(),
                });
            }
        }
    }
    Ok(SdpSolution {
        periods: tables
            .into_iter()
            .map(|t| t.expect("every period solved"))
            .collect(),
        salvage: instance.salvage,
        initial: instance.initial_state(),
    })
}

/// Solves from the instance's initial state.
pub fn solve(instance: &ProblemInstance) -> Result<SdpSolution> {
    solve_with(instance, &SolverConfig::for_instance(instance))
}

fn solve_period(
    instance: &ProblemInstance,
    n: usize,
    grid: &StateGrid,
    cap: Units,
    next: Option<&PeriodTable>,
) -> PeriodTable {
    let p = instance.price;
    let c = instance.unit_cost;
    let k = instance.fixed_order_cost;
    let w = instance.overhead;
    let demand = instance.demand(n);
    let post = post_order_grid(instance, grid, cap);

    // G(y, r), one row per order-up-to level
    let post_rows: Vec<Vec<f64>> = (0..=post.max_inventory)
        .into_par_iter()
        .map(|y| {
            let r_lo = post.min_cash;
            let len = post.row(y).len();
            let mut row = vec![0.0; len];
            let mut tail = 0.0;
            for (d, q) in demand.iter() {
                if d >= y {
                    tail += q;
                    continue;
                }
                accumulate(&mut row, q, y, d, r_lo, p, instance.salvage, next);
            }
            if tail > 0.0 {
                accumulate(&mut row, tail, y, y, r_lo, p, instance.salvage, next);
            }
            row
        })
        .collect();
    let post_value =
        |y: Units, r: Money| -> f64 { post_rows[y as usize][(r - post.min_cash) as usize] };

    let mut values = vec![0.0; grid.len()];
    let mut orders = vec![0u32; grid.len()];

    // not ordering: y = x, r = R - W
    for x in 0..=grid.max_inventory {
        let range = grid.row(x);
        for (i, cash) in range.zip(grid.min_cash..) {
            values[i] = post_value(x, cash - w) - w as f64;
        }
    }

    // ordering, one diagonal u = R - K - W + c x at a time
    let u_max = grid.max_wealth - k - w;
    let candidates: Vec<Vec<(usize, f64, u32)>> = (c..=u_max.max(c - 1))
        .into_par_iter()
        .map(|u| {
            let top = (u / c).min(cap);
            let mut out = Vec::new();
            if top < 1 {
                return out;
            }
            // best[y] = best (value, level) over levels in [y, top]
            let mut best = vec![(f64::NEG_INFINITY, 0); top as usize + 2];
            for y in (1..=top).rev() {
                let r = u - c * y;
                let v = post_value(y, r) + r as f64;
                let above = best[y as usize + 1];
                best[y as usize] = if v >= above.0 - TIE_TOLERANCE {
                    (v, y)
                } else {
                    above
                };
            }
            for x in 0..top.min(grid.max_inventory + 1) {
                let cash = u + k + w - c * x;
                if let Some(i) = grid.index(x, cash) {
                    let (v, y) = best[x as usize + 1];
                    out.push((i, v - cash as f64, (y - x) as u32));
                }
            }
            out
        })
        .collect();
    for (i, v, q) in candidates.into_iter().flatten() {
        if v > values[i] + TIE_TOLERANCE {
            values[i] = v;
            orders[i] = q;
        }
    }

    PeriodTable {
        grid: grid.clone(),
        values,
        orders,
    }
}

/// Adds `q * (p s + F_{n+1}(y - s, r + p s))` for sales `s` across a row of
/// post-order cash values.
#[allow(clippy::too_many_arguments)]
fn accumulate(
    row: &mut [f64],
    q: f64,
    y: Units,
    sales: Units,
    r_lo: Money,
    p: Money,
    salvage: Money,
    next: Option<&PeriodTable>,
) {
    let revenue = (p * sales) as f64;
    let left = y - sales;
    match next {
        None => {
            let v = q * (revenue + (salvage * left) as f64);
            row.iter_mut().for_each(|g| *g += v);
        }
        Some(table) => {
            let start = table
                .grid
                .index(left, r_lo + p * sales)
                .expect("transition stays inside the next grid");
            let src = &table.values[start..start + row.len()];
            for (g, f) in row.iter_mut().zip(src) {
                *g += q * (revenue + f);
            }
        }
    }
}

/// Closed-form optimal policy of the final period.
#[derive(Debug, Clone, PartialEq)]
pub struct LastPeriodPolicy {
    pub reorder_point: Units,
    pub order_up_to: Units,
    /// `C(x)` for `x` in `0..reorder_point`.
    pub cash_thresholds: Vec<Money>,
}

impl LastPeriodPolicy {
    pub fn cash_threshold(&self, x: Units) -> Option<Money> {
        usize::try_from(x)
            .ok()
            .and_then(|i| self.cash_thresholds.get(i))
            .copied()
    }
}

/// Critical fractile `(p - c) / (p - gamma)`.
pub fn critical_fractile(instance: &ProblemInstance) -> f64 {
    (instance.price - instance.unit_cost) as f64 / (instance.price - instance.salvage) as f64
}

/// `L'(y)`: the last period's expected profit including salvage.
pub fn last_period_profit(instance: &ProblemInstance, y: Units) -> f64 {
    instance.expected_profit_with_salvage(instance.horizon(), y)
}

pub fn last_period_policy(instance: &ProblemInstance) -> LastPeriodPolicy {
    let n = instance.horizon();
    let k = instance.fixed_order_cost as f64;
    let profit = |y: Units| last_period_profit(instance, y);
    let big_s = instance.demand(n).inverse_cdf(critical_fractile(instance));
    let target = profit(big_s) - k - TIE_TOLERANCE;
    let small_s = (0..=big_s).find(|y| profit(*y) >= target).unwrap_or(big_s);

    let cash_thresholds = (0..small_s)
        .map(|x| {
            let base = profit(x) + TIE_TOLERANCE;
            // smallest affordable quantity that makes ordering pay
            let b = (1..=big_s - x)
                .find(|b| profit((x + b).min(big_s)) - k > base)
                .unwrap_or(big_s - x);
            instance.fixed_order_cost + instance.overhead + instance.unit_cost * b - 1
        })
        .collect();
    LastPeriodPolicy {
        reorder_point: small_s,
        order_up_to: big_s,
        cash_thresholds,
    }
}

/// Optimal final-period order from the closed form.
pub fn optimal_last_period_order(
    instance: &ProblemInstance,
    policy: &LastPeriodPolicy,
    x: Units,
    cash: Money,
) -> Units {
    match policy.cash_threshold(x) {
        Some(threshold) if x < policy.reorder_point && cash > threshold => {
            (policy.order_up_to - x).min(instance.order_capacity(cash))
        }
        _ => 0,
    }
}

/// Inventory level above which no order is ever placed in period `n`:
/// the critical-fractile quantile of total demand over `n..=N`.
pub fn s_threshold(instance: &ProblemInstance, n: usize) -> Units {
    let total = convolve(&instance.demands()[n - 1..]);
    total.inverse_cdf(critical_fractile(instance))
}

/// Cash level at or below which period `n` never orders from inventory `x`:
/// the larger of `K` and the largest cash whose affordable order still fits
/// under the minimum demand while earning no more than its fixed cost.
pub fn conservative_c(instance: &ProblemInstance, n: usize, x: Units) -> Money {
    let k = instance.fixed_order_cost;
    let margin = instance.price - instance.unit_cost;
    let by_demand = instance.demand(n).support_min() - x;
    let by_margin = k / margin;
    let b = by_demand.min(by_margin);
    if b >= 1 {
        let cash = k + instance.overhead + instance.unit_cost * (b + 1) - 1;
        cash.max(k)
    } else {
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::PmfTable;
    use crate::model::DemandSpec;

    fn table3() -> ProblemInstance {
        ProblemInstance::poisson(&[20.0, 7.0, 2.0, 14.0], 24, 1, 2, 4, 0, 0, 33).unwrap()
    }

    #[test]
    fn grids_contain_initial_state_and_grow() {
        let inst = table3();
        let grids = state_grids(&inst, &SolverConfig::for_instance(&inst));
        assert!(grids[0].contains(0, 33));
        assert_eq!(grids[0].len(), 1);
        assert!(grids[1].len() > 1);
        assert!(grids[1].contains(0, 31));
    }

    #[test]
    fn action_never_exceeds_capacity() {
        let inst = table3();
        let sol = solve(&inst).unwrap();
        for n in 1..=inst.horizon() {
            for (s, _, q) in sol.period(n).entries() {
                assert!(q <= inst.order_capacity(s.cash), "period {n} state {s:?}");
            }
        }
    }

    #[test]
    fn boundary_is_salvage() {
        let inst = ProblemInstance::poisson(&[3.0], 5, 2, 1, 4, 1, 2, 20).unwrap();
        let sol = solve(&inst).unwrap();
        assert_eq!(sol.value(2, 7, -3), Some(7.0));
    }

    #[test]
    fn single_period_matches_closed_form() {
        let inst = ProblemInstance::poisson(&[6.0], 8, 1, 1, 4, 0, 0, 30).unwrap();
        let cfg = SolverConfig::with_first_period_grid(&inst, (0, 12), (-5, 40));
        let sol = solve_with(&inst, &cfg).unwrap();
        let lp = last_period_policy(&inst);
        for (s, v, q) in sol.period(1).entries() {
            assert_eq!(
                q,
                optimal_last_period_order(&inst, &lp, s.inventory, s.cash),
                "{s:?}"
            );
            let y = s.inventory + q;
            let fixed = if q > 0 { inst.fixed_order_cost } else { 0 };
            let closed =
                last_period_profit(&inst, y) + (inst.unit_cost * s.inventory) as f64 - fixed as f64;
            assert!((v - closed).abs() < 1e-9);
        }
    }

    #[test]
    fn last_period_with_zero_fixed_cost_has_s_equal_big_s() {
        let inst = ProblemInstance::poisson(&[10.0], 0, 1, 1, 3, 0, 0, 30).unwrap();
        let lp = last_period_policy(&inst);
        assert_eq!(lp.reorder_point, lp.order_up_to);
    }

    #[test]
    fn raising_salvage_raises_order_up_to() {
        let lo = ProblemInstance::poisson(&[10.0], 5, 5, 1, 6, 0, 0, 30).unwrap();
        let hi = ProblemInstance::poisson(&[10.0], 5, 5, 1, 6, 4, 0, 30).unwrap();
        assert!(last_period_policy(&hi).order_up_to > last_period_policy(&lo).order_up_to);
    }

    #[test]
    fn rich_empty_stock_orders_up_to_s() {
        let inst = table3();
        let lp = last_period_policy(&inst);
        assert_eq!(
            optimal_last_period_order(&inst, &lp, 0, 10_000),
            lp.order_up_to
        );
        assert_eq!(
            optimal_last_period_order(&inst, &lp, lp.reorder_point, 10_000),
            0
        );
    }

    #[test]
    fn s_threshold_last_period_equals_order_up_to() {
        let inst = table3();
        assert_eq!(s_threshold(&inst, 4), last_period_policy(&inst).order_up_to);
    }

    #[test]
    fn conservative_c_cases() {
        let inst = table3();
        // Poisson demand starts at zero
        assert_eq!(conservative_c(&inst, 2, 0), inst.fixed_order_cost);
        let floor = ProblemInstance::new(
            10,
            1,
            3,
            0,
            1,
            0,
            30,
            DemandSpec::Pmf {
                tables: vec![PmfTable {
                    support_min: 4,
                    pmf: vec![0.5, 0.5],
                }],
            },
        )
        .unwrap();
        // B(R) <= min(4 - x, 10 / 2) => 4 units at x = 0, R <= 10 + 1 + 4 * 1 + 0
        assert_eq!(conservative_c(&floor, 1, 0), 15);
        assert!(conservative_c(&floor, 1, 6) >= floor.fixed_order_cost);
    }

    #[test]
    fn budget_guard() {
        let inst = table3();
        let cfg = SolverConfig::for_instance(&inst).cell_budget(10);
        assert!(matches!(
            solve_with(&inst, &cfg),
            Err(Error::GridTooLarge { .. })
        ));
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let inst = ProblemInstance::poisson(&[2.0, 2.0], 3, 1, 1, 3, 0, 0, 8).unwrap();
        let sol = solve(&inst).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("period,x,R,F,Q"));
        assert_eq!(lines.count(), sol.grid(1).len() + sol.grid(2).len());
    }
}
