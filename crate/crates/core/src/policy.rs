//! The `(s, C(x), S)` policy and its extraction from SDP action tables.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{Money, ProblemInstance, Units};
use crate::sdp::{last_period_policy, SdpSolution};

/// Cash threshold `C(x)`: order only with strictly more cash than this.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CashThreshold {
    Cash(Money),
    /// Never order from this inventory level.
    Never,
}

impl CashThreshold {
    pub fn allows(&self, cash: Money) -> bool {
        match self {
            CashThreshold::Cash(c) => cash > *c,
            CashThreshold::Never => false,
        }
    }
}

impl Serialize for CashThreshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CashThreshold::Cash(c) => s.serialize_i64(*c),
            CashThreshold::Never => s.serialize_str("never"),
        }
    }
}

impl<'de> Deserialize<'de> for CashThreshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Cash(Money),
            Marker(String),
        }
        match Raw::deserialize(d)? {
            Raw::Cash(c) => Ok(CashThreshold::Cash(c)),
            Raw::Marker(m) if m == "never" => Ok(CashThreshold::Never),
            Raw::Marker(m) => Err(serde::de::Error::custom(format!(
                "unknown threshold marker {m:?}"
            ))),
        }
    }
}

/// Parameters of one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodPolicy {
    pub period: usize,
    pub s: Units,
    #[serde(rename = "S")]
    pub big_s: Units,
    /// Tabulated thresholds; inventory levels below `s` missing from the map
    /// fall back to the fixed ordering cost.
    #[serde(rename = "C")]
    pub thresholds: BTreeMap<Units, CashThreshold>,
}

impl PeriodPolicy {
    pub fn new(period: usize) -> Self {
        Self {
            period,
            s: 0,
            big_s: 0,
            thresholds: BTreeMap::new(),
        }
    }

    pub fn threshold(&self, x: Units, default: Money) -> CashThreshold {
        self.thresholds
            .get(&x)
            .copied()
            .unwrap_or(CashThreshold::Cash(default))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScsPolicy {
    periods: Vec<PeriodPolicy>,
}

impl ScsPolicy {
    pub fn new(periods: Vec<PeriodPolicy>) -> Self {
        Self { periods }
    }

    pub fn horizon(&self) -> usize {
        self.periods.len()
    }

    pub fn periods(&self) -> &[PeriodPolicy] {
        &self.periods
    }

    /// Parameters of period `n` (1-based).
    pub fn period(&self, n: usize) -> &PeriodPolicy {
        &self.periods[n - 1]
    }

    pub fn reorder_points(&self) -> Vec<Units> {
        self.periods.iter().map(|p| p.s).collect()
    }

    pub fn order_up_to_levels(&self) -> Vec<Units> {
        self.periods.iter().map(|p| p.big_s).collect()
    }

    /// Order quantity in period `n` from inventory `x` and cash `cash`.
    pub fn order(&self, n: usize, x: Units, cash: Money, instance: &ProblemInstance) -> Units {
        let p = self.period(n);
        if x < p.s && p.threshold(x, instance.fixed_order_cost).allows(cash) {
            (p.big_s - x).min(instance.order_capacity(cash)).max(0)
        } else {
            0
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Final-period parameters from the closed form.
pub fn last_period_parameters(instance: &ProblemInstance) -> PeriodPolicy {
    let lp = last_period_policy(instance);
    PeriodPolicy {
        period: instance.horizon(),
        s: lp.reorder_point,
        big_s: lp.order_up_to,
        thresholds: lp
            .cash_thresholds
            .iter()
            .enumerate()
            .map(|(x, c)| (x as Units, CashThreshold::Cash(*c)))
            .collect(),
    }
}

/// Reads `(s, C(x), S)` off the optimal action tables.
///
/// The first period only sees the initial state; the last uses the closed
/// form; in between, `s` is the lowest inventory that never orders, `S` the
/// most frequent order-up-to level (smallest on ties) and `C(x)` the largest
/// cash that does not order.
pub fn extract(solution: &SdpSolution, instance: &ProblemInstance) -> Result<ScsPolicy> {
    let horizon = instance.horizon();
    if solution.horizon() != horizon {
        return Err(Error::ShapeMismatch(format!(
            "solution has {} periods, instance has {horizon}",
            solution.horizon()
        )));
    }
    let start = instance.initial_state();
    let mut periods = Vec::with_capacity(horizon);
    for n in 1..=horizon {
        let mut pp = if n == 1 {
            let q = solution
                .order(1, start.inventory, start.cash)
                .ok_or_else(|| {
                    Error::ShapeMismatch("initial state is not tabulated in period 1".into())
                })?;
            let mut pp = PeriodPolicy::new(1);
            if q > 0 {
                pp.s = start.inventory + 1;
                pp.big_s = start.inventory + q;
                pp.thresholds
                    .insert(start.inventory, CashThreshold::Cash(0));
            } else {
                pp.s = start.inventory;
            }
            pp
        } else if n == horizon {
            last_period_parameters(instance)
        } else {
            from_action_table(solution, n)
        };
        if pp.s > 0 && pp.big_s < pp.s {
            pp.big_s = pp.s;
        }
        periods.push(pp);
    }
    Ok(ScsPolicy::new(periods))
}

fn from_action_table(solution: &SdpSolution, n: usize) -> PeriodPolicy {
    let table = solution.period(n);
    let grid = &table.grid;
    let mut never_orders = vec![true; grid.max_inventory() as usize + 1];
    let mut last_idle_cash: Vec<Option<Money>> = vec![None; never_orders.len()];
    let mut levels: HashMap<Units, usize> = HashMap::new();
    for (state, _, q) in table.entries() {
        let x = state.inventory as usize;
        if q > 0 {
            never_orders[x] = false;
            *levels.entry(state.inventory + q).or_default() += 1;
        } else {
            // rows are visited in increasing cash
            last_idle_cash[x] = Some(state.cash);
        }
    }
    let mut pp = PeriodPolicy::new(n);
    pp.s = never_orders
        .iter()
        .position(|v| *v)
        .unwrap_or(never_orders.len()) as Units;
    pp.big_s = levels
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(level, _)| level)
        .unwrap_or(0);
    for x in 0..pp.s {
        if let Some(cash) = last_idle_cash[x as usize] {
            pp.thresholds.insert(x, CashThreshold::Cash(cash));
        }
    }
    pp
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance() -> ProblemInstance {
        ProblemInstance::poisson(&[20.0, 7.0, 2.0, 14.0], 24, 1, 2, 4, 0, 0, 33).unwrap()
    }

    fn sample_policy() -> ScsPolicy {
        let mut p1 = PeriodPolicy::new(1);
        p1.s = 1;
        p1.big_s = 7;
        p1.thresholds.insert(0, CashThreshold::Cash(0));
        let mut p2 = PeriodPolicy::new(2);
        p2.s = 3;
        p2.big_s = 10;
        p2.thresholds.insert(0, CashThreshold::Cash(30));
        p2.thresholds.insert(1, CashThreshold::Never);
        ScsPolicy::new(vec![p1, p2])
    }

    #[test]
    fn order_rule() {
        let inst = instance();
        let pol = sample_policy();
        assert_eq!(pol.order(1, 0, 33, &inst), 7);
        assert_eq!(pol.order(1, 1, 100, &inst), 0);
        assert_eq!(pol.order(2, 0, 30, &inst), 0);
        assert_eq!(pol.order(2, 0, 31, &inst), 5);
        assert_eq!(pol.order(2, 0, 100, &inst), 10);
        assert_eq!(pol.order(2, 1, 1000, &inst), 0);
        // untabulated x falls back to C = K
        assert_eq!(pol.order(2, 2, 24, &inst), 0);
        assert_eq!(pol.order(2, 2, 27, &inst), 1);
    }

    #[test]
    fn json_schema() {
        let pol = sample_policy();
        let text = pol.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v[1]["period"], 2);
        assert_eq!(v[1]["S"], 10);
        assert_eq!(v[1]["C"]["0"], 30);
        assert_eq!(v[1]["C"]["1"], "never");
        assert_eq!(ScsPolicy::from_json(&text).unwrap(), pol);
        assert!(
            ScsPolicy::from_json(r#"[{"period":1,"s":1,"S":2,"C":{"0":"sometimes"}}]"#).is_err()
        );
    }

    #[test]
    fn extract_rejects_mismatched_horizon() {
        let inst = instance();
        let short = ProblemInstance::poisson(&[20.0, 7.0], 24, 1, 2, 4, 0, 0, 33).unwrap();
        let sol = crate::sdp::solve(&short).unwrap();
        assert!(matches!(extract(&sol, &inst), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn extraction_is_deterministic() {
        let inst = instance();
        let sol = crate::sdp::solve(&inst).unwrap();
        assert_eq!(extract(&sol, &inst).unwrap(), extract(&sol, &inst).unwrap());
    }

    #[test]
    fn period_without_orders_gets_defaults() {
        // K far above any attainable margin: nobody ever orders
        let inst = ProblemInstance::poisson(&[2.0, 2.0, 2.0], 500, 1, 1, 3, 0, 0, 40).unwrap();
        let sol = crate::sdp::solve(&inst).unwrap();
        let pol = extract(&sol, &inst).unwrap();
        assert_eq!(pol.period(2).s, 0);
        assert_eq!(pol.period(2).big_s, 0);
        assert!(pol.period(2).thresholds.is_empty());
    }
}
