//! Problem data and the single-period primitives shared by every solver.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::demand::{DemandDistribution, PmfTable, DEFAULT_TAIL_MASS};
use crate::error::{Error, Result};

/// Integer amount of cash.
pub type Money = i64;
/// Integer number of items.
pub type Units = i64;

/// Inventory and cash at the start of a period. Cash may be negative because
/// overhead is charged every period regardless of sales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct State {
    pub inventory: Units,
    pub cash: Money,
}

impl State {
    pub fn new(inventory: Units, cash: Money) -> Self {
        Self { inventory, cash }
    }
}

/// How the per-period demand is described in an instance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DemandSpec {
    Poisson {
        means: Vec<f64>,
        #[serde(default = "default_tail_mass")]
        tail_mass: f64,
    },
    Pmf {
        tables: Vec<PmfTable>,
    },
}

fn default_tail_mass() -> f64 {
    DEFAULT_TAIL_MASS
}

impl DemandSpec {
    pub fn poisson(means: Vec<f64>) -> Self {
        DemandSpec::Poisson {
            means,
            tail_mass: DEFAULT_TAIL_MASS,
        }
    }

    pub fn build(&self) -> Result<Vec<DemandDistribution>> {
        match self {
            DemandSpec::Poisson { means, tail_mass } => means
                .iter()
                .map(|m| DemandDistribution::truncated_poisson(*m, *tail_mass))
                .collect(),
            DemandSpec::Pmf { tables } => tables
                .iter()
                .map(|t| DemandDistribution::new(t.support_min, t.pmf.clone()))
                .collect(),
        }
    }
}

/// On-disk instance layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub horizon: usize,
    #[serde(rename = "K")]
    pub fixed_order_cost: Money,
    pub c: Money,
    pub p: Money,
    pub gamma: Money,
    #[serde(rename = "W")]
    pub overhead: Money,
    pub x0: Units,
    #[serde(rename = "R0")]
    pub initial_cash: Money,
    pub demand: DemandSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub fixed_order_cost: Money,
    pub unit_cost: Money,
    pub price: Money,
    pub salvage: Money,
    pub overhead: Money,
    pub initial_inventory: Units,
    pub initial_cash: Money,
    demand_spec: DemandSpec,
    demands: Vec<DemandDistribution>,
}

impl ProblemInstance {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fixed_order_cost: Money,
        unit_cost: Money,
        price: Money,
        salvage: Money,
        overhead: Money,
        initial_inventory: Units,
        initial_cash: Money,
        demand_spec: DemandSpec,
    ) -> Result<Self> {
        let demands = demand_spec.build()?;
        let instance = Self {
            fixed_order_cost,
            unit_cost,
            price,
            salvage,
            overhead,
            initial_inventory,
            initial_cash,
            demand_spec,
            demands,
        };
        instance.validate()?;
        Ok(instance)
    }

    /// Poisson instance with the default truncation.
    #[allow(clippy::too_many_arguments)]
    pub fn poisson(
        means: &[f64],
        fixed_order_cost: Money,
        unit_cost: Money,
        overhead: Money,
        price: Money,
        salvage: Money,
        initial_inventory: Units,
        initial_cash: Money,
    ) -> Result<Self> {
        Self::new(
            fixed_order_cost,
            unit_cost,
            price,
            salvage,
            overhead,
            initial_inventory,
            initial_cash,
            DemandSpec::poisson(means.to_vec()),
        )
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInstance(m));
        if self.demands.is_empty() {
            return bad("horizon must be at least one period".into());
        }
        if !(0 <= self.salvage && self.salvage < self.unit_cost && self.unit_cost < self.price) {
            return bad(format!(
                "need 0 <= gamma < c < p, got gamma={} c={} p={}",
                self.salvage, self.unit_cost, self.price
            ));
        }
        if self.fixed_order_cost < 0 || self.overhead < 0 {
            return bad("K and W must be nonnegative".into());
        }
        if self.initial_inventory < 0 {
            return bad("initial inventory must be nonnegative".into());
        }
        Ok(())
    }

    pub fn from_file_data(file: InstanceFile) -> Result<Self> {
        let instance = Self::new(
            file.fixed_order_cost,
            file.c,
            file.p,
            file.gamma,
            file.overhead,
            file.x0,
            file.initial_cash,
            file.demand,
        )?;
        if instance.horizon() != file.horizon {
            return Err(Error::InvalidInstance(format!(
                "horizon is {} but {} demand distributions were given",
                file.horizon,
                instance.horizon()
            )));
        }
        Ok(instance)
    }

    pub fn to_file_data(&self) -> InstanceFile {
        InstanceFile {
            horizon: self.horizon(),
            fixed_order_cost: self.fixed_order_cost,
            c: self.unit_cost,
            p: self.price,
            gamma: self.salvage,
            overhead: self.overhead,
            x0: self.initial_inventory,
            initial_cash: self.initial_cash,
            demand: self.demand_spec.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file_data(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file_data())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn horizon(&self) -> usize {
        self.demands.len()
    }

    pub fn demands(&self) -> &[DemandDistribution] {
        &self.demands
    }

    /// Demand of period `n` (1-based).
    pub fn demand(&self, n: usize) -> &DemandDistribution {
        &self.demands[n - 1]
    }

    pub fn initial_state(&self) -> State {
        State::new(self.initial_inventory, self.initial_cash)
    }

    /// Copy with a different selling price.
    pub fn with_price(&self, price: Money) -> Result<Self> {
        let mut out = self.clone();
        out.price = price;
        out.validate()?;
        Ok(out)
    }

    /// Largest affordable order: `max(0, floor((R - K - W) / c))`.
    pub fn order_capacity(&self, cash: Money) -> Units {
        let spare = cash - self.fixed_order_cost - self.overhead;
        if spare <= 0 {
            0
        } else {
            spare / self.unit_cost
        }
    }

    /// Realized one-period cash change when raising inventory from `x` to `y`
    /// and then facing demand `d`.
    pub fn cash_increment(&self, x: Units, y: Units, d: Units) -> Result<Money> {
        if y < x {
            return Err(Error::OrderBelowInventory {
                inventory: x,
                order_up_to: y,
            });
        }
        let fixed = if y > x { self.fixed_order_cost } else { 0 };
        Ok(self.price * d.min(y) - fixed - self.unit_cost * (y - x) - self.overhead)
    }

    /// `L_n(y) = E[p min(D, y) - c y] - W` for period `n` (1-based).
    pub fn expected_profit(&self, n: usize, y: Units) -> f64 {
        let demand = self.demand(n);
        self.price as f64 * demand.expected_sales(y)
            - (self.unit_cost * y) as f64
            - self.overhead as f64
    }

    /// `L_n(y)` plus the expected salvage of what is left over, the terminal
    /// period's one-step profit.
    pub fn expected_profit_with_salvage(&self, n: usize, y: Units) -> f64 {
        self.expected_profit(n, y) + self.salvage as f64 * self.demand(n).expected_leftover(y)
    }

    /// Largest demand value over all periods.
    pub fn max_demand(&self) -> Units {
        self.demands
            .iter()
            .map(|d| d.support_max())
            .max()
            .unwrap_or(0)
    }
}

/// Lost-sales inventory balance.
pub fn inventory_transition(order_up_to: Units, demand: Units) -> Units {
    (order_up_to - demand).max(0)
}
