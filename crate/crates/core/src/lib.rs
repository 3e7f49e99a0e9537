//! Stochastic lot sizing for a cash-constrained retailer.
//!
//! The crate solves the finite-horizon problem exactly by dynamic
//! programming, reads an `(s, C(x), S)` policy off the optimal actions,
//! builds the same kind of policy from an expected-value plan, and compares
//! policies by Monte Carlo simulation over a fixed testbed.

pub mod demand;
pub mod error;
pub mod mip;
pub mod model;
pub mod policy;
pub mod sdp;
pub mod simulate;
pub mod testbed;

pub use demand::DemandDistribution;
pub use error::{Error, Result};
pub use model::{Money, ProblemInstance, State, Units};
pub use policy::{CashThreshold, PeriodPolicy, ScsPolicy};
pub use sdp::{SdpSolution, SolverConfig};
