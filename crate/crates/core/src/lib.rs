//! Surrogate-assisted evolutionary optimisation of stochastic plant
//! models.
//!
//! The crate pairs real-coded genetic algorithms (single-objective, and
//! NSGA-II for two objectives) with a Random Forest fitness surrogate
//! that is warm-started from true simulator evaluations and retrained
//! whenever its predictions drift beyond one standard deviation of its
//! training targets. Evaluation targets include two stochastic
//! chemical-plant simulators with a revenue objective and a deterministic
//! purity/recovery proxy with a known Pareto front.
//!
//! Modules:
//! - [`evo`]: populations, bounds, crossover/mutation/selection operators
//! - [`nsga`]: dominance, fast non-dominated sorting, crowding distance
//! - [`surrogate`]: CART trees, the forest, warm start, divergence/retrain
//! - [`sims`]: plant simulators, cost model, purity/recovery objectives
//! - [`metrics`]: hypervolume, GD+/IGD+, evaluations-to-success
//! - [`harness`]: experiment loops, call accounting, CSV/manifest export

pub mod error;
pub mod evo;
pub mod harness;
pub mod metrics;
pub mod nsga;
pub mod rng;
pub mod sims;
pub mod surrogate;

pub use error::{Error, Result};
