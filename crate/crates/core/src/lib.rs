//! Monopoly screening against a capacity-constrained public option that
//! rations by lottery.
//!
//! [`solve_mechanism`] computes the revenue-maximising cutoff mechanism for a
//! regular value distribution, [`welfare`] traces how prices and surplus move
//! with capacity, [`general`] covers a priced or lower-quality public good and
//! the complement timing, and [`oracle`] holds brute-force cross-checks.

// `!(x > 0.0)` style guards deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distributions;
pub mod error;
pub mod general;
pub mod numeric;
pub mod oracle;
pub mod solver;
pub mod welfare;

pub use distributions::{Family, RegularDistribution, RegularityReport};
pub use error::{Error, Result};
pub use general::{
    bertrand_limit_cutoff, complement_outcome, solve_general, ComplementOutcome, GeneralSolution,
    Regime,
};
pub use oracle::{simulate_market, verify_ic_ir, IcReport, SimulationResult};
pub use solver::{
    solve_cutoff, solve_mechanism, MarketParams, MechanismSolution, Timing, CUTOFF_TOLERANCE,
};
pub use welfare::{
    aggregate_consumer_surplus, check_condition, consumer_surplus, sensitivities, sweep,
    ConditionReport, Sensitivities, SweepResult, SweepRow,
};
