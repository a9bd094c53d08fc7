//! Numerical laboratory for bribe-and-request collusion in two-bidder
//! second-price auctions.
//!
//! One bidder can make a take-it-or-leave-it proposal consisting of a
//! bribe (paid to the opponent for bidding zero) and a request (demanded
//! from the opponent for stepping aside). This crate solves the
//! separating equilibrium of that game, audits it (best responses,
//! incentive compatibility, belief-refinement robustness, dominance over
//! the bribe-only benchmark and over alternative separating families) and
//! simulates seeded playouts.
//!
//! Entry points:
//! - [`equilibrium::solve_bribing_schedule`] / [`equilibrium::solve_with_reserve`]
//! - [`baseline_es::solve_es`] and [`baseline_es::dominance_compare`]
//! - [`verification::ic_audit`], [`verification::d1_audit`], [`verification::prop4_audit`]
//! - [`simulation::run_monte_carlo`]

// comparisons spelled !(x > 0.0) are NaN-rejecting guards, and oracle
// constants are written with every digit of the computed value
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod baseline_es;
pub mod distributions;
pub mod equilibrium;
pub mod export;
pub mod lambert;
pub mod ode;
pub mod quad;
pub mod rng;
pub mod simulation;
pub mod verification;

pub use distributions::{make_distribution, Distribution, DistributionSpec};
pub use equilibrium::{
    closed_form_uniform_bribe, solve_bribing_schedule, solve_general_family, solve_with_reserve,
    BribeSchedule, GeneralSchedule, SolveOptions,
};
