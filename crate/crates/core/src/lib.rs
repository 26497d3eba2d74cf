//! Simulation and regime analysis for the two-armed bandit algorithm, a
//! Linear Reward-Inaction (LRI) learning automaton viewed as a stochastic
//! approximation procedure:
//!
//! ```text
//! X_{n+1} = X_n + γ_{n+1} ( 1{U ≤ X_n, A}(1 − X_n) − 1{U > X_n, B} X_n )
//! ```
//!
//! The state `X_n` is the share of the arm with success probability `p_A`;
//! the other arm succeeds with probability `p_B < p_A`. Both 0 (the trap) and
//! 1 (the target) are absorbing.
//!
//! This crate is `no_std` (it needs `alloc`) and contains only pure
//! computation:
//!
//! * [`schedule`]: step-size sequences, their cumulative sums and series
//!   convergence verdicts.
//! * [`dynamics`]: the exact recursion, the mean recursion and the mean ODE.
//! * [`regimes`]: fallibility and rate classification of schedules.
//! * [`analysis`]: per-trajectory diagnostics (companion martingale,
//!   exponent fits, tail products, conditional moment checks).
//! * [`rng`]: the counter-based generator that drives every simulation.
//!
//! IO, the Monte Carlo harness and the command-line tool live in the
//! `banditlab` crate.
#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod dynamics;
pub mod math;
pub mod regimes;
pub mod rng;
pub mod schedule;

pub use dynamics::{BanditParams, Branch, RecordingPlan, StatePair, StepOutcome, Trajectory};
pub use regimes::{Fallibility, RateClass, RegimeReport};
pub use rng::{Philox4x32, StreamKey};
pub use schedule::{Convergence, SeriesKind, SeriesVerdict, StepSchedule};
