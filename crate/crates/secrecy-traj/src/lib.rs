//! Secrecy-rate maximization for a UAV downlink by joint trajectory and
//! transmit-power design.
//!
//! A UAV at fixed altitude carries confidential traffic to a ground receiver
//! while a passive eavesdropper listens from a known location. Both links
//! are line-of-sight, so the UAV can trade position for secrecy: flying
//! toward the receiver and away from the eavesdropper strengthens one link
//! and weakens the other. This crate maximizes the average secrecy rate over
//! a finite flight subject to speed, endpoint, and average/peak power
//! constraints, by alternating two block updates until the objective stalls:
//!
//! * [`power_control`] — closed-form optimal per-slot power for a fixed
//!   trajectory, with a bisection search on the average-power multiplier;
//! * [`trajectory_sca`] — a successive-convex-approximation step for the
//!   trajectory at fixed power, each surrogate solved by the log-barrier
//!   Newton method in [`convex_solver`].
//!
//! [`bcd`] drives the alternation, [`baselines`] provides the two benchmark
//! schemes (trajectory-only optimization and a line-segment path with power
//! control), and [`harness`] runs config-driven experiments and writes
//! machine-readable results. Everything is deterministic: identical inputs
//! produce identical outputs, bit for bit.
//!
//! The `examples/` directory has one runnable program per capability; start
//! with `full_run` for the end-to-end optimizer.

pub mod baselines;
pub mod bcd;
pub mod convex_solver;
pub mod harness;
pub mod model;
pub mod power_control;
pub mod trajectory_sca;
pub mod units;

pub use baselines::{BaselineResult, Scheme};
pub use bcd::{InitStrategy, RunOptions, RunOutcome, RunTrace};
pub use model::{Position, PowerProfile, ScenarioConfig, Trajectory};
