//! Alternating maximization over the power and trajectory blocks.
//!
//! Each outer iteration first reshapes the trajectory around the current
//! solution with one convex surrogate solve at fixed power, then recomputes
//! the optimal power profile for the new trajectory in closed form. Both
//! block updates can only improve the unclipped average-secrecy objective,
//! so the objective trace is non-decreasing and the loop stops once its
//! fractional growth falls below the configured threshold.
//!
//! At the returned solution the power step has already zeroed every slot
//! where the Eve link dominates, so the clipped and unclipped objectives
//! coincide.

use crate::baselines;
use crate::model::{self, ModelError, PowerProfile, ScenarioConfig, Trajectory};
use crate::power_control;
use crate::trajectory_sca::{self, ExpansionPoint, ScaError, ScaledPower, SlackState};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BcdError {
    #[error(
        "endpoints {distance:.3} m apart are unreachable in {slots} slots of {step:.3} m"
    )]
    InfeasibleEndpoints { distance: f64, slots: usize, step: f64 },
    #[error("line-baseline initialization failed: {0}")]
    LineInit(String),
    #[error("trajectory subproblem failed at iteration {iteration}: {source}")]
    Subproblem {
        iteration: usize,
        source: ScaError,
        /// Trace of the iterations completed before the failure.
        trace: Box<RunTrace>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Initial feasible solution strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// Waypoints evenly spaced on the start-finish segment.
    StraightLine,
    /// The piecewise-linear benchmark trajectory through Bob's overhead
    /// point.
    LineBaseline,
}

/// Knobs for [`run`].
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub max_outer_iterations: usize,
    /// Try both initialization strategies and keep the better result.
    pub multistart: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { max_outer_iterations: 100, multistart: true }
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    /// The fractional objective increase fell below the threshold.
    Converged,
    /// The outer-iteration budget ran out; the best solution so far is
    /// returned.
    IterationBudget,
}

/// One outer iteration's bookkeeping.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub index: usize,
    /// Sum over slots of the unclipped secrecy gap, bps/Hz.
    pub objective_bits: f64,
    pub avg_secrecy_clipped: f64,
    pub avg_secrecy_raw: f64,
    pub elapsed: Duration,
    pub trajectory: Trajectory,
    pub power: PowerProfile,
}

/// Per-iteration objective values and snapshots of one run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
    /// The initialization that produced this trace (the winning one under
    /// multistart).
    pub strategy: InitStrategy,
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_objective_bits(&self) -> f64 {
        self.records.last().map(|r| r.objective_bits).unwrap_or(0.0)
    }
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub power: PowerProfile,
    pub trace: RunTrace,
}

/// Sum over slots of the unclipped per-slot secrecy gap, bps/Hz.
pub fn objective_bits(
    traj: &Trajectory,
    power: &PowerProfile,
    cfg: &ScenarioConfig,
) -> Result<f64, ModelError> {
    Ok(model::average_secrecy_rate(traj, power, cfg, false)? * cfg.num_slots as f64)
}

/// Waypoints evenly spaced along the start-finish segment.
///
/// At the tightest feasible flight time the spacing equals the per-slot
/// displacement limit exactly.
pub fn straight_line_trajectory(cfg: &ScenarioConfig) -> Result<Trajectory, BcdError> {
    let distance = cfg.start.distance_to(cfg.finish);
    let reach = cfg.num_slots as f64 * cfg.max_step;
    if distance > reach + 1e-9 {
        return Err(BcdError::InfeasibleEndpoints {
            distance,
            slots: cfg.num_slots,
            step: cfg.max_step,
        });
    }
    let n = cfg.num_slots;
    let x = (0..n)
        .map(|i| cfg.start.x + (i + 1) as f64 / n as f64 * (cfg.finish.x - cfg.start.x))
        .collect();
    let y = (0..n)
        .map(|i| cfg.start.y + (i + 1) as f64 / n as f64 * (cfg.finish.y - cfg.start.y))
        .collect();
    Ok(Trajectory::new(x, y))
}

/// Build the initial feasible solution for a strategy: the chosen
/// trajectory, uniform average power, and tight slacks.
pub fn initialize(
    cfg: &ScenarioConfig,
    strategy: InitStrategy,
) -> Result<(Trajectory, PowerProfile, SlackState), BcdError> {
    let trajectory = match strategy {
        InitStrategy::StraightLine => straight_line_trajectory(cfg)?,
        InitStrategy::LineBaseline => baselines::line_trajectory(cfg)
            .map_err(|e| BcdError::LineInit(e.to_string()))?,
    };
    let power = PowerProfile::uniform(cfg.avg_power, cfg.num_slots);
    let slacks = SlackState::tight(&trajectory, cfg);
    Ok((trajectory, power, slacks))
}

// Objectives this small (in summed bps/Hz) mean the power budget is
// degenerate and there is nothing left to optimize.
const OBJECTIVE_FLOOR_BITS: f64 = 1e-5;

fn run_single(
    cfg: &ScenarioConfig,
    opts: RunOptions,
    strategy: InitStrategy,
) -> Result<RunOutcome, BcdError> {
    cfg.validate()?;
    let (mut trajectory, mut power, mut slacks) = initialize(cfg, strategy)?;

    let mut records = Vec::with_capacity(opts.max_outer_iterations + 1);
    let initial_obj = objective_bits(&trajectory, &power, cfg)?;
    records.push(IterationRecord {
        index: 0,
        objective_bits: initial_obj,
        avg_secrecy_clipped: model::average_secrecy_rate(&trajectory, &power, cfg, true)?,
        avg_secrecy_raw: initial_obj / cfg.num_slots as f64,
        elapsed: Duration::ZERO,
        trajectory: trajectory.clone(),
        power: power.clone(),
    });

    let mut best = (initial_obj, trajectory.clone(), power.clone());
    let mut previous = initial_obj;
    let mut status = RunStatus::IterationBudget;

    for k in 1..=opts.max_outer_iterations {
        let tick = Instant::now();
        let expansion = ExpansionPoint {
            x: trajectory.x.clone(),
            y: trajectory.y.clone(),
            bob_sq: slacks.bob_sq.clone(),
        };
        let scaled = ScaledPower::from_profile(&power, cfg);
        let step = match trajectory_sca::sca_step(&expansion, &scaled, cfg) {
            Ok(step) => step,
            Err(source) => {
                return Err(BcdError::Subproblem {
                    iteration: k,
                    source,
                    trace: Box::new(RunTrace { records, status, strategy }),
                })
            }
        };
        trajectory = step.trajectory;
        slacks = step.slacks;
        let (new_power, _dual) = power_control::optimize_power(&trajectory, cfg);
        power = new_power;

        let objective = objective_bits(&trajectory, &power, cfg)?;
        records.push(IterationRecord {
            index: k,
            objective_bits: objective,
            avg_secrecy_clipped: model::average_secrecy_rate(&trajectory, &power, cfg, true)?,
            avg_secrecy_raw: objective / cfg.num_slots as f64,
            elapsed: tick.elapsed(),
            trajectory: trajectory.clone(),
            power: power.clone(),
        });
        if objective > best.0 {
            best = (objective, trajectory.clone(), power.clone());
        }

        if objective <= OBJECTIVE_FLOOR_BITS {
            status = RunStatus::Converged;
            break;
        }
        let fractional = if previous > 0.0 {
            (objective - previous) / previous
        } else {
            f64::INFINITY
        };
        if fractional < cfg.epsilon {
            status = RunStatus::Converged;
            break;
        }
        previous = objective;
    }

    Ok(RunOutcome {
        trajectory: best.1,
        power: best.2,
        trace: RunTrace { records, status, strategy },
    })
}

/// Alternate trajectory and power updates until the objective stalls.
///
/// Returns the best feasible solution found. With `multistart` both
/// initializations are run and the higher-objective result wins; the trace
/// records which strategy produced it.
pub fn run(cfg: &ScenarioConfig, opts: RunOptions) -> Result<RunOutcome, BcdError> {
    let first = run_single(cfg, opts, InitStrategy::StraightLine)?;
    if !opts.multistart {
        return Ok(first);
    }
    let second = run_single(cfg, opts, InitStrategy::LineBaseline)?;
    if second.trace.final_objective_bits() > first.trace.final_objective_bits() {
        Ok(second)
    } else {
        Ok(first)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Position;

    #[test]
    fn straight_line_steps_are_maximal_at_tight_time() {
        let cfg = ScenarioConfig::default().with_flight_time(200.0).unwrap();
        let (traj, power, _slacks) = initialize(&cfg, InitStrategy::StraightLine).unwrap();
        assert_eq!(traj.len(), 400);
        let first = traj.position(0).distance_to(cfg.start);
        assert!((first - cfg.max_step).abs() < 1e-9);
        for i in 1..traj.len() {
            let step = traj.position(i).distance_to(traj.position(i - 1));
            assert!((step - cfg.max_step).abs() < 1e-9, "step {i} = {step}");
        }
        assert_eq!(traj.position(399), cfg.finish);
        assert!(power.watts.iter().all(|&p| p == cfg.avg_power));
    }

    #[test]
    fn coincident_endpoints_collapse_to_a_point() {
        let mut cfg = ScenarioConfig::default();
        cfg.start = Position::new(30.0, -40.0);
        cfg.finish = cfg.start;
        cfg.flight_time = 5.0;
        cfg.num_slots = 10;
        let (traj, _power, _slacks) = initialize(&cfg, InitStrategy::StraightLine).unwrap();
        for i in 0..10 {
            assert_eq!(traj.position(i), cfg.start);
        }
    }

    #[test]
    fn initialization_is_feasible() {
        for strategy in [InitStrategy::StraightLine, InitStrategy::LineBaseline] {
            for t in [200.0, 230.0, 250.0] {
                let cfg = ScenarioConfig::default().with_flight_time(t).unwrap();
                let (traj, power, _slacks) = initialize(&cfg, strategy).unwrap();
                let report = model::validate(&traj, &power, &cfg);
                assert!(report.is_clean(), "{strategy:?} at T = {t}: {report}");
            }
        }
    }

    #[test]
    fn unreachable_endpoints_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.flight_time = 50.0;
        cfg.num_slots = 100; // only 100 m of reach for 400 m of separation
        assert!(matches!(
            initialize(&cfg, InitStrategy::StraightLine),
            Err(BcdError::InfeasibleEndpoints { .. })
        ));
    }

    #[test]
    fn degenerate_power_budget_converges_immediately() {
        let mut cfg = ScenarioConfig::default().with_flight_time(210.0).unwrap();
        cfg.avg_power = 1e-12;
        cfg.peak_power = 4e-12;
        let outcome =
            run(&cfg, RunOptions { max_outer_iterations: 100, multistart: false }).unwrap();
        assert!(outcome.trace.final_objective_bits().abs() < 1e-4);
        assert!(outcome.trace.iterations() <= 2, "took {}", outcome.trace.iterations());
        assert_eq!(outcome.trace.status, RunStatus::Converged);
    }

    #[test]
    fn short_run_is_monotone_and_feasible() {
        // Small instance to keep the unit suite fast; the full-scale runs
        // live in the acceptance tests.
        let mut cfg = ScenarioConfig::default();
        cfg.start = Position::new(100.0, 30.0);
        cfg.finish = Position::new(100.0, -30.0);
        cfg.flight_time = 40.0;
        cfg.num_slots = 80;
        let outcome =
            run(&cfg, RunOptions { max_outer_iterations: 60, multistart: true }).unwrap();

        for pair in outcome.trace.records.windows(2) {
            assert!(
                pair[1].objective_bits >= pair[0].objective_bits - 1e-7,
                "objective decreased: {} -> {}",
                pair[0].objective_bits,
                pair[1].objective_bits
            );
        }
        let report = model::validate(&outcome.trajectory, &outcome.power, &cfg);
        assert!(report.is_clean(), "{report}");

        // Clipped equals raw at the output: no slot transmits into a
        // negative gap.
        let clipped =
            model::average_secrecy_rate(&outcome.trajectory, &outcome.power, &cfg, true).unwrap();
        let raw =
            model::average_secrecy_rate(&outcome.trajectory, &outcome.power, &cfg, false).unwrap();
        assert!((clipped - raw).abs() <= 1e-9);
        for n in 0..cfg.num_slots {
            let rates = model::slot_rates(&outcome.trajectory, &outcome.power, n, &cfg).unwrap();
            assert!(rates.secrecy_raw >= -1e-9, "slot {n} has gap {}", rates.secrecy_raw);
        }
    }
}
