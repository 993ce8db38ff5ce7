//! The two benchmark schemes: trajectory optimization with uniform power,
//! and a line-segment trajectory with optimal power control.

use crate::bcd;
use crate::model::{self, ModelError, Position, PowerProfile, ScenarioConfig, Trajectory};
use crate::power_control;
use crate::trajectory_sca::{self, ScaError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("infeasible endpoints: {0}")]
    InfeasibleEndpoints(String),
    #[error(transparent)]
    Sca(#[from] ScaError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The three schemes the experiments compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Joint trajectory optimization and power control.
    JointTrajectoryPower,
    /// Trajectory optimization with power fixed at the average limit.
    TrajectoryOnly,
    /// Line-segment trajectory through Bob's overhead point with optimal
    /// power control.
    LineWithPower,
}

impl Scheme {
    pub const ALL: [Scheme; 3] =
        [Scheme::JointTrajectoryPower, Scheme::TrajectoryOnly, Scheme::LineWithPower];

    /// Tag used in CLI arguments, CSV rows, and file names.
    pub fn tag(&self) -> &'static str {
        match self {
            Scheme::JointTrajectoryPower => "TO-w-PC",
            Scheme::TrajectoryOnly => "TO-wo-PC",
            Scheme::LineWithPower => "line-w-PC",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "TO-w-PC" => Ok(Scheme::JointTrajectoryPower),
            "TO-wo-PC" => Ok(Scheme::TrajectoryOnly),
            "line-w-PC" => Ok(Scheme::LineWithPower),
            other => Err(format!(
                "unknown scheme `{other}` (expected TO-w-PC, TO-wo-PC, or line-w-PC)"
            )),
        }
    }
}

/// Diagnostics carried alongside a baseline solution.
#[derive(Debug, Clone, Copy, Default)]
pub struct BaselineDiagnostics {
    /// Convex surrogate iterations used (trajectory-optimizing schemes).
    pub sca_iterations: usize,
    /// First slot that had to break off toward the final location
    /// (line-segment scheme).
    pub turn_slot: Option<usize>,
}

/// A benchmark solution with its achieved average secrecy rate.
#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub scheme: Scheme,
    pub trajectory: Trajectory,
    pub power: PowerProfile,
    /// Clipped average secrecy rate, bps/Hz.
    pub avg_secrecy_clipped: f64,
    pub diagnostics: BaselineDiagnostics,
}

fn step_toward(from: Position, target: Position, max_step: f64) -> Position {
    let d = from.distance_to(target);
    if d <= max_step {
        target
    } else {
        let frac = max_step / d;
        Position::new(from.x + frac * (target.x - from.x), from.y + frac * (target.y - from.y))
    }
}

fn line_trajectory_with_turn(
    cfg: &ScenarioConfig,
) -> Result<(Trajectory, Option<usize>), BaselineError> {
    let n = cfg.num_slots;
    let distance = cfg.start.distance_to(cfg.finish);
    if distance > n as f64 * cfg.max_step + 1e-9 {
        return Err(BaselineError::InfeasibleEndpoints(format!(
            "{distance:.3} m between endpoints exceeds the {n}-slot reach of {:.3} m",
            n as f64 * cfg.max_step
        )));
    }

    let hover = Position::new(0.0, 0.0);
    let mut pos = cfg.start;
    let mut points = Vec::with_capacity(n);
    let mut turn_slot = None;
    for i in 0..n {
        // Steps left after this one, plus the final-location constraint's
        // own allowance of one step.
        let budget = (n - 1 - i) as f64 * cfg.max_step;
        let tentative = step_toward(pos, hover, cfg.max_step);
        if tentative.distance_to(cfg.finish) > budget {
            if turn_slot.is_none() {
                turn_slot = Some(i);
            }
            pos = step_toward(pos, cfg.finish, cfg.max_step);
        } else {
            pos = tentative;
        }
        points.push(pos);
    }
    Ok((Trajectory::from_positions(&points), turn_slot))
}

/// Greedy line-segment trajectory: head for Bob's overhead point at maximum
/// speed, hover there while the final location stays reachable, and break
/// off toward it at the last feasible slot.
pub fn line_trajectory(cfg: &ScenarioConfig) -> Result<Trajectory, BaselineError> {
    Ok(line_trajectory_with_turn(cfg)?.0)
}

/// Trajectory optimization without power control: uniform average power,
/// surrogate iterations from the straight-line start until the path stops
/// moving.
pub fn to_without_pc(cfg: &ScenarioConfig) -> Result<BaselineResult, BaselineError> {
    let start = bcd::straight_line_trajectory(cfg)
        .map_err(|e| BaselineError::InfeasibleEndpoints(e.to_string()))?;
    let power = PowerProfile::uniform(cfg.avg_power, cfg.num_slots);
    let (trajectory, _slacks, iterations) =
        trajectory_sca::optimize_trajectory(&start, &power, cfg)?;
    let avg_secrecy_clipped = model::average_secrecy_rate(&trajectory, &power, cfg, true)?;
    Ok(BaselineResult {
        scheme: Scheme::TrajectoryOnly,
        trajectory,
        power,
        avg_secrecy_clipped,
        diagnostics: BaselineDiagnostics { sca_iterations: iterations, turn_slot: None },
    })
}

/// Line-segment trajectory with optimal power control on top.
pub fn line_with_pc(cfg: &ScenarioConfig) -> Result<BaselineResult, BaselineError> {
    let (trajectory, turn_slot) = line_trajectory_with_turn(cfg)?;
    let (power, _dual) = power_control::optimize_power(&trajectory, cfg);
    let avg_secrecy_clipped = model::average_secrecy_rate(&trajectory, &power, cfg, true)?;
    Ok(BaselineResult {
        scheme: Scheme::LineWithPower,
        trajectory,
        power,
        avg_secrecy_clipped,
        diagnostics: BaselineDiagnostics { sca_iterations: 0, turn_slot },
    })
}
