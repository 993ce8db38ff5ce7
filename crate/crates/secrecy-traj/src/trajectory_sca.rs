//! Trajectory optimization under fixed power via successive convex
//! approximation.
//!
//! The fixed-power trajectory subproblem is non-concave, but it becomes
//! tractable after two moves. First, per-slot slack variables stand in for
//! the squared link distances: one lower-bounds the Eve distance, one
//! upper-bounds the Bob distance, and both are tight at any optimum. Second,
//! the remaining non-convex pieces are replaced by their first-order Taylor
//! expansions around the current feasible point: the Bob-link log term by a
//! global under-estimator, and the squared coordinates in the Eve constraint
//! by global over-estimators. The result is a concave maximization over
//! linear and convex quadratic constraints, solved by [`crate::convex_solver`];
//! each solve is guaranteed not to decrease the exact subproblem objective.

use crate::convex_solver::{
    self, AffineForm, ConvexProblem, LinearConstraint, LogTerm, QuadConstraint, SolverReport,
    SolverStatus,
};
use crate::model::{self, ModelError, PowerProfile, ScenarioConfig, Trajectory};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScaError {
    #[error("{name} must be positive, got {value}")]
    NonPositiveDomain { name: &'static str, value: f64 },
    #[error("expansion point is infeasible: {0}")]
    InfeasibleExpansion(String),
    #[error("could not construct a strictly feasible start point: {0}")]
    DegenerateStart(String),
    #[error("convex solve failed: {0}")]
    SolverFailed(String),
    #[error(transparent)]
    Solver(#[from] convex_solver::SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-slot slack variables of the reformulated subproblem, m^2.
///
/// `eve_sq[n]` never exceeds the true squared UAV-Eve distance and
/// `bob_sq[n]` never falls below the true squared UAV-Bob distance; both are
/// tight at a fixed point of the iteration.
#[derive(Debug, Clone)]
pub struct SlackState {
    pub eve_sq: Vec<f64>,
    pub bob_sq: Vec<f64>,
}

impl SlackState {
    /// Slacks equal to the true squared distances of a trajectory.
    pub fn tight(traj: &Trajectory, cfg: &ScenarioConfig) -> Self {
        let h2 = cfg.altitude * cfg.altitude;
        let l = cfg.bob_eve_distance;
        let eve_sq = traj
            .x
            .iter()
            .zip(&traj.y)
            .map(|(&x, &y)| (x - l).powi(2) + y * y + h2)
            .collect();
        let bob_sq = traj.x.iter().zip(&traj.y).map(|(&x, &y)| x * x + y * y + h2).collect();
        Self { eve_sq, bob_sq }
    }
}

/// Feasible point the convex surrogate is expanded around.
#[derive(Debug, Clone)]
pub struct ExpansionPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Bob-link slack at the expansion point, m^2.
    pub bob_sq: Vec<f64>,
}

impl ExpansionPoint {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory::new(self.x.clone(), self.y.clone())
    }
}

/// Per-slot products of reference SNR and transmit power, m^2.
///
/// These are the only way power enters the trajectory subproblem; slots with
/// a zero entry contribute nothing to its objective.
#[derive(Debug, Clone)]
pub struct ScaledPower {
    pub values: Vec<f64>,
}

impl ScaledPower {
    pub fn from_profile(power: &PowerProfile, cfg: &ScenarioConfig) -> Self {
        Self { values: power.watts.iter().map(|&p| cfg.reference_snr * p).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Expansion point with tight Bob-link slacks at a feasible trajectory.
pub fn make_expansion(traj: &Trajectory, cfg: &ScenarioConfig) -> Result<ExpansionPoint, ScaError> {
    let report = model::validate(traj, &PowerProfile::uniform(0.0, cfg.num_slots), cfg);
    if !report.is_clean() {
        return Err(ScaError::InfeasibleExpansion(report.to_string()));
    }
    let slacks = SlackState::tight(traj, cfg);
    Ok(ExpansionPoint { x: traj.x.clone(), y: traj.y.clone(), bob_sq: slacks.bob_sq })
}

/// Global under-estimator of `ln(1 + p / u)`: its tangent at `u_ref`.
///
/// Equality holds exactly at `u = u_ref`.
pub fn under_estimator_u(u: f64, u_ref: f64, scaled_power: f64) -> Result<f64, ScaError> {
    if u <= 0.0 {
        return Err(ScaError::NonPositiveDomain { name: "u", value: u });
    }
    if u_ref <= 0.0 {
        return Err(ScaError::NonPositiveDomain { name: "u_ref", value: u_ref });
    }
    Ok((1.0 + scaled_power / u_ref).ln()
        - scaled_power * (u - u_ref) / (u_ref * u_ref + scaled_power * u_ref))
}

/// Global over-estimator of `-z^2`: its tangent at `z_ref`.
///
/// Equality holds exactly at `z = z_ref`.
pub fn over_estimator_sq(z: f64, z_ref: f64) -> f64 {
    z_ref * z_ref - 2.0 * z_ref * z
}

/// How the subproblem variables map onto the flat solver vector.
///
/// Every slot owns an (x, y) pair; only slots with positive scaled power own
/// slack variables, since the others contribute nothing to the objective and
/// their slacks are recovered tightly after the solve.
#[derive(Debug, Clone)]
struct Layout {
    x_idx: Vec<usize>,
    y_idx: Vec<usize>,
    /// `(eve_sq, bob_sq)` variable indices for active slots.
    slack_idx: Vec<Option<(usize, usize)>>,
    num_vars: usize,
}

impl Layout {
    fn for_power(pn: &ScaledPower) -> Self {
        let n = pn.len();
        let mut x_idx = Vec::with_capacity(n);
        let mut y_idx = Vec::with_capacity(n);
        let mut slack_idx = Vec::with_capacity(n);
        let mut next = 0usize;
        for &p in &pn.values {
            x_idx.push(next);
            y_idx.push(next + 1);
            next += 2;
            if p > 0.0 {
                slack_idx.push(Some((next, next + 1)));
                next += 2;
            } else {
                slack_idx.push(None);
            }
        }
        Self { x_idx, y_idx, slack_idx, num_vars: next }
    }
}

/// Value of the linearized Eve-distance lower bound at `(x, y)`:
/// `(x-L)^2 + y^2 + H^2 - ((x-x_ref)^2 + (y-y_ref)^2)`.
fn linearized_eve_floor(x: f64, y: f64, x_ref: f64, y_ref: f64, cfg: &ScenarioConfig) -> f64 {
    let l = cfg.bob_eve_distance;
    let h2 = cfg.altitude * cfg.altitude;
    -over_estimator_sq(x, x_ref) - 2.0 * l * x + l * l - over_estimator_sq(y, y_ref) + h2
}

/// Smallest mobility margin `V^2 - step^2` over the whole chain, m^2.
fn min_mobility_margin(x: &[f64], y: &[f64], cfg: &ScenarioConfig) -> f64 {
    let v2 = cfg.max_step * cfg.max_step;
    let n = x.len();
    let mut margin = v2 - ((x[0] - cfg.start.x).powi(2) + (y[0] - cfg.start.y).powi(2));
    for i in 1..n {
        let step = (x[i] - x[i - 1]).powi(2) + (y[i] - y[i - 1]).powi(2);
        margin = margin.min(v2 - step);
    }
    margin.min(v2 - ((cfg.finish.x - x[n - 1]).powi(2) + (cfg.finish.y - y[n - 1]).powi(2)))
}

/// Pick a strictly feasible, reasonably centered start near the expansion.
///
/// The expansion may sit on or within rounding distance of the mobility
/// boundary: a straight-line initialization at exactly maximum speed does,
/// and so does any warm start from a previous solve whose active constraints
/// have near-zero slack. Newton recovers poorly from such corners, so the
/// start is blended toward the evenly-spaced line through all N+1 hops (a
/// known interior point) until the smallest mobility margin is healthy; by
/// convexity any blend weight keeps every constraint satisfied. The blend
/// only moves the solver's start, never the linearization, so the solve's
/// optimum is unaffected.
fn strict_start_positions(
    exp: &ExpansionPoint,
    cfg: &ScenarioConfig,
) -> Result<(Vec<f64>, Vec<f64>), ScaError> {
    let n = exp.len();
    let h2 = cfg.altitude * cfg.altitude;
    let v2 = cfg.max_step * cfg.max_step;
    let margin_target = 1e-3 * v2;
    let mut fallback: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for &s in &[0.0, 1e-3, 1e-2, 0.1, 0.3, 1.0] {
        let mut x = exp.x.clone();
        let mut y = exp.y.clone();
        if s > 0.0 {
            for i in 0..n {
                let frac = (i + 1) as f64 / (n + 1) as f64;
                let rx = cfg.start.x + frac * (cfg.finish.x - cfg.start.x);
                let ry = cfg.start.y + frac * (cfg.finish.y - cfg.start.y);
                x[i] += s * (rx - x[i]);
                y[i] += s * (ry - y[i]);
            }
        }
        let floors_ok = (0..n).all(|i| {
            linearized_eve_floor(x[i], y[i], exp.x[i], exp.y[i], cfg) > 1e-6 * h2
        });
        if !floors_ok {
            continue;
        }
        let margin = min_mobility_margin(&x, &y, cfg);
        if margin >= margin_target {
            return Ok((x, y));
        }
        if margin > 0.0 && fallback.as_ref().map_or(true, |f| margin > f.0) {
            fallback = Some((margin, x, y));
        }
    }
    match fallback {
        Some((_, x, y)) => Ok((x, y)),
        None => Err(ScaError::DegenerateStart(
            "no strictly feasible point found near the expansion".into(),
        )),
    }
}

fn build_with_layout(
    exp: &ExpansionPoint,
    pn: &ScaledPower,
    cfg: &ScenarioConfig,
) -> Result<(ConvexProblem, Layout), ScaError> {
    let n = exp.len();
    let layout = Layout::for_power(pn);
    let l = cfg.bob_eve_distance;
    let h2 = cfg.altitude * cfg.altitude;
    let v2 = cfg.max_step * cfg.max_step;

    let mut linear_objective = vec![0.0; layout.num_vars];
    let mut log_terms = Vec::new();
    let mut linear_constraints = Vec::new();
    let mut quad_constraints = Vec::new();

    for i in 0..n {
        let Some((t_idx, u_idx)) = layout.slack_idx[i] else { continue };
        let p = pn.values[i];
        let u_ref = exp.bob_sq[i];
        linear_objective[u_idx] = -p / (u_ref * u_ref + p * u_ref);
        log_terms.push(LogTerm { index: t_idx, constant: p });

        // Linearized Eve-distance bound on the slack.
        linear_constraints.push(LinearConstraint {
            form: AffineForm::new(
                vec![
                    (t_idx, 1.0),
                    (layout.x_idx[i], 2.0 * l - 2.0 * exp.x[i]),
                    (layout.y_idx[i], -2.0 * exp.y[i]),
                ],
                exp.x[i] * exp.x[i] + exp.y[i] * exp.y[i] - l * l - h2,
            ),
        });

        // Bob-distance paraboloid under the slack.
        quad_constraints.push(QuadConstraint {
            squares: vec![
                AffineForm::new(vec![(layout.x_idx[i], 1.0)], 0.0),
                AffineForm::new(vec![(layout.y_idx[i], 1.0)], 0.0),
            ],
            affine: AffineForm::new(vec![(u_idx, -1.0)], h2),
        });
    }

    // Mobility balls: start -> first slot, slot to slot, last slot -> finish.
    quad_constraints.push(QuadConstraint {
        squares: vec![
            AffineForm::new(vec![(layout.x_idx[0], 1.0)], -cfg.start.x),
            AffineForm::new(vec![(layout.y_idx[0], 1.0)], -cfg.start.y),
        ],
        affine: AffineForm::new(vec![], -v2),
    });
    for i in 1..n {
        quad_constraints.push(QuadConstraint {
            squares: vec![
                AffineForm::new(vec![(layout.x_idx[i], 1.0), (layout.x_idx[i - 1], -1.0)], 0.0),
                AffineForm::new(vec![(layout.y_idx[i], 1.0), (layout.y_idx[i - 1], -1.0)], 0.0),
            ],
            affine: AffineForm::new(vec![], -v2),
        });
    }
    quad_constraints.push(QuadConstraint {
        squares: vec![
            AffineForm::new(vec![(layout.x_idx[n - 1], 1.0)], -cfg.finish.x),
            AffineForm::new(vec![(layout.y_idx[n - 1], 1.0)], -cfg.finish.y),
        ],
        affine: AffineForm::new(vec![], -v2),
    });

    // Strictly feasible start: interior positions, Eve slack below its
    // linearized bound, Bob slack above the paraboloid.
    let (sx, sy) = strict_start_positions(exp, cfg)?;
    let mut start = vec![0.0; layout.num_vars];
    for i in 0..n {
        start[layout.x_idx[i]] = sx[i];
        start[layout.y_idx[i]] = sy[i];
        if let Some((t_idx, u_idx)) = layout.slack_idx[i] {
            let floor = linearized_eve_floor(sx[i], sy[i], exp.x[i], exp.y[i], cfg);
            start[t_idx] = 0.9 * floor;
            start[u_idx] = 1.05 * (sx[i] * sx[i] + sy[i] * sy[i] + h2);
        }
    }

    Ok((
        ConvexProblem {
            num_vars: layout.num_vars,
            linear_objective,
            log_terms,
            linear_constraints,
            quad_constraints,
            start,
        },
        layout,
    ))
}

/// Encode one convex surrogate subproblem around the expansion point.
pub fn build_subproblem(
    exp: &ExpansionPoint,
    pn: &ScaledPower,
    cfg: &ScenarioConfig,
) -> Result<ConvexProblem, ScaError> {
    Ok(build_with_layout(exp, pn, cfg)?.0)
}

/// Result of one SCA iteration.
#[derive(Debug, Clone)]
pub struct ScaStep {
    pub trajectory: Trajectory,
    pub slacks: SlackState,
    /// Present whenever a solve actually ran (absent for the degenerate
    /// all-pinned and zero-power cases).
    pub report: Option<SolverReport>,
}

const SCA_SOLVER_TOL: f64 = 1e-7;

/// Exact objective of the slack-reformulated subproblem in natural-log
/// units: `sum ln(1 + p/bob_sq) - ln(1 + p/eve_sq)`.
pub fn reformulated_objective(slacks: &SlackState, pn: &ScaledPower) -> f64 {
    slacks
        .bob_sq
        .iter()
        .zip(&slacks.eve_sq)
        .zip(&pn.values)
        .map(|((&u, &t), &p)| (1.0 + p / u).ln() - (1.0 + p / t).ln())
        .sum()
}

/// One convex surrogate solve around `exp`, returning an updated trajectory
/// and slack state whose exact subproblem objective is no worse than the
/// expansion's (up to the solver tolerance).
pub fn sca_step(
    exp: &ExpansionPoint,
    pn: &ScaledPower,
    cfg: &ScenarioConfig,
) -> Result<ScaStep, ScaError> {
    let traj = exp.trajectory();
    let report = model::validate(&traj, &PowerProfile::uniform(0.0, cfg.num_slots), cfg);
    if !report.is_clean() {
        return Err(ScaError::InfeasibleExpansion(report.to_string()));
    }

    let pinned = cfg.max_step <= 0.0;
    let all_inactive = pn.values.iter().all(|&p| p == 0.0);
    if pinned || all_inactive {
        let slacks = SlackState::tight(&traj, cfg);
        return Ok(ScaStep { trajectory: traj, slacks, report: None });
    }

    let (prob, layout) = build_with_layout(exp, pn, cfg)?;
    let report = convex_solver::solve(&prob, SCA_SOLVER_TOL)?;
    // The step only relies on the objective guarantee, so a solve that hit
    // the double-precision stationarity floor is as good as a certified one.
    if report.status == SolverStatus::Failed {
        return Err(ScaError::SolverFailed(
            report.diagnostic.clone().unwrap_or_else(|| "no diagnostic".into()),
        ));
    }

    let n = exp.len();
    let z = &report.solution;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        x.push(z[layout.x_idx[i]]);
        y.push(z[layout.y_idx[i]]);
    }
    let trajectory = Trajectory::new(x, y);
    let mut slacks = SlackState::tight(&trajectory, cfg);
    for i in 0..n {
        if let Some((t_idx, u_idx)) = layout.slack_idx[i] {
            slacks.eve_sq[i] = z[t_idx];
            slacks.bob_sq[i] = z[u_idx];
        }
    }
    Ok(ScaStep { trajectory, slacks, report: Some(report) })
}

const INNER_MOVE_TOL_M: f64 = 1e-3;
const INNER_MAX_ITERS: usize = 30;

/// Iterate [`sca_step`] at fixed power until the trajectory stops moving
/// (largest waypoint displacement below 1e-3 m) or 30 iterations.
///
/// Returns the final trajectory, its slack state, and the iteration count.
pub fn optimize_trajectory(
    traj: &Trajectory,
    power: &PowerProfile,
    cfg: &ScenarioConfig,
) -> Result<(Trajectory, SlackState, usize), ScaError> {
    let pn = ScaledPower::from_profile(power, cfg);
    let mut exp = make_expansion(traj, cfg)?;
    let mut current = traj.clone();
    let mut slacks = SlackState::tight(&current, cfg);
    let mut iterations = 0usize;
    for _ in 0..INNER_MAX_ITERS {
        let step = sca_step(&exp, &pn, cfg)?;
        iterations += 1;
        let moved = step.trajectory.max_deviation_from(&current);
        current = step.trajectory;
        slacks = step.slacks;
        exp = ExpansionPoint {
            x: current.x.clone(),
            y: current.y.clone(),
            bob_sq: slacks.bob_sq.clone(),
        };
        if moved < INNER_MOVE_TOL_M {
            break;
        }
    }
    Ok((current, slacks, iterations))
}
