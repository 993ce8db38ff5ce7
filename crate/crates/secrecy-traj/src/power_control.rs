//! Optimal per-slot transmit power for a fixed trajectory.
//!
//! With the waypoints fixed, the per-slot SNR coefficients toward Bob and Eve
//! are constants and the power subproblem separates across slots up to the
//! average-power coupling. Each slot's optimum has a closed form driven by a
//! single nonnegative dual variable for the average-power constraint; slots
//! where the Eve link is at least as strong as the Bob link transmit nothing.
//! The dual variable is found by bisection, using the fact that the mean
//! power of the closed-form profile is non-increasing in it.

use crate::model::{ModelError, PowerProfile, ScenarioConfig, Trajectory};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PowerError {
    #[error("dual variable must be nonnegative, got {0}")]
    NegativeDual(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-slot SNR coefficients for both links, per watt.
///
/// `bob[n]` multiplies the transmit power to give the received SNR at Bob;
/// likewise `eve[n]` for Eve. `bob[n] > eve[n]` exactly when the UAV is
/// strictly closer to Bob at slot `n`.
#[derive(Debug, Clone)]
pub struct LinkCoefficients {
    pub bob: Vec<f64>,
    pub eve: Vec<f64>,
}

impl LinkCoefficients {
    pub fn len(&self) -> usize {
        self.bob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bob.is_empty()
    }
}

/// Nonnegative multiplier for the average-power constraint, per watt in
/// natural-log rate units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualVariable(f64);

impl DualVariable {
    pub const ZERO: DualVariable = DualVariable(0.0);

    pub fn new(lambda: f64) -> Result<Self, PowerError> {
        if lambda < 0.0 || lambda.is_nan() {
            return Err(PowerError::NegativeDual(lambda));
        }
        Ok(Self(lambda))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// SNR coefficients of every slot of a trajectory.
pub fn link_coefficients(traj: &Trajectory, cfg: &ScenarioConfig) -> LinkCoefficients {
    let h2 = cfg.altitude * cfg.altitude;
    let l = cfg.bob_eve_distance;
    let mut bob = Vec::with_capacity(traj.len());
    let mut eve = Vec::with_capacity(traj.len());
    for n in 0..traj.len() {
        let (x, y) = (traj.x[n], traj.y[n]);
        bob.push(cfg.reference_snr / (x * x + y * y + h2));
        eve.push(cfg.reference_snr / ((x - l).powi(2) + y * y + h2));
    }
    LinkCoefficients { bob, eve }
}

/// Stationary point of `ln(1 + a p) - ln(1 + b p) - lambda p` for `a > b`,
/// before clamping to `[0, peak]`.
fn unclamped_optimum(a: f64, b: f64, lambda: f64) -> f64 {
    let half_inv_b = 0.5 / b;
    let half_inv_a = 0.5 / a;
    let radicand = (half_inv_b - half_inv_a).powi(2) + (1.0 / lambda) * (1.0 / b - 1.0 / a);
    radicand.sqrt() - half_inv_b - half_inv_a
}

/// Closed-form power profile for a given dual variable.
///
/// Slots with `bob <= eve` transmit nothing. For the rest, the stationary
/// power is clamped to `[0, peak_power]`. The `lambda = 0` limit allocates
/// peak power to every slot with a positive secrecy gradient.
pub fn power_at_lambda(
    coeffs: &LinkCoefficients,
    lambda: DualVariable,
    cfg: &ScenarioConfig,
) -> PowerProfile {
    let lam = lambda.value();
    let watts = coeffs
        .bob
        .iter()
        .zip(&coeffs.eve)
        .map(|(&a, &b)| {
            if a <= b {
                0.0
            } else if lam == 0.0 {
                cfg.peak_power
            } else {
                unclamped_optimum(a, b, lam).max(0.0).min(cfg.peak_power)
            }
        })
        .collect();
    PowerProfile { watts }
}

// Bisection controls for the average-power dual search.
const AVG_POWER_REL_TOL: f64 = 1e-9;
// Refining the bracket below a few ulps of lambda cannot move the mean.
const BRACKET_REL_WIDTH: f64 = 1e-15;
const MAX_BISECT_ITERS: usize = 200;

/// Maximize the fixed-trajectory secrecy objective over feasible powers.
///
/// Returns the optimal profile together with the dual variable at which the
/// average-power constraint is satisfied: zero when the constraint is slack
/// at the peak-clamped profile, otherwise the bisection solution where the
/// mean power matches the limit to within `1e-9` relative.
pub fn optimize_power(traj: &Trajectory, cfg: &ScenarioConfig) -> (PowerProfile, DualVariable) {
    let coeffs = link_coefficients(traj, cfg);

    let at_zero = power_at_lambda(&coeffs, DualVariable::ZERO, cfg);
    if at_zero.mean() <= cfg.avg_power {
        return (at_zero, DualVariable::ZERO);
    }

    // Mean power is non-increasing in lambda, so double until feasible then
    // bisect on the residual.
    let mean_at = |lam: f64| power_at_lambda(&coeffs, DualVariable(lam), cfg).mean();
    let mut lo = 0.0;
    let mut hi = 1e-6;
    let mut guard = 0;
    while mean_at(hi) > cfg.avg_power {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        assert!(guard < 220, "failed to bracket the power dual variable");
    }

    // Always answer from the feasible (mean <= limit) side of the bracket.
    let mut best = hi;
    for _ in 0..MAX_BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        let mean = mean_at(mid);
        if mean <= cfg.avg_power {
            hi = mid;
            best = mid;
            if cfg.avg_power - mean <= AVG_POWER_REL_TOL * cfg.avg_power {
                break;
            }
        } else {
            lo = mid;
        }
        if hi - lo < BRACKET_REL_WIDTH * (1.0 + hi) {
            break;
        }
    }

    (power_at_lambda(&coeffs, DualVariable(best), cfg), DualVariable(best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Position;
    use proptest::prelude::*;

    fn default_cfg_one_slot() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.flight_time = 0.5;
        cfg.num_slots = 1;
        cfg
    }

    /// Config whose point (0.5, sqrt(0.75)) yields bob = 2, eve = 1 exactly.
    fn unit_scale_cfg(num_slots: usize, avg: f64, peak: f64) -> (ScenarioConfig, Trajectory) {
        let x = 0.5;
        let y = 0.75f64.sqrt();
        let cfg = ScenarioConfig {
            bob_eve_distance: 2.0,
            altitude: 1.0,
            start: Position::new(x, y),
            finish: Position::new(x, y),
            flight_time: num_slots as f64,
            slot_duration: 1.0,
            num_slots,
            max_speed: 1.0,
            max_step: 1.0,
            avg_power: avg,
            peak_power: peak,
            reference_snr: 4.0,
            reference_gain: None,
            noise_power: None,
            epsilon: 1e-4,
        };
        let traj = Trajectory::new(vec![x; num_slots], vec![y; num_slots]);
        (cfg, traj)
    }

    #[test]
    fn coefficients_above_bob() {
        let cfg = default_cfg_one_slot();
        let traj = Trajectory::new(vec![0.0], vec![0.0]);
        let coeffs = link_coefficients(&traj, &cfg);
        assert!((coeffs.bob[0] - 1e4).abs() < 1e-9);
        assert!((coeffs.eve[0] - 2e3).abs() < 1e-9);
    }

    #[test]
    fn coefficients_equal_on_midline() {
        let cfg = default_cfg_one_slot();
        let traj = Trajectory::new(vec![100.0], vec![33.0]);
        let coeffs = link_coefficients(&traj, &cfg);
        assert!((coeffs.bob[0] - coeffs.eve[0]).abs() < 1e-15);
    }

    #[test]
    fn coefficient_ratio_matches_distance_ratio() {
        let cfg = default_cfg_one_slot();
        for (x, y) in [(0.0, 0.0), (50.0, -80.0), (130.0, 10.0)] {
            let traj = Trajectory::new(vec![x], vec![y]);
            let coeffs = link_coefficients(&traj, &cfg);
            let (to_bob, to_eve) = crate::model::squared_distances(&traj, 0, &cfg).unwrap();
            let ratio = coeffs.bob[0] / coeffs.eve[0];
            assert!((ratio - to_eve / to_bob).abs() < 1e-12 * ratio);
        }
    }

    #[test]
    fn unit_scale_stationary_point() {
        // bob = 2, eve = 1, lambda = 0.1: optimum is 1.5 and the stationarity
        // residual 2/(1+3) - 1/(1+1.5) - 0.1 vanishes.
        let p = unclamped_optimum(2.0, 1.0, 0.1);
        assert!((p - 1.5).abs() < 1e-12);
        let residual = 2.0 / (1.0 + 2.0 * p) - 1.0 / (1.0 + p) - 0.1;
        assert!(residual.abs() < 1e-12);
    }

    #[test]
    fn unit_scale_grid_oracle() {
        // Grid search of ln(1+2p) - ln(1+p) - 0.1 p over [0, 10].
        let objective = |p: f64| (1.0 + 2.0 * p).ln() - (1.0 + p).ln() - 0.1 * p;
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0.0;
        let steps = 100_000;
        for i in 0..=steps {
            let p = 10.0 * i as f64 / steps as f64;
            let v = objective(p);
            if v > best {
                best = v;
                arg = p;
            }
        }
        let closed = unclamped_optimum(2.0, 1.0, 0.1);
        assert!((arg - closed).abs() < 2e-4);
        assert!(objective(closed) >= best - 1e-6);
    }

    #[test]
    fn eve_dominated_slots_get_nothing() {
        let cfg = default_cfg_one_slot();
        let coeffs = LinkCoefficients { bob: vec![1.0, 2.0], eve: vec![1.0, 3.0] };
        let power = power_at_lambda(&coeffs, DualVariable(0.5), &cfg);
        assert_eq!(power.watts, vec![0.0, 0.0]);
    }

    #[test]
    fn huge_dual_drives_power_to_zero() {
        let cfg = default_cfg_one_slot();
        let coeffs = LinkCoefficients { bob: vec![2.0], eve: vec![1.0] };
        let power = power_at_lambda(&coeffs, DualVariable(1e12), &cfg);
        assert_eq!(power.watts[0], 0.0);
    }

    #[test]
    fn zero_dual_is_peak_limited() {
        let cfg = default_cfg_one_slot();
        let coeffs = LinkCoefficients { bob: vec![2.0], eve: vec![1.0] };
        let power = power_at_lambda(&coeffs, DualVariable::ZERO, &cfg);
        assert_eq!(power.watts[0], cfg.peak_power);
    }

    #[test]
    fn negative_dual_rejected() {
        assert!(DualVariable::new(-1e-9).is_err());
        assert!(DualVariable::new(0.0).is_ok());
    }

    #[test]
    fn midline_trajectory_transmits_nothing() {
        let mut cfg = ScenarioConfig::default().with_flight_time(5.0).unwrap();
        cfg.start = Position::new(100.0, 2.0);
        cfg.finish = Position::new(100.0, -2.0);
        let traj = Trajectory::new(vec![100.0; 10], vec![0.0; 10]);
        let (power, dual) = optimize_power(&traj, &cfg);
        assert!(power.watts.iter().all(|&p| p == 0.0));
        assert_eq!(dual.value(), 0.0);
    }

    #[test]
    fn slack_average_constraint_keeps_peak() {
        // Single slot, peak power below the average limit: the peak binds and
        // the dual stays zero.
        let (mut cfg, traj) = unit_scale_cfg(1, 0.9, 0.8);
        cfg.avg_power = 0.9;
        cfg.peak_power = 0.8;
        let (power, dual) = optimize_power(&traj, &cfg);
        assert_eq!(dual.value(), 0.0);
        assert_eq!(power.watts[0], 0.8);
    }

    #[test]
    fn two_slot_oracle() {
        // Two identical slots with bob = 2, eve = 1, avg limit 1.5: both get
        // 1.5 W and the dual lands near 0.1. Cross-checked against a 2-D grid
        // of the joint objective.
        let (cfg, traj) = unit_scale_cfg(2, 1.5, 10.0);
        let (power, dual) = optimize_power(&traj, &cfg);
        assert!((power.watts[0] - 1.5).abs() < 1e-6);
        assert!((power.watts[1] - 1.5).abs() < 1e-6);
        assert!((dual.value() - 0.1).abs() < 1e-4);

        let objective = |p0: f64, p1: f64| {
            (1.0 + 2.0 * p0).ln() - (1.0 + p0).ln() + (1.0 + 2.0 * p1).ln() - (1.0 + p1).ln()
        };
        let mut best = f64::NEG_INFINITY;
        let steps = 1_000usize;
        for i in 0..=steps {
            for j in 0..=steps {
                let p0 = 10.0 * i as f64 / steps as f64;
                let p1 = 10.0 * j as f64 / steps as f64;
                if p0 + p1 <= 2.0 * cfg.avg_power + 1e-12 {
                    best = best.max(objective(p0, p1));
                }
            }
        }
        assert!(objective(power.watts[0], power.watts[1]) >= best - 1e-4);
    }

    #[test]
    fn binding_average_is_met_exactly() {
        let cfg = ScenarioConfig::default().with_flight_time(50.0).unwrap();
        let n = cfg.num_slots;
        // A slanted pass near Bob keeps most slots on the favorable side.
        let traj = Trajectory::new(
            (0..n).map(|i| 40.0 + 0.2 * i as f64).collect(),
            (0..n).map(|i| -20.0 + 0.4 * i as f64).collect(),
        );
        let (power, dual) = optimize_power(&traj, &cfg);
        assert!(dual.value() > 0.0);
        assert!((power.mean() - cfg.avg_power).abs() <= 1e-9 * cfg.avg_power);
        let report = crate::model::validate(&traj, &PowerProfile { watts: power.watts.clone() }, &cfg);
        assert!(!report
            .violations
            .iter()
            .any(|v| matches!(v.constraint, crate::model::ConstraintKind::PowerAverage)));
    }

    proptest! {
        // Mean power of the closed-form profile never increases with the dual.
        #[test]
        fn mean_power_monotone_in_dual(
            seeds in proptest::collection::vec((1e-2..1e4f64, 1e-2..1e4f64), 1..6),
            lam_lo in 1e-6..1.0f64,
            factor in 1.0..1e3f64,
        ) {
            let cfg = default_cfg_one_slot();
            let coeffs = LinkCoefficients {
                bob: seeds.iter().map(|&(a, _)| a).collect(),
                eve: seeds.iter().map(|&(_, b)| b).collect(),
            };
            let lo = power_at_lambda(&coeffs, DualVariable(lam_lo), &cfg).mean();
            let hi = power_at_lambda(&coeffs, DualVariable(lam_lo * factor), &cfg).mean();
            prop_assert!(hi <= lo + 1e-15);
        }

        // Each slot's returned power maximizes its own concave objective over
        // [0, peak]: no grid candidate beats it by more than the tolerance.
        #[test]
        fn per_slot_grid_optimality(a in 1e-1..1e3f64, ratio in 1.001..50.0f64,
                                    lam in 1e-4..10.0f64) {
            let b = a / ratio;
            let mut cfg = default_cfg_one_slot();
            cfg.avg_power = 0.5;
            cfg.peak_power = 1.0;
            let coeffs = LinkCoefficients { bob: vec![a], eve: vec![b] };
            let power = power_at_lambda(&coeffs, DualVariable(lam), &cfg);
            let p = power.watts[0];
            let objective = |p: f64| (1.0 + a * p).ln() - (1.0 + b * p).ln() - lam * p;
            let mut best = f64::NEG_INFINITY;
            for i in 0..=10_000 {
                best = best.max(objective(cfg.peak_power * i as f64 / 10_000.0));
            }
            prop_assert!(objective(p) >= best - 1e-6);
        }

        // Per-slot contribution at the optimum is never negative: slots that
        // would lose secrecy are shut off.
        #[test]
        fn optimum_contributions_nonnegative(a in 1e-2..1e4f64, b in 1e-2..1e4f64,
                                             lam in 0.0..10.0f64) {
            let mut cfg = default_cfg_one_slot();
            cfg.avg_power = 0.5;
            cfg.peak_power = 1.0;
            let coeffs = LinkCoefficients { bob: vec![a], eve: vec![b] };
            let p = power_at_lambda(&coeffs, DualVariable(lam), &cfg).watts[0];
            let contribution = (1.0 + a * p).ln() - (1.0 + b * p).ln();
            prop_assert!(contribution >= 0.0);
        }
    }
}
