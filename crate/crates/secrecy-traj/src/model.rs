//! Physical scenario, channel model, and secrecy-rate formulas.
//!
//! The setting: a UAV at fixed altitude sends data to a ground receiver (Bob,
//! at the origin) while a ground eavesdropper (Eve) listens from a known
//! location on the x-axis. Both air-to-ground links are line-of-sight, so the
//! channel power gain decays with the inverse squared distance. The per-slot
//! secrecy rate is the gap between the rates achievable on the two links, and
//! the quantity every optimizer in this crate maximizes is its average over
//! the flight.
//!
//! All types are immutable after construction and every operation is a pure
//! function of its inputs.

use thiserror::Error;

/// Errors from model operations.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("slot index {slot} out of range (trajectory has {len} slots)")]
    SlotOutOfRange { slot: usize, len: usize },
    #[error("negative transmit power {watts} W at slot {slot}")]
    NegativePower { slot: usize, watts: f64 },
    #[error("{what}: expected length {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
}

/// A horizontal position in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_to(&self, other: Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// All physical and algorithmic parameters of one problem instance.
///
/// Power and gain fields are linear SI values (watts, dimensionless); any
/// dBm/dB input is converted once at the configuration boundary (see
/// [`crate::units`] and the config parser in [`crate::harness`]).
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    /// Distance from Bob (at the origin) to Eve (on the positive x-axis), m.
    pub bob_eve_distance: f64,
    /// Fixed flight altitude, m.
    pub altitude: f64,
    /// Initial horizontal UAV position, m.
    pub start: Position,
    /// Final horizontal UAV position, m.
    pub finish: Position,
    /// Flight duration, s.
    pub flight_time: f64,
    /// Slot length, s.
    pub slot_duration: f64,
    /// Number of time slots; equals `round(flight_time / slot_duration)`.
    pub num_slots: usize,
    /// Maximum UAV speed, m/s.
    pub max_speed: f64,
    /// Maximum per-slot displacement, m; equals `max_speed * slot_duration`.
    pub max_step: f64,
    /// Average transmit power limit, W.
    pub avg_power: f64,
    /// Peak transmit power limit, W.
    pub peak_power: f64,
    /// Reference SNR per watt of transmit power at 1 m, linear.
    pub reference_snr: f64,
    /// Optional reference channel power gain at 1 m, linear (documentation).
    pub reference_gain: Option<f64>,
    /// Optional noise power, W (documentation).
    pub noise_power: Option<f64>,
    /// Fractional-improvement stopping threshold for the outer loop.
    pub epsilon: f64,
}

impl Default for ScenarioConfig {
    /// The default benchmark scenario: Bob and Eve 200 m apart, altitude
    /// 100 m, a 2 m/s UAV crossing from (100, 200) to (100, -200) in 0.5 s
    /// slots, -5 dBm average power with a 4x peak, 80 dB reference SNR.
    fn default() -> Self {
        let avg_power = crate::units::dbm_to_watts(-5.0);
        Self {
            bob_eve_distance: 200.0,
            altitude: 100.0,
            start: Position::new(100.0, 200.0),
            finish: Position::new(100.0, -200.0),
            flight_time: 230.0,
            slot_duration: 0.5,
            num_slots: 460,
            max_speed: 2.0,
            max_step: 1.0,
            avg_power,
            peak_power: 4.0 * avg_power,
            reference_snr: crate::units::db_to_linear(80.0),
            reference_gain: None,
            noise_power: None,
            epsilon: 1e-4,
        }
    }
}

impl ScenarioConfig {
    /// Rebuild the slot count and per-slot step for a new flight duration.
    ///
    /// Fails if the duration is not an integer multiple of the slot length.
    pub fn with_flight_time(&self, flight_time: f64) -> Result<Self, ModelError> {
        let mut cfg = self.clone();
        cfg.flight_time = flight_time;
        cfg.num_slots = (flight_time / cfg.slot_duration).round() as usize;
        cfg.max_step = cfg.max_speed * cfg.slot_duration;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Rescale the average power limit, preserving the peak-to-average ratio.
    pub fn with_avg_power(&self, avg_power: f64) -> Result<Self, ModelError> {
        let mut cfg = self.clone();
        let ratio = self.peak_power / self.avg_power;
        cfg.avg_power = avg_power;
        cfg.peak_power = ratio * avg_power;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check every config invariant, returning the first violation.
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |field: &'static str, reason: String| ModelError::InvalidConfig { field, reason };
        if !(self.altitude > 0.0) {
            return Err(err("altitude", format!("must be positive, got {}", self.altitude)));
        }
        if !(self.max_speed > 0.0) {
            return Err(err("max_speed", format!("must be positive, got {}", self.max_speed)));
        }
        if !(self.reference_snr > 0.0) {
            return Err(err(
                "reference_snr",
                format!("must be positive, got {}", self.reference_snr),
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(err("epsilon", format!("must be positive, got {}", self.epsilon)));
        }
        if !(self.slot_duration > 0.0) {
            return Err(err(
                "slot_duration",
                format!("must be positive, got {}", self.slot_duration),
            ));
        }
        if self.num_slots == 0 {
            return Err(err("num_slots", "must be at least 1".into()));
        }
        let n = (self.flight_time / self.slot_duration).round() as usize;
        if n != self.num_slots
            || (self.flight_time - self.num_slots as f64 * self.slot_duration).abs()
                > 1e-9 * self.flight_time
        {
            return Err(err(
                "flight_time",
                format!(
                    "{} s is not num_slots ({}) times the slot length {} s",
                    self.flight_time, self.num_slots, self.slot_duration
                ),
            ));
        }
        let v = self.max_speed * self.slot_duration;
        if (self.max_step - v).abs() > 1e-9 * v {
            return Err(err(
                "max_step",
                format!("{} m does not equal max_speed * slot_duration = {} m", self.max_step, v),
            ));
        }
        if !(self.avg_power > 0.0 && self.avg_power < self.peak_power) {
            return Err(err(
                "avg_power",
                format!(
                    "need 0 < avg_power < peak_power, got avg = {} W, peak = {} W",
                    self.avg_power, self.peak_power
                ),
            ));
        }
        if let (Some(beta0), Some(sigma2)) = (self.reference_gain, self.noise_power) {
            let implied = beta0 / sigma2;
            if (implied - self.reference_snr).abs() > 1e-9 * self.reference_snr {
                return Err(err(
                    "reference_gain",
                    format!(
                        "reference_gain / noise_power = {implied} disagrees with reference_snr {}",
                        self.reference_snr
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// The UAV's horizontal waypoints, one per slot, at fixed altitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Trajectory {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len(), "coordinate vectors must have equal length");
        Self { x, y }
    }

    pub fn from_positions(points: &[Position]) -> Self {
        Self {
            x: points.iter().map(|p| p.x).collect(),
            y: points.iter().map(|p| p.y).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn position(&self, slot: usize) -> Position {
        Position::new(self.x[slot], self.y[slot])
    }

    /// Largest per-coordinate pointwise deviation from another trajectory, m.
    pub fn max_deviation_from(&self, other: &Trajectory) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .zip(other.x.iter().zip(&other.y))
            .map(|((&x, &y), (&ox, &oy))| ((x - ox).powi(2) + (y - oy).powi(2)).sqrt())
            .fold(0.0, f64::max)
    }
}

/// Per-slot transmit powers in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    pub watts: Vec<f64>,
}

impl PowerProfile {
    pub fn uniform(watts: f64, num_slots: usize) -> Self {
        Self { watts: vec![watts; num_slots] }
    }

    pub fn len(&self) -> usize {
        self.watts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.watts.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.watts.is_empty() {
            0.0
        } else {
            self.watts.iter().sum::<f64>() / self.watts.len() as f64
        }
    }
}

/// Rates achieved in one slot, bps/Hz.
#[derive(Debug, Clone, Copy)]
pub struct RateSample {
    /// Achievable rate on the UAV-to-Bob link.
    pub rate_to_bob: f64,
    /// Achievable rate on the UAV-to-Eve link.
    pub rate_to_eve: f64,
    /// `rate_to_bob - rate_to_eve`, unclipped.
    pub secrecy_raw: f64,
    /// `max(secrecy_raw, 0)`.
    pub secrecy_clipped: f64,
}

/// Squared distances from the UAV at slot `n` to Bob and to Eve, m^2.
pub fn squared_distances(
    traj: &Trajectory,
    n: usize,
    cfg: &ScenarioConfig,
) -> Result<(f64, f64), ModelError> {
    if n >= traj.len() {
        return Err(ModelError::SlotOutOfRange { slot: n, len: traj.len() });
    }
    let (x, y) = (traj.x[n], traj.y[n]);
    let h2 = cfg.altitude * cfg.altitude;
    let to_bob = x * x + y * y + h2;
    let to_eve = (x - cfg.bob_eve_distance).powi(2) + y * y + h2;
    Ok((to_bob, to_eve))
}

/// Rates on both links at slot `n` for the given transmit power.
pub fn slot_rates(
    traj: &Trajectory,
    power: &PowerProfile,
    n: usize,
    cfg: &ScenarioConfig,
) -> Result<RateSample, ModelError> {
    let (to_bob_sq, to_eve_sq) = squared_distances(traj, n, cfg)?;
    if n >= power.len() {
        return Err(ModelError::SlotOutOfRange { slot: n, len: power.len() });
    }
    let p = power.watts[n];
    if p < 0.0 {
        return Err(ModelError::NegativePower { slot: n, watts: p });
    }
    let rate_to_bob = (1.0 + cfg.reference_snr * p / to_bob_sq).log2();
    let rate_to_eve = (1.0 + cfg.reference_snr * p / to_eve_sq).log2();
    let secrecy_raw = rate_to_bob - rate_to_eve;
    Ok(RateSample {
        rate_to_bob,
        rate_to_eve,
        secrecy_raw,
        secrecy_clipped: secrecy_raw.max(0.0),
    })
}

/// Average secrecy rate over all slots, bps/Hz.
///
/// With `clipped` set, negative per-slot gaps are zeroed before averaging;
/// otherwise the plain mean of `rate_to_bob - rate_to_eve` is returned.
pub fn average_secrecy_rate(
    traj: &Trajectory,
    power: &PowerProfile,
    cfg: &ScenarioConfig,
    clipped: bool,
) -> Result<f64, ModelError> {
    if traj.len() != cfg.num_slots {
        return Err(ModelError::DimensionMismatch {
            what: "trajectory",
            expected: cfg.num_slots,
            actual: traj.len(),
        });
    }
    if power.len() != cfg.num_slots {
        return Err(ModelError::DimensionMismatch {
            what: "power profile",
            expected: cfg.num_slots,
            actual: power.len(),
        });
    }
    let mut sum = 0.0;
    for n in 0..cfg.num_slots {
        let rates = slot_rates(traj, power, n, cfg)?;
        sum += if clipped { rates.secrecy_clipped } else { rates.secrecy_raw };
    }
    Ok(sum / cfg.num_slots as f64)
}

/// Which constraint a [`Violation`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// First waypoint farther than one step from the start position.
    FirstStep,
    /// Consecutive waypoints farther apart than one step.
    StepLength,
    /// Last waypoint farther than one step from the final position.
    FinalStep,
    /// Negative transmit power.
    PowerSign,
    /// Transmit power above the peak limit.
    PowerPeak,
    /// Mean transmit power above the average limit.
    PowerAverage,
    /// Vector length disagrees with the slot count.
    Length,
}

/// One violated constraint, with where and by how much.
#[derive(Debug, Clone)]
pub struct Violation {
    pub constraint: ConstraintKind,
    /// Slot index for per-slot constraints.
    pub slot: Option<usize>,
    /// Positive violation magnitude (m or W depending on the constraint).
    pub magnitude: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.slot {
            Some(n) => write!(f, "{:?} at slot {}: exceeds by {:.3e}", self.constraint, n, self.magnitude),
            None => write!(f, "{:?}: exceeds by {:.3e}", self.constraint, self.magnitude),
        }
    }
}

/// Result of [`validate`]: empty iff trajectory and power satisfy every
/// constraint of the scenario.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_clean() {
            write!(f, "all constraints satisfied")
        } else {
            writeln!(f, "{} constraint violation(s):", self.violations.len())?;
            for v in &self.violations {
                writeln!(f, "  {v}")?;
            }
            Ok(())
        }
    }
}

// Slack used when checking mobility distances (m) and power bounds (W).
const MOBILITY_SLACK_M: f64 = 1e-9;
const POWER_BOUND_SLACK_W: f64 = 1e-12;
const POWER_AVG_REL_SLACK: f64 = 1e-9;

/// Check a trajectory/power pair against every mobility and power constraint.
///
/// Violations are reported, not raised; an empty report means the pair is
/// feasible for the scenario.
pub fn validate(traj: &Trajectory, power: &PowerProfile, cfg: &ScenarioConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = cfg.num_slots;

    if traj.len() != n {
        report.violations.push(Violation {
            constraint: ConstraintKind::Length,
            slot: None,
            magnitude: (traj.len() as f64 - n as f64).abs(),
        });
        return report;
    }

    let step_limit = cfg.max_step + MOBILITY_SLACK_M;
    let first = traj.position(0).distance_to(cfg.start);
    if first > step_limit {
        report.violations.push(Violation {
            constraint: ConstraintKind::FirstStep,
            slot: Some(0),
            magnitude: first - cfg.max_step,
        });
    }
    for i in 1..n {
        let step = traj.position(i).distance_to(traj.position(i - 1));
        if step > step_limit {
            report.violations.push(Violation {
                constraint: ConstraintKind::StepLength,
                slot: Some(i),
                magnitude: step - cfg.max_step,
            });
        }
    }
    let last = traj.position(n - 1).distance_to(cfg.finish);
    if last > step_limit {
        report.violations.push(Violation {
            constraint: ConstraintKind::FinalStep,
            slot: Some(n - 1),
            magnitude: last - cfg.max_step,
        });
    }

    if power.len() != n {
        report.violations.push(Violation {
            constraint: ConstraintKind::Length,
            slot: None,
            magnitude: (power.len() as f64 - n as f64).abs(),
        });
        return report;
    }
    for (i, &p) in power.watts.iter().enumerate() {
        if p < -POWER_BOUND_SLACK_W {
            report.violations.push(Violation {
                constraint: ConstraintKind::PowerSign,
                slot: Some(i),
                magnitude: -p,
            });
        }
        if p > cfg.peak_power + POWER_BOUND_SLACK_W {
            report.violations.push(Violation {
                constraint: ConstraintKind::PowerPeak,
                slot: Some(i),
                magnitude: p - cfg.peak_power,
            });
        }
    }
    let mean = power.mean();
    if mean > cfg.avg_power * (1.0 + POWER_AVG_REL_SLACK) {
        report.violations.push(Violation {
            constraint: ConstraintKind::PowerAverage,
            slot: None,
            magnitude: mean - cfg.avg_power,
        });
    }
    report
}
