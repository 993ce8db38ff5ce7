//! Flat key-value experiment configuration.
//!
//! The config file is plain `key = value` text: `#` starts a comment, blank
//! lines are ignored, keys are case-insensitive, and every key is optional.
//! An empty file yields the default benchmark scenario. Powers are given in
//! dBm and the reference SNR in dB; they are converted to SI here and
//! nowhere else.

use crate::baselines::Scheme;
use crate::model::{ModelError, ScenarioConfig};
use crate::units;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    BadValue { line: usize, key: String, message: String },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

/// What an experiment sweeps over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentMode {
    /// One run of each selected scheme on the base scenario.
    Single,
    /// Waypoint dumps for each (scheme, flight time) pair.
    TrajectoryFigure,
    /// Secrecy rate versus flight time.
    RateVsTime,
    /// Secrecy rate versus average transmit power.
    RateVsPower,
}

impl ExperimentMode {
    pub fn tag(&self) -> &'static str {
        match self {
            ExperimentMode::Single => "single",
            ExperimentMode::TrajectoryFigure => "trajectory-figure",
            ExperimentMode::RateVsTime => "rate-vs-T",
            ExperimentMode::RateVsPower => "rate-vs-power",
        }
    }
}

impl std::fmt::Display for ExperimentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for ExperimentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single" => Ok(ExperimentMode::Single),
            "trajectory-figure" => Ok(ExperimentMode::TrajectoryFigure),
            "rate-vs-t" => Ok(ExperimentMode::RateVsTime),
            "rate-vs-power" => Ok(ExperimentMode::RateVsPower),
            other => Err(format!(
                "unknown mode `{other}` (expected single, trajectory-figure, rate-vs-T, or rate-vs-power)"
            )),
        }
    }
}

/// A fully resolved experiment: base scenario, sweep grids, schemes, output.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub mode: ExperimentMode,
    pub base: ScenarioConfig,
    /// Flight times for the time-sweeping modes, s.
    pub time_sweep: Vec<f64>,
    /// Average power grid for the power-sweeping mode, dBm.
    pub power_sweep_dbm: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub out_dir: PathBuf,
    /// Worker threads for sweep grid points; 0 means one per core.
    pub workers: usize,
    pub max_outer_iterations: usize,
    pub multistart: bool,
    /// True when the scheme list came from defaults rather than the config.
    pub schemes_defaulted: bool,
}

impl ExperimentSpec {
    /// Switch modes, re-deriving the default scheme list if the config never
    /// chose one (single mode defaults to the joint scheme only).
    pub fn set_mode(&mut self, mode: ExperimentMode) {
        self.mode = mode;
        if self.schemes_defaulted {
            self.schemes = default_schemes(mode);
        }
    }

    /// Every (scheme, scenario) pair the experiment will run, with its grid
    /// coordinates (flight time, average power in dBm).
    pub fn grid(&self) -> Result<Vec<(Scheme, ScenarioConfig, f64, f64)>, ConfigError> {
        let base_dbm = units::watts_to_dbm(self.base.avg_power);
        let mut out = Vec::new();
        match self.mode {
            ExperimentMode::Single => {
                for &scheme in &self.schemes {
                    out.push((scheme, self.base.clone(), self.base.flight_time, base_dbm));
                }
            }
            ExperimentMode::TrajectoryFigure | ExperimentMode::RateVsTime => {
                for &t in &self.time_sweep {
                    let cfg = self.base.with_flight_time(t).map_err(invalid)?;
                    for &scheme in &self.schemes {
                        out.push((scheme, cfg.clone(), t, base_dbm));
                    }
                }
            }
            ExperimentMode::RateVsPower => {
                for &dbm in &self.power_sweep_dbm {
                    let cfg =
                        self.base.with_avg_power(units::dbm_to_watts(dbm)).map_err(invalid)?;
                    for &scheme in &self.schemes {
                        out.push((scheme, cfg.clone(), self.base.flight_time, dbm));
                    }
                }
            }
        }
        Ok(out)
    }
}

fn invalid(e: ModelError) -> ConfigError {
    match e {
        ModelError::InvalidConfig { field, reason } => {
            ConfigError::Invalid { field: field.into(), message: reason }
        }
        other => ConfigError::Invalid { field: "config".into(), message: other.to_string() },
    }
}

fn default_schemes(mode: ExperimentMode) -> Vec<Scheme> {
    match mode {
        ExperimentMode::Single => vec![Scheme::JointTrajectoryPower],
        _ => Scheme::ALL.to_vec(),
    }
}

const DEFAULT_TIME_SWEEP: [f64; 6] = [200.0, 210.0, 220.0, 230.0, 240.0, 250.0];
const DEFAULT_POWER_SWEEP_DBM: [f64; 6] = [-15.0, -10.0, -5.0, 0.0, 5.0, 10.0];

/// Parse an experiment config file.
pub fn parse_config(path: &Path) -> Result<ExperimentSpec, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config_str(&text)
}

/// Parse experiment config text; an empty string gives the full defaults.
pub fn parse_config_str(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let stripped = stripped.trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(ConfigError::Syntax { line, text: stripped.to_string() });
        };
        entries.push((line, key.trim().to_ascii_lowercase(), value.trim().to_string()));
    }

    let mut base = ScenarioConfig::default();
    let mut flight_time = base.flight_time;
    let mut avg_dbm: Option<f64> = None;
    let mut peak_dbm: Option<f64> = None;
    let mut beta0_db: Option<f64> = None;
    let mut sigma2_dbm: Option<f64> = None;
    let mut mode = ExperimentMode::Single;
    let mut schemes: Option<Vec<Scheme>> = None;
    let mut time_sweep = DEFAULT_TIME_SWEEP.to_vec();
    let mut power_sweep = DEFAULT_POWER_SWEEP_DBM.to_vec();
    let mut out_dir = PathBuf::from("results");
    let mut workers = 0usize;
    let mut max_outer_iterations = 100usize;
    let mut multistart = true;

    let bad = |line: usize, key: &str, message: String| ConfigError::BadValue {
        line,
        key: key.to_string(),
        message,
    };
    let parse_f64 = |line: usize, key: &str, v: &str| -> Result<f64, ConfigError> {
        v.parse::<f64>().map_err(|e| bad(line, key, e.to_string()))
    };
    let parse_list = |line: usize, key: &str, v: &str| -> Result<Vec<f64>, ConfigError> {
        let vals: Result<Vec<f64>, _> =
            v.split(',').map(|piece| piece.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| bad(line, key, e.to_string()))?;
        if vals.is_empty() {
            return Err(bad(line, key, "empty list".into()));
        }
        Ok(vals)
    };

    for (line, key, value) in entries {
        match key.as_str() {
            "l_m" => base.bob_eve_distance = parse_f64(line, &key, &value)?,
            "h_m" => base.altitude = parse_f64(line, &key, &value)?,
            "x0_m" => base.start.x = parse_f64(line, &key, &value)?,
            "y0_m" => base.start.y = parse_f64(line, &key, &value)?,
            "xf_m" => base.finish.x = parse_f64(line, &key, &value)?,
            "yf_m" => base.finish.y = parse_f64(line, &key, &value)?,
            "t_s" => flight_time = parse_f64(line, &key, &value)?,
            "dt_s" => base.slot_duration = parse_f64(line, &key, &value)?,
            "v_max_mps" => base.max_speed = parse_f64(line, &key, &value)?,
            "p_avg_dbm" => avg_dbm = Some(parse_f64(line, &key, &value)?),
            "p_peak_dbm" => peak_dbm = Some(parse_f64(line, &key, &value)?),
            "gamma0_db" => {
                base.reference_snr = units::db_to_linear(parse_f64(line, &key, &value)?)
            }
            "beta0_db" => beta0_db = Some(parse_f64(line, &key, &value)?),
            "sigma2_dbm" => sigma2_dbm = Some(parse_f64(line, &key, &value)?),
            "epsilon" => base.epsilon = parse_f64(line, &key, &value)?,
            "mode" => {
                mode = value.parse().map_err(|e: String| bad(line, &key, e))?;
            }
            "schemes" => {
                let parsed: Result<Vec<Scheme>, String> =
                    value.split(',').map(|piece| piece.parse()).collect();
                schemes = Some(parsed.map_err(|e| bad(line, &key, e))?);
            }
            "t_sweep_s" => time_sweep = parse_list(line, &key, &value)?,
            "p_avg_sweep_dbm" => power_sweep = parse_list(line, &key, &value)?,
            "out" => out_dir = PathBuf::from(&value),
            "workers" => {
                workers = value.parse().map_err(|e: std::num::ParseIntError| {
                    bad(line, &key, e.to_string())
                })?
            }
            "max_outer_iterations" => {
                max_outer_iterations = value.parse().map_err(
                    |e: std::num::ParseIntError| bad(line, &key, e.to_string()),
                )?
            }
            "multistart" => {
                multistart = value.parse().map_err(|e: std::str::ParseBoolError| {
                    bad(line, &key, e.to_string())
                })?
            }
            _ => return Err(ConfigError::UnknownKey { line, key }),
        }
    }

    if let Some(dbm) = avg_dbm {
        base.avg_power = units::dbm_to_watts(dbm);
    }
    base.peak_power = match peak_dbm {
        Some(dbm) => units::dbm_to_watts(dbm),
        // Default peak is four times the average, in watts.
        None => 4.0 * base.avg_power,
    };
    base.reference_gain = beta0_db.map(units::db_to_linear);
    base.noise_power = sigma2_dbm.map(units::dbm_to_watts);

    base.num_slots = (flight_time / base.slot_duration).round().max(1.0) as usize;
    base.flight_time = flight_time;
    base.max_step = base.max_speed * base.slot_duration;
    base.validate().map_err(invalid)?;

    let (schemes, schemes_defaulted) = match schemes {
        Some(list) => (list, false),
        None => (default_schemes(mode), true),
    };

    let spec = ExperimentSpec {
        mode,
        base,
        time_sweep,
        power_sweep_dbm: power_sweep,
        schemes,
        out_dir,
        workers,
        max_outer_iterations,
        multistart,
        schemes_defaulted,
    };
    // Fail fast if any grid point would produce an invalid scenario.
    spec.grid()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Position;

    #[test]
    fn empty_config_gives_defaults() {
        let spec = parse_config_str("").unwrap();
        assert_eq!(spec.mode, ExperimentMode::Single);
        assert_eq!(spec.base.bob_eve_distance, 200.0);
        assert_eq!(spec.base.altitude, 100.0);
        assert_eq!(spec.base.start, Position::new(100.0, 200.0));
        assert_eq!(spec.base.finish, Position::new(100.0, -200.0));
        assert_eq!(spec.base.slot_duration, 0.5);
        assert_eq!(spec.base.max_speed, 2.0);
        assert!((spec.base.avg_power - units::dbm_to_watts(-5.0)).abs() < 1e-15);
        assert!((spec.base.peak_power - 4.0 * spec.base.avg_power).abs() < 1e-15);
        assert!((spec.base.reference_snr - 1e8).abs() < 1e-2);
        assert_eq!(spec.base.epsilon, 1e-4);
        assert_eq!(spec.schemes, vec![Scheme::JointTrajectoryPower]);
        assert_eq!(spec.time_sweep, DEFAULT_TIME_SWEEP.to_vec());
        assert_eq!(spec.power_sweep_dbm, DEFAULT_POWER_SWEEP_DBM.to_vec());
    }

    #[test]
    fn flight_time_override_sets_slot_count() {
        let spec = parse_config_str("T_s = 250\n").unwrap();
        assert_eq!(spec.base.num_slots, 500);
    }

    #[test]
    fn average_above_peak_rejected() {
        let err = parse_config_str("P_avg_dbm = 10\nP_peak_dbm = 5\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { .. }), "{err}");
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = parse_config_str("L_m = 200\nfrobnicate = 1\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { line, key } => {
                assert_eq!(line, 2);
                assert_eq!(key, "frobnicate");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bad_float_reports_key_and_line() {
        let err = parse_config_str("H_m = tall\n").unwrap_err();
        match err {
            ConfigError::BadValue { line, key, .. } => {
                assert_eq!(line, 1);
                assert_eq!(key, "h_m");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn comments_and_case_are_tolerated() {
        let text = "# a comment\nMODE = rate-vs-T  # inline\nT_SWEEP_S = 200, 210\n";
        let spec = parse_config_str(text).unwrap();
        assert_eq!(spec.mode, ExperimentMode::RateVsTime);
        assert_eq!(spec.time_sweep, vec![200.0, 210.0]);
        assert_eq!(spec.schemes.len(), 3);
    }

    #[test]
    fn mode_switch_redefaults_schemes() {
        let mut spec = parse_config_str("").unwrap();
        spec.set_mode(ExperimentMode::RateVsTime);
        assert_eq!(spec.schemes.len(), 3);
        let mut pinned = parse_config_str("schemes = line-w-PC\n").unwrap();
        pinned.set_mode(ExperimentMode::RateVsTime);
        assert_eq!(pinned.schemes, vec![Scheme::LineWithPower]);
    }

    #[test]
    fn grid_covers_the_sweep() {
        let spec = parse_config_str("mode = rate-vs-T\n").unwrap();
        let grid = spec.grid().unwrap();
        assert_eq!(grid.len(), 18);
        assert!((grid[0].1.flight_time - 200.0).abs() < 1e-12);
    }

    #[test]
    fn snr_consistency_enforced() {
        // beta0/sigma2 must reproduce gamma0 when both are given.
        let ok = parse_config_str("beta0_db = -50\nsigma2_dbm = -100\n");
        assert!(ok.is_ok(), "{ok:?}");
        let err = parse_config_str("beta0_db = -50\nsigma2_dbm = -90\n");
        assert!(err.is_err());
    }
}
