//! Experiment execution over the sweep grid.

use super::config::{ConfigError, ExperimentSpec};
use crate::baselines::{self, Scheme};
use crate::bcd::{self, RunOptions};
use crate::model::{self, PowerProfile, ScenarioConfig, Trajectory};
use rayon::prelude::*;
use std::time::Instant;

/// One per-slot line of a run's trace file.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub slot: usize,
    pub time_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub power_w: f64,
    pub rate_bob: f64,
    pub rate_eve: f64,
    /// Clipped per-slot secrecy rate, bps/Hz.
    pub secrecy: f64,
}

/// Final solution of one grid point, ready for serialization.
#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub scheme: Scheme,
    pub flight_time: f64,
    pub avg_power_dbm: f64,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunRowStatus {
    Ok,
    Failed(String),
}

/// One line of `results.csv`.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub flight_time: f64,
    pub avg_power_dbm: f64,
    pub rate_clipped: f64,
    pub rate_raw: f64,
    pub iterations: usize,
    pub seconds: f64,
    pub status: RunRowStatus,
}

impl ResultRow {
    pub fn succeeded(&self) -> bool {
        self.status == RunRowStatus::Ok
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
    pub artifacts: Vec<RunArtifact>,
}

impl ExperimentOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.rows.iter().all(ResultRow::succeeded)
    }
}

fn solve_scheme(
    scheme: Scheme,
    cfg: &ScenarioConfig,
    spec: &ExperimentSpec,
) -> Result<(Trajectory, PowerProfile, usize), String> {
    match scheme {
        Scheme::JointTrajectoryPower => {
            let opts = RunOptions {
                max_outer_iterations: spec.max_outer_iterations,
                multistart: spec.multistart,
            };
            bcd::run(cfg, opts)
                .map(|o| {
                    let iters = o.trace.iterations();
                    (o.trajectory, o.power, iters)
                })
                .map_err(|e| e.to_string())
        }
        Scheme::TrajectoryOnly => baselines::to_without_pc(cfg)
            .map(|b| {
                let iters = b.diagnostics.sca_iterations;
                (b.trajectory, b.power, iters)
            })
            .map_err(|e| e.to_string()),
        Scheme::LineWithPower => baselines::line_with_pc(cfg)
            .map(|b| (b.trajectory, b.power, 0))
            .map_err(|e| e.to_string()),
    }
}

fn execute_one(
    scheme: Scheme,
    cfg: &ScenarioConfig,
    flight_time: f64,
    avg_power_dbm: f64,
    spec: &ExperimentSpec,
) -> (ResultRow, Option<RunArtifact>) {
    let tick = Instant::now();
    let solved = solve_scheme(scheme, cfg, spec).and_then(|(traj, power, iterations)| {
        let rate_clipped =
            model::average_secrecy_rate(&traj, &power, cfg, true).map_err(|e| e.to_string())?;
        let rate_raw =
            model::average_secrecy_rate(&traj, &power, cfg, false).map_err(|e| e.to_string())?;
        let mut rows = Vec::with_capacity(cfg.num_slots);
        for n in 0..cfg.num_slots {
            let rates = model::slot_rates(&traj, &power, n, cfg).map_err(|e| e.to_string())?;
            rows.push(TraceRow {
                slot: n,
                time_s: (n + 1) as f64 * cfg.slot_duration,
                x_m: traj.x[n],
                y_m: traj.y[n],
                power_w: power.watts[n],
                rate_bob: rates.rate_to_bob,
                rate_eve: rates.rate_to_eve,
                secrecy: rates.secrecy_clipped,
            });
        }
        Ok((rate_clipped, rate_raw, iterations, rows))
    });
    let seconds = tick.elapsed().as_secs_f64();

    match solved {
        Ok((rate_clipped, rate_raw, iterations, rows)) => (
            ResultRow {
                scheme,
                flight_time,
                avg_power_dbm,
                rate_clipped,
                rate_raw,
                iterations,
                seconds,
                status: RunRowStatus::Ok,
            },
            Some(RunArtifact { scheme, flight_time, avg_power_dbm, rows }),
        ),
        Err(message) => (
            ResultRow {
                scheme,
                flight_time,
                avg_power_dbm,
                rate_clipped: 0.0,
                rate_raw: 0.0,
                iterations: 0,
                seconds,
                status: RunRowStatus::Failed(message),
            },
            None,
        ),
    }
}

/// Run every (scheme, grid point) pair of the spec.
///
/// Grid points execute concurrently up to the configured worker count, but
/// results keep grid order, so identical specs produce identical outcomes.
/// Per-run failures are recorded in their row and do not stop the sweep.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome, ConfigError> {
    let grid = spec.grid()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| ConfigError::Invalid { field: "workers".into(), message: e.to_string() })?;
    let results: Vec<(ResultRow, Option<RunArtifact>)> = pool.install(|| {
        grid.par_iter()
            .map(|(scheme, cfg, t, p)| execute_one(*scheme, cfg, *t, *p, spec))
            .collect()
    });

    let mut rows = Vec::with_capacity(results.len());
    let mut artifacts = Vec::new();
    for (row, artifact) in results {
        rows.push(row);
        if let Some(a) = artifact {
            artifacts.push(a);
        }
    }
    Ok(ExperimentOutcome { rows, artifacts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::parse_config_str;

    #[test]
    fn single_mode_line_scheme_runs() {
        let spec =
            parse_config_str("mode = single\nschemes = line-w-PC\nT_s = 230\n").unwrap();
        let outcome = run_experiment(&spec).unwrap();
        assert_eq!(outcome.rows.len(), 1);
        assert!(outcome.all_succeeded());
        let row = &outcome.rows[0];
        assert!(row.rate_clipped > 0.0);
        assert!(row.rate_clipped >= row.rate_raw - 1e-12);
        assert_eq!(outcome.artifacts.len(), 1);
        assert_eq!(outcome.artifacts[0].rows.len(), 460);
    }

    #[test]
    fn reported_rate_matches_trace_recomputation() {
        let spec =
            parse_config_str("mode = single\nschemes = line-w-PC\nT_s = 240\n").unwrap();
        let outcome = run_experiment(&spec).unwrap();
        let row = &outcome.rows[0];
        let artifact = &outcome.artifacts[0];
        let recomputed: f64 =
            artifact.rows.iter().map(|r| r.secrecy).sum::<f64>() / artifact.rows.len() as f64;
        assert!((recomputed - row.rate_clipped).abs() <= 1e-9);
    }

    #[test]
    fn grid_order_is_deterministic() {
        let text = "mode = rate-vs-T\nt_sweep_s = 210, 205\nschemes = line-w-PC,TO-wo-PC\n";
        let spec = parse_config_str(text).unwrap();
        let outcome = run_experiment(&spec).unwrap();
        let labels: Vec<(f64, Scheme)> =
            outcome.rows.iter().map(|r| (r.flight_time, r.scheme)).collect();
        assert_eq!(
            labels,
            vec![
                (210.0, Scheme::LineWithPower),
                (210.0, Scheme::TrajectoryOnly),
                (205.0, Scheme::LineWithPower),
                (205.0, Scheme::TrajectoryOnly),
            ]
        );
    }
}
