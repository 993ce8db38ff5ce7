//! Result serialization: `results.csv`, per-run traces, `summary.json`.
//!
//! Every floating value is printed with 9 significant digits in `d.dddddddde±x`
//! form, files are UTF-8 with LF line endings, and identical outcomes write
//! byte-identical files.

use super::config::{ExperimentMode, ExperimentSpec};
use super::run::{ExperimentOutcome, ResultRow, RunArtifact, RunRowStatus};
use crate::units;
use std::fmt::Write as _;
use std::path::PathBuf;

/// 9 significant digits, scientific notation.
pub fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Short float form for file names: `230`, `230.5`, `-5`.
fn short(x: f64) -> String {
    format!("{x}")
}

fn json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out
}

fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(
        "scheme,T_s,Pavg_dBm,rate_clipped_bpshz,rate_raw_bpshz,iterations,seconds\n",
    );
    for row in rows.iter().filter(|r| r.succeeded()) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.scheme.tag(),
            sig9(row.flight_time),
            sig9(row.avg_power_dbm),
            sig9(row.rate_clipped),
            sig9(row.rate_raw),
            row.iterations,
            sig9(row.seconds),
        );
    }
    out
}

fn trace_csv(artifact: &RunArtifact) -> String {
    let mut out = String::from("n,t_s,x_m,y_m,P_w,R_AB_bpshz,R_AE_bpshz,R_sec_bpshz\n");
    for r in &artifact.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.slot,
            sig9(r.time_s),
            sig9(r.x_m),
            sig9(r.y_m),
            sig9(r.power_w),
            sig9(r.rate_bob),
            sig9(r.rate_eve),
            sig9(r.secrecy),
        );
    }
    out
}

fn trace_file_name(artifact: &RunArtifact, mode: ExperimentMode) -> String {
    // Power sweeps share the flight time, so the grid coordinate moves into
    // the name instead.
    if mode == ExperimentMode::RateVsPower {
        format!(
            "trace_{}_{}_{}dBm.csv",
            artifact.scheme.tag(),
            short(artifact.flight_time),
            short(artifact.avg_power_dbm)
        )
    } else {
        format!("trace_{}_{}.csv", artifact.scheme.tag(), short(artifact.flight_time))
    }
}

fn summary_json(outcome: &ExperimentOutcome, spec: &ExperimentSpec) -> String {
    let cfg = &spec.base;
    let mut out = String::from("{\n  \"config\": {\n");
    let fields: Vec<(&str, String)> = vec![
        ("L_m", sig9(cfg.bob_eve_distance)),
        ("H_m", sig9(cfg.altitude)),
        ("x0_m", sig9(cfg.start.x)),
        ("y0_m", sig9(cfg.start.y)),
        ("xF_m", sig9(cfg.finish.x)),
        ("yF_m", sig9(cfg.finish.y)),
        ("T_s", sig9(cfg.flight_time)),
        ("dt_s", sig9(cfg.slot_duration)),
        ("N", cfg.num_slots.to_string()),
        ("v_max_mps", sig9(cfg.max_speed)),
        ("V_m", sig9(cfg.max_step)),
        ("P_avg_dbm", sig9(units::watts_to_dbm(cfg.avg_power))),
        ("P_avg_w", sig9(cfg.avg_power)),
        ("P_peak_dbm", sig9(units::watts_to_dbm(cfg.peak_power))),
        ("P_peak_w", sig9(cfg.peak_power)),
        ("gamma0_db", sig9(units::linear_to_db(cfg.reference_snr))),
        ("gamma0_linear", sig9(cfg.reference_snr)),
        ("beta0_linear", cfg.reference_gain.map(sig9).unwrap_or_else(|| "null".into())),
        ("sigma2_w", cfg.noise_power.map(sig9).unwrap_or_else(|| "null".into())),
        ("epsilon", sig9(cfg.epsilon)),
        ("mode", format!("\"{}\"", spec.mode.tag())),
        (
            "schemes",
            format!(
                "[{}]",
                spec.schemes
                    .iter()
                    .map(|s| format!("\"{}\"", s.tag()))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        ),
        (
            "T_sweep_s",
            format!(
                "[{}]",
                spec.time_sweep.iter().map(|&t| sig9(t)).collect::<Vec<_>>().join(", ")
            ),
        ),
        (
            "P_avg_sweep_dbm",
            format!(
                "[{}]",
                spec.power_sweep_dbm.iter().map(|&p| sig9(p)).collect::<Vec<_>>().join(", ")
            ),
        ),
        ("out", format!("\"{}\"", json_escape(&spec.out_dir.display().to_string()))),
        ("workers", spec.workers.to_string()),
        ("max_outer_iterations", spec.max_outer_iterations.to_string()),
        ("multistart", spec.multistart.to_string()),
    ];
    for (i, (key, value)) in fields.iter().enumerate() {
        let comma = if i + 1 == fields.len() { "" } else { "," };
        let _ = writeln!(out, "    \"{key}\": {value}{comma}");
    }
    out.push_str("  },\n  \"rows\": [\n");
    for (i, row) in outcome.rows.iter().enumerate() {
        let status = match &row.status {
            RunRowStatus::Ok => "ok".to_string(),
            RunRowStatus::Failed(msg) => format!("failed: {}", json_escape(msg)),
        };
        let comma = if i + 1 == outcome.rows.len() { "" } else { "," };
        let _ = writeln!(
            out,
            "    {{\"scheme\": \"{}\", \"T_s\": {}, \"Pavg_dBm\": {}, \
             \"rate_clipped_bpshz\": {}, \"rate_raw_bpshz\": {}, \"iterations\": {}, \
             \"seconds\": {}, \"status\": \"{}\"}}{comma}",
            row.scheme.tag(),
            sig9(row.flight_time),
            sig9(row.avg_power_dbm),
            sig9(row.rate_clipped),
            sig9(row.rate_raw),
            row.iterations,
            sig9(row.seconds),
            status,
        );
    }
    out.push_str("  ]\n}\n");
    out
}

/// Write `results.csv`, one trace file per successful run, and
/// `summary.json` into the spec's output directory. Returns the paths
/// written.
pub fn write_outputs(
    outcome: &ExperimentOutcome,
    spec: &ExperimentSpec,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&spec.out_dir)?;
    let mut written = Vec::new();

    let results_path = spec.out_dir.join("results.csv");
    std::fs::write(&results_path, results_csv(&outcome.rows))?;
    written.push(results_path);

    for artifact in &outcome.artifacts {
        let path = spec.out_dir.join(trace_file_name(artifact, spec.mode));
        std::fs::write(&path, trace_csv(artifact))?;
        written.push(path);
    }

    let summary_path = spec.out_dir.join("summary.json");
    std::fs::write(&summary_path, summary_json(outcome, spec))?;
    written.push(summary_path);

    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::Scheme;
    use crate::harness::parse_config_str;
    use crate::harness::run::run_experiment;

    #[test]
    fn sig9_is_nine_significant_digits() {
        assert_eq!(sig9(230.0), "2.30000000e2");
        assert_eq!(sig9(-5.0), "-5.00000000e0");
        assert_eq!(sig9(3.1622776601e-4), "3.16227766e-4");
    }

    #[test]
    fn single_run_writes_three_files() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "mode = single\nschemes = line-w-PC\nT_s = 210\nout = {}\n",
            dir.path().display()
        );
        let spec = parse_config_str(&text).unwrap();
        let outcome = run_experiment(&spec).unwrap();
        let written = write_outputs(&outcome, &spec).unwrap();
        assert_eq!(written.len(), 3);
        let names: Vec<String> = written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, vec!["results.csv", "trace_line-w-PC_210.csv", "summary.json"]);

        // Trace row count is slots plus header.
        let trace = std::fs::read_to_string(&written[1]).unwrap();
        assert_eq!(trace.lines().count(), 420 + 1);
        assert!(trace.starts_with("n,t_s,x_m,y_m,P_w,R_AB_bpshz,R_AE_bpshz,R_sec_bpshz\n"));
        assert!(!trace.contains('\r'));

        let results = std::fs::read_to_string(&written[0]).unwrap();
        assert!(results
            .starts_with("scheme,T_s,Pavg_dBm,rate_clipped_bpshz,rate_raw_bpshz,iterations,seconds\n"));

        // The summary is valid enough JSON to round-trip the key facts.
        let summary = std::fs::read_to_string(&written[2]).unwrap();
        assert!(summary.contains("\"mode\": \"single\""));
        assert!(summary.contains("\"status\": \"ok\""));
        assert!(summary.contains("\"N\": 420"));
    }

    #[test]
    fn power_sweep_names_include_the_grid_point() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "mode = rate-vs-power\nschemes = line-w-PC\np_avg_sweep_dbm = -15, -10\nout = {}\n",
            dir.path().display()
        );
        let spec = parse_config_str(&text).unwrap();
        let outcome = run_experiment(&spec).unwrap();
        let written = write_outputs(&outcome, &spec).unwrap();
        let names: Vec<String> = written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert!(names.contains(&"trace_line-w-PC_230_-15dBm.csv".to_string()));
        assert!(names.contains(&"trace_line-w-PC_230_-10dBm.csv".to_string()));
    }

    #[test]
    fn identical_outcomes_serialize_identically() {
        let spec = parse_config_str("mode = single\nschemes = line-w-PC\nT_s = 205\n").unwrap();
        let outcome = run_experiment(&spec).unwrap();
        assert_eq!(results_csv(&outcome.rows), results_csv(&outcome.rows));
        assert_eq!(trace_csv(&outcome.artifacts[0]), trace_csv(&outcome.artifacts[0]));
        let _ = Scheme::ALL; // silence unused import in some cfg combos
    }
}
