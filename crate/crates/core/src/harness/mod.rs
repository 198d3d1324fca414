//! Configuration, orchestration and file output behind the command line.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 violated invariant.

pub mod config;
pub mod csv;
pub mod output;

use std::path::Path;

use crate::diagnostics::measures::ladder_cell_measures;
use crate::diagnostics::report::{admissibility_report, AdmissibilityReport, ReportOptions, CLIPPED_MASS_TOL};
use crate::diagnostics::basic::check_basic;
use crate::entropy::{EntropyIndex, EntropyTable};
use crate::error::{Error, Result};
use crate::solver::{max_activity_clamp, refine_sequence, run};
use crate::state::Parameters;

pub use config::{help_text, parse_config, RunConfig};

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io { .. } => 1,
        _ => 2,
    }
}

/// The one-line reason printed on the error stream.
pub fn error_line(e: &Error) -> String {
    format!("ERROR {}: {}", exit_code(e), e.to_string().replace('\n', " "))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn build_tables(config: &RunConfig) -> Result<Vec<EntropyTable>> {
    config.s_list.iter().map(|&s| EntropyTable::new(s, &config.params)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub n_steps: usize,
    pub n_snapshots: usize,
    /// `(check, value)` as written to `basic_checks.csv`.
    pub checks: Vec<(&'static str, f64)>,
}

/// Runs one trajectory and writes `snapshot_XXXXX.csv`, `snapshot_times.csv`,
/// `steps.csv`, `basic_checks.csv` and optionally `phi_table.csv`.
/// Clipped negative mass above tolerance is an invariant failure.
pub fn simulate(config_path: &Path) -> Result<SimulateSummary> {
    let config = RunConfig::from_file(config_path)?;
    let traj = run(&config.scheme, &config.params)?;
    let mut checks = vec![("clipped_mass", traj.clipped_mass), ("a_range_violation", max_activity_clamp(&traj))];
    if traj.n_steps() > 0 {
        let b = check_basic(&traj)?;
        checks.extend([
            ("mass_drift", b.mass_drift),
            ("max_rho_growth", b.max_rho_growth),
            ("entropy_increase", b.entropy_increase),
        ]);
    }
    let dir = &config.output_dir;
    prepare_dir(dir)?;
    let mut times = String::from("index,t\n");
    for (j, s) in traj.snapshots.iter().enumerate() {
        output::write_file(&dir.join(format!("snapshot_{j:05}.csv")), &output::snapshot_csv(s, &config.params)?)?;
        times.push_str(&format!("{j},{}", csv::row(&[s.t])));
    }
    output::write_file(&dir.join("snapshot_times.csv"), &times)?;
    output::write_file(&dir.join("steps.csv"), &output::step_log_csv(&traj.step_log))?;
    let mut basic = String::from("check,value\n");
    for (name, v) in &checks {
        basic.push_str(&format!("{name},{}", csv::row(&[*v])));
    }
    output::write_file(&dir.join("basic_checks.csv"), &basic)?;
    if config.emit_phi_table {
        output::write_file(
            &dir.join("phi_table.csv"),
            &output::phi_table_csv(&config.params, &config.s_list, 401)?,
        )?;
    }
    if traj.clipped_mass > CLIPPED_MASS_TOL {
        return Err(Error::domain(format!(
            "negative mass {:e} clipped during the run",
            traj.clipped_mass
        )));
    }
    Ok(SimulateSummary {
        n_steps: traj.n_steps(),
        n_snapshots: traj.snapshots.len(),
        checks,
    })
}

/// Runs the ladder and all diagnostics, then writes `admissibility.csv`,
/// `residuals.csv`, `measures.csv` and optionally `phi_table.csv`.
pub fn ladder(config_path: &Path) -> Result<AdmissibilityReport> {
    let config = RunConfig::from_file(config_path)?;
    if config.ladder_rungs < 3 {
        return Err(Error::config(format!("ladder needs ladder_rungs >= 3, got {}", config.ladder_rungs)));
    }
    let ladder = refine_sequence(&config.scheme, &config.params, config.ladder_rungs)?;
    let tables = build_tables(&config)?;
    let options = ReportOptions {
        window_t: config.window_t,
        window_x: config.window_x,
        xi_threshold: config.xi_threshold,
        ..ReportOptions::default()
    };
    let report = admissibility_report(&ladder, &tables, &options)?;
    let cells = ladder_cell_measures(&ladder, config.window_t, config.window_x)?;
    let dir = &config.output_dir;
    prepare_dir(dir)?;
    output::write_file(&dir.join("admissibility.csv"), &output::admissibility_csv(&report))?;
    output::write_file(&dir.join("residuals.csv"), &output::residuals_csv(&report))?;
    output::write_file(
        &dir.join("measures.csv"),
        &output::measures_csv(&cells, &tables, &config.params, report.xi_threshold),
    )?;
    if config.emit_phi_table {
        output::write_file(
            &dir.join("phi_table.csv"),
            &output::phi_table_csv(&config.params, &config.s_list, 401)?,
        )?;
    }
    Ok(report)
}

/// Fixed-width PASS/FAIL table of a report.
pub fn summary_table(report: &AdmissibilityReport) -> String {
    let mut s = format!("{:<6} {:<34} {:>24} {:<5} {}\n", "rung", "check", "value", "kind", "result");
    for c in &report.checks {
        s.push_str(&format!(
            "{:<6} {:<34} {:>24} {:<5} {}\n",
            c.rung.map_or("all".to_string(), |k| k.to_string()),
            c.name,
            csv::float(c.value),
            if c.hard { "hard" } else { "trend" },
            if c.pass { "PASS" } else { "FAIL" }
        ));
    }
    s
}

/// Writes the `(a, s, phi)` table for the given indices.
pub fn phi_table(nu: f64, s_values: &[f64], n_nodes: usize, out: &Path) -> Result<()> {
    let params = Parameters::new(nu).map_err(|e| Error::Config(e.to_string()))?;
    let indices = s_values
        .iter()
        .map(|&s| EntropyIndex::new(s, &params).map_err(|e| Error::Config(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let content = output::phi_table_csv(&params, &indices, n_nodes)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        prepare_dir(dir)?;
    }
    output::write_file(out, &content)
}
