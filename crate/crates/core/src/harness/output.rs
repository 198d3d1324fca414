//! CSV layouts of the harness. Every writer renders to a string first and
//! writes the file in one call.

use std::path::Path;

use super::csv::{float, row};
use crate::diagnostics::measures::{covariance_identity_residual, first_hit_residual, CellMeasure};
use crate::diagnostics::report::AdmissibilityReport;
use crate::entropy::{EntropyFunction, EntropyIndex, EntropyTable};
use crate::error::{Error, Result};
use crate::solver::StepRecord;
use crate::state::{to_rho_a, Parameters, SpeciesState};

pub fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// Columns `x, m, n, rho, a, xi`.
pub fn snapshot_csv(state: &SpeciesState, params: &Parameters) -> Result<String> {
    let d = to_rho_a(state, params)?;
    let grid = state.grid();
    let mut out = String::from("x,m,n,rho,a,xi\n");
    for i in 0..state.n_cells() {
        out.push_str(&row(&[grid.center(i), state.m[i], state.n[i], d.rho[i], d.a[i], d.xi[i]]));
    }
    Ok(out)
}

/// Columns `t, dt, mass_m, mass_n, entropy, max_rho`.
pub fn step_log_csv(log: &[StepRecord]) -> String {
    let mut out = String::from("t,dt,mass_m,mass_n,entropy,max_rho\n");
    for r in log {
        out.push_str(&row(&[r.t, r.dt, r.mass_m, r.mass_n, r.entropy, r.max_rho]));
    }
    out
}

fn label_row(fields: &[String]) -> String {
    let mut s = fields.join(",");
    s.push('\n');
    s
}

/// Columns `rung, check, value, pass`; cross-rung checks use rung `all`.
pub fn admissibility_csv(report: &AdmissibilityReport) -> String {
    let mut out = String::from("rung,check,value,pass\n");
    for c in &report.checks {
        let rung = c.rung.map_or("all".to_string(), |k| k.to_string());
        out.push_str(&label_row(&[rung, c.name.clone(), float(c.value), c.pass.to_string()]));
    }
    out
}

/// Columns `rung, quantity, s, norm`; `s` is empty where it does not apply and
/// `rho_cauchy_l2` on rung `k` compares rungs `k` and `k + 1`.
pub fn residuals_csv(report: &AdmissibilityReport) -> String {
    let mut out = String::from("rung,quantity,s,norm\n");
    let mut line = |k: usize, q: &str, s: Option<f64>, v: f64| {
        out.push_str(&label_row(&[k.to_string(), q.to_string(), s.map_or(String::new(), |s| s.to_string()), float(v)]));
    };
    for (k, r) in report.rungs.iter().enumerate() {
        line(k, "r0_hminus1", None, r.r0_hminus1);
        line(k, "r1_hminus1", None, r.r1_hminus1);
        for f in &r.r_s_l1 {
            line(k, "r_s_l1", Some(f.s), f.l1);
            line(k, "r_s_minus_source_l1", Some(f.s), f.minus_source_l1);
        }
        line(k, "weak_m", None, r.weak.res_m);
        line(k, "weak_n", None, r.weak.res_n);
        line(k, "weak_const_m", None, r.weak.const_m);
        line(k, "weak_const_n", None, r.weak.const_n);
        line(k, "dissipation_raw", None, r.dissipation.raw);
        line(k, "dissipation_corrected", None, r.dissipation.corrected);
        if let Some(f) = r.flux {
            line(k, "flux_algebraic", None, f.algebraic);
            line(k, "flux_gap_m", None, f.m_flux);
            line(k, "flux_gap_a", None, f.a_flux);
        }
    }
    for (k, v) in report.rho_cauchy_l2.iter().enumerate() {
        line(k, "rho_cauchy_l2", None, *v);
    }
    for (k, c) in report.collapse.iter().enumerate() {
        line(k, "collapse_median_var_a", None, c.median_var_a);
        line(k, "collapse_p90_var_a", None, c.p90_var_a);
    }
    for (k, v) in report.first_hit_median.iter().enumerate() {
        line(k, "first_hit_median", None, *v);
    }
    for (k, v) in report.covariance_median.iter().enumerate() {
        line(k, "covariance_median", None, *v);
    }
    out
}

/// Columns `rung, cell_t, cell_x, n_samples, mean_a, var_a, mean_xi, A_hat,
/// firsthit_s..., cov_s..., band`, with `band = 3/sqrt(n_samples)`.
/// Undefined entries are `nan`.
pub fn measures_csv(
    cells: &[Vec<CellMeasure>],
    tables: &[EntropyTable],
    params: &Parameters,
    xi_threshold: f64,
) -> String {
    let mut header = vec!["rung", "cell_t", "cell_x", "n_samples", "mean_a", "var_a", "mean_xi", "A_hat"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend(tables.iter().map(|t| format!("firsthit_s{}", t.s())));
    header.extend(tables.iter().map(|t| format!("cov_s{}", t.s())));
    header.push("band".into());
    let mut out = label_row(&header);
    let nan = vec![f64::NAN; tables.len()];
    for (k, rung) in cells.iter().enumerate() {
        for c in rung {
            let mut f = vec![
                k.to_string(),
                c.cell_index.0.to_string(),
                c.cell_index.1.to_string(),
                c.n_samples().to_string(),
            ];
            let fh = first_hit_residual(c, tables).unwrap_or_else(|| nan.clone());
            let cov = covariance_identity_residual(c, tables, params, xi_threshold).unwrap_or_else(|| nan.clone());
            let values = [c.mean_a, c.var_a, c.mean_xi, c.a_hat.unwrap_or(f64::NAN)];
            f.extend(values.iter().chain(&fh).chain(&cov).map(|&v| float(v)));
            f.push(float(c.sampling_band()));
            out.push_str(&label_row(&f));
        }
    }
    out
}

/// Columns `a, s, phi` on `n_nodes` equispaced activities in `[alpha, beta]`,
/// one block per index.
pub fn phi_table_csv(params: &Parameters, s_values: &[EntropyIndex], n_nodes: usize) -> Result<String> {
    if n_nodes < 2 {
        return Err(Error::config("phi table needs at least 2 nodes"));
    }
    let (alpha, beta) = (params.alpha(), params.beta());
    let step = (beta - alpha) / (n_nodes - 1) as f64;
    let mut out = String::from("a,s,phi\n");
    for &s in s_values {
        let f = EntropyFunction::new(s, params, 1e-14)?;
        for i in 0..n_nodes {
            let a = if i + 1 == n_nodes { beta } else { alpha + i as f64 * step };
            out.push_str(&row(&[a, s.value(), f.phi(a)?]));
        }
    }
    Ok(out)
}
