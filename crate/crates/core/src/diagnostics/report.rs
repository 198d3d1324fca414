//! The admissibility report of one refinement ladder.

use crate::entropy::EntropyTable;
use crate::error::{Error, Result};
use crate::solver::{max_activity_clamp, RefinementLadder};

use super::basic::{check_basic, entropy_dissipation_balance, rho_cauchy_l2, DissipationDefect};
use super::flux::{flux_identification_gap, FluxGap};
use super::measures::{
    collapse_summary, covariance_identity_residual, default_xi_threshold, first_hit_residual, ladder_cell_measures, median,
    CollapseSummary,
};
use super::residuals::{affine_residual_norms, family_residual_norms, weak_solution_residual, FamilyResidual, WeakResidual};

pub const MASS_DRIFT_TOL: f64 = 1e-12;
pub const RHO_GROWTH_TOL: f64 = 1e-3;
pub const CLAMP_TOL: f64 = 1e-12;
pub const CLIPPED_MASS_TOL: f64 = 1e-10;
pub const ENTROPY_SLACK: f64 = 1e-8;
pub const CONST_WEAK_TOL: f64 = 1e-12;
pub const FLUX_ALGEBRA_TOL: f64 = 1e-13;
pub const FAMILY_BAND: f64 = 2.0;
pub const DEFAULT_TEST_MODES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct RungReport {
    pub epsilon: f64,
    pub n_cells: usize,
    pub max_rho: f64,
    pub max_rho_growth: f64,
    /// Largest distance by which a raw activity left `I` before clamping.
    pub a_range_violation: f64,
    pub mass_drift: f64,
    pub clipped_mass: f64,
    pub entropy_series_max_increase: f64,
    pub initial_entropy: f64,
    pub dissipation: DissipationDefect,
    pub r0_hminus1: f64,
    pub r1_hminus1: f64,
    /// Empty for `nu = 1`.
    pub r_s_l1: Vec<FamilyResidual>,
    pub weak: WeakResidual,
    /// `None` for `nu = 1`.
    pub flux: Option<FluxGap>,
}

/// One line of the report; `rung` is `None` for cross-rung checks.
/// Hard checks are invariants of every run, soft ones are refinement trends.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub rung: Option<usize>,
    pub name: String,
    pub value: f64,
    pub pass: bool,
    pub hard: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub rungs: Vec<RungReport>,
    pub rho_cauchy_l2: Vec<f64>,
    pub xi_threshold: f64,
    /// Empty for `nu = 1`.
    pub collapse: Vec<CollapseSummary>,
    /// Per rung, median over cells and indices of the first-hit residual.
    pub first_hit_median: Vec<f64>,
    /// Per rung, median over unmasked cells and indices of the covariance residual.
    pub covariance_median: Vec<f64>,
    pub checks: Vec<Check>,
}

impl AdmissibilityReport {
    pub fn hard_failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.hard && !c.pass)
    }

    pub fn all_hard_pass(&self) -> bool {
        self.hard_failures().next().is_none()
    }

    pub fn check(&self, rung: Option<usize>, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.rung == rung && c.name == name)
    }
}

/// `v[k+1] < v[k]` for every `k` (`strict`) or `<=`.
pub fn decreasing(v: &[f64], strict: bool) -> bool {
    v.windows(2).all(|w| if strict { w[1] < w[0] } else { w[1] <= w[0] })
}

/// `max / min` of a positive series (`inf` if some entry is not positive).
pub fn spread_ratio(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Settings of [`admissibility_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub window_t: usize,
    pub window_x: usize,
    /// `None` selects `0.1 * RMS(xi)` on the finest rung.
    pub xi_threshold: Option<f64>,
    pub test_modes: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            window_t: 8,
            window_x: 8,
            xi_threshold: None,
            test_modes: DEFAULT_TEST_MODES,
        }
    }
}

pub fn admissibility_report(
    ladder: &RefinementLadder,
    tables: &[EntropyTable],
    options: &ReportOptions,
) -> Result<AdmissibilityReport> {
    if ladder.rungs.len() < 3 {
        return Err(Error::InsufficientData("the report needs at least three rungs".into()));
    }
    let params = ladder.rungs[0].trajectory.params;
    let family = !params.is_equal_mobility();
    let fluxes = if family {
        Some(flux_identification_gap(ladder, options.window_t, options.window_x)?)
    } else {
        None
    };
    let mut rungs = Vec::with_capacity(ladder.rungs.len());
    for (k, rung) in ladder.rungs.iter().enumerate() {
        let t = &rung.trajectory;
        let basic = check_basic(t)?;
        let (r0, r1) = affine_residual_norms(t)?;
        let r_s = if family { family_residual_norms(t, tables)? } else { vec![] };
        rungs.push(RungReport {
            epsilon: rung.epsilon,
            n_cells: rung.n_cells,
            max_rho: t.step_log.iter().map(|r| r.max_rho).fold(0.0, f64::max),
            max_rho_growth: basic.max_rho_growth,
            a_range_violation: max_activity_clamp(t),
            mass_drift: basic.mass_drift,
            clipped_mass: t.clipped_mass,
            entropy_series_max_increase: basic.entropy_increase,
            initial_entropy: t.step_log[0].entropy,
            dissipation: entropy_dissipation_balance(t)?,
            r0_hminus1: r0,
            r1_hminus1: r1,
            r_s_l1: r_s,
            weak: weak_solution_residual(t, options.test_modes)?,
            flux: fluxes.as_ref().map(|f| f[k]),
        });
    }
    let cauchy = rho_cauchy_l2(ladder)?;
    let xi_threshold = match options.xi_threshold {
        Some(v) => v,
        None => default_xi_threshold(ladder)?,
    };
    let (mut collapse, mut first_hit_median, mut covariance_median) = (vec![], vec![], vec![]);
    if family {
        for cells in ladder_cell_measures(ladder, options.window_t, options.window_x)? {
            collapse.push(collapse_summary(&cells, xi_threshold));
            let fh: Vec<f64> = cells.iter().filter_map(|c| first_hit_residual(c, tables)).flatten().collect();
            let cov: Vec<f64> = cells
                .iter()
                .filter_map(|c| covariance_identity_residual(c, tables, &params, xi_threshold))
                .flatten()
                .collect();
            first_hit_median.push(median(&fh));
            covariance_median.push(median(&cov));
        }
    }
    let mut checks = build_checks(&rungs, &cauchy, &collapse);
    if !first_hit_median.is_empty() && !tables.is_empty() {
        for (name, v) in [("first_hit_median", &first_hit_median), ("covariance_median", &covariance_median)] {
            checks.push(Check {
                rung: None,
                name: name.to_string(),
                value: *v.last().unwrap_or(&f64::NAN),
                pass: decreasing(v, false),
                hard: false,
            });
        }
    }
    let report = AdmissibilityReport {
        rungs,
        rho_cauchy_l2: cauchy,
        xi_threshold,
        collapse,
        first_hit_median,
        covariance_median,
        checks,
    };
    if let Some(c) = report.checks.iter().find(|c| c.value.is_nan()) {
        log::warn!("check {} produced NaN", c.name);
    }
    Ok(report)
}

fn build_checks(rungs: &[RungReport], cauchy: &[f64], collapse: &[CollapseSummary]) -> Vec<Check> {
    let mut out = Vec::new();
    let mut push = |rung: Option<usize>, name: &str, value: f64, pass: bool, hard: bool| {
        out.push(Check {
            rung,
            name: name.to_string(),
            value,
            pass,
            hard,
        })
    };
    for (k, r) in rungs.iter().enumerate() {
        let k = Some(k);
        push(k, "mass_drift", r.mass_drift, r.mass_drift < MASS_DRIFT_TOL, true);
        push(k, "max_rho_growth", r.max_rho_growth, r.max_rho_growth < RHO_GROWTH_TOL, true);
        push(k, "a_range_violation", r.a_range_violation, r.a_range_violation < CLAMP_TOL, true);
        push(k, "clipped_mass", r.clipped_mass, r.clipped_mass < CLIPPED_MASS_TOL, true);
        let slack = ENTROPY_SLACK * (1.0 + r.initial_entropy.abs());
        push(k, "entropy_increase", r.entropy_series_max_increase, r.entropy_series_max_increase <= slack, true);
        let c = r.weak.const_m.max(r.weak.const_n);
        push(k, "weak_residual_constant", c, c < CONST_WEAK_TOL, true);
        if let Some(f) = r.flux {
            push(k, "flux_algebraic", f.algebraic, f.algebraic < FLUX_ALGEBRA_TOL, true);
        }
        let mut norms = vec![r.r0_hminus1, r.r1_hminus1, r.weak.res_m, r.weak.res_n];
        norms.extend(r.r_s_l1.iter().flat_map(|f| [f.l1, f.minus_source_l1]));
        let finite = norms.iter().all(|v| v.is_finite());
        push(k, "norms_finite", if finite { 0.0 } else { 1.0 }, finite, true);
    }
    let series = |f: &dyn Fn(&RungReport) -> f64| -> Vec<f64> { rungs.iter().map(f).collect() };
    let mut trend = |name: &str, v: Vec<f64>, strict: bool| {
        let last = *v.last().unwrap_or(&f64::NAN);
        push(None, name, last, decreasing(&v, strict), false);
    };
    trend("dissipation_defect_corrected", series(&|r| r.dissipation.corrected), true);
    trend("r0_hminus1", series(&|r| r.r0_hminus1), true);
    trend("r1_hminus1", series(&|r| r.r1_hminus1), true);
    trend("rho_cauchy_l2", cauchy.to_vec(), true);
    trend("weak_residual_m", series(&|r| r.weak.res_m), true);
    trend("weak_residual_n", series(&|r| r.weak.res_n), true);
    if !collapse.is_empty() {
        trend("collapse_median_var_a", collapse.iter().map(|c| c.median_var_a).collect(), false);
    }
    if rungs.iter().all(|r| r.flux.is_some()) {
        trend("flux_gap_a", series(&|r| r.flux.map_or(f64::NAN, |f| f.a_flux)), false);
    }
    let n_s = rungs.first().map_or(0, |r| r.r_s_l1.len());
    for j in 0..n_s {
        let s = rungs[0].r_s_l1[j].s;
        let l1: Vec<f64> = rungs.iter().map(|r| r.r_s_l1[j].l1).collect();
        let ratio = spread_ratio(&l1);
        push(None, &format!("r_s_band[{s}]"), ratio, ratio <= FAMILY_BAND, false);
        let gap: Vec<f64> = rungs.iter().map(|r| r.r_s_l1[j].minus_source_l1).collect();
        let last = *gap.last().unwrap_or(&f64::NAN);
        push(None, &format!("r_s_minus_source[{s}]"), last, decreasing(&gap, true), false);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::default_s_list;
    use crate::solver::{refine_sequence, SchemeConfig, Scenario};
    use crate::state::Parameters;

    #[test]
    fn trend_helpers() {
        assert!(decreasing(&[3.0, 2.0, 1.0], true));
        assert!(!decreasing(&[3.0, 3.0, 1.0], true));
        assert!(decreasing(&[3.0, 3.0, 1.0], false));
        assert!(decreasing(&[], true));
        assert_eq!(spread_ratio(&[1.0, 2.0, 1.5]), 2.0);
        assert_eq!(spread_ratio(&[0.0, 1.0]), f64::INFINITY);
    }

    fn small_ladder(params: &Parameters) -> RefinementLadder {
        let mut base = SchemeConfig::new(Scenario::mixed_default(), 8e-3, 32, 0.01).unwrap();
        base.n_outputs = 32;
        refine_sequence(&base, params, 3).unwrap()
    }

    fn options() -> ReportOptions {
        ReportOptions {
            window_t: 4,
            window_x: 4,
            ..ReportOptions::default()
        }
    }

    #[test]
    fn small_ladder_passes_hard_checks() {
        let p = Parameters::new(2.0).unwrap();
        let tables: Vec<EntropyTable> = default_s_list(&p)
            .unwrap()
            .into_iter()
            .map(|s| EntropyTable::new(s, &p).unwrap())
            .collect();
        let ladder = small_ladder(&p);
        let r = admissibility_report(&ladder, &tables, &options()).unwrap();
        assert!(r.all_hard_pass(), "{:?}", r.hard_failures().collect::<Vec<_>>());
        assert_eq!(r.rungs.len(), 3);
        assert_eq!(r.collapse.len(), 3);
        assert_eq!(r.rungs[0].r_s_l1.len(), 4);
        assert!(r.check(Some(2), "mass_drift").is_some());
        assert!(r.check(None, "r0_hminus1").is_some());
        let again = admissibility_report(&ladder, &tables, &options()).unwrap();
        assert_eq!(format!("{r:?}"), format!("{again:?}"));
    }

    #[test]
    fn equal_mobility_skips_the_family() {
        let p = Parameters::equal_mobility();
        let r = admissibility_report(&small_ladder(&p), &[], &options()).unwrap();
        assert!(r.all_hard_pass());
        assert!(r.collapse.is_empty() && r.rungs.iter().all(|k| k.r_s_l1.is_empty() && k.flux.is_none()));
    }
}
