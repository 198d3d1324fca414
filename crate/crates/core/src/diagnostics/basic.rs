//! Conservation, maximum principle, entropy decay and rung-to-rung distances.

use crate::error::{Error, Result};
use crate::solver::{restrict, RefinementLadder, Trajectory};
use crate::state::SpeciesState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasicChecks {
    /// Largest relative deviation of either species mass from its initial value.
    pub mass_drift: f64,
    /// `max_t max_x rho / max_x rho_0 - 1`.
    pub max_rho_growth: f64,
    /// Largest single-step increase of the entropy, zero if it never increases.
    pub entropy_increase: f64,
}

fn relative(v: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        (v - reference).abs() / reference
    } else {
        (v - reference).abs()
    }
}

pub fn check_basic(traj: &Trajectory) -> Result<BasicChecks> {
    let log = &traj.step_log;
    if log.len() < 2 {
        return Err(Error::InsufficientData("check_basic needs at least one step".into()));
    }
    let first = log[0];
    let mass_drift = log
        .iter()
        .map(|r| relative(r.mass_m, first.mass_m).max(relative(r.mass_n, first.mass_n)))
        .fold(0.0, f64::max);
    let max_rho = log.iter().map(|r| r.max_rho).fold(0.0, f64::max);
    let max_rho_growth = if first.max_rho > 0.0 { max_rho / first.max_rho - 1.0 } else { 0.0 };
    let entropy_increase = log
        .windows(2)
        .map(|w| (w[1].entropy - w[0].entropy).max(0.0))
        .fold(0.0, f64::max);
    Ok(BasicChecks {
        mass_drift,
        max_rho_growth,
        entropy_increase,
    })
}

/// Defect of the entropy identity over the snapshot intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationDefect {
    /// `max |H(t2) - H(t1) + int int |dx rho|^2|`.
    pub raw: f64,
    /// Same with the viscous entropy production added to the dissipation.
    pub corrected: f64,
}

/// Time integrals of the per-step dissipations by the trapezoidal rule.
pub fn entropy_dissipation_balance(traj: &Trajectory) -> Result<DissipationDefect> {
    let log = &traj.step_log;
    let times = traj.snapshot_times();
    if times.len() < 2 {
        return Err(Error::InsufficientData("entropy balance needs two snapshots".into()));
    }
    let mut out = DissipationDefect {
        raw: 0.0,
        corrected: 0.0,
    };
    let mut k = 0usize;
    for w in times.windows(2) {
        while k < log.len() && log[k].t < w[0] {
            k += 1;
        }
        let start = k;
        let (mut rho_int, mut visc_int) = (0.0, 0.0);
        while k + 1 < log.len() && log[k + 1].t <= w[1] {
            let (a, b) = (&log[k], &log[k + 1]);
            let dt = b.t - a.t;
            rho_int += 0.5 * dt * (a.rho_dissipation + b.rho_dissipation);
            visc_int += 0.5 * dt * (a.viscous_dissipation + b.viscous_dissipation);
            k += 1;
        }
        let dh = log[k].entropy - log[start].entropy;
        out.raw = out.raw.max((dh + rho_int).abs());
        out.corrected = out.corrected.max((dh + rho_int + visc_int).abs());
    }
    Ok(out)
}

/// `(t, int m n dx)` at every snapshot.
pub fn segregation_overlap(traj: &Trajectory) -> Vec<(f64, f64)> {
    traj.snapshots
        .iter()
        .map(|s| {
            let h = 1.0 / s.n_cells() as f64;
            (s.t, h * s.m.iter().zip(&s.n).map(|(m, n)| m * n).sum::<f64>())
        })
        .collect()
}

/// Space-time `L^2` distance between the densities of two runs sharing their
/// snapshot times. The finer run is restricted onto the coarser grid; the
/// time integral uses the trapezoidal rule.
pub fn rho_distance(coarse: &[SpeciesState], fine: &[SpeciesState]) -> Result<f64> {
    if coarse.len() != fine.len() || coarse.len() < 2 {
        return Err(Error::InsufficientData("runs must share at least two snapshot times".into()));
    }
    let (nc, nf) = (coarse[0].n_cells(), fine[0].n_cells());
    if nf % nc != 0 {
        return Err(Error::domain(format!("{nf} cells cannot be restricted onto {nc}")));
    }
    let factor = nf / nc;
    let h = 1.0 / nc as f64;
    let sq: Vec<f64> = coarse
        .iter()
        .zip(fine)
        .map(|(c, f)| {
            let rf = restrict(&f.rho(), factor);
            h * c.rho().iter().zip(&rf).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .collect();
    let mut total = 0.0;
    for j in 0..coarse.len() - 1 {
        if (coarse[j].t - fine[j].t).abs() > 1e-12 * (1.0 + coarse[j].t.abs()) {
            return Err(Error::domain("snapshot times differ between runs"));
        }
        total += 0.5 * (coarse[j + 1].t - coarse[j].t) * (sq[j] + sq[j + 1]);
    }
    Ok(total.sqrt())
}

/// `||rho^k - rho^{k+1}||` for consecutive rungs.
pub fn rho_cauchy_l2(ladder: &RefinementLadder) -> Result<Vec<f64>> {
    ladder
        .rungs
        .windows(2)
        .map(|w| rho_distance(&w[0].trajectory.snapshots, &w[1].trajectory.snapshots))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{run, run_at_times, output_times, SchemeConfig, Scenario};
    use crate::state::Parameters;
    use std::collections::BTreeMap;

    fn nu2() -> Parameters {
        Parameters::new(2.0).unwrap()
    }

    fn cfg(name: &str, eps: f64, n: usize, t: f64) -> SchemeConfig {
        SchemeConfig::new(Scenario::from_params(name, &BTreeMap::new()).unwrap(), eps, n, t).unwrap()
    }

    #[test]
    fn constant_run_is_clean() {
        let t = run(&cfg("constant", 1e-3, 32, 0.01), &nu2()).unwrap();
        let b = check_basic(&t).unwrap();
        assert!(b.mass_drift < 1e-15 && b.max_rho_growth.abs() < 1e-15 && b.entropy_increase < 1e-15);
        let d = entropy_dissipation_balance(&t).unwrap();
        assert!(d.raw < 1e-13 && d.corrected < 1e-13);
        let o = segregation_overlap(&t);
        assert!(o.iter().all(|&(_, v)| (v - 1.0).abs() < 1e-13));
    }

    #[test]
    fn needs_steps() {
        let t = run(&cfg("constant", 1e-3, 32, 0.0), &nu2()).unwrap();
        assert!(check_basic(&t).is_err());
    }

    #[test]
    fn gaussian_bump_obeys_bounds() {
        let t = run(&cfg("gaussian_bump", 1e-3, 128, 0.02), &nu2()).unwrap();
        let b = check_basic(&t).unwrap();
        let h0 = t.step_log[0].entropy;
        assert!(b.mass_drift < 1e-12, "{b:?}");
        assert!(b.max_rho_growth < 1e-3, "{b:?}");
        assert!(b.entropy_increase < 1e-8 * (1.0 + h0.abs()), "{b:?}");
    }

    #[test]
    fn entropy_drops_while_rho_dissipates() {
        let t = run(&cfg("mixed_oscillatory", 2e-3, 64, 0.01), &nu2()).unwrap();
        for w in t.step_log.windows(2) {
            if w[0].rho_dissipation > 0.0 {
                assert!(w[1].entropy <= w[0].entropy);
            }
        }
        let d = entropy_dissipation_balance(&t).unwrap();
        assert!(d.corrected < d.raw);
    }

    #[test]
    fn segregated_overlap_starts_at_zero() {
        let t = run(&cfg("segregated", 1e-3, 128, 0.001), &nu2()).unwrap();
        assert!(segregation_overlap(&t)[0].1 < 1e-8);
    }

    #[test]
    fn segregated_mixing_is_viscosity_limited() {
        let c = cfg("segregated", 1e-3, 128, 0.25);
        let t = run(&c, &nu2()).unwrap();
        let mass = t.initial().mass_m().max(t.initial().mass_n());
        let bound = 10.0 * (c.epsilon + 1.0 / c.n_cells as f64) * mass;
        let worst = segregation_overlap(&t).iter().map(|o| o.1).fold(0.0, f64::max);
        assert!(worst < bound, "{worst} vs {bound}");
    }

    #[test]
    fn distance_to_itself_is_zero() {
        let c = cfg("mixed_oscillatory", 4e-3, 32, 0.01);
        let times = output_times(0.01, 5, 2.0);
        let a = run_at_times(&c, &nu2(), &times).unwrap();
        assert_eq!(rho_distance(&a.snapshots, &a.snapshots).unwrap(), 0.0);
        let c2 = SchemeConfig { n_cells: 64, ..c };
        let b = run_at_times(&c2, &nu2(), &times).unwrap();
        assert!(rho_distance(&a.snapshots, &b.snapshots).unwrap() > 0.0);
        assert!(rho_distance(&b.snapshots, &a.snapshots).is_err());
    }
}
