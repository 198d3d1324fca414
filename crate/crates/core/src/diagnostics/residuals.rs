//! Discrete residuals of the affine and entropy balance laws and of the weak
//! formulation, assembled on the space-time snapshot grid.
//!
//! Time derivatives are forward differences between consecutive snapshots and
//! fluxes are averaged over the interval, so every residual is piecewise
//! constant in time.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::entropy::EntropyTable;
use crate::solver::Trajectory;
use crate::state::{cell_activity, Parameters, SpeciesState};

/// `H^{-1}` norm on the unit torus, `sum |r_k|^2 / (1 + (2 pi k)^2)` with
/// `r_k = h sum_i r_i exp(-2 pi i k x_i)`.
pub struct HMinusOne {
    fft: Arc<dyn Fft<f64>>,
    weights: Vec<f64>,
}

impl HMinusOne {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(n);
        let weights = (0..n)
            .map(|k| {
                let kappa = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
                1.0 / (1.0 + (2.0 * PI * kappa).powi(2))
            })
            .collect();
        Self { fft, weights }
    }

    pub fn norm(&self, r: &[f64]) -> f64 {
        let n = r.len();
        assert_eq!(n, self.weights.len(), "H^-1 plan built for another grid size");
        let h = 1.0 / n as f64;
        let mut buf: Vec<Complex<f64>> = r.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fft.process(&mut buf);
        buf.iter()
            .zip(&self.weights)
            .map(|(c, w)| c.norm_sqr() * h * h * w)
            .sum::<f64>()
            .sqrt()
    }
}

/// `(dt_j, r_j)` for every snapshot interval.
pub type IntervalResiduals = Vec<(f64, Vec<f64>)>;

/// Centered difference of a periodic array.
fn dx_centered(f: &[f64], h: f64) -> Vec<f64> {
    crate::calculus::periodic_gradient(f, h)
}

/// `D_t q - avg(D_x G)` on every snapshot interval, for `q` and `G` computed per snapshot.
fn interval_residuals<Q, G>(snaps: &[SpeciesState], density: Q, flux: G) -> IntervalResiduals
where
    Q: Fn(&SpeciesState) -> Vec<f64>,
    G: Fn(&SpeciesState) -> Vec<f64>,
{
    let h = 1.0 / snaps[0].n_cells() as f64;
    let q: Vec<Vec<f64>> = snaps.iter().map(&density).collect();
    let dg: Vec<Vec<f64>> = snaps.iter().map(|s| dx_centered(&flux(s), h)).collect();
    (0..snaps.len() - 1)
        .map(|j| {
            let dt = snaps[j + 1].t - snaps[j].t;
            let r = (0..q[j].len())
                .map(|i| (q[j + 1][i] - q[j][i]) / dt - 0.5 * (dg[j][i] + dg[j + 1][i]))
                .collect();
            (dt, r)
        })
        .collect()
}

fn require_snapshots(traj: &Trajectory, k: usize) -> Result<()> {
    if traj.snapshots.len() < k {
        return Err(Error::InsufficientData(format!(
            "residuals need at least {k} snapshots, trajectory has {}",
            traj.snapshots.len()
        )));
    }
    Ok(())
}

/// `sqrt(sum_j dt_j ||r_j||^2_{H^-1})`; for a residual that is constant on
/// each interval this is the trapezoidal rule in time.
pub fn l2_hminus1(residuals: &[(f64, Vec<f64>)]) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    let norm = HMinusOne::new(residuals[0].1.len());
    residuals
        .iter()
        .map(|(dt, r)| dt * norm.norm(r).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn l1_space_time(residuals: &[(f64, Vec<f64>)]) -> f64 {
    residuals
        .iter()
        .map(|(dt, r)| dt * r.iter().map(|v| v.abs()).sum::<f64>() / r.len() as f64)
        .sum()
}

/// Residual arrays of the two affine laws,
/// `r_0 = D_t rho - D_x(a rho xi)` and `r_1 = D_t(a rho) - D_x(((nu+1)a - nu) rho xi)`.
/// Uses `a rho = m + nu n` and `((nu+1)a - nu) rho = m + nu^2 n`, which avoids
/// the vacuum convention for `a`.
pub fn affine_residuals(traj: &Trajectory) -> Result<(IntervalResiduals, IntervalResiduals)> {
    require_snapshots(traj, 3)?;
    let nu = traj.params.nu();
    let snaps = &traj.snapshots;
    let h = 1.0 / snaps[0].n_cells() as f64;
    let xi = |s: &SpeciesState| dx_centered(&s.rho(), h);
    let r0 = interval_residuals(snaps, |s| s.rho(), |s| {
        xi(s).iter().zip(s.m.iter().zip(&s.n)).map(|(x, (m, n))| (m + nu * n) * x).collect()
    });
    let r1 = interval_residuals(
        snaps,
        |s| s.m.iter().zip(&s.n).map(|(m, n)| m + nu * n).collect(),
        |s| {
            xi(s)
                .iter()
                .zip(s.m.iter().zip(&s.n))
                .map(|(x, (m, n))| (m + nu * nu * n) * x)
                .collect()
        },
    );
    Ok((r0, r1))
}

/// Discrete `L^2(0,T; H^-1)` norms of the affine residuals.
pub fn affine_residual_norms(traj: &Trajectory) -> Result<(f64, f64)> {
    let (r0, r1) = affine_residuals(traj)?;
    Ok((l2_hminus1(&r0), l2_hminus1(&r1)))
}

/// Space-time `L^1` norms of one entropy residual and of its gap to the source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyResidual {
    pub s: f64,
    /// `|| D_t(rho^s phi_s) - D_x(M_s rho^s xi) ||_{L^1}`.
    pub l1: f64,
    /// `|| r_s - (1-s) M_s rho^{s-1} xi^2 ||_{L^1}` with the source averaged over each interval.
    pub minus_source_l1: f64,
}

struct EntropyFields {
    u: Vec<f64>,
    flux: Vec<f64>,
    source: Vec<f64>,
}

fn entropy_fields(state: &SpeciesState, table: &EntropyTable, params: &Parameters) -> EntropyFields {
    let len = state.n_cells();
    let h = 1.0 / len as f64;
    let rho = state.rho();
    let xi = dx_centered(&rho, h);
    let s = table.s();
    let mut f = EntropyFields {
        u: vec![0.0; len],
        flux: vec![0.0; len],
        source: vec![0.0; len],
    };
    for i in 0..len {
        if let Some((a, _)) = cell_activity(state.m[i], state.n[i], params) {
            let rs = rho[i].powf(s);
            let m = table.m_at(a);
            f.u[i] = rs * table.phi_at(a);
            f.flux[i] = m * rs * xi[i];
            f.source[i] = (1.0 - s) * m * rs / rho[i] * xi[i] * xi[i];
        }
    }
    f
}

pub fn family_residual_norms(traj: &Trajectory, tables: &[EntropyTable]) -> Result<Vec<FamilyResidual>> {
    require_snapshots(traj, 3)?;
    if traj.params.is_equal_mobility() {
        return Err(Error::domain("the entropy family needs nu != 1"));
    }
    let snaps = &traj.snapshots;
    let h = 1.0 / snaps[0].n_cells() as f64;
    tables
        .iter()
        .map(|table| {
            let fields: Vec<EntropyFields> = snaps.iter().map(|s| entropy_fields(s, table, &traj.params)).collect();
            let dflux: Vec<Vec<f64>> = fields.iter().map(|f| dx_centered(&f.flux, h)).collect();
            let mut res = Vec::with_capacity(snaps.len() - 1);
            let mut gap = Vec::with_capacity(snaps.len() - 1);
            for j in 0..snaps.len() - 1 {
                let dt = snaps[j + 1].t - snaps[j].t;
                let r: Vec<f64> = (0..fields[j].u.len())
                    .map(|i| (fields[j + 1].u[i] - fields[j].u[i]) / dt - 0.5 * (dflux[j][i] + dflux[j + 1][i]))
                    .collect();
                let g: Vec<f64> = r
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v - 0.5 * (fields[j].source[i] + fields[j + 1].source[i]))
                    .collect();
                res.push((dt, r));
                gap.push((dt, g));
            }
            Ok(FamilyResidual {
                s: table.s(),
                l1: l1_space_time(&res),
                minus_source_l1: l1_space_time(&gap),
            })
        })
        .collect()
}

/// Convenience map `s -> L^1 norm`.
pub fn family_residual_map(traj: &Trajectory, tables: &[EntropyTable]) -> Result<BTreeMap<String, f64>> {
    Ok(family_residual_norms(traj, tables)?
        .into_iter()
        .map(|r| (format!("{}", r.s), r.l1))
        .collect())
}

/// Largest weak-form residuals over the test family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakResidual {
    pub res_m: f64,
    pub res_n: f64,
    /// Same, restricted to test functions constant in `x`.
    pub const_m: f64,
    pub const_n: f64,
}

/// Time factors `(1 - t/T)^2 (t/T)^p` for `p = 0, 1` and their derivatives.
fn time_factor(p: i32, t: f64, t_final: f64) -> (f64, f64) {
    let tau = t / t_final;
    let one = 1.0 - tau;
    match p {
        0 => (one * one, -2.0 * one / t_final),
        _ => (tau * one * one, (one * one - 2.0 * tau * one) / t_final),
    }
}

/// Weak-form residuals against `psi(t) g(x)` with `g` in
/// `{1, cos 2 pi j x, sin 2 pi j x : j <= test_modes}`. Fields are linear in
/// time between snapshots and integrated with 3-point Gauss–Legendre per
/// interval, which is exact for the interpolant.
pub fn weak_solution_residual(traj: &Trajectory, test_modes: usize) -> Result<WeakResidual> {
    require_snapshots(traj, 2)?;
    let snaps = &traj.snapshots;
    let t_final = snaps.last().map(|s| s.t).unwrap_or(0.0);
    if !(t_final > 0.0) {
        return Err(Error::InsufficientData("weak residual needs t_final > 0".into()));
    }
    let nu = traj.params.nu();
    let len = snaps[0].n_cells();
    let h = 1.0 / len as f64;
    let x: Vec<f64> = (0..len).map(|i| (i as f64 + 0.5) * h).collect();
    // (g, g') per test function in x.
    let mut shapes: Vec<(Vec<f64>, Vec<f64>)> = vec![(vec![1.0; len], vec![0.0; len])];
    for j in 1..=test_modes {
        let w = 2.0 * PI * j as f64;
        shapes.push((x.iter().map(|&x| (w * x).cos()).collect(), x.iter().map(|&x| -w * (w * x).sin()).collect()));
        shapes.push((x.iter().map(|&x| (w * x).sin()).collect(), x.iter().map(|&x| w * (w * x).cos()).collect()));
    }
    let gl_nodes = [-(0.6f64).sqrt(), 0.0, 0.6f64.sqrt()];
    let gl_weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let n_fn = shapes.len();
    // acc[f][p] = (species m, species n)
    let mut acc = vec![[(0.0f64, 0.0f64); 2]; n_fn];
    for j in 0..snaps.len() - 1 {
        let (a, b) = (&snaps[j], &snaps[j + 1]);
        let dt = b.t - a.t;
        for (node, weight) in gl_nodes.iter().zip(&gl_weights) {
            let theta = 0.5 * (1.0 + node);
            let t = a.t + theta * dt;
            let w = 0.5 * dt * weight;
            let m: Vec<f64> = a.m.iter().zip(&b.m).map(|(p, q)| p + theta * (q - p)).collect();
            let n: Vec<f64> = a.n.iter().zip(&b.n).map(|(p, q)| p + theta * (q - p)).collect();
            let rho: Vec<f64> = m.iter().zip(&n).map(|(p, q)| p + q).collect();
            let xi = dx_centered(&rho, h);
            for (f, (g, dg)) in shapes.iter().enumerate() {
                let mut int_m = 0.0;
                let mut int_n = 0.0;
                let mut flux_m = 0.0;
                let mut flux_n = 0.0;
                for i in 0..len {
                    int_m += m[i] * g[i];
                    int_n += n[i] * g[i];
                    flux_m += m[i] * xi[i] * dg[i];
                    flux_n += n[i] * xi[i] * dg[i];
                }
                for (p, slot) in acc[f].iter_mut().enumerate() {
                    let (psi, dpsi) = time_factor(p as i32, t, t_final);
                    slot.0 += w * h * (-int_m * dpsi + flux_m * psi);
                    slot.1 += w * h * (-int_n * dpsi + nu * flux_n * psi);
                }
            }
        }
    }
    let first = &snaps[0];
    let mut out = WeakResidual {
        res_m: 0.0,
        res_n: 0.0,
        const_m: 0.0,
        const_n: 0.0,
    };
    for (f, (g, _)) in shapes.iter().enumerate() {
        let init_m: f64 = h * first.m.iter().zip(g).map(|(v, g)| v * g).sum::<f64>();
        let init_n: f64 = h * first.n.iter().zip(g).map(|(v, g)| v * g).sum::<f64>();
        for (p, slot) in acc[f].iter().enumerate() {
            let (psi0, _) = time_factor(p as i32, 0.0, t_final);
            let rm = (slot.0 - psi0 * init_m).abs();
            let rn = (slot.1 - psi0 * init_n).abs();
            out.res_m = out.res_m.max(rm);
            out.res_n = out.res_n.max(rn);
            if f == 0 {
                out.const_m = out.const_m.max(rm);
                out.const_n = out.const_n.max(rn);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{default_s_list, EntropyTable};
    use crate::solver::{output_times, run, run_at_times, SchemeConfig, Scenario};
    use std::collections::BTreeMap;

    fn nu2() -> Parameters {
        Parameters::new(2.0).unwrap()
    }

    fn cfg(name: &str, eps: f64, n: usize, t: f64) -> SchemeConfig {
        SchemeConfig::new(Scenario::from_params(name, &BTreeMap::new()).unwrap(), eps, n, t).unwrap()
    }

    #[test]
    fn pure_modes_are_calibrated() {
        let n = 64;
        let norm = HMinusOne::new(n);
        for (kappa, amp) in [(0usize, 2.0), (1, 1.0), (3, 0.5), (7, 3.0)] {
            let r: Vec<f64> = (0..n)
                .map(|i| amp * (2.0 * PI * kappa as f64 * (i as f64 + 0.5) / n as f64).cos())
                .collect();
            let l2 = if kappa == 0 { amp } else { amp / 2f64.sqrt() };
            let expected = l2 / (1.0 + (2.0 * PI * kappa as f64).powi(2)).sqrt();
            assert!((norm.norm(&r) - expected).abs() < 1e-13 * expected.max(1.0), "kappa {kappa}");
        }
        // Time factor: a constant-in-time mode over [0, T] carries sqrt(T).
        let r: Vec<f64> = (0..n).map(|i| (2.0 * PI * (i as f64 + 0.5) / n as f64).sin()).collect();
        let one = norm.norm(&r);
        let series = vec![(0.25, r.clone()), (0.5, r.clone()), (0.25, r)];
        assert!((l2_hminus1(&series) - one).abs() < 1e-14);
    }

    #[test]
    fn constant_run_has_zero_residuals() {
        let c = cfg("constant", 1e-3, 32, 0.01);
        let t = run_at_times(&c, &nu2(), &output_times(0.01, 10, 2.0)).unwrap();
        let (r0, r1) = affine_residual_norms(&t).unwrap();
        assert!(r0 < 1e-12 && r1 < 1e-12);
        let tables: Vec<EntropyTable> = default_s_list(&nu2())
            .unwrap()
            .into_iter()
            .map(|s| EntropyTable::new(s, &nu2()).unwrap())
            .collect();
        for r in family_residual_norms(&t, &tables).unwrap() {
            assert!(r.l1 < 1e-12 && r.minus_source_l1 < 1e-12);
        }
        let w = weak_solution_residual(&t, 3).unwrap();
        assert!(w.res_m < 1e-13 && w.res_n < 1e-13);
    }

    #[test]
    fn injected_source_raises_the_norm_as_predicted() {
        let c = cfg("constant", 1e-3, 64, 0.01);
        let t = run_at_times(&c, &nu2(), &output_times(0.01, 4, 1.0)).unwrap();
        let (mut r0, _) = affine_residuals(&t).unwrap();
        for (_, r) in r0.iter_mut() {
            for (i, v) in r.iter_mut().enumerate() {
                *v += (2.0 * PI * 2.0 * (i as f64 + 0.5) / 64.0).cos();
            }
        }
        let expected = 0.01f64.sqrt() / 2f64.sqrt() / (1.0 + (4.0 * PI).powi(2)).sqrt();
        assert!((l2_hminus1(&r0) - expected).abs() < 1e-12);
    }

    #[test]
    fn too_few_snapshots() {
        let t = run(&cfg("constant", 1e-3, 32, 0.0), &nu2()).unwrap();
        assert!(affine_residual_norms(&t).is_err());
    }

    #[test]
    fn constant_test_function_reduces_to_mass_conservation() {
        let c = cfg("mixed_oscillatory", 2e-3, 64, 0.02);
        let t = run_at_times(&c, &nu2(), &output_times(0.02, 20, 2.0)).unwrap();
        let w = weak_solution_residual(&t, 4).unwrap();
        assert!(w.const_m < 1e-12 && w.const_n < 1e-12, "{w:?}");
        assert!(w.res_m > w.const_m);
    }
}
