//! Windowed empirical measures of `(a, xi)` and the moment identities they
//! should satisfy in the limit.

use crate::entropy::{EntropyFunction, EntropyIndex, EntropyTable};
use crate::error::{Error, Result};
use crate::solver::{RefinementLadder, Trajectory};
use crate::state::{to_rho_a, Parameters};

/// Samples required before `A_hat` is defined.
pub const MIN_SAMPLES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct CellMeasure {
    /// `(time window, space window)`.
    pub cell_index: (usize, usize),
    pub samples: Vec<(f64, f64)>,
    pub mean_a: f64,
    /// Population variance of `a`.
    pub var_a: f64,
    pub mean_xi: f64,
    pub mean_abs_xi: f64,
    /// Sample mean of `a xi`, present with at least [`MIN_SAMPLES`] samples.
    pub a_hat: Option<f64>,
    /// Standard deviation of `a xi` over the samples.
    pub std_a_xi: f64,
}

impl CellMeasure {
    pub fn from_samples(cell_index: (usize, usize), samples: Vec<(f64, f64)>) -> Self {
        let n = samples.len() as f64;
        if samples.is_empty() {
            return Self {
                cell_index,
                samples,
                mean_a: f64::NAN,
                var_a: f64::NAN,
                mean_xi: f64::NAN,
                mean_abs_xi: f64::NAN,
                a_hat: None,
                std_a_xi: f64::NAN,
            };
        }
        let mean_a = samples.iter().map(|s| s.0).sum::<f64>() / n;
        let var_a = if is_dirac(&samples) {
            0.0
        } else {
            samples.iter().map(|s| (s.0 - mean_a).powi(2)).sum::<f64>() / n
        };
        let mean_xi = samples.iter().map(|s| s.1).sum::<f64>() / n;
        let mean_abs_xi = samples.iter().map(|s| s.1.abs()).sum::<f64>() / n;
        let a_xi_mean = samples.iter().map(|s| s.0 * s.1).sum::<f64>() / n;
        let std_a_xi = (samples.iter().map(|s| (s.0 * s.1 - a_xi_mean).powi(2)).sum::<f64>() / n).sqrt();
        Self {
            cell_index,
            a_hat: (samples.len() >= MIN_SAMPLES).then_some(a_xi_mean),
            samples,
            mean_a,
            var_a,
            mean_xi,
            mean_abs_xi,
            std_a_xi,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// All cells were vacuum.
    pub fn is_absent(&self) -> bool {
        self.samples.is_empty()
    }

    /// The `3/sqrt(N)` sampling band.
    pub fn sampling_band(&self) -> f64 {
        3.0 / (self.samples.len().max(1) as f64).sqrt()
    }
}

fn is_dirac(samples: &[(f64, f64)]) -> bool {
    samples.iter().all(|s| s.0 == samples[0].0)
}

/// Partitions the snapshot grid into `window_t x window_x` macro-cells
/// (partial windows at the end are dropped) and collects `(a, xi)` from the
/// non-vacuum cells of each.
pub fn estimate_cell_measures(traj: &Trajectory, window_t: usize, window_x: usize) -> Result<Vec<CellMeasure>> {
    if window_t < 4 || window_x < 4 {
        return Err(Error::domain(format!(
            "macro-cells need at least 4 x 4 samples, got {window_t} x {window_x}"
        )));
    }
    let derived = traj
        .snapshots
        .iter()
        .map(|s| to_rho_a(s, &traj.params))
        .collect::<Result<Vec<_>>>()?;
    let len = traj.snapshots[0].n_cells();
    let (n_t, n_x) = (derived.len() / window_t, len / window_x);
    if n_t == 0 || n_x == 0 {
        return Err(Error::InsufficientData(format!(
            "{} snapshots x {len} cells hold no complete {window_t} x {window_x} window",
            derived.len()
        )));
    }
    let mut out = Vec::with_capacity(n_t * n_x);
    for ct in 0..n_t {
        for cx in 0..n_x {
            let mut samples = Vec::with_capacity(window_t * window_x);
            for d in &derived[ct * window_t..(ct + 1) * window_t] {
                for i in cx * window_x..(cx + 1) * window_x {
                    if !d.vacuum[i] {
                        samples.push((d.a[i], d.xi[i]));
                    }
                }
            }
            out.push(CellMeasure::from_samples((ct, cx), samples));
        }
    }
    Ok(out)
}

/// Measures on every rung with a shared physical layout: `window_x` counts
/// cells of the coarsest rung and is doubled on each finer one.
pub fn ladder_cell_measures(ladder: &RefinementLadder, window_t: usize, window_x: usize) -> Result<Vec<Vec<CellMeasure>>> {
    let base = ladder.rungs[0].n_cells;
    ladder
        .rungs
        .iter()
        .map(|r| estimate_cell_measures(&r.trajectory, window_t, window_x * (r.n_cells / base)))
        .collect()
}

fn mean(v: impl Iterator<Item = f64>) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    for x in v {
        sum += x;
        n += 1;
    }
    (sum / n.max(1) as f64, n)
}

fn covariance(x: &[f64], y: &[f64]) -> f64 {
    let (mx, _) = mean(x.iter().copied());
    let (my, _) = mean(y.iter().copied());
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64
}

/// Per `s`: `|mean(a xi phi_s) - A_hat mean(phi_s)|` divided by the standard
/// deviations of `a xi` and `phi_s`, i.e. the magnitude of their correlation.
/// `None` when `A_hat` is undefined.
pub fn first_hit_residual(cell: &CellMeasure, tables: &[EntropyTable]) -> Option<Vec<f64>> {
    let a_hat = cell.a_hat?;
    if is_dirac(&cell.samples) {
        return Some(vec![0.0; tables.len()]);
    }
    let n = cell.samples.len() as f64;
    Some(
        tables
            .iter()
            .map(|t| {
                let phi: Vec<f64> = cell.samples.iter().map(|s| t.phi_at(s.0)).collect();
                let (mphi, _) = mean(phi.iter().copied());
                let sphi = (phi.iter().map(|p| (p - mphi).powi(2)).sum::<f64>() / n).sqrt();
                if sphi == 0.0 || cell.std_a_xi == 0.0 {
                    return 0.0;
                }
                let lhs = cell.samples.iter().zip(&phi).map(|(s, p)| s.0 * s.1 * p).sum::<f64>() / n;
                (lhs - a_hat * mphi).abs() / (cell.std_a_xi * sphi)
            })
            .collect(),
    )
}

/// `|Cov(a, M_s/a) + nu Cov(phi_s, 1/a)|` over the given activities.
pub fn covariance_residual_of_samples(a: &[f64], table: &EntropyTable, params: &Parameters) -> f64 {
    if a.is_empty() || a.iter().all(|&v| v == a[0]) {
        return 0.0;
    }
    let m_over_a: Vec<f64> = a.iter().map(|&v| table.m_at(v) / v).collect();
    let phi: Vec<f64> = a.iter().map(|&v| table.phi_at(v)).collect();
    let inv: Vec<f64> = a.iter().map(|&v| 1.0 / v).collect();
    (covariance(a, &m_over_a) + params.nu() * covariance(&phi, &inv)).abs()
}

/// The covariance identity on unmasked cells: `A_hat` must exist, exceed
/// `xi_threshold` in size, and stand out of its `3/sqrt(N)` sampling noise.
pub fn covariance_identity_residual(
    cell: &CellMeasure,
    tables: &[EntropyTable],
    params: &Parameters,
    xi_threshold: f64,
) -> Option<Vec<f64>> {
    let a_hat = cell.a_hat?;
    let noise = 3.0 * cell.std_a_xi / (cell.samples.len() as f64).sqrt();
    if !(a_hat.abs() > xi_threshold && a_hat.abs() > noise) {
        return None;
    }
    let a: Vec<f64> = cell.samples.iter().map(|s| s.0).collect();
    Some(tables.iter().map(|t| covariance_residual_of_samples(&a, t, params)).collect())
}

/// `|mean(xi) - A_hat mean(1/a)|`, the finite-sample form of `dx rho = A <1/a>`.
pub fn rhox_identity_residual(cell: &CellMeasure) -> Option<f64> {
    let a_hat = cell.a_hat?;
    let (inv, _) = mean(cell.samples.iter().map(|s| 1.0 / s.0));
    Some((cell.mean_xi - a_hat * inv).abs())
}

/// Collapse statistics of one rung.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapseSummary {
    pub median_var_a: f64,
    pub p90_var_a: f64,
    /// Cells passing the `mean |xi| > xi_threshold` mask.
    pub n_active: usize,
    /// Non-absent cells failing the mask.
    pub n_masked: usize,
    pub n_absent: usize,
}

/// Median of a slice (NaN when empty). Sorts a copy.
pub fn median(v: &[f64]) -> f64 {
    quantile(v, 0.5)
}

/// Linear-interpolation quantile (NaN when empty).
pub fn quantile(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

pub fn collapse_summary(cells: &[CellMeasure], xi_threshold: f64) -> CollapseSummary {
    let mut active = Vec::new();
    let (mut n_masked, mut n_absent) = (0, 0);
    for c in cells {
        if c.is_absent() {
            n_absent += 1;
        } else if c.mean_abs_xi > xi_threshold {
            active.push(c.var_a);
        } else {
            n_masked += 1;
        }
    }
    CollapseSummary {
        median_var_a: median(&active),
        p90_var_a: quantile(&active, 0.9),
        n_active: active.len(),
        n_masked,
        n_absent,
    }
}

/// Space-time RMS of `xi` over a trajectory's snapshots.
pub fn xi_rms(traj: &Trajectory) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in &traj.snapshots {
        let d = to_rho_a(s, &traj.params)?;
        sum += d.xi.iter().map(|x| x * x).sum::<f64>();
        n += d.xi.len();
    }
    Ok((sum / n.max(1) as f64).sqrt())
}

/// `0.1 * RMS(xi)` on the finest rung.
pub fn default_xi_threshold(ladder: &RefinementLadder) -> Result<f64> {
    Ok(0.1 * xi_rms(&ladder.finest().trajectory)?)
}

/// Collapse summaries for every rung of a ladder.
pub fn dirac_collapse_metric(
    ladder: &RefinementLadder,
    window_t: usize,
    window_x: usize,
    xi_threshold: f64,
) -> Result<Vec<CollapseSummary>> {
    if ladder.rungs.len() < 3 {
        return Err(Error::InsufficientData("the collapse metric needs at least three rungs".into()));
    }
    Ok(ladder_cell_measures(ladder, window_t, window_x)?
        .iter()
        .map(|cells| collapse_summary(cells, xi_threshold))
        .collect())
}

/// `(q-r) int_r^q phi_s'/u^2 du - (int_r^q phi_s' du)(int_r^q u^{-2} du)` for
/// `r < q` inside `I`; positive for `s > 1` by Chebyshev's inequality.
pub fn two_point_margin(r: f64, q: f64, s: EntropyIndex, params: &Parameters) -> Result<f64> {
    let (alpha, beta) = (params.alpha(), params.beta());
    if !(alpha < r && r < q && q < beta) {
        return Err(Error::domain(format!("need {alpha} < r < q < {beta}, got r = {r}, q = {q}")));
    }
    let width = q - r;
    let f = EntropyFunction::new(s, params, 1e-16 * width.max(1e-3))?;
    let weighted = f.integrate_weighted(r, q, |u| 1.0 / (u * u))?;
    let plain = f.integrate_weighted(r, q, |_| 1.0)?;
    let inverse = width / (r * q);
    Ok(width * weighted - plain * inverse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::default_s_list;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn nu2() -> Parameters {
        Parameters::new(2.0).unwrap()
    }

    fn tables() -> Vec<EntropyTable> {
        default_s_list(&nu2())
            .unwrap()
            .into_iter()
            .map(|s| EntropyTable::new(s, &nu2()).unwrap())
            .collect()
    }

    #[test]
    fn dirac_cells_have_zero_residuals() {
        let samples: Vec<(f64, f64)> = (0..40).map(|i| (1.3, 0.5 + i as f64 * 0.1)).collect();
        let c = CellMeasure::from_samples((0, 0), samples);
        assert_eq!(c.var_a, 0.0);
        let t = tables();
        assert!(first_hit_residual(&c, &t).unwrap().iter().all(|&r| r == 0.0));
        assert!(covariance_identity_residual(&c, &t, &nu2(), 0.0).unwrap().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn alternating_activity_has_two_point_variance() {
        let samples: Vec<(f64, f64)> = (0..40).map(|i| (if i % 2 == 0 { 1.0 } else { 2.0 }, 1.0)).collect();
        let c = CellMeasure::from_samples((0, 0), samples);
        assert!((c.var_a - 0.25).abs() < 1e-15);
    }

    #[test]
    fn a_hat_needs_twenty_samples() {
        let c = CellMeasure::from_samples((0, 0), vec![(1.5, 1.0); 19]);
        assert!(c.a_hat.is_none() && first_hit_residual(&c, &tables()).is_none());
        assert!(CellMeasure::from_samples((0, 0), vec![]).is_absent());
    }

    #[test]
    fn independent_samples_stay_in_the_sampling_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<(f64, f64)> = (0..4000)
            .map(|_| (rng.random_range(1.0..2.0), rng.random_range(-1.0..1.0)))
            .collect();
        let c = CellMeasure::from_samples((0, 0), samples);
        for r in first_hit_residual(&c, &tables()).unwrap() {
            assert!(r < c.sampling_band(), "{r} vs {}", c.sampling_band());
        }
    }

    #[test]
    fn two_point_covariance_matches_closed_form() {
        let p = nu2();
        let s = EntropyIndex::new(1.5, &p).unwrap();
        let t = EntropyTable::new(s, &p).unwrap();
        let (r, q) = (1.25f64, 1.75f64);
        let phi = |a: f64| 2.0 * (a - 1.0).sqrt() - 2.0 / 3.0 * (a - 1.0).powf(1.5);
        let dphi = |a: f64| (a - 1.0).powf(-0.5) * (2.0 - a);
        let m = |a: f64| 1.5 * a * phi(a) + (a - 1.0) * (2.0 - a) * dphi(a);
        let expected = 0.25 * ((q - r) * (m(q) / q - m(r) / r) - 2.0 * (phi(q) - phi(r)) * (1.0 / r - 1.0 / q)).abs();
        let got = covariance_residual_of_samples(&[r, q, r, q], &t, &p);
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
        assert!(expected > 1e-3);
    }

    #[test]
    fn masks_follow_a_hat() {
        let samples: Vec<(f64, f64)> = (0..40).map(|i| (1.2 + 0.01 * (i % 5) as f64, 0.0)).collect();
        let c = CellMeasure::from_samples((0, 0), samples);
        assert!(covariance_identity_residual(&c, &tables(), &nu2(), 0.1).is_none());
    }

    #[test]
    fn quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(quantile(&[0.0, 10.0], 0.9), 9.0);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn two_point_positivity_on_random_triples() {
        let p = nu2();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let x: f64 = rng.random_range(1.0..2.0);
            let y: f64 = rng.random_range(1.0..2.0);
            let (r, q) = (x.min(y), x.max(y));
            let s = EntropyIndex::new(rng.random_range(1.001..1.999), &p).unwrap();
            assert!(two_point_margin(r, q, s, &p).unwrap() > 0.0);
        }
        let s = EntropyIndex::new(1.5, &p).unwrap();
        assert!(two_point_margin(1.5, 1.2, s, &p).is_err());
    }
}
