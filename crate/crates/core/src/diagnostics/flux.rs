//! Identification of the nonlinear fluxes `m rho_x` and `a rho rho_x` in the limit.

use crate::error::{Error, Result};
use crate::solver::RefinementLadder;
use crate::state::{to_rho_a, DerivedState, SpeciesState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxGap {
    /// `max |m xi - (nu/(nu-1)) rho xi + (1/(nu-1)) a rho xi|` over non-vacuum cells.
    pub algebraic: f64,
    /// Mean over windows of `|<m xi>_k - <m>_f <xi>_f|`.
    pub m_flux: f64,
    /// Mean over windows of `|<a rho xi>_k - <a>_f <rho>_f <xi>_f|`.
    pub a_flux: f64,
}

struct WindowMeans {
    m_xi: Vec<f64>,
    a_rho_xi: Vec<f64>,
    m: Vec<f64>,
    a: Vec<f64>,
    rho: Vec<f64>,
    xi: Vec<f64>,
}

fn window_means(snaps: &[SpeciesState], derived: &[DerivedState], window_t: usize, window_x: usize) -> WindowMeans {
    let len = snaps[0].n_cells();
    let (n_t, n_x) = (snaps.len() / window_t, len / window_x);
    let mut w = WindowMeans {
        m_xi: vec![],
        a_rho_xi: vec![],
        m: vec![],
        a: vec![],
        rho: vec![],
        xi: vec![],
    };
    let count = (window_t * window_x) as f64;
    for ct in 0..n_t {
        for cx in 0..n_x {
            let mut acc = [0.0f64; 6];
            for j in ct * window_t..(ct + 1) * window_t {
                let (s, d) = (&snaps[j], &derived[j]);
                for i in cx * window_x..(cx + 1) * window_x {
                    acc[0] += s.m[i] * d.xi[i];
                    acc[1] += d.a[i] * d.rho[i] * d.xi[i];
                    acc[2] += s.m[i];
                    acc[3] += d.a[i];
                    acc[4] += d.rho[i];
                    acc[5] += d.xi[i];
                }
            }
            w.m_xi.push(acc[0] / count);
            w.a_rho_xi.push(acc[1] / count);
            w.m.push(acc[2] / count);
            w.a.push(acc[3] / count);
            w.rho.push(acc[4] / count);
            w.xi.push(acc[5] / count);
        }
    }
    w
}

/// Per rung: the exact flux decomposition and the gap between window-averaged
/// fluxes and the products of the finest rung's window averages.
/// `window_x` counts cells of the coarsest rung.
pub fn flux_identification_gap(ladder: &RefinementLadder, window_t: usize, window_x: usize) -> Result<Vec<FluxGap>> {
    let finest = &ladder.finest().trajectory;
    let params = finest.params;
    if params.is_equal_mobility() {
        return Err(Error::domain("flux decomposition needs nu != 1"));
    }
    let nu = params.nu();
    let base = ladder.rungs[0].n_cells;
    let derive = |snaps: &[SpeciesState]| snaps.iter().map(|s| to_rho_a(s, &params)).collect::<Result<Vec<_>>>();
    let fd = derive(&finest.snapshots)?;
    let fw = window_means(&finest.snapshots, &fd, window_t, window_x * (finest.config.n_cells / base));
    let mut out = Vec::with_capacity(ladder.rungs.len());
    for rung in &ladder.rungs {
        let snaps = &rung.trajectory.snapshots;
        let d = derive(snaps)?;
        let mut algebraic: f64 = 0.0;
        for (s, d) in snaps.iter().zip(&d) {
            for i in 0..s.n_cells() {
                if d.vacuum[i] {
                    continue;
                }
                let (rho, xi) = (d.rho[i], d.xi[i]);
                let split = nu / (nu - 1.0) * rho * xi - d.a[i] * rho * xi / (nu - 1.0);
                algebraic = algebraic.max((s.m[i] * xi - split).abs());
            }
        }
        let w = window_means(snaps, &d, window_t, window_x * (rung.n_cells / base));
        let k = w.m.len().min(fw.m.len()).max(1) as f64;
        let m_flux = w.m_xi.iter().zip(fw.m.iter().zip(&fw.xi)).map(|(j, (m, x))| (j - m * x).abs()).sum::<f64>() / k;
        let a_flux = w
            .a_rho_xi
            .iter()
            .enumerate()
            .map(|(i, j)| (j - fw.a[i] * fw.rho[i] * fw.xi[i]).abs())
            .sum::<f64>()
            / k;
        out.push(FluxGap {
            algebraic,
            m_flux,
            a_flux,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{refine_sequence, SchemeConfig, Scenario};
    use crate::state::Parameters;

    fn small_ladder(scenario: Scenario, params: &Parameters) -> RefinementLadder {
        let mut base = SchemeConfig::new(scenario, 4e-3, 32, 0.01).unwrap();
        base.n_outputs = 16;
        refine_sequence(&base, params, 3).unwrap()
    }

    #[test]
    fn decomposition_is_exact() {
        let p = Parameters::new(2.0).unwrap();
        let gaps = flux_identification_gap(&small_ladder(Scenario::mixed_default(), &p), 4, 4).unwrap();
        assert_eq!(gaps.len(), 3);
        assert!(gaps.iter().all(|g| g.algebraic < 1e-13));
        assert!(gaps[0].a_flux > 0.0);
    }

    #[test]
    fn equal_mobility_is_rejected() {
        let p = Parameters::equal_mobility();
        assert!(flux_identification_gap(&small_ladder(Scenario::mixed_default(), &p), 4, 4).is_err());
    }
}
