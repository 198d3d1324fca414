use std::sync::OnceLock;

use proptest::collection::vec;
use proptest::prelude::*;

use crossdiff_core::diagnostics::measures::{
    covariance_identity_residual, first_hit_residual, two_point_margin, CellMeasure,
};
use crossdiff_core::diagnostics::residuals::HMinusOne;
use crossdiff_core::entropy::{strip, EntropyFunction, EntropyIndex, EntropyTable};
use crossdiff_core::harness::csv::float;
use crossdiff_core::solver::{step, SchemeConfig, Scenario};
use crossdiff_core::state::{entropy_functional, Parameters, SpeciesState};

fn nu_away_from_one() -> impl Strategy<Value = f64> {
    prop_oneof![0.25f64..0.8, 1.25f64..4.0]
}

fn tables() -> &'static [EntropyTable] {
    static T: OnceLock<Vec<EntropyTable>> = OnceLock::new();
    T.get_or_init(|| {
        let p = Parameters::new(2.0).unwrap();
        [1.25, 1.5]
            .iter()
            .map(|&s| EntropyTable::new(EntropyIndex::new(s, &p).unwrap(), &p).unwrap())
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn phi_vanishes_at_alpha_and_increases(nu in nu_away_from_one(), t in 0.01f64..0.99, u in 0.01f64..0.99) {
        let p = Parameters::new(nu).unwrap();
        let (lo, hi) = strip(&p);
        let s = EntropyIndex::new(lo + t * (hi - lo), &p).unwrap();
        let f = EntropyFunction::new(s, &p, 1e-12).unwrap();
        prop_assert_eq!(f.phi(p.alpha()).unwrap(), 0.0);
        let (a1, a2) = {
            let x = p.alpha() + (p.beta() - p.alpha()) * u;
            let y = p.alpha() + (p.beta() - p.alpha()) * (0.5 * u + 0.25);
            if x < y { (x, y) } else { (y, x) }
        };
        prop_assume!(a2 - a1 > 1e-6);
        prop_assert!(f.phi(a2).unwrap() > f.phi(a1).unwrap());
        prop_assert!(f.phi_prime(a1).unwrap().value > 0.0);
    }

    #[test]
    fn m_coefficient_matches_its_definition(nu in nu_away_from_one(), t in 0.05f64..0.95, u in 0.05f64..0.95) {
        let p = Parameters::new(nu).unwrap();
        let (lo, hi) = strip(&p);
        let s = EntropyIndex::new(lo + t * (hi - lo), &p).unwrap();
        let f = EntropyFunction::new(s, &p, 1e-13).unwrap();
        let a = p.alpha() + (p.beta() - p.alpha()) * u;
        let direct = s.value() * a * f.phi(a).unwrap() + p.b_poly(a) * f.phi_prime(a).unwrap().value;
        let m = f.m_coeff(a).unwrap();
        prop_assert!((m - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
    }

    #[test]
    fn two_point_margin_is_positive(t in 0.02f64..0.98, r in 1.001f64..1.999, w in 1e-3f64..0.9) {
        let p = Parameters::new(2.0).unwrap();
        let (_, hi) = strip(&p);
        let q = (r + w).min(1.999);
        prop_assume!(q - r > 1e-3);
        let s = EntropyIndex::new(1.0 + t * (hi - 1.0), &p).unwrap();
        prop_assert!(two_point_margin(r, q, s, &p).unwrap() > 0.0);
    }

    #[test]
    fn one_step_conserves_mass_and_keeps_bounds(
        nu in nu_away_from_one(),
        cells in vec((0.0f64..2.0, 0.0f64..2.0), 16..48),
        eps in 0.0f64..0.01,
    ) {
        let p = Parameters::new(nu).unwrap();
        let (m, n): (Vec<f64>, Vec<f64>) = cells.into_iter().unzip();
        let s = SpeciesState::new(0.0, m, n).unwrap();
        let mut config = SchemeConfig::new(Scenario::mixed_default(), eps, s.n_cells(), 1.0).unwrap();
        config.cfl = 0.4;
        let next = step(&s, &config, &p).unwrap();
        let scale = 1e-13 * (1.0 + s.mass_m() + s.mass_n());
        prop_assert!((next.mass_m() - s.mass_m()).abs() <= scale);
        prop_assert!((next.mass_n() - s.mass_n()).abs() <= scale);
        prop_assert!(next.m.iter().chain(&next.n).all(|&v| v >= 0.0));
        let max0 = s.rho().iter().copied().fold(0.0, f64::max);
        let max1 = next.rho().iter().copied().fold(0.0, f64::max);
        prop_assert!(max1 <= max0 * (1.0 + 1e-12));
        prop_assert!(entropy_functional(&next, &p).is_finite());
    }

    #[test]
    fn hminus1_is_bounded_by_l2(r in vec(-5.0f64..5.0, 8..128)) {
        let n = r.len();
        let l2 = (r.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        let h = HMinusOne::new(n).norm(&r);
        prop_assert!(h <= l2 * (1.0 + 1e-12));
        let mean = r.iter().sum::<f64>() / n as f64;
        prop_assert!(h >= mean.abs() * (1.0 - 1e-12));
    }

    #[test]
    fn cell_moments_are_consistent(samples in vec((1.0f64..2.0, -3.0f64..3.0), 1..80)) {
        let c = CellMeasure::from_samples((0, 0), samples.clone());
        prop_assert!(c.var_a >= 0.0);
        prop_assert_eq!(c.n_samples(), samples.len());
        prop_assert_eq!(c.a_hat.is_some(), samples.len() >= 20);
        prop_assert!(c.mean_abs_xi >= c.mean_xi.abs() - 1e-12);
    }

    #[test]
    fn dirac_cells_have_exactly_zero_residuals(a in 1.0f64..=2.0, xi in vec(0.1f64..3.0, 20..60)) {
        let p = Parameters::new(2.0).unwrap();
        let c = CellMeasure::from_samples((0, 0), xi.iter().map(|&x| (a, x)).collect());
        prop_assert_eq!(c.var_a, 0.0);
        for r in first_hit_residual(&c, tables()).unwrap() {
            prop_assert_eq!(r, 0.0);
        }
        if let Some(cov) = covariance_identity_residual(&c, tables(), &p, 0.0) {
            for r in cov {
                prop_assert_eq!(r, 0.0);
            }
        }
    }

    #[test]
    fn csv_floats_round_trip(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        prop_assert_eq!(float(v).parse::<f64>().unwrap(), v);
    }
}
