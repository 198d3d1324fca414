//! Pointwise check of the exact entropy balance for arbitrary smooth fields.
//!
//! For any smooth `rho > 0` and interior `a`, with `U = rho^s phi_s(a)` and
//! `F = M_s(a) rho^s rho_x`,
//!
//! ```text
//! U_t - F_x - (1-s) M_s rho^{s-1} rho_x^2 = s rho^{s-1} phi_s r_rho + rho^s phi_s' r_a
//! r_rho = rho_t - (a rho rho_x)_x
//! r_a   = a_t - (nu+1-a) rho_x a_x - B(a) (rho_xx + rho_x^2 / rho)
//! ```
//!
//! The left side is differentiated numerically with centered differences of
//! step `delta`, the right side uses analytic derivatives, so the defect is
//! `O(delta^2)`.

use std::f64::consts::PI;

use crate::entropy::{EntropyFunction, EntropyIndex};
use crate::error::{Error, Result};
use crate::state::Parameters;

/// `amp sin(2 pi k x + omega t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigMode {
    pub amp: f64,
    pub k: f64,
    pub omega: f64,
    pub phase: f64,
}

/// `mean + sum of modes`, with analytic derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigField {
    pub mean: f64,
    pub modes: Vec<TrigMode>,
}

impl TrigField {
    pub fn constant(mean: f64) -> Self {
        Self { mean, modes: vec![] }
    }

    fn arg(m: &TrigMode, t: f64, x: f64) -> f64 {
        2.0 * PI * m.k * x + m.omega * t + m.phase
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.mean + self.modes.iter().map(|m| m.amp * Self::arg(m, t, x).sin()).sum::<f64>()
    }

    pub fn dt(&self, t: f64, x: f64) -> f64 {
        self.modes.iter().map(|m| m.amp * m.omega * Self::arg(m, t, x).cos()).sum()
    }

    pub fn dx(&self, t: f64, x: f64) -> f64 {
        self.modes.iter().map(|m| m.amp * 2.0 * PI * m.k * Self::arg(m, t, x).cos()).sum()
    }

    pub fn dxx(&self, t: f64, x: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| -m.amp * (2.0 * PI * m.k).powi(2) * Self::arg(m, t, x).sin())
            .sum()
    }

    /// Upper bound of `|value - mean|`.
    pub fn spread(&self) -> f64 {
        self.modes.iter().map(|m| m.amp.abs()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manufactured {
    pub rho: TrigField,
    pub a: TrigField,
}

impl Manufactured {
    /// Random fields from `uniform` draws in `[0, 1)`: three modes each,
    /// `rho` within `[0.5, 1.5]`, `a` within the middle 60% of `I`.
    pub fn random(params: &Parameters, mut uniform: impl FnMut() -> f64) -> Self {
        let mut modes = |total: f64| -> Vec<TrigMode> {
            let weights: Vec<f64> = (0..3).map(|_| 0.2 + uniform()).collect();
            let sum: f64 = weights.iter().sum();
            weights
                .iter()
                .enumerate()
                .map(|(j, w)| TrigMode {
                    amp: total * w / sum,
                    k: (j + 1) as f64,
                    omega: 2.0 * PI * (uniform() - 0.5) * 2.0,
                    phase: 2.0 * PI * uniform(),
                })
                .collect()
        };
        let rho = TrigField {
            mean: 1.0,
            modes: modes(0.5),
        };
        let a = TrigField {
            mean: params.vacuum_activity(),
            modes: modes(0.3 * (params.beta() - params.alpha())),
        };
        Self { rho, a }
    }

    fn r_rho(&self, t: f64, x: f64) -> f64 {
        let (rho, a) = (&self.rho, &self.a);
        let (r, rx, rxx) = (rho.value(t, x), rho.dx(t, x), rho.dxx(t, x));
        let (av, ax) = (a.value(t, x), a.dx(t, x));
        rho.dt(t, x) - (ax * r * rx + av * rx * rx + av * r * rxx)
    }

    fn r_a(&self, t: f64, x: f64, params: &Parameters) -> f64 {
        let (rho, a) = (&self.rho, &self.a);
        let (r, rx, rxx) = (rho.value(t, x), rho.dx(t, x), rho.dxx(t, x));
        let av = a.value(t, x);
        a.dt(t, x) - (params.nu() + 1.0 - av) * rx * a.dx(t, x) - params.b_poly(av) * (rxx + rx * rx / r)
    }
}

/// Left and right sides of the balance identity at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceTerms {
    pub lhs: f64,
    pub rhs: f64,
}

pub fn balance_terms(f: &EntropyFunction, fields: &Manufactured, t: f64, x: f64, delta: f64) -> Result<BalanceTerms> {
    let s = f.s();
    let u = |t: f64, x: f64| -> Result<f64> { Ok(fields.rho.value(t, x).powf(s) * f.phi(fields.a.value(t, x))?) };
    let flux = |t: f64, x: f64| -> Result<f64> {
        let r = fields.rho.value(t, x);
        Ok(f.m_coeff(fields.a.value(t, x))? * r.powf(s) * fields.rho.dx(t, x))
    };
    let ut = (u(t + delta, x)? - u(t - delta, x)?) / (2.0 * delta);
    let fx = (flux(t, x + delta)? - flux(t, x - delta)?) / (2.0 * delta);
    let (r, rx) = (fields.rho.value(t, x), fields.rho.dx(t, x));
    let a = fields.a.value(t, x);
    let source = (1.0 - s) * f.m_coeff(a)? * r.powf(s - 1.0) * rx * rx;
    let rhs = s * r.powf(s - 1.0) * f.phi(a)? * fields.r_rho(t, x)
        + r.powf(s) * f.phi_prime(a)?.value * fields.r_a(t, x, f.params());
    Ok(BalanceTerms { lhs: ut - fx - source, rhs })
}

/// Max pointwise defect of the identity over an `8 x 16` probe grid in `(t, x)`.
pub fn balance_identity_oracle(
    s: EntropyIndex,
    params: &Parameters,
    fields: &Manufactured,
    delta: f64,
) -> Result<f64> {
    let f = EntropyFunction::new(s, params, 1e-15)?;
    balance_identity_defect(&f, fields, delta)
}

pub fn balance_identity_defect(f: &EntropyFunction, fields: &Manufactured, delta: f64) -> Result<f64> {
    let params = f.params();
    let margin = fields.a.spread();
    if !(fields.a.mean - margin > params.alpha() && fields.a.mean + margin < params.beta()) {
        return Err(Error::domain("manufactured activity touches the boundary of I"));
    }
    if !(fields.rho.mean - fields.rho.spread() > 0.0) {
        return Err(Error::domain("manufactured density is not bounded away from zero"));
    }
    let mut worst: f64 = 0.0;
    for it in 0..8 {
        for ix in 0..16 {
            let t = 0.1 + 0.1 * it as f64;
            let x = (ix as f64 + 0.37) / 16.0;
            let b = balance_terms(f, fields, t, x, delta)?;
            worst = worst.max((b.lhs - b.rhs).abs());
        }
    }
    Ok(worst)
}
