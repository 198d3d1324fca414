//! Grid, species fields and the `(rho, a)` change of variables.
//!
//! With `rho = m + n` the activity `a = (m + nu n) / rho` lives in
//! `I = [alpha, beta]`, `alpha = min(1, nu)`, `beta = max(1, nu)`.

use crate::calculus::{integrate, periodic_gradient};
use crate::error::{Error, Result};

pub const DEFAULT_RHO_FLOOR: f64 = 1e-10;

/// Tolerance for activities that leave `I` through round-off.
pub const ACTIVITY_TOL: f64 = 1e-12;

/// Physical parameters: the mobility ratio and the vacuum threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parameters {
    nu: f64,
    alpha: f64,
    beta: f64,
    rho_floor: f64,
}

impl Parameters {
    /// Mobility ratio `nu > 0`, `nu != 1`.
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::domain(format!("nu must be positive and finite, got {nu}")));
        }
        if nu == 1.0 {
            return Err(Error::domain(
                "nu = 1 collapses the activity interval; use Parameters::equal_mobility",
            ));
        }
        Ok(Self::build(nu))
    }

    /// The degenerate case `nu = 1`, where `rho` solves a porous-medium
    /// equation on its own. Only the solver and the `rho` diagnostics accept it;
    /// the entropy family and `from_rho_a` reject it.
    pub fn equal_mobility() -> Self {
        Self::build(1.0)
    }

    fn build(nu: f64) -> Self {
        Self {
            nu,
            alpha: nu.min(1.0),
            beta: nu.max(1.0),
            rho_floor: DEFAULT_RHO_FLOOR,
        }
    }

    pub fn with_rho_floor(mut self, rho_floor: f64) -> Result<Self> {
        if !(rho_floor.is_finite() && rho_floor > 0.0) {
            return Err(Error::domain(format!("rho_floor must be positive, got {rho_floor}")));
        }
        self.rho_floor = rho_floor;
        Ok(self)
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn rho_floor(&self) -> f64 {
        self.rho_floor
    }

    pub fn is_equal_mobility(&self) -> bool {
        self.nu == 1.0
    }

    /// Value of `a` used on vacuum cells. Every `a`-dependent flux carries a
    /// factor `rho`, so the choice is inert.
    pub fn vacuum_activity(&self) -> f64 {
        0.5 * (self.alpha + self.beta)
    }

    /// The nonnegative polynomial `B(a) = (a - 1)(nu - a)`.
    pub fn b_poly(&self, a: f64) -> f64 {
        (a - 1.0) * (self.nu - a)
    }
}

/// Uniform periodic grid on the unit torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid1D {
    n_cells: usize,
}

impl Grid1D {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::domain("grid needs at least one cell"));
        }
        Ok(Self { n_cells })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    /// Cell center `x_i = (i + 1/2) h`.
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }
}

/// Cell averages of the two species at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesState {
    pub t: f64,
    pub m: Vec<f64>,
    pub n: Vec<f64>,
}

impl SpeciesState {
    pub fn new(t: f64, m: Vec<f64>, n: Vec<f64>) -> Result<Self> {
        let s = Self { t, m, n };
        s.validate()?;
        Ok(s)
    }

    pub fn n_cells(&self) -> usize {
        self.m.len()
    }

    pub fn grid(&self) -> Grid1D {
        Grid1D {
            n_cells: self.m.len(),
        }
    }

    /// Checks lengths and nonnegativity. NaN is reported as non-finite.
    pub fn validate(&self) -> Result<()> {
        if self.m.len() != self.n.len() || self.m.is_empty() {
            return Err(Error::domain(format!(
                "species arrays have lengths {} and {}",
                self.m.len(),
                self.n.len()
            )));
        }
        for (name, field) in [("m", &self.m), ("n", &self.n)] {
            if let Some((i, v)) = field.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
                return Err(Error::domain(format!("{name}[{i}] = {v} is not a nonnegative number")));
            }
        }
        Ok(())
    }

    pub fn rho(&self) -> Vec<f64> {
        self.m.iter().zip(&self.n).map(|(m, n)| m + n).collect()
    }

    pub fn mass_m(&self) -> f64 {
        integrate(&self.m, self.grid().h())
    }

    pub fn mass_n(&self) -> f64 {
        integrate(&self.n, self.grid().h())
    }
}

/// `(rho, a, xi)` with the vacuum mask, all cell-centered.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedState {
    pub rho: Vec<f64>,
    pub a: Vec<f64>,
    pub xi: Vec<f64>,
    pub vacuum: Vec<bool>,
    /// Largest amount by which `a` was moved back into `I`.
    pub clamp_magnitude: f64,
}

impl DerivedState {
    pub fn n_vacuum(&self) -> usize {
        self.vacuum.iter().filter(|&&v| v).count()
    }
}

/// Activity of a single cell, clamped into `I`. Returns `(a, clamp)`.
#[inline]
pub(crate) fn cell_activity(m: f64, n: f64, params: &Parameters) -> Option<(f64, f64)> {
    let rho = m + n;
    if rho <= params.rho_floor {
        return None;
    }
    let raw = (m + params.nu * n) / rho;
    let a = raw.clamp(params.alpha, params.beta);
    Some((a, (a - raw).abs()))
}

pub fn to_rho_a(state: &SpeciesState, params: &Parameters) -> Result<DerivedState> {
    state.validate()?;
    let n_cells = state.n_cells();
    let rho = state.rho();
    let mut a = Vec::with_capacity(n_cells);
    let mut vacuum = Vec::with_capacity(n_cells);
    let mut clamp_magnitude: f64 = 0.0;
    for (&m, &n) in state.m.iter().zip(&state.n) {
        match cell_activity(m, n, params) {
            Some((ai, clamp)) => {
                a.push(ai);
                vacuum.push(false);
                clamp_magnitude = clamp_magnitude.max(clamp);
            }
            None => {
                a.push(params.vacuum_activity());
                vacuum.push(true);
            }
        }
    }
    if clamp_magnitude > 0.0 {
        log::debug!("activity clamped into I by at most {clamp_magnitude:e}");
    }
    let xi = periodic_gradient(&rho, state.grid().h());
    Ok(DerivedState {
        rho,
        a,
        xi,
        vacuum,
        clamp_magnitude,
    })
}

/// Inverse change of variables `m = rho (nu - a)/(nu - 1)`, `n = rho (a - 1)/(nu - 1)`.
pub fn from_rho_a(rho: &[f64], a: &[f64], params: &Parameters) -> Result<SpeciesState> {
    if params.is_equal_mobility() {
        return Err(Error::domain("(rho, a) does not determine (m, n) when nu = 1"));
    }
    if rho.len() != a.len() {
        return Err(Error::domain("rho and a have different lengths"));
    }
    let nu = params.nu;
    let mut m = Vec::with_capacity(rho.len());
    let mut n = Vec::with_capacity(rho.len());
    for (i, (&r, &ai)) in rho.iter().zip(a).enumerate() {
        if !(r >= 0.0) {
            return Err(Error::domain(format!("rho[{i}] = {r} is negative")));
        }
        if !(ai >= params.alpha - ACTIVITY_TOL && ai <= params.beta + ACTIVITY_TOL) {
            return Err(Error::domain(format!(
                "a[{i}] = {ai} outside [{}, {}]",
                params.alpha, params.beta
            )));
        }
        let ai = ai.clamp(params.alpha, params.beta);
        m.push((r * (nu - ai) / (nu - 1.0)).max(0.0));
        n.push((r * (ai - 1.0) / (nu - 1.0)).max(0.0));
    }
    Ok(SpeciesState { t: 0.0, m, n })
}

/// `h(z) = z log z - z` with `h(0) = 0`.
#[inline]
pub fn h_entropy(z: f64) -> f64 {
    if z > 0.0 {
        z * z.ln() - z
    } else {
        0.0
    }
}

/// `H(m, n) = int h(m) + h(n)/nu dx` by the midpoint rule.
pub fn entropy_functional(state: &SpeciesState, params: &Parameters) -> f64 {
    let inv_nu = 1.0 / params.nu;
    let h = state.grid().h();
    h * state
        .m
        .iter()
        .zip(&state.n)
        .map(|(&m, &n)| h_entropy(m) + inv_nu * h_entropy(n))
        .sum::<f64>()
}
