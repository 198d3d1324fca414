//! The transform `X`, the entropy generators `phi_s` and the flux
//! coefficients `M_s` on the activity interval `I = [alpha, beta]`.
//!
//! With `L = beta - alpha` and the additive constant of `X` written `C`,
//!
//! ```text
//! X(a)     = alpha/L log(a - alpha) - beta/L log(beta - a) + C,   X'(a) = a / B(a)
//! phi_s'(a) = exp(-(s-1) X(a)) = e^{-(s-1)C} (a - alpha)^p (beta - a)^q
//!            p = -(s-1) alpha / L,  q = (s-1) beta / L,  p + q = s - 1
//! phi_s(a)  = int_alpha^a phi_s'(r) dr
//! M_s(a)    = s a phi_s(a) + B(a) phi_s'(a)
//! ```
//!
//! Both exponents exceed `-1` exactly when `s` lies in the strip
//! `S = (alpha/beta, beta/alpha)`, which is what makes `phi_s` continuous on
//! the closed interval. `B phi_s' = e^{-(s-1)C} (a-alpha)^{p+1} (beta-a)^{q+1}`
//! is evaluated in that product form so it has no `0 * inf` at the ends.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quadrature::{GaussLegendre, GradedRule};
use crate::state::{Parameters, ACTIVITY_TOL};

pub const DEFAULT_QUAD_TOL: f64 = 1e-12;
pub const DEFAULT_TABLE_NODES: usize = 4096;

/// Default diagnostic indices; [`default_s_list`] keeps those inside `(1, beta/alpha)`.
pub const DEFAULT_S_CANDIDATES: [f64; 4] = [1.1, 1.25, 1.5, 1.75];

/// An index `s` of the entropy family, validated against the strip `S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyIndex {
    s: f64,
    inside_j: bool,
}

impl EntropyIndex {
    pub fn new(s: f64, params: &Parameters) -> Result<Self> {
        if params.is_equal_mobility() {
            return Err(Error::domain("the entropy family needs nu != 1"));
        }
        let (lo, hi) = strip(params);
        if !(s > lo && s < hi) {
            return Err(Error::domain(format!(
                "s = {s} outside the integrability strip ({lo}, {hi})"
            )));
        }
        Ok(Self {
            s,
            inside_j: s > 1.0,
        })
    }

    pub fn value(&self) -> f64 {
        self.s
    }

    /// True iff `1 < s < beta/alpha`, the range used by the collapse argument.
    pub fn inside_j(&self) -> bool {
        self.inside_j
    }
}

/// The open strip `(alpha/beta, beta/alpha)`.
pub fn strip(params: &Parameters) -> (f64, f64) {
    (params.alpha() / params.beta(), params.beta() / params.alpha())
}

/// `{1.1, 1.25, 1.5, 1.75}` intersected with `(1, beta/alpha)`. Falls back to
/// two interior points of that interval when fewer than two survive.
pub fn default_s_list(params: &Parameters) -> Result<Vec<EntropyIndex>> {
    let (_, hi) = strip(params);
    let mut s: Vec<f64> = DEFAULT_S_CANDIDATES
        .iter()
        .copied()
        .filter(|&s| s < hi)
        .collect();
    if s.len() < 2 {
        s = vec![1.0 + (hi - 1.0) / 3.0, 1.0 + 2.0 * (hi - 1.0) / 3.0];
    }
    s.into_iter().map(|s| EntropyIndex::new(s, params)).collect()
}

/// `X(a)` with the constant fixed to zero. Diverges at both ends of `I`.
pub fn x_transform(a: f64, params: &Parameters) -> Result<f64> {
    let (alpha, beta) = (params.alpha(), params.beta());
    if params.is_equal_mobility() || !(a > alpha && a < beta) {
        return Err(Error::domain(format!("X is defined on the open interval ({alpha}, {beta}), got {a}")));
    }
    let len = beta - alpha;
    Ok(alpha / len * (a - alpha).ln() - beta / len * (beta - a).ln())
}

/// `X'(a) = a / B(a)`.
pub fn x_derivative(a: f64, params: &Parameters) -> f64 {
    a / params.b_poly(a)
}

/// `phi_s'` at a point, with endpoint inputs mapped to their one-sided limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiPrime {
    pub value: f64,
    /// Set when `a` was an endpoint and `value` is a limit (possibly `+inf`).
    pub endpoint_limit: bool,
}

/// One member `phi_s` of the family, evaluated by graded quadrature.
#[derive(Debug, Clone)]
pub struct EntropyFunction {
    params: Parameters,
    index: EntropyIndex,
    offset: f64,
    scale: f64,
    p: f64,
    q: f64,
    tol: f64,
    rule: GradedRule,
    /// `int_alpha^c phi'` and `int_c^beta phi'` with `c` the midpoint of `I`.
    lower_half: f64,
    upper_half: f64,
}

impl EntropyFunction {
    pub fn new(index: EntropyIndex, params: &Parameters, tol: f64) -> Result<Self> {
        Self::with_offset(index, params, tol, 0.0)
    }

    /// Same as [`EntropyFunction::new`] with the additive constant of `X` set to `offset`.
    /// Every quantity of the family picks up the factor `exp(-(s-1) offset)`.
    pub fn with_offset(index: EntropyIndex, params: &Parameters, tol: f64, offset: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::domain(format!("quadrature tolerance must be positive, got {tol}")));
        }
        // Recheck in case the index was built for other parameters.
        let index = EntropyIndex::new(index.value(), params)?;
        let s = index.value();
        let len = params.beta() - params.alpha();
        let mut f = Self {
            params: *params,
            index,
            offset,
            scale: (-(s - 1.0) * offset).exp(),
            p: -(s - 1.0) * params.alpha() / len,
            q: (s - 1.0) * params.beta() / len,
            tol,
            rule: GradedRule::default(),
            lower_half: 0.0,
            upper_half: 0.0,
        };
        let mid = f.midpoint();
        f.lower_half = f.integral_from_alpha(mid);
        f.upper_half = f.integral_to_beta(mid);
        Ok(f)
    }

    pub fn index(&self) -> EntropyIndex {
        self.index
    }

    pub fn s(&self) -> f64 {
        self.index.value()
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Exponents `(p, q)` of `phi_s'` at `alpha` and `beta`.
    pub fn exponents(&self) -> (f64, f64) {
        (self.p, self.q)
    }

    fn len(&self) -> f64 {
        self.params.beta() - self.params.alpha()
    }

    fn midpoint(&self) -> f64 {
        0.5 * (self.params.alpha() + self.params.beta())
    }

    fn is_flat(&self) -> bool {
        self.index.value() == 1.0
    }

    /// Closed form of `phi_s'` on the open interval; no endpoint handling.
    #[inline]
    pub(crate) fn phi_prime_interior(&self, a: f64) -> f64 {
        if self.is_flat() {
            return 1.0;
        }
        self.scale * (a - self.params.alpha()).powf(self.p) * (self.params.beta() - a).powf(self.q)
    }

    pub fn phi_prime(&self, a: f64) -> Result<PhiPrime> {
        let a = self.check_in_interval(a)?;
        let (alpha, beta) = (self.params.alpha(), self.params.beta());
        let at_end = a <= alpha || a >= beta;
        if !at_end || self.is_flat() {
            return Ok(PhiPrime {
                value: self.phi_prime_interior(a),
                endpoint_limit: at_end,
            });
        }
        let (exponent, other) = if a <= alpha {
            (self.p, (beta - alpha).powf(self.q))
        } else {
            (self.q, (beta - alpha).powf(self.p))
        };
        let value = match exponent {
            e if e < 0.0 => f64::INFINITY,
            e if e > 0.0 => 0.0,
            _ => self.scale * other,
        };
        Ok(PhiPrime {
            value,
            endpoint_limit: true,
        })
    }

    /// `phi_s'' = -(s-1) X'(a) phi_s'(a)` on the open interval.
    pub fn phi_second(&self, a: f64) -> f64 {
        -(self.s() - 1.0) * x_derivative(a, &self.params) * self.phi_prime_interior(a)
    }

    /// `B(a) phi_s'(a)`, finite on the closed interval and zero at both ends.
    #[inline]
    pub fn b_phi_prime(&self, a: f64) -> f64 {
        let (alpha, beta) = (self.params.alpha(), self.params.beta());
        let a = a.clamp(alpha, beta);
        self.scale * (a - alpha).powf(self.p + 1.0) * (beta - a).powf(self.q + 1.0)
    }

    /// `phi_s(a) = int_alpha^a phi_s'` to absolute accuracy `tol`.
    pub fn phi(&self, a: f64) -> Result<f64> {
        let a = self.check_in_interval(a)?;
        Ok(self.phi_unchecked(a))
    }

    fn phi_unchecked(&self, a: f64) -> f64 {
        let alpha = self.params.alpha();
        if self.is_flat() {
            return a - alpha;
        }
        let mid = self.midpoint();
        if a <= mid {
            self.integral_from_alpha(a)
        } else {
            self.lower_half + self.upper_half - self.integral_to_beta(a)
        }
    }

    /// `phi_s(beta)`.
    pub fn phi_at_beta(&self) -> f64 {
        if self.is_flat() {
            return self.len();
        }
        self.lower_half + self.upper_half
    }

    /// `M_s(a) = s a phi_s(a) + B(a) phi_s'(a)`.
    pub fn m_coeff(&self, a: f64) -> Result<f64> {
        let a = self.check_in_interval(a)?;
        Ok(self.s() * a * self.phi_unchecked(a) + self.b_phi_prime(a))
    }

    fn check_in_interval(&self, a: f64) -> Result<f64> {
        let (alpha, beta) = (self.params.alpha(), self.params.beta());
        if !(a >= alpha - ACTIVITY_TOL && a <= beta + ACTIVITY_TOL) {
            return Err(Error::domain(format!("a = {a} outside [{alpha}, {beta}]")));
        }
        Ok(a.clamp(alpha, beta))
    }

    /// `phi_s'` from the two distances `a - alpha` and `beta - a`.
    #[inline]
    fn phi_prime_split(&self, dl: f64, dr: f64) -> f64 {
        self.scale * dl.powf(self.p) * dr.powf(self.q)
    }

    fn integral_from_alpha(&self, a: f64) -> f64 {
        let len = self.len();
        let (s, p, q, scale) = (self.s(), self.p, self.q, self.scale);
        self.rule
            .integrate(
                a - self.params.alpha(),
                self.tol / 3.0,
                |d| self.phi_prime_split(d, len - d),
                |w| scale * len.powf(s) * beta_head(w / len, p, q),
            )
            .value
    }

    fn integral_to_beta(&self, a: f64) -> f64 {
        let len = self.len();
        let (s, p, q, scale) = (self.s(), self.p, self.q, self.scale);
        self.rule
            .integrate(
                self.params.beta() - a,
                self.tol / 3.0,
                |d| self.phi_prime_split(len - d, d),
                |w| scale * len.powf(s) * beta_head(w / len, q, p),
            )
            .value
    }

    /// `int_lo^hi phi_s'(u) w(u) du` for `alpha <= lo < hi <= beta`, graded toward both ends.
    pub fn integrate_weighted<W: Fn(f64) -> f64>(&self, lo: f64, hi: f64, weight: W) -> Result<f64> {
        let lo = self.check_in_interval(lo)?;
        let hi = self.check_in_interval(hi)?;
        if hi <= lo {
            return Ok(0.0);
        }
        if self.is_flat() {
            return Ok(GaussLegendre::new(16).integrate(lo, hi, weight));
        }
        let (alpha, beta, len) = (self.params.alpha(), self.params.beta(), self.len());
        let half = 0.5 * (hi - lo);
        let (off_lo, off_hi) = (lo - alpha, beta - hi);
        let lower = |d: f64| {
            let dl = off_lo + d;
            self.phi_prime_split(dl, len - dl) * weight(alpha + dl)
        };
        let upper = |d: f64| {
            let dr = off_hi + d;
            self.phi_prime_split(len - dr, dr) * weight(beta - dr)
        };
        let (s, p, q, scale) = (self.s(), self.p, self.q, self.scale);
        // Slivers at an end of I use the power-series head times the weight
        // there; interior slivers use the integrand value.
        let lower_tail = |w: f64| {
            if off_lo <= 0.0 {
                scale * len.powf(s) * beta_head(w / len, p, q) * weight(alpha)
            } else {
                w * lower(0.0)
            }
        };
        let upper_tail = |w: f64| {
            if off_hi <= 0.0 {
                scale * len.powf(s) * beta_head(w / len, q, p) * weight(beta)
            } else {
                w * upper(0.0)
            }
        };
        let tol = self.tol / 4.0;
        let a = self.rule.integrate(half, tol, lower, lower_tail);
        let b = self.rule.integrate(half, tol, upper, upper_tail);
        Ok(a.value + b.value)
    }
}

/// `int_0^x v^p (1 - v)^q dv` by its power series, for `0 <= x <= 1/2` and `p > -1`.
pub(crate) fn beta_head(x: f64, p: f64, q: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut term = 1.0;
    let mut sum = 1.0 / (p + 1.0);
    for k in 0..400 {
        let k = k as f64;
        term *= (k - q) / (k + 1.0) * x;
        let c = term / (p + 2.0 + k);
        sum += c;
        if c.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    x.powf(p + 1.0) * sum
}

pub fn phi_eval(s: EntropyIndex, a: f64, params: &Parameters, tol: f64) -> Result<f64> {
    EntropyFunction::new(s, params, tol)?.phi(a)
}

pub fn phi_prime_eval(s: EntropyIndex, a: f64, params: &Parameters) -> Result<PhiPrime> {
    EntropyFunction::new(s, params, DEFAULT_QUAD_TOL)?.phi_prime(a)
}

pub fn m_eval(s: EntropyIndex, a: f64, params: &Parameters, tol: f64) -> Result<f64> {
    EntropyFunction::new(s, params, tol)?.m_coeff(a)
}

fn interior_probes(params: &Parameters, n_probe: usize) -> Vec<f64> {
    let (alpha, beta) = (params.alpha(), params.beta());
    let margin = 0.05 * (beta - alpha);
    let (lo, hi) = (alpha + margin, beta - margin);
    let n = n_probe.max(1);
    (0..n)
        .map(|k| {
            if n == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Max of `|B phi'' + (s-1) a phi'|` over interior probes, with `phi''` from its closed form.
pub fn verify_ode_residual(s: EntropyIndex, params: &Parameters, n_probe: usize) -> Result<f64> {
    let f = EntropyFunction::new(s, params, DEFAULT_QUAD_TOL)?;
    Ok(interior_probes(params, n_probe)
        .into_iter()
        .map(|a| {
            let res = params.b_poly(a) * f.phi_second(a) + (f.s() - 1.0) * a * f.phi_prime_interior(a);
            res.abs()
        })
        .fold(0.0, f64::max))
}

/// Residuals of the two derivative identities for `M_s`, with derivatives
/// taken by centered differences of step `delta`:
/// `res1 = max |D M - (s phi + (nu+1-a) phi')|`, `res2 = max |D(M/a) - nu phi'/a^2|`.
pub fn verify_m_identities(
    s: EntropyIndex,
    params: &Parameters,
    n_probe: usize,
    delta: f64,
) -> Result<(f64, f64)> {
    let f = EntropyFunction::new(s, params, 1e-14)?;
    let nu = params.nu();
    let (mut res1, mut res2): (f64, f64) = (0.0, 0.0);
    for a in interior_probes(params, n_probe) {
        let (mp, mm) = (f.m_coeff(a + delta)?, f.m_coeff(a - delta)?);
        let dm = (mp - mm) / (2.0 * delta);
        let dm_over_a = (mp / (a + delta) - mm / (a - delta)) / (2.0 * delta);
        let phi = f.phi(a)?;
        let dphi = f.phi_prime_interior(a);
        res1 = res1.max((dm - (f.s() * phi + (nu + 1.0 - a) * dphi)).abs());
        res2 = res2.max((dm_over_a - nu * dphi / (a * a)).abs());
    }
    Ok((res1, res2))
}

/// Tabulated `phi_s`, `phi_s'` and `M_s` on Chebyshev nodes of `I`.
///
/// Within 10% of either endpoint, where a cubic cannot follow the
/// `(a - alpha)^{p+1}` behavior, both node values and lookups use the local
/// power series. Elsewhere the node values come from graded quadrature at the
/// zone boundary plus 16-point Gauss–Legendre between consecutive nodes, and
/// lookups use cubic Hermite interpolation with the exact `phi_s'`.
#[derive(Debug, Clone)]
pub struct EntropyTable {
    func: EntropyFunction,
    pub nodes: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_prime: Vec<f64>,
    pub m: Vec<f64>,
    pub quad_tol: f64,
}

const SERIES_ZONE: f64 = 0.1;

impl EntropyTable {
    pub fn build(func: EntropyFunction, n_nodes: usize) -> Result<Self> {
        if n_nodes < 8 {
            return Err(Error::domain("an entropy table needs at least 8 nodes"));
        }
        let (alpha, beta) = (func.params.alpha(), func.params.beta());
        let len = beta - alpha;
        let last = n_nodes - 1;
        let nodes: Vec<f64> = (0..n_nodes)
            .map(|k| match k {
                0 => alpha,
                k if k == last => beta,
                k => alpha + 0.5 * len * (1.0 - (PI * k as f64 / last as f64).cos()),
            })
            .collect();
        let gl = GaussLegendre::new(16);
        let mut phi = vec![0.0; n_nodes];
        if func.is_flat() {
            for (v, &a) in phi.iter_mut().zip(&nodes) {
                *v = a - alpha;
            }
        } else {
            let phi_beta = func.phi_at_beta();
            let mut first = None;
            let mut last_inner = 0;
            for (k, &a) in nodes.iter().enumerate() {
                if let Some(v) = series_phi(&func, phi_beta, a) {
                    phi[k] = v;
                } else {
                    first.get_or_insert(k);
                    last_inner = k;
                }
            }
            let first = first.ok_or_else(|| Error::domain("entropy table has no interior nodes"))?;
            let half = (first + last_inner) / 2;
            phi[first] = func.phi_unchecked(nodes[first]);
            for k in first + 1..=half {
                phi[k] = phi[k - 1] + gl.integrate(nodes[k - 1], nodes[k], |r| func.phi_prime_interior(r));
            }
            phi[last_inner] = func.phi_unchecked(nodes[last_inner]);
            for k in (half + 1..last_inner).rev() {
                phi[k] = phi[k + 1] - gl.integrate(nodes[k], nodes[k + 1], |r| func.phi_prime_interior(r));
            }
        }
        let phi_prime: Vec<f64> = nodes
            .iter()
            .map(|&a| func.phi_prime(a).map(|p| p.value))
            .collect::<Result<_>>()?;
        let m: Vec<f64> = nodes
            .iter()
            .zip(&phi)
            .map(|(&a, &ph)| func.s() * a * ph + func.b_phi_prime(a))
            .collect();
        let quad_tol = func.tol;
        Ok(Self {
            func,
            nodes,
            phi,
            phi_prime,
            m,
            quad_tol,
        })
    }

    pub fn new(s: EntropyIndex, params: &Parameters) -> Result<Self> {
        Self::build(EntropyFunction::new(s, params, DEFAULT_QUAD_TOL)?, DEFAULT_TABLE_NODES)
    }

    pub fn function(&self) -> &EntropyFunction {
        &self.func
    }

    pub fn s(&self) -> f64 {
        self.func.s()
    }

    /// Interpolated `phi_s(a)`; `a` is clamped into `I`.
    pub fn phi_at(&self, a: f64) -> f64 {
        let f = &self.func;
        let (alpha, beta) = (f.params.alpha(), f.params.beta());
        let len = beta - alpha;
        let a = a.clamp(alpha, beta);
        if f.is_flat() {
            return a - alpha;
        }
        if let Some(v) = series_phi(f, self.phi[self.nodes.len() - 1], a) {
            return v;
        }
        let t = (a - alpha) / len;
        let last = self.nodes.len() - 1;
        let theta = (1.0 - 2.0 * t).clamp(-1.0, 1.0).acos();
        let mut k = ((theta / PI) * last as f64).floor() as usize;
        k = k.min(last - 1);
        while k > 0 && self.nodes[k] > a {
            k -= 1;
        }
        while k + 1 < last && self.nodes[k + 1] < a {
            k += 1;
        }
        let (x0, x1) = (self.nodes[k], self.nodes[k + 1]);
        let w = x1 - x0;
        let u = (a - x0) / w;
        let (h00, h10, h01, h11) = hermite_basis(u);
        h00 * self.phi[k] + h10 * w * self.phi_prime[k] + h01 * self.phi[k + 1] + h11 * w * self.phi_prime[k + 1]
    }

    /// `phi_s'(a)` in closed form for interior `a`.
    #[inline]
    pub fn phi_prime_at(&self, a: f64) -> f64 {
        self.func.phi_prime_interior(a)
    }

    /// `M_s(a)` from the interpolated `phi_s`.
    pub fn m_at(&self, a: f64) -> f64 {
        self.func.s() * a * self.phi_at(a) + self.func.b_phi_prime(a)
    }

    /// Writes `(a, phi, phi_prime, M)` rows at the table nodes.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("a,phi,phi_prime,M\n");
        for k in 0..self.nodes.len() {
            out.push_str(&crate::harness::csv::row(&[
                self.nodes[k],
                self.phi[k],
                self.phi_prime[k],
                self.m[k],
            ]));
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// `phi_s(a)` from the local power series when `a` lies in an endpoint zone.
fn series_phi(f: &EntropyFunction, phi_beta: f64, a: f64) -> Option<f64> {
    let (alpha, beta) = (f.params.alpha(), f.params.beta());
    let len = beta - alpha;
    let head = f.scale * len.powf(f.s());
    let (tl, tr) = ((a - alpha) / len, (beta - a) / len);
    if tl <= SERIES_ZONE {
        Some(head * beta_head(tl, f.p, f.q))
    } else if tr <= SERIES_ZONE {
        Some(phi_beta - head * beta_head(tr, f.q, f.p))
    } else {
        None
    }
}

fn hermite_basis(u: f64) -> (f64, f64, f64, f64) {
    let u2 = u * u;
    let u3 = u2 * u;
    (
        2.0 * u3 - 3.0 * u2 + 1.0,
        u3 - 2.0 * u2 + u,
        -2.0 * u3 + 3.0 * u2,
        u3 - u2,
    )
}

/// Least-squares fit of `target` by `span{1, phi_{s_1}, ..., phi_{s_k}}`.
#[derive(Debug, Clone)]
pub struct SpanFit {
    /// Constant coefficient first, then one per index.
    pub coefficients: Vec<f64>,
    pub sup_error: f64,
    /// Ratio of extreme singular values of the column-scaled design matrix.
    pub condition: f64,
}

pub fn approximate_in_span(
    target: &[f64],
    a_grid: &[f64],
    s_list: &[EntropyIndex],
    params: &Parameters,
) -> Result<SpanFit> {
    let tables: Vec<EntropyTable> = s_list
        .iter()
        .map(|&s| EntropyTable::new(s, params))
        .collect::<Result<_>>()?;
    approximate_in_span_with(target, a_grid, &tables)
}

pub fn approximate_in_span_with(target: &[f64], a_grid: &[f64], tables: &[EntropyTable]) -> Result<SpanFit> {
    if target.len() != a_grid.len() || target.is_empty() {
        return Err(Error::domain("target samples and a-grid must be non-empty and of equal length"));
    }
    if tables.is_empty() {
        return Err(Error::domain("approximate_in_span needs at least one index"));
    }
    let rows = a_grid.len();
    let cols = tables.len() + 1;
    let mut design = DMatrix::<f64>::zeros(rows, cols);
    for (i, &a) in a_grid.iter().enumerate() {
        design[(i, 0)] = 1.0;
        for (j, t) in tables.iter().enumerate() {
            design[(i, j + 1)] = t.phi_at(a);
        }
    }
    // Column scaling keeps the singular-value cutoff meaningful.
    let norms: Vec<f64> = (0..cols)
        .map(|j| {
            let n = design.column(j).norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    for (j, &n) in norms.iter().enumerate() {
        design.column_mut(j).scale_mut(1.0 / n);
    }
    if design.iter().chain(target).any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite entries in the span design matrix or target"));
    }
    let rhs = DVector::from_column_slice(target);
    let svd = design.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let cutoff = smax * 1e-14;
    if smin <= cutoff {
        log::info!("span design matrix is numerically rank deficient (condition {condition:e}); truncating singular values below {cutoff:e}");
    }
    let scaled = svd
        .solve(&rhs, cutoff)
        .map_err(|e| Error::domain(format!("least-squares solve failed: {e}")))?;
    let fitted = &design * &scaled;
    let sup_error = fitted
        .iter()
        .zip(target)
        .map(|(f, t)| (f - t).abs())
        .fold(0.0, f64::max);
    let coefficients = scaled.iter().zip(&norms).map(|(c, n)| c / n).collect();
    Ok(SpanFit {
        coefficients,
        sup_error,
        condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn nu2() -> Parameters {
        Parameters::new(2.0).unwrap()
    }

    fn idx(s: f64) -> EntropyIndex {
        EntropyIndex::new(s, &nu2()).unwrap()
    }

    fn phi15_closed(a: f64) -> f64 {
        2.0 * (a - 1.0).sqrt() - 2.0 / 3.0 * (a - 1.0).powf(1.5)
    }

    /// Independent oracle: `int_0^x v^p (1-v)^q dv` summed term by term from
    /// the binomial expansion of `(1-v)^q`, valid for `x <= 1/2`.
    fn incomplete_beta_series(x: f64, p: f64, q: f64) -> f64 {
        let mut coeff = 1.0;
        let mut total = 0.0;
        for n in 0..2000 {
            let term = coeff * x.powf(p + 1.0 + n as f64) / (p + 1.0 + n as f64);
            total += term;
            if term.abs() < 1e-19 {
                break;
            }
            coeff *= -(q - n as f64) / (n as f64 + 1.0);
        }
        total
    }

    /// `phi_s(a)` from the oracle, split at the midpoint of `[1, 2]`.
    fn phi_oracle(f: &EntropyFunction, a: f64) -> f64 {
        let (p, q) = f.exponents();
        if a <= 1.5 {
            incomplete_beta_series(a - 1.0, p, q)
        } else {
            incomplete_beta_series(0.5, p, q) + incomplete_beta_series(0.5, q, p) - incomplete_beta_series(2.0 - a, q, p)
        }
    }

    #[test]
    fn quadrature_agrees_with_series_oracle() {
        let p = nu2();
        for s in [0.55, 0.7, 0.95, 1.1, 1.5, 1.75, 1.95] {
            let f = EntropyFunction::new(idx(s), &p, 1e-12).unwrap();
            let mut probes: Vec<f64> = (0..=64).map(|k| 1.0 + k as f64 / 64.0).collect();
            for k in 1..=12 {
                probes.push(1.0 + 10f64.powi(-k));
                probes.push(2.0 - 10f64.powi(-k));
            }
            for a in probes {
                let (got, want) = (f.phi(a).unwrap(), phi_oracle(&f, a));
                assert!((got - want).abs() < 1e-12, "s = {s}, a = {a}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn strip_membership() {
        let p = nu2();
        assert!(EntropyIndex::new(0.5, &p).is_err());
        assert!(EntropyIndex::new(2.0, &p).is_err());
        assert!(EntropyIndex::new(2.5, &p).is_err());
        assert!(EntropyIndex::new(0.7, &p).is_ok());
        assert!(!idx(0.9).inside_j());
        assert!(!idx(1.0).inside_j());
        assert!(idx(1.5).inside_j());
        let q = Parameters::new(0.25).unwrap();
        assert_eq!(strip(&q), (0.25, 4.0));
        assert!(EntropyIndex::new(1.5, &Parameters::equal_mobility()).is_err());
    }

    #[test]
    fn default_s_list_respects_j() {
        let s: Vec<f64> = default_s_list(&nu2()).unwrap().iter().map(|s| s.value()).collect();
        assert_eq!(s, vec![1.1, 1.25, 1.5, 1.75]);
        let p = Parameters::new(1.2).unwrap();
        let s: Vec<f64> = default_s_list(&p).unwrap().iter().map(|s| s.value()).collect();
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|&s| s > 1.0 && s < 1.2));
    }

    #[test]
    fn x_closed_form_and_slope() {
        let p = nu2();
        assert_relative_eq!(x_transform(1.5, &p).unwrap(), 2f64.ln(), epsilon = 1e-15);
        let d = 1e-4;
        let fd = (x_transform(1.5 + d, &p).unwrap() - x_transform(1.5 - d, &p).unwrap()) / (2.0 * d);
        assert!((fd - 6.0).abs() < 1e-6, "{fd}");
        assert_eq!(x_derivative(1.5, &p), 6.0);
        assert!(x_transform(1.0, &p).is_err());
        assert!(x_transform(2.0, &p).is_err());
    }

    #[test]
    fn x_diverges_monotonically_at_both_ends() {
        let p = nu2();
        let lo: Vec<f64> = (1..12).map(|k| x_transform(1.0 + 10f64.powi(-k), &p).unwrap()).collect();
        let hi: Vec<f64> = (1..12).map(|k| x_transform(2.0 - 10f64.powi(-k), &p).unwrap()).collect();
        assert!(lo.windows(2).all(|w| w[1] < w[0]));
        assert!(hi.windows(2).all(|w| w[1] > w[0]));
        assert!(lo[10] < -10.0 && hi[10] > 40.0);
    }

    #[test]
    fn phi_is_exact_for_s_one() {
        let f = EntropyFunction::new(idx(1.0), &nu2(), DEFAULT_QUAD_TOL).unwrap();
        for a in [1.0, 1.3, 1.5, 1.99, 2.0] {
            assert_eq!(f.phi(a).unwrap(), a - 1.0);
            assert_eq!(f.phi_prime(a).unwrap().value, 1.0);
        }
    }

    #[test]
    fn phi_matches_closed_form_at_s_one_and_a_half() {
        let f = EntropyFunction::new(idx(1.5), &nu2(), 1e-12).unwrap();
        for k in 0..=40 {
            let a = 1.0 + k as f64 / 40.0;
            assert!((f.phi(a).unwrap() - phi15_closed(a)).abs() < 1e-12, "a = {a}");
        }
        assert!((f.phi(2.0).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(f.phi(1.0).unwrap(), 0.0);
    }

    #[test]
    fn phi_vanishes_at_alpha_for_every_s() {
        for nu in [2.0, 0.3] {
            let p = Parameters::new(nu).unwrap();
            let (lo, hi) = strip(&p);
            for k in 1..10 {
                let s = lo + (hi - lo) * k as f64 / 10.0;
                let f = EntropyFunction::new(EntropyIndex::new(s, &p).unwrap(), &p, 1e-12).unwrap();
                assert_eq!(f.phi(p.alpha()).unwrap(), 0.0);
                assert_eq!(f.m_coeff(p.alpha()).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn phi_prime_examples() {
        let p = nu2();
        let v = phi_prime_eval(idx(1.5), 1.5, &p).unwrap();
        assert_relative_eq!(v.value, 0.5f64.powf(-0.5) * 0.5, epsilon = 1e-15);
        assert!(!v.endpoint_limit);
        let at_alpha = phi_prime_eval(idx(1.5), 1.0, &p).unwrap();
        assert!(at_alpha.endpoint_limit && at_alpha.value == f64::INFINITY);
        let at_beta = phi_prime_eval(idx(1.5), 2.0, &p).unwrap();
        assert!(at_beta.endpoint_limit && at_beta.value == 0.0);
        let below = phi_prime_eval(idx(0.7), 1.0, &p).unwrap();
        assert_eq!(below.value, 0.0);
        assert_eq!(phi_prime_eval(idx(0.7), 2.0, &p).unwrap().value, f64::INFINITY);
    }

    #[test]
    fn phi_prime_monotonicity_follows_sign_of_s_minus_one() {
        let p = nu2();
        let grid: Vec<f64> = (1..200).map(|k| 1.0 + k as f64 / 200.0).collect();
        for (s, decreasing) in [(1.2, true), (1.8, true), (0.6, false), (0.9, false)] {
            let f = EntropyFunction::new(idx(s), &p, 1e-12).unwrap();
            let vals: Vec<f64> = grid.iter().map(|&a| f.phi_prime_interior(a)).collect();
            assert!(vals.iter().all(|&v| v > 0.0));
            assert!(vals.windows(2).all(|w| if decreasing { w[1] < w[0] } else { w[1] > w[0] }));
            let phis: Vec<f64> = grid.iter().map(|&a| f.phi(a).unwrap()).collect();
            assert!(phis.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn m_examples() {
        let p = nu2();
        assert!((m_eval(idx(1.5), 2.0, &p, 1e-12).unwrap() - 4.0).abs() < 1e-11);
        for a in [1.0, 1.2, 1.7, 2.0] {
            assert!((m_eval(idx(1.0), a, &p, 1e-12).unwrap() - 2.0 * (a - 1.0)).abs() < 1e-15);
        }
        assert_eq!(m_eval(idx(1.3), 1.0, &p, 1e-12).unwrap(), 0.0);
        // M(beta) = s beta phi(beta): B(beta) phi'(beta) has limit zero.
        for s in [0.6, 0.8, 1.25, 1.9] {
            let f = EntropyFunction::new(idx(s), &p, 1e-12).unwrap();
            let m_beta = f.m_coeff(2.0).unwrap();
            assert!((m_beta - s * 2.0 * f.phi_at_beta()).abs() < 1e-14);
            assert!(m_beta.is_finite());
            // Continuity at both ends, at the algebraic rate set by the exponents.
            let gaps: Vec<(f64, f64)> = [1e-3, 1e-6, 1e-9, 1e-12]
                .iter()
                .map(|&d| ((f.m_coeff(2.0 - d).unwrap() - m_beta).abs(), f.m_coeff(1.0 + d).unwrap().abs()))
                .collect();
            assert!(gaps.windows(2).all(|w| w[1].0 < w[0].0 && w[1].1 < w[0].1), "{gaps:?}");
        }
    }

    #[test]
    fn ode_residual_vanishes() {
        let p = nu2();
        assert_eq!(verify_ode_residual(idx(1.0), &p, 100).unwrap(), 0.0);
        assert!(verify_ode_residual(idx(1.5), &p, 100).unwrap() < 1e-12);
        let q = Parameters::new(0.4).unwrap();
        let s = EntropyIndex::new(1.8, &q).unwrap();
        assert!(verify_ode_residual(s, &q, 100).unwrap() < 1e-12);
    }

    #[test]
    fn finite_difference_second_derivative_is_second_order() {
        let f = EntropyFunction::new(idx(1.5), &nu2(), 1e-12).unwrap();
        let err = |d: f64| {
            [1.2, 1.5, 1.8]
                .iter()
                .map(|&a| {
                    let fd = (f.phi_prime_interior(a + d) - f.phi_prime_interior(a - d)) / (2.0 * d);
                    (fd - f.phi_second(a)).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(1e-3), err(5e-4));
        assert!(((e1 / e2).log2() - 2.0).abs() < 0.05, "{e1} {e2}");
    }

    #[test]
    fn m_identities_second_order() {
        let p = nu2();
        // At a = 1.5: s phi + (nu + 1 - a) phi' = 1.5 * 1.178511 + 1.5 * 0.707107.
        let f = EntropyFunction::new(idx(1.5), &p, 1e-14).unwrap();
        let rhs = 1.5 * f.phi(1.5).unwrap() + 1.5 * f.phi_prime_interior(1.5);
        assert!((rhs - 2.828427).abs() < 1e-6);
        assert!((f.phi(1.5).unwrap() - 1.178511).abs() < 1e-6);
        let deltas = [4e-3, 2e-3, 1e-3];
        let res: Vec<(f64, f64)> = deltas.iter().map(|&d| verify_m_identities(idx(1.5), &p, 30, d).unwrap()).collect();
        for w in res.windows(2) {
            assert!(((w[0].0 / w[1].0).log2() - 2.0).abs() < 0.1);
            assert!(((w[0].1 / w[1].1).log2() - 2.0).abs() < 0.1);
        }
        // M_1 = 2(a - 1) is linear, so only M/a carries truncation error.
        let (r1, r2) = verify_m_identities(idx(1.0), &p, 30, 1e-3).unwrap();
        assert!(r1 < 1e-10 && r2 < 1e-5, "{r1} {r2}");
    }

    #[test]
    fn offset_rescales_the_family() {
        let p = nu2();
        for s in [0.7, 1.3, 1.75] {
            let base = EntropyFunction::new(idx(s), &p, 1e-13).unwrap();
            let shifted = EntropyFunction::with_offset(idx(s), &p, 1e-13, 1.0).unwrap();
            let factor = (-(s - 1.0)).exp();
            for a in [1.1, 1.5, 1.9] {
                assert_relative_eq!(shifted.phi(a).unwrap(), factor * base.phi(a).unwrap(), max_relative = 1e-11);
                assert_relative_eq!(shifted.m_coeff(a).unwrap(), factor * base.m_coeff(a).unwrap(), max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn table_tracks_quadrature() {
        let p = nu2();
        for s in [0.55, 0.7, 1.1, 1.5, 1.75, 1.95] {
            let table = EntropyTable::new(idx(s), &p).unwrap();
            let f = table.function().clone();
            let mut worst: f64 = 0.0;
            for k in 0..=997 {
                let a = 1.0 + k as f64 / 997.0;
                worst = worst.max((table.phi_at(a) - f.phi(a).unwrap()).abs());
            }
            for k in 1..40 {
                let a = 1.0 + 10f64.powf(-(k as f64) / 4.0);
                worst = worst.max((table.phi_at(a) - f.phi(a).unwrap()).abs());
                let b = 2.0 - 10f64.powf(-(k as f64) / 4.0);
                worst = worst.max((table.phi_at(b) - f.phi(b).unwrap()).abs());
            }
            assert!(worst < 1e-10, "s = {s}: {worst:e}");
            assert_eq!(table.phi_at(1.0), 0.0);
            assert!(table.phi.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn span_contains_members_and_constants() {
        let p = nu2();
        let s_list: Vec<EntropyIndex> = [1.2, 1.5, 1.8].iter().map(|&s| idx(s)).collect();
        let grid: Vec<f64> = (0..=500).map(|k| 1.0 + k as f64 / 500.0).collect();
        let table = EntropyTable::new(idx(1.5), &p).unwrap();
        let member: Vec<f64> = grid.iter().map(|&a| table.phi_at(a)).collect();
        assert!(approximate_in_span(&member, &grid, &s_list, &p).unwrap().sup_error < 1e-10);
        let one = vec![1.0; grid.len()];
        assert!(approximate_in_span(&one, &grid, &s_list, &p).unwrap().sup_error < 1e-10);
        assert!(approximate_in_span(&one[..3], &grid, &s_list, &p).is_err());
    }

    #[test]
    fn span_error_for_a_squared_decreases_with_more_indices() {
        let p = nu2();
        let grid: Vec<f64> = (0..=1000).map(|k| 1.0 + k as f64 / 1000.0).collect();
        let target: Vec<f64> = grid.iter().map(|a| a * a).collect();
        let errs: Vec<f64> = [2usize, 4, 8, 16]
            .iter()
            .map(|&k| {
                let s_list: Vec<EntropyIndex> = (0..k)
                    .map(|i| idx(1.05 + 0.85 * i as f64 / (k - 1) as f64))
                    .collect();
                approximate_in_span(&target, &grid, &s_list, &p).unwrap().sup_error
            })
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }
}
