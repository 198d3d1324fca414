//! Gauss–Legendre rules and a graded composite rule for integrands with an
//! algebraic singularity at one endpoint.
//!
//! The graded rule lays panels `[L r^{j+1}, L r^j]` (measured from the
//! singular endpoint) until the latest panel contributes less than `tol/10`,
//! then closes the remaining sliver `[0, L r^J]` with a caller-supplied tail
//! model. Each panel has a fixed width ratio, so a `d^p` singularity looks
//! the same on every panel and the fixed-order rule resolves it uniformly.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(order, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
    }
}

fn legendre_with_derivative(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=order {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = order as f64;
    let dp = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradedIntegral {
    pub value: f64,
    pub panels: usize,
    /// Width of the sliver handed to the tail model.
    pub tail_width: f64,
}

/// Composite Gauss–Legendre with geometric grading toward one endpoint.
#[derive(Debug, Clone)]
pub struct GradedRule {
    rule: GaussLegendre,
    ratio: f64,
    max_panels: usize,
}

impl Default for GradedRule {
    fn default() -> Self {
        Self::new(16, 0.5)
    }
}

impl GradedRule {
    pub fn new(order: usize, ratio: f64) -> Self {
        assert!(ratio > 0.0 && ratio < 1.0, "grading ratio must lie in (0, 1)");
        Self {
            rule: GaussLegendre::new(order),
            ratio,
            max_panels: 4000,
        }
    }

    /// Integrates over an interval of length `len` with a singular endpoint.
    /// Both closures take distances from that endpoint: `f(d)` is the
    /// integrand and `tail(w)` the integral over the sliver `[0, w]`.
    /// Working in distances keeps `f` accurate where `hi - d` would round to `hi`.
    pub fn integrate<F, T>(&self, len: f64, tol: f64, f: F, tail: T) -> GradedIntegral
    where
        F: Fn(f64) -> f64,
        T: Fn(f64) -> f64,
    {
        if len <= 0.0 {
            return GradedIntegral {
                value: 0.0,
                panels: 0,
                tail_width: 0.0,
            };
        }
        let mut outer = len;
        let mut sum = 0.0;
        let mut panels = 0;
        loop {
            let inner = outer * self.ratio;
            let contribution = self.rule.integrate(inner, outer, &f);
            sum += contribution;
            panels += 1;
            outer = inner;
            let converged = panels >= 2 && contribution.abs() < 0.1 * tol;
            if converged || outer < f64::MIN_POSITIVE || panels >= self.max_panels {
                if panels >= self.max_panels {
                    log::warn!("graded quadrature hit {panels} panels; last contribution {contribution:e}");
                }
                break;
            }
        }
        GradedIntegral {
            value: sum + tail(outer),
            panels,
            tail_width: outer,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let gl = GaussLegendre::new(16);
        for k in 0..32 {
            let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
            assert_relative_eq!(gl.integrate(-1.0, 1.0, |x| x.powi(k)), exact, epsilon = 1e-14);
        }
        assert_relative_eq!(gl.weights().iter().sum::<f64>(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn odd_order_has_center_node() {
        let gl = GaussLegendre::new(5);
        assert_eq!(gl.nodes()[2], 0.0);
        assert_relative_eq!(gl.weights()[2], 128.0 / 225.0, epsilon = 1e-15);
    }

    #[test]
    fn graded_rule_handles_inverse_square_root() {
        // int_0^1 x^{-1/2} dx = 2 with the exact tail 2 sqrt(w).
        let g = GradedRule::default();
        let r = g.integrate(1.0, 1e-13, |x| x.powf(-0.5), |w| 2.0 * w.sqrt());
        assert!((r.value - 2.0).abs() < 1e-13, "{r:?}");
        // int_0^1 (1-x) x^{-1/2} dx = 4/3.
        let r = g.integrate(1.0, 1e-13, |d| (1.0 - d) * d.powf(-0.5), |w| 2.0 * w.sqrt() - 2.0 / 3.0 * w.powf(1.5));
        assert!((r.value - 4.0 / 3.0).abs() < 1e-13, "{r:?}");
        assert!(r.panels > 2 && r.tail_width > 0.0);
    }

    #[test]
    fn graded_rule_with_strong_singularity() {
        // p = -0.9: panels decay slowly, the tail model carries the rest.
        let g = GradedRule::default();
        let p = -0.9;
        let r = g.integrate(2.0, 1e-12, |x| x.powf(p), |w| w.powf(p + 1.0) / (p + 1.0));
        let exact = 2f64.powf(p + 1.0) / (p + 1.0);
        assert!((r.value - exact).abs() < 1e-11, "{} vs {exact}", r.value);
    }

    #[test]
    fn empty_interval_is_zero() {
        let g = GradedRule::default();
        assert_eq!(g.integrate(0.0, 1e-12, |_| 1.0, |_| 0.0).value, 0.0);
    }
}
