//! Discrete calculus on the periodic grid.
//!
//! All arrays are cell averages on `T = R/Z` with index arithmetic taken
//! modulo the array length.

/// Centered first difference `(f[i+1] - f[i-1]) / 2h`.
pub fn periodic_gradient(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let inv = 0.5 / h;
    (0..n)
        .map(|i| (f[(i + 1) % n] - f[(i + n - 1) % n]) * inv)
        .collect()
}

/// Standard three-point second difference.
pub fn periodic_laplacian(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let inv = 1.0 / (h * h);
    (0..n)
        .map(|i| (f[(i + 1) % n] - 2.0 * f[i] + f[(i + n - 1) % n]) * inv)
        .collect()
}

/// Interface difference `(f[i+1] - f[i]) / h`, located at `x_{i+1/2}`.
pub fn interface_gradient(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    (0..n).map(|i| (f[(i + 1) % n] - f[i]) / h).collect()
}

/// Midpoint rule `h * sum(f)`.
pub fn integrate(f: &[f64], h: f64) -> f64 {
    h * f.iter().sum::<f64>()
}
