//! Real roots of real polynomials through companion-matrix eigenvalues.

use nalgebra::DMatrix;

/// Tolerance on `|Im z| / (1 + |Re z|)` for accepting an eigenvalue as real.
pub const REAL_TOL: f64 = 1e-9;

/// Evaluates `sum_k c_k x^(n-k)` for coefficients ordered from the leading term.
pub fn eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, c| acc * x + c)
}

fn derivative(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len() - 1;
    coeffs[..n].iter().enumerate().map(|(k, c)| c * (n - k) as f64).collect()
}

/// Newton iterations on `p`, kept only while they shrink `|p|`.
pub fn polish(coeffs: &[f64], mut x: f64) -> f64 {
    let dp = derivative(coeffs);
    let mut fx = eval(coeffs, x).abs();
    for _ in 0..50 {
        let d = eval(&dp, x);
        if d == 0.0 || fx == 0.0 {
            break;
        }
        let next = x - eval(coeffs, x) / d;
        let fn_ = eval(coeffs, next).abs();
        if !(fn_ < fx) {
            break;
        }
        x = next;
        fx = fn_;
    }
    x
}

/// Real roots (with multiplicity as returned by the eigen-solver), sorted.
///
/// `scale` rescales the variable before building the companion matrix; pass
/// an estimate of the root magnitude to keep the matrix balanced.
pub fn real_roots(coeffs: &[f64], scale: f64) -> Vec<f64> {
    let lead = coeffs[0];
    assert!(lead != 0.0, "leading coefficient must be nonzero");
    let n = coeffs.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    // Monic polynomial in z = x / scale.
    let monic: Vec<f64> = coeffs.iter().enumerate().map(|(k, c)| c / lead / scale.powi(k as i32)).collect();
    let mut companion = DMatrix::zeros(n, n);
    for k in 0..n {
        companion[(0, k)] = -monic[k + 1];
    }
    for k in 1..n {
        companion[(k, k - 1)] = 1.0;
    }
    let mut roots: Vec<f64> = companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= REAL_TOL * (1.0 + z.re.abs()))
        .map(|z| polish(coeffs, z.re * scale))
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}
