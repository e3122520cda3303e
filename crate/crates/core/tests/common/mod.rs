#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use wassopt::oracles::random_spd;
use wassopt::{DiscreteMeasure, GaussianMeasure};

pub fn normal_vec<R: Rng>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn uniform_measure<R: Rng>(n: usize, d: usize, rng: &mut R) -> DiscreteMeasure {
    DiscreteMeasure::uniform((0..n).map(|_| normal_vec(d, rng)).collect()).unwrap()
}

/// Random atoms with weights bounded away from zero.
pub fn weighted_measure<R: Rng>(n: usize, d: usize, rng: &mut R) -> DiscreteMeasure {
    let atoms = (0..n).map(|_| normal_vec(d, rng)).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    DiscreteMeasure::new(atoms, raw.iter().map(|w| w / total).collect()).unwrap()
}

pub fn spd_pushforward<R: Rng>(mu: &DiscreteMeasure, rng: &mut R) -> DiscreteMeasure {
    let a = random_spd(mu.dim(), rng);
    let b = normal_vec(mu.dim(), rng);
    mu.pushforward_affine(&a, &b).unwrap()
}

pub fn random_gaussian<R: Rng>(d: usize, rng: &mut R) -> GaussianMeasure {
    GaussianMeasure::new(normal_vec(d, rng), random_spd(d, rng)).unwrap()
}

/// Gaussian whose covariance is diagonal in the basis `q`.
pub fn gaussian_in_basis<R: Rng>(q: &DMatrix<f64>, rng: &mut R) -> GaussianMeasure {
    let d = q.nrows();
    let diag = DVector::from_fn(d, |_, _| rng.random_range(0.2..5.0));
    let cov = q * DMatrix::from_diagonal(&diag) * q.transpose();
    GaussianMeasure::new(normal_vec(d, rng), (&cov + cov.transpose()) * 0.5).unwrap()
}

pub fn random_rotation<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q()
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
