//! Brute-force reference computations used to check the solvers. Nothing
//! here calls into the transport LP or the Gaussian solver.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, GaussianMeasure};

pub const MAX_PERMUTATION_ATOMS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    pub max_candidates: usize,
    pub seed: u64,
    pub grid_resolution: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self { max_candidates: 1000, seed: 0, grid_resolution: 64 }
    }
}

/// Exact squared-distance OT cost between uniform measures with the same
/// number of atoms, by enumerating every matching. Returns the cost and
/// the optimal assignment `i -> sigma[i]`.
pub fn permutation_ot(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(f64, Vec<usize>)> {
    let n = mu.len();
    if n != nu.len() {
        return Err(Error::InvalidInstance(format!("{n} atoms against {}", nu.len())));
    }
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), found: nu.dim() });
    }
    if n > MAX_PERMUTATION_ATOMS {
        return Err(Error::TooLarge(format!("{n} atoms, enumeration capped at {MAX_PERMUTATION_ATOMS}")));
    }
    if !mu.is_uniform() || !nu.is_uniform() {
        return Err(Error::InvalidInstance("permutation oracle needs uniform weights".into()));
    }
    let cost = |i: usize, j: usize| (&mu.atoms()[i] - &nu.atoms()[j]).norm_squared();
    let mut best = (f64::INFINITY, Vec::new());
    for perm in (0..n).permutations(n) {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost(i, j)).sum::<f64>() / n as f64;
        if total < best.0 {
            best = (total, perm);
        }
    }
    Ok(best)
}

fn candidate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// `Q D Q^T` with `Q` orthogonal from a Gaussian QR and `D` uniform in `[0.2, 5]`.
pub fn random_spd<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let diag = DVector::from_fn(d, |_, _| rng.random_range(0.2..=5.0));
    let m = &q * DMatrix::from_diagonal(&diag) * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Distance from `center` along its straight matching to `mu = T#center`
/// (valid because `T` is a gradient of a convex function).
fn matched_distance(center: &DiscreteMeasure, images: &[DVector<f64>]) -> f64 {
    center
        .iter()
        .zip(images)
        .map(|((x, w), y)| w * (y - x).norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// Random members of the ball `W2(., center) <= eps`: pushforwards of the
/// center by `x -> A x + b` with random SPD `A`, pulled toward the center
/// along the straight matching until they fit a random radius in `(0, eps]`.
/// Every second candidate is placed exactly on the boundary.
pub fn random_feasible(center: &DiscreteMeasure, eps: f64, budget: &OracleBudget) -> Vec<DiscreteMeasure> {
    let d = center.dim();
    (0..budget.max_candidates)
        .into_par_iter()
        .map(|index| {
            let mut rng = candidate_rng(budget.seed, index);
            let a = random_spd(d, &mut rng);
            let b = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let images: Vec<DVector<f64>> = center.atoms().iter().map(|x| &a * x + &b).collect();
            let radius = if index % 2 == 0 { eps } else { eps * rng.random_range(f64::EPSILON..=1.0) };
            let dist = matched_distance(center, &images);
            let t = if dist > radius { radius / dist } else { 1.0 };
            // (1 - t) x + t T(x) stays a gradient-of-convex image of the center.
            let atoms = center.atoms().iter().zip(&images).map(|(x, y)| x * (1.0 - t) + y * t).collect();
            DiscreteMeasure::new(atoms, center.weights().to_vec()).expect("finite images")
        })
        .collect()
}

/// KL between diagonal Gaussians in a shared basis, from means and standard deviations.
fn diagonal_kl(m: &[f64], s: &[f64], mp: &[f64], vp: &[f64]) -> f64 {
    let mut total = 0.0;
    for k in 0..m.len() {
        if s[k] <= 0.0 {
            return f64::INFINITY;
        }
        let v = s[k] * s[k];
        total += v / vp[k] + (m[k] - mp[k]).powi(2) / vp[k] - 1.0 + vp[k].ln() - v.ln();
    }
    0.5 * total
}

/// Unit vector in `R^n` from `n - 1` hyperspherical angles.
fn sphere_point(angles: &[f64]) -> Vec<f64> {
    let n = angles.len() + 1;
    let mut u = vec![0.0; n];
    let mut sin_prod = 1.0;
    for (k, a) in angles.iter().enumerate() {
        u[k] = sin_prod * a.cos();
        sin_prod *= a.sin();
    }
    u[n - 1] = sin_prod;
    u
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

/// Minimum of `KL(. || prior)` over Gaussians with `W2(., reference) = eps`
/// (or the prior itself when it lies inside the ball), by grid search over
/// the sphere of means and standard deviations followed by coordinatewise
/// golden-section refinement. Handles `d = 1` and `d = 2` with commuting
/// covariances.
pub fn grid_kl_oracle(
    prior: &GaussianMeasure,
    reference: &GaussianMeasure,
    eps: f64,
    budget: &OracleBudget,
) -> Result<(f64, GaussianMeasure)> {
    let d = prior.dim();
    if d != reference.dim() {
        return Err(Error::DimensionMismatch { expected: d, found: reference.dim() });
    }
    if d > 2 {
        return Err(Error::TooLarge(format!("grid oracle handles d <= 2, got {d}")));
    }
    let (sp, sr) = (prior.cov(), reference.cov());
    let scale = sp.norm() * sr.norm();
    if (sp * sr - sr * sp).norm() > 1e-10 * scale.max(1.0) {
        return Err(Error::TooLarge("covariances do not commute".into()));
    }
    // A generic combination separates the shared eigenvectors.
    let basis = SymmetricEigen::new(sr + sp * std::f64::consts::FRAC_1_SQRT_2).eigenvectors;
    let rotate = |v: &DVector<f64>| basis.transpose() * v;
    let diag = |m: &DMatrix<f64>| -> Vec<f64> { (0..d).map(|k| (basis.column(k).transpose() * m * basis.column(k))[(0, 0)]).collect() };
    let (mp, vp) = (rotate(prior.mean()).as_slice().to_vec(), diag(sp));
    let (mr, vr) = (rotate(reference.mean()).as_slice().to_vec(), diag(sr));
    let sr_std: Vec<f64> = vr.iter().map(|v| v.sqrt()).collect();
    let sp_std: Vec<f64> = vp.iter().map(|v| v.sqrt()).collect();

    let to_gaussian = |m: &[f64], s: &[f64]| -> GaussianMeasure {
        let mean = &basis * DVector::from_column_slice(m);
        let cov = &basis * DMatrix::from_diagonal(&DVector::from_fn(d, |k, _| s[k] * s[k])) * basis.transpose();
        GaussianMeasure::new(mean, (&cov + cov.transpose()) * 0.5).expect("positive standard deviations")
    };

    let prior_dist_sq: f64 = (0..d).map(|k| (mp[k] - mr[k]).powi(2) + (sp_std[k] - sr_std[k]).powi(2)).sum();
    if prior_dist_sq.sqrt() <= eps {
        return Ok((0.0, to_gaussian(&mp, &sp_std)));
    }

    let params = |angles: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let u = sphere_point(angles);
        let m = (0..d).map(|k| mr[k] + eps * u[k]).collect();
        let s = (0..d).map(|k| sr_std[k] + eps * u[d + k]).collect();
        (m, s)
    };
    let objective = |angles: &[f64]| {
        let (m, s) = params(angles);
        diagonal_kl(&m, &s, &mp, &vp)
    };

    let n_angles = 2 * d - 1;
    let upper: Vec<f64> = (0..n_angles)
        .map(|k| if k + 1 == n_angles { 2.0 * std::f64::consts::PI } else { std::f64::consts::PI })
        .collect();
    let res = budget.grid_resolution.max(4);
    let mut best_angles = vec![0.0; n_angles];
    let mut best = f64::INFINITY;
    for idx in (0..n_angles).map(|_| 0..res).multi_cartesian_product() {
        let angles: Vec<f64> = idx.iter().zip(&upper).map(|(i, u)| (*i as f64 + 0.5) * u / res as f64).collect();
        let v = objective(&angles);
        if v < best {
            best = v;
            best_angles = angles;
        }
    }

    let mut width: Vec<f64> = upper.iter().map(|u| u / res as f64).collect();
    for _ in 0..200 {
        let before = best;
        for k in 0..n_angles {
            let center = best_angles[k];
            let probe = |a: f64| {
                let mut trial = best_angles.clone();
                trial[k] = a;
                objective(&trial)
            };
            let a = golden_section(probe, center - width[k], center + width[k], 60);
            let v = probe(a);
            if v < best {
                best = v;
                best_angles[k] = a;
            }
        }
        if before - best <= 1e-15 * best.abs().max(1e-300) {
            for w in &mut width {
                *w *= 0.5;
            }
            if width.iter().all(|w| *w < 1e-10) {
                break;
            }
        }
    }
    let (m, s) = params(&best_angles);
    Ok((best, to_gaussian(&m, &s)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::uniform_from_rows(points.iter().map(|p| vec![*p]).collect()).unwrap()
    }

    fn g1(m: f64, v: f64) -> GaussianMeasure {
        GaussianMeasure::from_rows(vec![m], vec![vec![v]]).unwrap()
    }

    #[test]
    fn permutation_examples() {
        let (c, p) = permutation_ot(&line(&[1.5]), &line(&[-0.5])).unwrap();
        assert_eq!((c, p), (4.0, vec![0]));
        let (c, p) = permutation_ot(&line(&[0.0, 1.0]), &line(&[2.0, 3.0])).unwrap();
        assert_eq!((c, p), (4.0, vec![0, 1]));
        let big = line(&[0.0; 8]);
        assert!(matches!(permutation_ot(&big, &big), Err(Error::TooLarge(_))));
    }

    #[test]
    fn feasible_generation() {
        let center = DiscreteMeasure::uniform_from_rows(vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5]]).unwrap();
        let empty = random_feasible(&center, 1.0, &OracleBudget { max_candidates: 0, ..Default::default() });
        assert!(empty.is_empty());
        let budget = OracleBudget { max_candidates: 50, seed: 3, grid_resolution: 8 };
        let a = random_feasible(&center, 0.7, &budget);
        let b = random_feasible(&center, 0.7, &budget);
        assert_eq!(a, b);
        for nu in &a {
            let d = crate::ot::w2_discrete(nu, &center).unwrap();
            assert!(d <= 0.7 + 1e-9);
        }
        for nu in random_feasible(&center, 1e-12, &budget) {
            assert!(crate::ot::w2_discrete(&nu, &center).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn kl_oracle_basics() {
        let budget = OracleBudget { grid_resolution: 64, ..Default::default() };
        let (v, g) = grid_kl_oracle(&g1(0.5, 2.0), &g1(0.5, 2.0), 0.1, &budget).unwrap();
        assert_eq!(v, 0.0);
        assert!((g.mean()[0] - 0.5).abs() < 1e-12);
        let (v, _) = grid_kl_oracle(&g1(0.0, 1.0), &g1(3.0, 2.0), 100.0, &budget).unwrap();
        assert_eq!(v, 0.0);
        // optimum N(2, 1), KL = 2
        let (v, g) = grid_kl_oracle(&g1(0.0, 1.0), &g1(3.0, 1.0), 1.0, &budget).unwrap();
        assert!((v - 2.0).abs() < 1e-8, "{v}");
        assert!((g.mean()[0] - 2.0).abs() < 1e-4);
        let coarse = OracleBudget { grid_resolution: 16, ..Default::default() };
        let (v2, _) = grid_kl_oracle(&g1(0.0, 1.0), &g1(3.0, 1.0), 1.0, &coarse).unwrap();
        assert!((v - v2).abs() < 1e-8);
    }

    #[test]
    fn kl_oracle_rejects_non_commuting() {
        let a = GaussianMeasure::from_rows(vec![0.0, 0.0], vec![vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let b = GaussianMeasure::standard(2).pushforward_affine(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]), &DVector::zeros(2)).unwrap();
        assert!(matches!(grid_kl_oracle(&a, &b, 0.5, &OracleBudget::default()), Err(Error::TooLarge(_))));
    }
}
