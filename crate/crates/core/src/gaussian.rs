//! Minimum-KL inference over a Wasserstein ball, Gaussian case:
//! `min KL(mu || prior)` subject to `W2(mu, reference) <= eps`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::gaussian_kl;
use crate::linalg::{self, serde_dmatrix};
use crate::measure::GaussianMeasure;

/// Most negative multiplier tried while bracketing.
const LAMBDA_FLOOR: f64 = -1e8;
const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlBallInstance {
    pub prior: GaussianMeasure,
    pub reference: GaussianMeasure,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlBallSolution {
    pub optimum: GaussianMeasure,
    /// SPD matrix of the optimal map from the optimum to the reference.
    #[serde(with = "serde_dmatrix")]
    pub a: DMatrix<f64>,
    pub lambda: f64,
    pub kl: f64,
    pub kkt_residual: f64,
    /// Frobenius norm of `2 lambda A - A S_r^-1 A + S_p^-1 - 2 lambda I`.
    pub matrix_residual: f64,
    /// `|W2(optimum, reference) - eps|` on the boundary branch, 0 inside.
    pub distance_residual: f64,
    /// The prior already lies in the ball.
    pub interior: bool,
    /// More than one sign change of the distance equation was seen while bracketing.
    pub second_bracket: bool,
}

impl KlBallInstance {
    pub fn new(prior: GaussianMeasure, reference: GaussianMeasure, eps: f64) -> Result<Self> {
        let inst = Self { prior, reference, eps };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.prior.dim() != self.reference.dim() {
            return Err(Error::DimensionMismatch { expected: self.prior.dim(), found: self.reference.dim() });
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidInstance(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

pub fn gaussian_w2(a: &GaussianMeasure, b: &GaussianMeasure) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    Ok(linalg::bures_w2_squared(a.mean(), a.cov(), b.mean(), b.cov()).sqrt())
}

/// `F(A) = A S_r^-1 A - 2 lambda A - (S_p^-1 - 2 lambda I)`.
fn matrix_equation(a: &DMatrix<f64>, ref_prec: &DMatrix<f64>, prior_prec: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let d = a.nrows();
    a * ref_prec * a - a * (2.0 * lambda) - (prior_prec - DMatrix::identity(d, d) * (2.0 * lambda))
}

pub fn matrix_residual(a: &DMatrix<f64>, inst: &KlBallInstance, lambda: f64) -> f64 {
    let ref_prec = linalg::sym_inv(inst.reference.cov());
    let prior_prec = linalg::sym_inv(inst.prior.cov());
    matrix_equation(a, &ref_prec, &prior_prec, lambda).norm()
}

/// SPD solution of `A S_r^-1 A - 2 lambda A = S_p^-1 - 2 lambda I` for
/// `lambda <= 0`, through `A = S_r^{1/2} X S_r^{1/2}` with
/// `X^2 - 2 lambda X = S_r^{-1/2} (S_p^-1 - 2 lambda I) S_r^{-1/2}`.
pub fn solve_matrix_equation(prior_cov: &DMatrix<f64>, ref_cov: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let d = prior_cov.nrows();
    let r_half = linalg::sym_sqrt(ref_cov);
    let r_inv_half = linalg::sym_inv_sqrt(ref_cov);
    let rhs = linalg::sym_inv(prior_cov) - DMatrix::identity(d, d) * (2.0 * lambda);
    let q = linalg::symmetrize(&(&r_inv_half * rhs * &r_inv_half));
    // Positive root lambda + sqrt(lambda^2 + q), written without cancellation.
    let x = linalg::sym_apply(&q, |v| v / ((v + lambda * lambda).sqrt() - lambda));
    linalg::symmetrize(&(&r_half * x * &r_half))
}

/// Newton's method on the matrix equation, each step solving the Sylvester
/// system `(A S_r^-1 - lambda I) D + D (S_r^-1 A - lambda I) = -F(A)`.
/// Steps are halved until the iterate stays SPD and the residual drops.
pub fn newton_matrix_equation(
    prior_cov: &DMatrix<f64>,
    ref_cov: &DMatrix<f64>,
    lambda: f64,
    start: DMatrix<f64>,
    max_iters: usize,
) -> Result<DMatrix<f64>> {
    let d = prior_cov.nrows();
    let ref_prec = linalg::sym_inv(ref_cov);
    let prior_prec = linalg::sym_inv(prior_cov);
    let id = DMatrix::<f64>::identity(d, d);
    let mut a = start;
    let mut res = matrix_equation(&a, &ref_prec, &prior_prec, lambda);
    let mut best = res.norm();
    for _ in 0..max_iters {
        if best <= 1e-14 * (1.0 + prior_prec.norm() + a.norm()) {
            break;
        }
        let left = &a * &ref_prec - &id * lambda;
        let right = &ref_prec * &a - &id * lambda;
        let system = id.kronecker(&left) + right.transpose().kronecker(&id);
        let rhs = -DVector::from_column_slice(res.as_slice());
        let Some(step) = system.lu().solve(&rhs) else {
            break;
        };
        let step = linalg::symmetrize(&DMatrix::from_column_slice(d, d, step.as_slice()));
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand = linalg::symmetrize(&(&a + &step * t));
            if cand.clone().cholesky().is_some() {
                let r = matrix_equation(&cand, &ref_prec, &prior_prec, lambda);
                if r.norm() < best {
                    a = cand;
                    res = r;
                    best = res.norm();
                    improved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if !best.is_finite() {
        return Err(Error::NoConvergence {
            reason: "Newton iteration diverged".into(),
            matrix_residual: best,
            distance_residual: f64::NAN,
        });
    }
    Ok(a)
}

/// Candidate optimum for a given multiplier.
struct Branch {
    a: DMatrix<f64>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

fn branch(inst: &KlBallInstance, lambda: f64) -> Branch {
    let d = inst.prior.dim();
    let a = solve_matrix_equation(inst.prior.cov(), inst.reference.cov(), lambda);
    let a_inv = linalg::sym_inv(&a);
    let cov = linalg::symmetrize(&(&a_inv * inst.reference.cov() * &a_inv));
    let prior_prec = linalg::sym_inv(inst.prior.cov());
    let shifted = &prior_prec - DMatrix::identity(d, d) * (2.0 * lambda);
    let rhs = &prior_prec * inst.prior.mean() - inst.reference.mean() * (2.0 * lambda);
    let mean = linalg::sym_inv(&shifted) * rhs;
    Branch { a, mean, cov }
}

/// Squared transport cost from the reference to the branch optimum, computed
/// through the branch map `y -> A^-1 (y - m_r) + m`.
fn branch_distance_sq(inst: &KlBallInstance, lambda: f64) -> f64 {
    let b = branch(inst, lambda);
    let d = inst.prior.dim();
    let gap = DMatrix::identity(d, d) - linalg::sym_inv(&b.a);
    let cov_part = (&gap * inst.reference.cov() * gap.transpose()).trace();
    cov_part + (&b.mean - inst.reference.mean()).norm_squared()
}

/// `L^2(candidate)` norm of `grad log rho + grad V_p - 2 lambda (Id - T)`,
/// with `T` the optimal map from the candidate to the reference.
pub fn kkt_residual(inst: &KlBallInstance, candidate: &GaussianMeasure, lambda: f64) -> f64 {
    let d = candidate.dim();
    let id = DMatrix::<f64>::identity(d, d);
    let prec = linalg::sym_inv(candidate.cov());
    let prior_prec = linalg::sym_inv(inst.prior.cov());
    let b = linalg::bures_map(candidate.cov(), inst.reference.cov());
    let m = candidate.mean();
    let g = -&prec + &prior_prec - (&id - &b) * (2.0 * lambda);
    let h = &prec * m - &prior_prec * inst.prior.mean() - (&b * m - inst.reference.mean()) * (2.0 * lambda);
    let cov_part = (&g * candidate.cov() * g.transpose()).trace();
    let mean_part = (&g * m + h).norm_squared();
    (cov_part + mean_part).max(0.0).sqrt()
}

fn finish(
    inst: &KlBallInstance,
    optimum: GaussianMeasure,
    a: DMatrix<f64>,
    lambda: f64,
    interior: bool,
    second_bracket: bool,
) -> Result<KlBallSolution> {
    let distance_residual = if interior { 0.0 } else { (gaussian_w2(&optimum, &inst.reference)? - inst.eps).abs() };
    Ok(KlBallSolution {
        kl: if interior { 0.0 } else { gaussian_kl(&optimum, &inst.prior) },
        kkt_residual: kkt_residual(inst, &optimum, lambda),
        matrix_residual: matrix_residual(&a, inst, lambda),
        distance_residual,
        optimum,
        a,
        lambda,
        interior,
        second_bracket,
    })
}

pub fn solve_kl_ball(inst: &KlBallInstance) -> Result<KlBallSolution> {
    inst.validate()?;
    let eps_sq = inst.eps * inst.eps;
    let f = |lambda: f64| branch_distance_sq(inst, lambda) - eps_sq;

    // The branch at lambda = 0 is the prior; when either distance formula puts
    // it inside the ball, a prior sitting on the sphere up to rounding has no
    // sign change to bracket.
    if gaussian_w2(&inst.prior, &inst.reference)? <= inst.eps || f(0.0) <= 0.0 {
        let a = linalg::bures_map(inst.prior.cov(), inst.reference.cov());
        return finish(inst, inst.prior.clone(), a, 0.0, true, false);
    }

    // Scan lambda = -1, -2, -4, ... for sign changes of the distance equation.
    let mut grid = vec![0.0];
    let mut lambda = -1.0;
    while lambda >= LAMBDA_FLOOR {
        grid.push(lambda);
        lambda *= 2.0;
    }
    let values: Vec<f64> = grid.iter().map(|l| f(*l)).collect();
    let changes: Vec<usize> = (1..grid.len()).filter(|&k| (values[k - 1] > 0.0) != (values[k] > 0.0)).collect();
    let Some(&first) = changes.first() else {
        let best = values.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        return Err(Error::NoConvergence {
            reason: format!("no sign change of the distance equation for lambda in [{LAMBDA_FLOOR:e}, 0]"),
            matrix_residual: f64::NAN,
            distance_residual: best,
        });
    };
    let second_bracket = changes.len() > 1;

    // f > 0 at hi (closer to zero), f <= 0 at lo.
    let (mut hi, mut lo) = (grid[first - 1], grid[first]);
    while hi - lo > f64::EPSILON * hi.abs().max(lo.abs()) {
        let mid = 0.5 * (hi + lo);
        if mid == hi || mid == lo {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let lambda = if f(hi).abs() <= f(lo).abs() { hi } else { lo };

    let b = branch(inst, lambda);
    let a = newton_matrix_equation(inst.prior.cov(), inst.reference.cov(), lambda, b.a, 3)?;
    let optimum = GaussianMeasure::new(b.mean, b.cov).map_err(|e| Error::NoConvergence {
        reason: format!("optimum covariance invalid: {e}"),
        matrix_residual: f64::NAN,
        distance_residual: f64::NAN,
    })?;
    let sol = finish(inst, optimum, a, lambda, false, second_bracket)?;
    let scale = 1.0 + inst.eps;
    if sol.matrix_residual > RESIDUAL_TOL || sol.distance_residual > RESIDUAL_TOL * scale {
        return Err(Error::NoConvergence {
            reason: "residuals above tolerance after bisection".into(),
            matrix_residual: sol.matrix_residual,
            distance_residual: sol.distance_residual,
        });
    }
    Ok(sol)
}
