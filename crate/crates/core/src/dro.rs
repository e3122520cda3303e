//! Worst-case measures over Wasserstein balls for linear, mean-variance and
//! mean-standard-deviation costs `<w, x>`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{Functional, ScalarField};
use crate::linalg::{serde_dmatrix, serde_dvector};
use crate::measure::DiscreteMeasure;
use crate::optimality::{self, Constraint, SufficiencyCertificate};
use crate::{ot, poly};

/// Variances of `<w, x>` at or below this are treated as degenerate.
const MIN_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DroKind {
    Linear,
    MeanVariance,
    MeanStd,
}

/// `sup J(mu)` over `W2(mu, center) <= eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroInstance {
    pub kind: DroKind,
    #[serde(with = "serde_dvector")]
    pub w: DVector<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub center: DiscreteMeasure,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroSolution {
    /// `T(x) = A x + b` pushes the center onto the worst case.
    #[serde(with = "serde_dmatrix")]
    pub map_a: DMatrix<f64>,
    #[serde(with = "serde_dvector")]
    pub map_b: DVector<f64>,
    pub worst_measure: DiscreteMeasure,
    pub worst_value: f64,
    pub nominal_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_star: Option<f64>,
    /// `W2(worst_measure, center)` recomputed by the exact LP.
    pub boundary_distance: f64,
}

impl DroInstance {
    pub fn linear(w: DVector<f64>, center: DiscreteMeasure, eps: f64) -> Self {
        Self { kind: DroKind::Linear, w, rho: None, center, eps }
    }

    pub fn mean_variance(w: DVector<f64>, rho: f64, center: DiscreteMeasure, eps: f64) -> Self {
        Self { kind: DroKind::MeanVariance, w, rho: Some(rho), center, eps }
    }

    pub fn mean_std(w: DVector<f64>, rho: f64, center: DiscreteMeasure, eps: f64) -> Self {
        Self { kind: DroKind::MeanStd, w, rho: Some(rho), center, eps }
    }

    fn rho(&self) -> f64 {
        self.rho.unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w.len() != self.center.dim() {
            return Err(Error::DimensionMismatch { expected: self.center.dim(), found: self.w.len() });
        }
        let wn = self.w.norm();
        if !(wn > 0.0 && wn.is_finite()) {
            return Err(Error::InvalidInstance("w must be finite and nonzero".into()));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidInstance(format!("eps must be positive, got {}", self.eps)));
        }
        let cap = 1e6 * (1.0 + self.center.moments().second_moment);
        if self.eps > cap {
            return Err(Error::InvalidInstance(format!("eps {} exceeds the sanity cap {cap:e}", self.eps)));
        }
        match (self.kind, self.rho) {
            (DroKind::Linear, _) => Ok(()),
            (_, Some(rho)) if rho > 0.0 && rho.is_finite() => {
                let (_, var) = self.center.projected_mean_var(&self.w);
                if var <= MIN_VARIANCE {
                    return Err(Error::ZeroStd);
                }
                Ok(())
            }
            _ => Err(Error::InvalidInstance("rho must be positive and finite".into())),
        }
    }

    /// The objective `J` being maximized.
    pub fn functional(&self) -> Functional {
        match self.kind {
            DroKind::Linear => Functional::expected_value(ScalarField::linear(self.w.clone(), 0.0)),
            DroKind::MeanVariance => Functional::mean_variance(self.w.clone(), self.rho()),
            DroKind::MeanStd => Functional::mean_std(self.w.clone(), self.rho()),
        }
    }

    pub fn solve(&self) -> Result<DroSolution> {
        match self.kind {
            DroKind::Linear => solve_linear(self),
            DroKind::MeanVariance => solve_mean_variance(self),
            DroKind::MeanStd => solve_mean_std(self),
        }
    }
}

fn assemble(
    inst: &DroInstance,
    map_a: DMatrix<f64>,
    map_b: DVector<f64>,
    worst_value: f64,
    lambda_star: Option<f64>,
) -> Result<DroSolution> {
    let worst_measure = inst.center.pushforward_affine(&map_a, &map_b)?;
    let boundary_distance = ot::w2_discrete(&worst_measure, &inst.center)?;
    let nominal_value = inst.functional().evaluate_discrete(&inst.center)?;
    Ok(DroSolution { map_a, map_b, worst_measure, worst_value, nominal_value, lambda_star, boundary_distance })
}

fn expect_kind(inst: &DroInstance, kind: DroKind) -> Result<()> {
    if inst.kind != kind {
        return Err(Error::InvalidInstance(format!("expected a {kind:?} instance, got {:?}", inst.kind)));
    }
    inst.validate()
}

/// Translation by `eps w / |w|`.
pub fn solve_linear(inst: &DroInstance) -> Result<DroSolution> {
    expect_kind(inst, DroKind::Linear)?;
    let (e, _) = inst.center.projected_mean_var(&inst.w);
    let wn = inst.w.norm();
    let d = inst.w.len();
    assemble(inst, DMatrix::identity(d, d), &inst.w * (inst.eps / wn), e + inst.eps * wn, None)
}

/// Coefficients (leading first) of the quartic whose admissible root is the
/// multiplier of the mean-variance problem.
pub fn mean_variance_quartic(w_norm_sq: f64, rho: f64, var: f64, eps: f64) -> [f64; 5] {
    let (a, e2) = (w_norm_sq, eps * eps);
    [
        1.0,
        -2.0 * rho * a,
        -(rho * rho * a / e2) * var - a / (4.0 * e2) + rho * rho * a * a,
        rho * a * a / (2.0 * e2),
        -rho * rho * a * a * a / (4.0 * e2),
    ]
}

/// `E|T - Id|^2` of the mean-variance map with multiplier `lambda`.
pub fn mean_variance_transport_cost(w_norm_sq: f64, rho: f64, var: f64, lambda: f64) -> f64 {
    let a = w_norm_sq;
    a / (4.0 * lambda * lambda) + a * rho * rho * var / (lambda - rho * a).powi(2)
}

/// Roots of the quartic above `rho |w|^2` that also solve the transport-cost
/// equation they were derived from (clearing denominators adds spurious
/// roots near `rho |w|^2`).
pub fn admissible_mean_variance_roots(w_norm_sq: f64, rho: f64, var: f64, eps: f64) -> Vec<f64> {
    let coeffs = mean_variance_quartic(w_norm_sq, rho, var, eps);
    let threshold = rho * w_norm_sq;
    let scale = threshold + w_norm_sq.sqrt() / (2.0 * eps);
    let mut found: Vec<f64> = Vec::new();
    for r in poly::real_roots(&coeffs, scale) {
        if !(r > threshold) {
            continue;
        }
        let cost = mean_variance_transport_cost(w_norm_sq, rho, var, r);
        if (cost / (eps * eps) - 1.0).abs() > 1e-6 {
            continue;
        }
        if !found.iter().any(|f| (f - r).abs() <= 1e-8 * r.abs()) {
            found.push(r);
        }
    }
    found
}

pub fn solve_mean_variance(inst: &DroInstance) -> Result<DroSolution> {
    expect_kind(inst, DroKind::MeanVariance)?;
    let rho = inst.rho();
    let (e, var) = inst.center.projected_mean_var(&inst.w);
    let a = inst.w.norm_squared();
    let threshold = rho * a;
    let roots = admissible_mean_variance_roots(a, rho, var, inst.eps);
    let lambda = match roots.as_slice() {
        [] => return Err(Error::NoValidRoot { threshold }),
        [r] => *r,
        many => return Err(Error::MultipleValidRoots { count: many.len(), threshold }),
    };
    let k = rho / (lambda - threshold);
    let d = inst.w.len();
    let wwt = &inst.w * inst.w.transpose();
    let map_a = DMatrix::identity(d, d) + &wwt * k;
    let mean = inst.center.mean();
    let map_b = &inst.w * (1.0 / (2.0 * lambda)) - &inst.w * (k * inst.w.dot(&mean));
    let inflate = 1.0 / (1.0 - threshold / lambda);
    let worst_value = e + a / (2.0 * lambda) + rho * inflate * inflate * var;
    assemble(inst, map_a, map_b, worst_value, Some(lambda))
}

pub fn solve_mean_std(inst: &DroInstance) -> Result<DroSolution> {
    expect_kind(inst, DroKind::MeanStd)?;
    let rho = inst.rho();
    let (e, var) = inst.center.projected_mean_var(&inst.w);
    let std = var.sqrt();
    let wn = inst.w.norm();
    let root = (1.0 + rho * rho).sqrt();
    let kappa = rho * inst.eps / (wn * root * std);
    let d = inst.w.len();
    let map_a = DMatrix::identity(d, d) + &inst.w * inst.w.transpose() * kappa;
    let map_b = &inst.w * (inst.eps / (root * wn)) - &inst.w * (kappa * e);
    let worst_value = e + rho * std + inst.eps * wn * root;
    assemble(inst, map_a, map_b, worst_value, None)
}

/// Dual objective `lambda eps^2 + E<w, x> + |w|^2 / (4 lambda)` of the linear problem.
pub fn dual_value_linear(inst: &DroInstance, lambda: f64) -> Result<f64> {
    expect_kind(inst, DroKind::Linear)?;
    if !(lambda > 0.0) {
        return Err(Error::NonpositiveLambda(lambda));
    }
    let (e, _) = inst.center.projected_mean_var(&inst.w);
    Ok(lambda * inst.eps * inst.eps + e + inst.w.norm_squared() / (4.0 * lambda))
}

/// Sufficiency certificate for `sol` as a minimizer of `-J` over the ball.
///
/// Linear and mean-variance solutions go through the ball rule with the
/// multiplier of `W2^2`; mean-std solutions are certified by attaining the
/// universal upper bound `J(center) + eps |w| sqrt(1 + rho^2)`.
pub fn certify_solution(inst: &DroInstance, sol: &DroSolution, tol: f64) -> Result<SufficiencyCertificate> {
    let neg = inst.functional().negated();
    let lambda = match inst.kind {
        DroKind::Linear => inst.w.norm() / (2.0 * inst.eps),
        DroKind::MeanVariance => sol.lambda_star.ok_or_else(|| {
            Error::InvalidInstance("mean-variance solution lacks its multiplier".into())
        })?,
        DroKind::MeanStd => {
            let bound = sol.nominal_value + inst.eps * inst.w.norm() * (1.0 + inst.rho() * inst.rho()).sqrt();
            let value = neg.evaluate_discrete(&sol.worst_measure)?;
            return Ok(optimality::certify_bound(value, -bound, tol));
        }
    };
    let ball = Constraint::w2_ball(inst.center.clone(), inst.eps);
    optimality::certify(&neg, &ball, &sol.worst_measure, lambda, tol)
}
