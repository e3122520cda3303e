//! First-order optimality checks: stationarity, Lagrange alignment and
//! sufficiency certificates built from convexity metadata.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{monomial_fields, ConvexityMode, Functional, PolynomialTestFunction, ScalarField};
use crate::measure::{DiscreteMeasure, Measure, VelocityField};

pub const DEFAULT_TOL: f64 = 1e-8;

/// Gradients with `L^2` norm at or below this are treated as vanishing.
const DEGENERATE_GRADIENT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub residual: f64,
    pub satisfied: bool,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangeReport {
    /// Least-squares `lambda` in `grad J = lambda grad K`.
    pub lambda_hat: f64,
    /// `|grad J - lambda_hat grad K|_{L^2(mu)}`.
    pub residual: f64,
    pub constraint_value: f64,
    /// `max |<grad K, grad psi>|` over monomial test functions `psi`.
    pub qualification: f64,
}

/// Constraint attached to a minimization problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Constraint {
    Unconstrained,
    /// `K(mu) = 0`.
    Equality { k: Functional },
    /// `K(mu) <= 0`.
    Inequality { k: Functional },
    /// `W_c(mu, center) <= budget` for the transport cost `c(x, y) = h(x - y)`.
    /// For `h = |.|^2` a Wasserstein ball of radius `eps` has `budget = eps^2`.
    Ball { center: DiscreteMeasure, budget: f64, cost: ScalarField },
}

impl Constraint {
    /// The squared-Euclidean ball `W2(mu, center) <= eps`.
    pub fn w2_ball(center: DiscreteMeasure, eps: f64) -> Self {
        let d = center.dim();
        Constraint::Ball { center, budget: eps * eps, cost: ScalarField::squared_norm(d) }
    }

    /// The constraint as a functional `K` with `K <= 0` (or `= 0`) feasible.
    pub fn as_functional(&self) -> Option<Functional> {
        match self {
            Constraint::Unconstrained => None,
            Constraint::Equality { k } | Constraint::Inequality { k } => Some(k.clone()),
            Constraint::Ball { center, budget, cost } => {
                let d = center.dim();
                Some(Functional::combination(vec![
                    (1.0, Functional::ot_discrepancy(cost.clone(), center.clone())),
                    (-*budget, Functional::expected_value(ScalarField::linear(nalgebra::DVector::zeros(d), 1.0))),
                ]))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Unconstrained,
    EqualityLinearK,
    InequalityConvex,
    OtBall,
    /// The value matches a known global bound on the objective.
    BoundAttained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    GlobalMin,
    StrictMin,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyCertificate {
    pub kind: CertificateKind,
    /// Multiplier in the convention `grad J + lambda grad K = 0`.
    pub lambda: f64,
    /// Smallest multiplier the rule accepts.
    pub threshold: f64,
    pub strict: bool,
    pub verdict: Verdict,
    pub residual: f64,
    pub reason: String,
}

impl SufficiencyCertificate {
    fn inconclusive(kind: CertificateKind, lambda: f64, residual: f64, reason: impl Into<String>) -> Self {
        Self {
            kind,
            lambda,
            threshold: f64::NAN,
            strict: false,
            verdict: Verdict::Inconclusive,
            residual,
            reason: reason.into(),
        }
    }

    fn global(kind: CertificateKind, lambda: f64, threshold: f64, strict: bool, residual: f64) -> Self {
        Self {
            kind,
            lambda,
            threshold,
            strict,
            verdict: if strict { Verdict::StrictMin } else { Verdict::GlobalMin },
            residual,
            reason: String::new(),
        }
    }

    pub fn is_global(&self) -> bool {
        self.verdict != Verdict::Inconclusive
    }
}

/// `|grad J|_{L^2(mu)}` against `tol`.
pub fn check_stationarity(j: &Functional, mu: &Measure, tol: f64) -> Result<StationarityReport> {
    let residual = match mu {
        Measure::Discrete(m) => j.gradient(m)?.norm(),
        Measure::Gaussian(g) => j.gaussian_gradient(g)?.l2_norm(g),
    };
    Ok(StationarityReport { residual, satisfied: residual <= tol, tolerance: tol })
}

/// Fits `grad J = lambda grad K` in `L^2(mu)`.
pub fn estimate_multiplier(j: &Functional, k: &Functional, mu: &DiscreteMeasure) -> Result<LagrangeReport> {
    let gj = j.gradient(mu)?;
    let gk = k.gradient(mu)?;
    let nk = gk.norm();
    if nk <= DEGENERATE_GRADIENT {
        return Err(Error::DegenerateConstraintGradient(nk));
    }
    let lambda_hat = gj.inner(&gk) / (nk * nk);
    let residual = gj.add_scaled(-lambda_hat, &gk).norm();
    Ok(LagrangeReport {
        lambda_hat,
        residual,
        constraint_value: k.evaluate_discrete(mu)?,
        qualification: qualification(&gk, mu),
    })
}

fn qualification(gk: &VelocityField, mu: &DiscreteMeasure) -> f64 {
    monomial_fields(mu, PolynomialTestFunction::MAX_DEGREE)
        .iter()
        .map(|f| gk.inner(f).abs())
        .fold(0.0, f64::max)
}

/// Applies the sufficiency rule matching `constraint` at a candidate `mu`
/// with multiplier `lambda` (convention `grad J + lambda grad K = 0`).
pub fn certify(
    j: &Functional,
    constraint: &Constraint,
    mu: &DiscreteMeasure,
    lambda: f64,
    tol: f64,
) -> Result<SufficiencyCertificate> {
    let kind = match constraint {
        Constraint::Unconstrained => CertificateKind::Unconstrained,
        Constraint::Equality { .. } => CertificateKind::EqualityLinearK,
        Constraint::Inequality { .. } => CertificateKind::InequalityConvex,
        Constraint::Ball { .. } => CertificateKind::OtBall,
    };
    let gj = j.gradient(mu)?;
    let k = constraint.as_functional();
    let (residual, k_value) = match &k {
        None => (gj.norm(), 0.0),
        Some(k) => (gj.add_scaled(lambda, &k.gradient(mu)?).norm(), k.evaluate_discrete(mu)?),
    };
    if !(residual <= tol) {
        return Ok(SufficiencyCertificate::inconclusive(
            kind,
            lambda,
            residual,
            format!("first-order residual {residual:e} exceeds tolerance {tol:e}"),
        ));
    }
    let cj = j.convexity();
    let Some(alpha_j) = cj.alpha.filter(|_| cj.is_known()) else {
        return Ok(SufficiencyCertificate::inconclusive(kind, lambda, residual, "convexity of J unknown"));
    };

    let cert = match constraint {
        Constraint::Unconstrained => {
            if alpha_j >= 0.0 {
                SufficiencyCertificate::global(kind, lambda, 0.0, alpha_j > 0.0, residual)
            } else {
                SufficiencyCertificate::inconclusive(kind, lambda, residual, "J is not convex")
            }
        }
        Constraint::Equality { k } => {
            let common = cj.mode.min(k.convexity().mode).min(k.negated_convexity().mode);
            if k_value.abs() > tol {
                SufficiencyCertificate::inconclusive(kind, lambda, residual, "equality constraint violated")
            } else if !k.is_linear() || common == ConvexityMode::None {
                SufficiencyCertificate::inconclusive(kind, lambda, residual, "K is not linear")
            } else if alpha_j >= 0.0 {
                SufficiencyCertificate::global(kind, lambda, f64::NEG_INFINITY, alpha_j > 0.0, residual)
            } else {
                SufficiencyCertificate::inconclusive(kind, lambda, residual, "J is not convex")
            }
        }
        Constraint::Inequality { k } => {
            let ck = k.convexity();
            match ck.alpha.filter(|_| ck.is_known()) {
                None => SufficiencyCertificate::inconclusive(kind, lambda, residual, "convexity of K unknown"),
                Some(alpha_k) => {
                    if cj.mode.min(ck.mode) == ConvexityMode::None || alpha_j < 0.0 || alpha_k < 0.0 {
                        SufficiencyCertificate::inconclusive(kind, lambda, residual, "J or K is not convex")
                    } else if lambda < 0.0 {
                        SufficiencyCertificate::inconclusive(kind, lambda, residual, "negative multiplier")
                    } else if k_value > tol {
                        SufficiencyCertificate::inconclusive(kind, lambda, residual, "constraint violated")
                    } else if lambda > 0.0 && k_value.abs() > tol {
                        SufficiencyCertificate::inconclusive(kind, lambda, residual, "complementary slackness fails")
                    } else {
                        let strict = alpha_j + lambda * alpha_k > 0.0;
                        SufficiencyCertificate::global(kind, lambda, 0.0, strict, residual)
                    }
                }
            }
        }
        Constraint::Ball { budget, cost, .. } => {
            let slack = tol * (1.0 + budget);
            let alpha_c = cost.hessian_bounds().map(|(m, _)| m);
            match alpha_c {
                Some(alpha_c) if alpha_c > 0.0 => {
                    let threshold = (-alpha_j).max(0.0) / alpha_c;
                    if cj.mode < ConvexityMode::GeneralizedGeodesic {
                        SufficiencyCertificate::inconclusive(
                            kind,
                            lambda,
                            residual,
                            "J is not convex along generalized geodesics",
                        )
                    } else if k_value > slack {
                        SufficiencyCertificate::inconclusive(kind, lambda, residual, "outside the ball")
                    } else if lambda > 0.0 && k_value.abs() > slack {
                        SufficiencyCertificate::inconclusive(kind, lambda, residual, "boundary not active")
                    } else if lambda < threshold {
                        let mut c = SufficiencyCertificate::inconclusive(
                            kind,
                            lambda,
                            residual,
                            format!("multiplier below threshold {threshold}"),
                        );
                        c.threshold = threshold;
                        c
                    } else {
                        let strict = alpha_j > 0.0 || lambda > threshold;
                        SufficiencyCertificate::global(kind, lambda, threshold, strict, residual)
                    }
                }
                _ => SufficiencyCertificate::inconclusive(kind, lambda, residual, "cost is not strongly convex"),
            }
        }
    };
    Ok(cert)
}

/// Global optimality from a matching bound: `value` is a minimum whenever
/// `value <= lower_bound` holds up to `tol` (relative to the bound's size).
pub fn certify_bound(value: f64, lower_bound: f64, tol: f64) -> SufficiencyCertificate {
    let gap = value - lower_bound;
    if gap.abs() <= tol * (1.0 + lower_bound.abs()) {
        let mut c = SufficiencyCertificate::global(CertificateKind::BoundAttained, f64::NAN, lower_bound, false, gap.abs());
        c.reason = "value attains the global bound".into();
        c
    } else {
        SufficiencyCertificate::inconclusive(
            CertificateKind::BoundAttained,
            f64::NAN,
            gap.abs(),
            format!("gap {gap:e} to the bound"),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn line(points: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::uniform_from_rows(points.iter().map(|p| vec![*p]).collect()).unwrap()
    }

    fn one() -> DVector<f64> {
        DVector::from_element(1, 1.0)
    }

    fn half_square() -> Functional {
        Functional::expected_value(ScalarField::half_squared_norm(1))
    }

    #[test]
    fn stationarity_examples() {
        let r = check_stationarity(&half_square(), &line(&[0.0]).into(), 1e-6).unwrap();
        assert_eq!(r.residual, 0.0);
        assert!(r.satisfied);
        let r = check_stationarity(&half_square(), &line(&[1.0]).into(), 1e-6).unwrap();
        assert_eq!(r.residual, 1.0);
        assert!(!r.satisfied);
        let r = check_stationarity(&Functional::variance(one()), &line(&[3.7]).into(), 0.0).unwrap();
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn multiplier_examples() {
        let k = Functional::expected_value(ScalarField::linear(one(), -1.0));
        let r = estimate_multiplier(&half_square(), &k, &line(&[1.0])).unwrap();
        assert_eq!(r.lambda_hat, 1.0);
        assert_eq!(r.residual, 0.0);
        assert_eq!(r.constraint_value, 0.0);

        let r = estimate_multiplier(&k, &k, &line(&[0.3, 2.0])).unwrap();
        assert_eq!(r.lambda_hat, 1.0);

        let mu = DiscreteMeasure::uniform_from_rows(vec![vec![0.0, 0.0]]).unwrap();
        let jx = Functional::expected_value(ScalarField::linear(DVector::from_vec(vec![1.0, 0.0]), 0.0));
        let ky = Functional::expected_value(ScalarField::linear(DVector::from_vec(vec![0.0, 1.0]), 0.0));
        let r = estimate_multiplier(&jx, &ky, &mu).unwrap();
        assert_eq!(r.lambda_hat, 0.0);
        assert_eq!(r.residual, 1.0);

        let flat = Functional::variance(one());
        assert!(matches!(
            estimate_multiplier(&half_square(), &flat, &line(&[1.0])),
            Err(Error::DegenerateConstraintGradient(_))
        ));
    }

    #[test]
    fn rescaled_constraint_rescales_multiplier() {
        let mu = line(&[-0.4, 0.3, 1.9]);
        let j = Functional::expected_value(ScalarField::LogSumExp {
            a: nalgebra::DMatrix::from_row_slice(2, 1, &[1.0, -2.0]),
            b: DVector::from_vec(vec![0.0, 0.5]),
        });
        let k = Functional::variance(one());
        let base = estimate_multiplier(&j, &k, &mu).unwrap();
        for c in [-3.0, 0.25, 7.0] {
            let r = estimate_multiplier(&j, &k.clone().scaled(c), &mu).unwrap();
            assert!((r.lambda_hat * c - base.lambda_hat).abs() < 1e-10);
            assert!((r.residual - base.residual).abs() < 1e-10);
        }
    }

    #[test]
    fn unconstrained_certificates() {
        let c = certify(&half_square(), &Constraint::Unconstrained, &line(&[0.0]), 0.0, DEFAULT_TOL).unwrap();
        assert_eq!(c.verdict, Verdict::StrictMin);
        let c = certify(&half_square(), &Constraint::Unconstrained, &line(&[1.0]), 0.0, DEFAULT_TOL).unwrap();
        assert_eq!(c.verdict, Verdict::Inconclusive);
        let c = certify(&Functional::mean_std(one(), 1.0), &Constraint::Unconstrained, &line(&[0.0, 1.0]), 0.0, 10.0)
            .unwrap();
        assert_eq!(c.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn worked_example_pipeline() {
        let k = Functional::expected_value(ScalarField::linear(one(), -1.0));
        let mu = line(&[1.0]);
        let r = estimate_multiplier(&half_square(), &k, &mu).unwrap();
        let c = certify(&half_square(), &Constraint::Equality { k }, &mu, -r.lambda_hat, DEFAULT_TOL).unwrap();
        assert_eq!(c.kind, CertificateKind::EqualityLinearK);
        assert_eq!(c.verdict, Verdict::StrictMin);
    }

    #[test]
    fn inequality_certificate() {
        // min 1/2 E x^2 subject to 1 - E x <= 0, optimum delta_1 with lambda 1
        let k = Functional::expected_value(ScalarField::linear(-one(), 1.0));
        let mu = line(&[1.0]);
        let c = certify(&half_square(), &Constraint::Inequality { k: k.clone() }, &mu, 1.0, DEFAULT_TOL).unwrap();
        assert_eq!(c.verdict, Verdict::StrictMin);
        let c = certify(&half_square(), &Constraint::Inequality { k }, &mu, -1.0, DEFAULT_TOL).unwrap();
        assert_eq!(c.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn linear_dro_ball_certificate() {
        // max E<w, x> over W2(mu, delta_0) <= eps, negated into a minimization
        let (w, eps) = (DVector::from_vec(vec![3.0, 4.0]), 0.5);
        let center = DiscreteMeasure::uniform_from_rows(vec![vec![0.0, 0.0]]).unwrap();
        let worst = center.pushforward(|x| x + &w * (eps / w.norm())).unwrap();
        let j = Functional::expected_value(ScalarField::linear(w.clone(), 0.0)).negated();
        let ball = Constraint::w2_ball(center, eps);
        let lambda = w.norm() / (2.0 * eps);
        let c = certify(&j, &ball, &worst, lambda, DEFAULT_TOL).unwrap();
        assert_eq!(c.verdict, Verdict::StrictMin);
        assert_eq!(c.threshold, 0.0);
        let wrong = certify(&j, &ball, &worst, lambda * 1.5, DEFAULT_TOL).unwrap();
        assert_eq!(wrong.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn bound_certificate() {
        assert!(certify_bound(-3.0, -3.0, 1e-10).is_global());
        assert!(!certify_bound(-2.9, -3.0, 1e-10).is_global());
    }
}
