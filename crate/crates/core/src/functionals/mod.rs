//! Cost functionals on probability measures: values, Wasserstein gradients
//! and geodesic convexity metadata.

mod scalar;
mod testfield;

pub use scalar::{Monomial, ScalarField, ScalarFieldSpec};
pub use testfield::{monomial_exponents, monomial_fields, PolynomialTestFunction};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, serde_dvector};
use crate::measure::{DiscreteMeasure, GaussianMeasure, Measure, VelocityField};
use crate::ot;

/// Curves along which a convexity modulus is guaranteed, weakest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexityMode {
    None,
    Geodesic,
    GeneralizedGeodesic,
    AnyCurve,
}

/// `J` is `alpha`-convex along the curves described by `mode`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convexity {
    pub alpha: Option<f64>,
    pub mode: ConvexityMode,
}

impl Convexity {
    pub const UNKNOWN: Convexity = Convexity { alpha: None, mode: ConvexityMode::None };

    fn new(alpha: f64, mode: ConvexityMode) -> Self {
        Self { alpha: Some(alpha), mode }
    }

    pub fn is_known(&self) -> bool {
        self.alpha.is_some() && self.mode != ConvexityMode::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    pub functional: Functional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Functional {
    /// `int V dmu`.
    ExpectedValue { potential: ScalarField },
    /// `1/2 int int U(x - y) dmu(x) dmu(y)`.
    Interaction { kernel: ScalarField },
    /// Optimal transport cost to `reference` with ground cost `c(x, y) = h(x - y)`.
    OtDiscrepancy { cost: ScalarField, reference: DiscreteMeasure },
    /// `1/2 W2(mu, reference)^2`.
    SquaredW2 { reference: DiscreteMeasure },
    /// `Var_mu <a, x>`.
    Variance {
        #[serde(with = "serde_dvector")]
        a: DVector<f64>,
    },
    /// `E <w, x> + rho Var <w, x>`.
    MeanVariance {
        #[serde(with = "serde_dvector")]
        w: DVector<f64>,
        rho: f64,
    },
    /// `E <w, x> + rho Std <w, x>`.
    MeanStd {
        #[serde(with = "serde_dvector")]
        w: DVector<f64>,
        rho: f64,
    },
    /// Negative differential entropy `int rho log rho` of a Gaussian.
    GaussianEntropy,
    /// `KL(mu || reference)` between Gaussians.
    GaussianKl { reference: GaussianMeasure },
    /// `sum_k coef_k J_k`.
    Combination { terms: Vec<Term> },
}

/// Affine vector field `x -> G x + h`, the form every Gaussian gradient takes.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineField {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineField {
    pub fn zeros(d: usize) -> Self {
        Self { matrix: DMatrix::zeros(d, d), offset: DVector::zeros(d) }
    }

    pub fn at(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x + &self.offset
    }

    /// Evaluates the field on the atoms of `mu`.
    pub fn on_atoms(&self, mu: &DiscreteMeasure) -> Result<VelocityField> {
        VelocityField::from_fn(mu, |x| self.at(x))
    }

    /// `|G x + h|_{L^2(g)}` in closed form.
    pub fn l2_norm(&self, g: &GaussianMeasure) -> f64 {
        let cov_part = (&self.matrix * g.cov() * self.matrix.transpose()).trace();
        let mean_part = (&self.matrix * g.mean() + &self.offset).norm_squared();
        (cov_part + mean_part).max(0.0).sqrt()
    }

    fn add_scaled(&mut self, c: f64, other: &AffineField) {
        self.matrix += &other.matrix * c;
        self.offset += &other.offset * c;
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn check_weight_vector(w: &DVector<f64>, rho: Option<f64>) -> Result<()> {
    if w.is_empty() || w.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInstance("direction vector must be finite and nonempty".into()));
    }
    if let Some(rho) = rho {
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::InvalidInstance(format!("rho must be finite and nonnegative, got {rho}")));
        }
    }
    Ok(())
}

impl Functional {
    pub fn expected_value(potential: ScalarField) -> Self {
        Self::ExpectedValue { potential }
    }

    pub fn interaction(kernel: ScalarField) -> Self {
        Self::Interaction { kernel }
    }

    pub fn squared_w2(reference: DiscreteMeasure) -> Self {
        Self::SquaredW2 { reference }
    }

    pub fn ot_discrepancy(cost: ScalarField, reference: DiscreteMeasure) -> Self {
        Self::OtDiscrepancy { cost, reference }
    }

    pub fn variance(a: DVector<f64>) -> Self {
        Self::Variance { a }
    }

    pub fn mean_variance(w: DVector<f64>, rho: f64) -> Self {
        Self::MeanVariance { w, rho }
    }

    pub fn mean_std(w: DVector<f64>, rho: f64) -> Self {
        Self::MeanStd { w, rho }
    }

    pub fn combination(terms: Vec<(f64, Functional)>) -> Self {
        Self::Combination {
            terms: terms.into_iter().map(|(coef, functional)| Term { coef, functional }).collect(),
        }
    }

    pub fn scaled(self, c: f64) -> Self {
        Self::combination(vec![(c, self)])
    }

    pub fn negated(self) -> Self {
        self.scaled(-1.0)
    }

    /// Ambient dimension fixed by the parameters, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::ExpectedValue { potential } => Some(potential.dim()),
            Self::Interaction { kernel } => Some(kernel.dim()),
            Self::OtDiscrepancy { reference, .. } | Self::SquaredW2 { reference } => Some(reference.dim()),
            Self::Variance { a } => Some(a.len()),
            Self::MeanVariance { w, .. } | Self::MeanStd { w, .. } => Some(w.len()),
            Self::GaussianEntropy => None,
            Self::GaussianKl { reference } => Some(reference.dim()),
            Self::Combination { terms } => terms.iter().find_map(|t| t.functional.dim()),
        }
    }

    /// Parameter checks for descriptors read from untrusted input.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::OtDiscrepancy { cost, reference } => check_dim(reference.dim(), cost.dim()),
            Self::Variance { a } => check_weight_vector(a, None),
            Self::MeanVariance { w, rho } | Self::MeanStd { w, rho } => check_weight_vector(w, Some(*rho)),
            Self::Combination { terms } => {
                let mut dim = None;
                for t in terms {
                    if !t.coef.is_finite() {
                        return Err(Error::InvalidInstance("non-finite combination coefficient".into()));
                    }
                    t.functional.validate()?;
                    match (dim, t.functional.dim()) {
                        (Some(a), Some(b)) => check_dim(a, b)?,
                        (None, b) => dim = b,
                        _ => {}
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn is_gaussian_kind(&self) -> bool {
        match self {
            Self::GaussianEntropy | Self::GaussianKl { .. } => true,
            Self::Combination { terms } => terms.iter().all(|t| t.functional.is_gaussian_kind()),
            _ => false,
        }
    }

    pub fn evaluate(&self, mu: &Measure) -> Result<f64> {
        match mu {
            Measure::Discrete(m) => self.evaluate_discrete(m),
            Measure::Gaussian(g) => self.evaluate_gaussian(g),
        }
    }

    pub fn evaluate_discrete(&self, mu: &DiscreteMeasure) -> Result<f64> {
        if let Some(d) = self.dim() {
            check_dim(d, mu.dim())?;
        }
        match self {
            Self::ExpectedValue { potential } => Ok(mu.expect(|x| potential.eval(x))),
            Self::Interaction { kernel } => {
                let mut total = 0.0;
                for (x, wx) in mu.iter() {
                    for (y, wy) in mu.iter() {
                        total += wx * wy * kernel.eval(&(x - y));
                    }
                }
                Ok(0.5 * total)
            }
            Self::OtDiscrepancy { cost, reference } => Ok(ot_plan(cost, mu, reference)?.cost),
            Self::SquaredW2 { reference } => Ok(0.5 * ot::solve_ot(mu, reference)?.cost),
            Self::Variance { a } => Ok(mu.projected_mean_var(a).1),
            Self::MeanVariance { w, rho } => {
                let (e, v) = mu.projected_mean_var(w);
                Ok(e + rho * v)
            }
            Self::MeanStd { w, rho } => {
                let (e, v) = mu.projected_mean_var(w);
                Ok(e + rho * v.max(0.0).sqrt())
            }
            Self::GaussianEntropy | Self::GaussianKl { .. } => Err(Error::IncompatibleRepresentation(
                "gaussian functionals need a gaussian measure".into(),
            )),
            Self::Combination { terms } => {
                terms.iter().map(|t| Ok(t.coef * t.functional.evaluate_discrete(mu)?)).sum()
            }
        }
    }

    pub fn evaluate_gaussian(&self, g: &GaussianMeasure) -> Result<f64> {
        if let Some(d) = self.dim() {
            check_dim(d, g.dim())?;
        }
        match self {
            Self::GaussianEntropy => {
                let d = g.dim() as f64;
                Ok(-0.5 * (d * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + linalg::log_det_spd(g.cov())))
            }
            Self::GaussianKl { reference } => Ok(gaussian_kl(g, reference)),
            Self::Combination { terms } => {
                terms.iter().map(|t| Ok(t.coef * t.functional.evaluate_gaussian(g)?)).sum()
            }
            _ => Err(Error::IncompatibleRepresentation(
                "this functional is evaluated on discrete measures".into(),
            )),
        }
    }

    /// Wasserstein gradient `grad_mu J(mu)` on the atoms of `mu`.
    pub fn gradient(&self, mu: &DiscreteMeasure) -> Result<VelocityField> {
        if let Some(d) = self.dim() {
            check_dim(d, mu.dim())?;
        }
        match self {
            Self::ExpectedValue { potential } => VelocityField::from_fn(mu, |x| potential.grad(x)),
            Self::Interaction { kernel } => {
                // Symmetrized so that odd parts of U cancel, as they do in the energy.
                let vectors = mu
                    .atoms()
                    .iter()
                    .map(|x| {
                        let mut g = DVector::zeros(mu.dim());
                        for (y, wy) in mu.iter() {
                            let diff = x - y;
                            g += (kernel.grad(&diff) - kernel.grad(&(-&diff))) * (0.5 * wy);
                        }
                        g
                    })
                    .collect();
                VelocityField::new(mu, vectors)
            }
            Self::OtDiscrepancy { cost, reference } => {
                let map = deterministic_map(&ot_plan(cost, mu, reference)?)?;
                let v = mu.atoms().iter().zip(&map.images).map(|(x, t)| cost.grad(&(x - t))).collect();
                VelocityField::new(mu, v)
            }
            Self::SquaredW2 { reference } => {
                let map = deterministic_map(&ot::solve_ot(mu, reference)?)?;
                Ok(map.displacement().scaled(-1.0))
            }
            Self::Variance { a } => {
                let (e, _) = mu.projected_mean_var(a);
                VelocityField::from_fn(mu, |x| a * (2.0 * (a.dot(x) - e)))
            }
            Self::MeanVariance { w, rho } => {
                let (e, _) = mu.projected_mean_var(w);
                VelocityField::from_fn(mu, |x| w * (1.0 + 2.0 * rho * (w.dot(x) - e)))
            }
            Self::MeanStd { w, rho } => {
                let (e, v) = mu.projected_mean_var(w);
                let std = v.max(0.0).sqrt();
                let scale = mu.atoms().iter().map(|x| w.dot(x).abs()).fold(0.0, f64::max);
                if std <= 1e-12 * scale || std == 0.0 {
                    return Err(Error::ZeroStd);
                }
                VelocityField::from_fn(mu, |x| w * (1.0 + rho * (w.dot(x) - e) / std))
            }
            Self::GaussianEntropy | Self::GaussianKl { .. } => Err(Error::IncompatibleRepresentation(
                "gaussian functionals have affine gradients; use gaussian_gradient".into(),
            )),
            Self::Combination { terms } => {
                let mut acc = VelocityField::zeros(mu);
                for t in terms {
                    acc = acc.add_scaled(t.coef, &t.functional.gradient(mu)?);
                }
                Ok(acc)
            }
        }
    }

    /// Gradient of a Gaussian functional at `g` as affine field coefficients.
    pub fn gaussian_gradient(&self, g: &GaussianMeasure) -> Result<AffineField> {
        if let Some(d) = self.dim() {
            check_dim(d, g.dim())?;
        }
        if !self.is_gaussian_kind() {
            return Err(Error::IncompatibleRepresentation(
                "only gaussian functionals have closed-form gaussian gradients".into(),
            ));
        }
        let prec = linalg::sym_inv(g.cov());
        match self {
            Self::GaussianEntropy => Ok(AffineField { offset: &prec * g.mean(), matrix: -prec }),
            Self::GaussianKl { reference } => {
                let ref_prec = linalg::sym_inv(reference.cov());
                Ok(AffineField {
                    offset: &prec * g.mean() - &ref_prec * reference.mean(),
                    matrix: ref_prec - prec,
                })
            }
            Self::Combination { terms } => {
                let mut acc = AffineField::zeros(g.dim());
                for t in terms {
                    acc.add_scaled(t.coef, &t.functional.gaussian_gradient(g)?);
                }
                Ok(acc)
            }
            _ => unreachable!("checked by is_gaussian_kind"),
        }
    }

    /// Convexity modulus of `J`.
    pub fn convexity(&self) -> Convexity {
        use ConvexityMode::*;
        match self {
            Self::ExpectedValue { potential } => match potential.hessian_bounds() {
                Some((m, _)) => Convexity::new(m, AnyCurve),
                Option::None => Convexity::UNKNOWN,
            },
            Self::Interaction { kernel } => match kernel.hessian_bounds() {
                Some((m, _)) => Convexity::new(m.min(0.0), AnyCurve),
                Option::None => Convexity::UNKNOWN,
            },
            Self::OtDiscrepancy { cost, .. } => match cost.hessian_bounds() {
                Some((m, _)) => Convexity::new(m, GeneralizedGeodesic),
                Option::None => Convexity::UNKNOWN,
            },
            Self::SquaredW2 { .. } => Convexity::new(1.0, GeneralizedGeodesic),
            Self::Variance { .. } | Self::MeanVariance { .. } => Convexity::new(0.0, AnyCurve),
            Self::MeanStd { .. } => Convexity::UNKNOWN,
            Self::GaussianEntropy => Convexity::new(0.0, GeneralizedGeodesic),
            Self::GaussianKl { reference } => {
                Convexity::new(1.0 / linalg::max_eigenvalue(reference.cov()), GeneralizedGeodesic)
            }
            Self::Combination { terms } => combine(terms),
        }
    }

    /// Convexity modulus of `-J`.
    pub fn negated_convexity(&self) -> Convexity {
        use ConvexityMode::*;
        match self {
            Self::ExpectedValue { potential } => match potential.hessian_bounds() {
                Some((_, big)) => Convexity::new(-big, AnyCurve),
                Option::None => Convexity::UNKNOWN,
            },
            Self::Interaction { kernel } => match kernel.hessian_bounds() {
                Some((_, big)) => Convexity::new(-big.max(0.0), AnyCurve),
                Option::None => Convexity::UNKNOWN,
            },
            Self::OtDiscrepancy { cost, .. } => match cost.hessian_bounds() {
                Some((_, big)) => Convexity::new(-big, AnyCurve),
                Option::None => Convexity::UNKNOWN,
            },
            Self::SquaredW2 { .. } => Convexity::new(-1.0, AnyCurve),
            Self::Variance { a } => Convexity::new(-2.0 * a.norm_squared(), AnyCurve),
            Self::MeanVariance { w, rho } => Convexity::new(-2.0 * rho * w.norm_squared(), AnyCurve),
            Self::MeanStd { .. } | Self::GaussianEntropy | Self::GaussianKl { .. } => Convexity::UNKNOWN,
            Self::Combination { terms } => {
                let flipped: Vec<Term> =
                    terms.iter().map(|t| Term { coef: -t.coef, functional: t.functional.clone() }).collect();
                combine(&flipped)
            }
        }
    }

    /// Both `J` and `-J` are 0-convex along every curve of a common family.
    pub fn is_linear(&self) -> bool {
        let (p, n) = (self.convexity(), self.negated_convexity());
        p.is_known() && n.is_known() && p.alpha >= Some(0.0) && n.alpha >= Some(0.0)
    }
}

fn combine(terms: &[Term]) -> Convexity {
    let mut alpha = 0.0;
    let mut mode = ConvexityMode::AnyCurve;
    for t in terms {
        if t.coef == 0.0 {
            continue;
        }
        let part = if t.coef > 0.0 { t.functional.convexity() } else { t.functional.negated_convexity() };
        match part.alpha {
            Some(a) if part.mode != ConvexityMode::None => {
                alpha += t.coef.abs() * a;
                mode = mode.min(part.mode);
            }
            _ => return Convexity::UNKNOWN,
        }
    }
    Convexity::new(alpha, mode)
}

fn ot_plan(cost: &ScalarField, mu: &DiscreteMeasure, reference: &DiscreteMeasure) -> Result<ot::TransportPlan> {
    check_dim(reference.dim(), mu.dim())?;
    let c = DMatrix::from_fn(mu.len(), reference.len(), |i, j| {
        cost.eval(&(&mu.atoms()[i] - &reference.atoms()[j]))
    });
    ot::solve_ot_with_cost(mu, reference, &c)
}

fn deterministic_map(plan: &ot::TransportPlan) -> Result<ot::TransportMap> {
    let map = ot::extract_map(plan);
    if !map.deterministic {
        return Err(Error::NondeterministicMap);
    }
    Ok(map)
}

/// `KL(N(m, S) || N(m_r, S_r))`.
pub fn gaussian_kl(g: &GaussianMeasure, reference: &GaussianMeasure) -> f64 {
    let ref_prec = linalg::sym_inv(reference.cov());
    let dm = reference.mean() - g.mean();
    let d = g.dim() as f64;
    0.5 * ((&ref_prec * g.cov()).trace() + dm.dot(&(&ref_prec * &dm)) - d
        + linalg::log_det_spd(reference.cov())
        - linalg::log_det_spd(g.cov()))
}

/// Largest `|v_i - v_j| / |x_i - x_j|` over distinct atom pairs.
pub fn lipschitz_estimate(mu: &DiscreteMeasure, field: &VelocityField) -> f64 {
    let (x, v) = (mu.atoms(), field.vectors());
    let mut best: f64 = 0.0;
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let dx = (&x[i] - &x[j]).norm();
            if dx > 0.0 {
                best = best.max((&v[i] - &v[j]).norm() / dx);
            }
        }
    }
    best
}

/// `(J((Id + s v)#mu) - J(mu)) / s` for a test field `v` over `mu`.
pub fn directional_derivative(
    functional: &Functional,
    mu: &DiscreteMeasure,
    field: &VelocityField,
    s: f64,
) -> Result<f64> {
    if field.len() != mu.len() {
        return Err(Error::DimensionMismatch { expected: mu.len(), found: field.len() });
    }
    if s == 0.0 || !s.is_finite() {
        return Err(Error::InvalidConfig(format!("step must be finite and nonzero, got {s}")));
    }
    let lipschitz = lipschitz_estimate(mu, field);
    if s.abs() * lipschitz >= 1.0 {
        return Err(Error::StepTooLarge { step: s, lipschitz });
    }
    let atoms = mu.atoms().iter().zip(field.vectors()).map(|(x, v)| x + v * s).collect();
    let moved = DiscreteMeasure::from_parts_unchecked(atoms, mu.weights().to_vec());
    Ok((functional.evaluate_discrete(&moved)? - functional.evaluate_discrete(mu)?) / s)
}
