//! Symbolic scalar fields `V: R^d -> R` used as potentials, interaction
//! kernels and transport costs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::measure::{matrix_from_rows, matrix_rows};

/// One term `coef * prod_k x_k^powers[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.powers.iter().sum()
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.powers.iter().zip(x.iter()).fold(self.coef, |acc, (p, v)| acc * v.powi(*p as i32))
    }

    pub fn grad_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        for k in 0..self.powers.len() {
            let pk = self.powers[k];
            if pk == 0 {
                continue;
            }
            let mut term = self.coef * f64::from(pk) * x[k].powi(pk as i32 - 1);
            for (l, (p, v)) in self.powers.iter().zip(x.iter()).enumerate() {
                if l != k {
                    term *= v.powi(*p as i32);
                }
            }
            out[k] += term;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScalarFieldSpec", into = "ScalarFieldSpec")]
pub enum ScalarField {
    /// `1/2 x^T Q x + b^T x + c` with symmetric `Q`.
    Quadratic { q: DMatrix<f64>, b: DVector<f64>, c: f64 },
    /// `a^T x + c`.
    Linear { a: DVector<f64>, c: f64 },
    /// `log sum_k exp(a_k^T x + b_k)`, rows of `a` are the `a_k`.
    LogSumExp { a: DMatrix<f64>, b: DVector<f64> },
    Polynomial { dim: usize, terms: Vec<Monomial> },
}

impl ScalarField {
    /// `1/2 |x|^2` in dimension `d`.
    pub fn half_squared_norm(d: usize) -> Self {
        Self::Quadratic { q: DMatrix::identity(d, d), b: DVector::zeros(d), c: 0.0 }
    }

    /// `|x|^2` in dimension `d`; as a cost `h(x - y)` this is squared Euclidean.
    pub fn squared_norm(d: usize) -> Self {
        Self::Quadratic { q: DMatrix::identity(d, d) * 2.0, b: DVector::zeros(d), c: 0.0 }
    }

    pub fn linear(a: DVector<f64>, c: f64) -> Self {
        Self::Linear { a, c }
    }

    pub fn quadratic(q: DMatrix<f64>, b: DVector<f64>, c: f64) -> Result<Self> {
        let d = b.len();
        if q.nrows() != d || q.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: q.nrows() });
        }
        Ok(Self::Quadratic { q: linalg::symmetrize(&q), b, c })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic { b, .. } => b.len(),
            Self::Linear { a, .. } => a.len(),
            Self::LogSumExp { a, .. } => a.ncols(),
            Self::Polynomial { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        match self {
            Self::Quadratic { q, b, c } => 0.5 * x.dot(&(q * x)) + b.dot(x) + c,
            Self::Linear { a, c } => a.dot(x) + c,
            Self::LogSumExp { a, b } => {
                let z = a * x + b;
                let top = z.max();
                top + z.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
            }
            Self::Polynomial { terms, .. } => terms.iter().map(|t| t.eval(x)).sum(),
        }
    }

    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Quadratic { q, b, .. } => q * x + b,
            Self::Linear { a, .. } => a.clone(),
            Self::LogSumExp { a, b } => {
                let z = a * x + b;
                let top = z.max();
                let e = z.map(|v| (v - top).exp());
                let p = &e / e.sum();
                a.transpose() * p
            }
            Self::Polynomial { dim, terms } => {
                let mut g = DVector::zeros(*dim);
                for t in terms {
                    t.grad_into(x, &mut g);
                }
                g
            }
        }
    }

    /// Bounds `(m, M)` with `m I <= Hess V <= M I` everywhere, when known.
    pub fn hessian_bounds(&self) -> Option<(f64, f64)> {
        match self {
            Self::Quadratic { q, .. } => Some((linalg::min_eigenvalue(q), linalg::max_eigenvalue(q))),
            Self::Linear { .. } => Some((0.0, 0.0)),
            Self::LogSumExp { a, .. } => {
                let top = a.row_iter().map(|r| r.norm_squared()).fold(0.0, f64::max);
                Some((0.0, top))
            }
            Self::Polynomial { dim, terms } => {
                if terms.iter().any(|t| t.degree() > 2) {
                    return None;
                }
                let mut h = DMatrix::zeros(*dim, *dim);
                for t in terms.iter().filter(|t| t.degree() == 2) {
                    let idx: Vec<usize> = (0..*dim).filter(|k| t.powers[*k] > 0).collect();
                    if idx.len() == 1 {
                        h[(idx[0], idx[0])] += 2.0 * t.coef;
                    } else {
                        h[(idx[0], idx[1])] += t.coef;
                        h[(idx[1], idx[0])] += t.coef;
                    }
                }
                Some((linalg::min_eigenvalue(&h), linalg::max_eigenvalue(&h)))
            }
        }
    }

    /// Largest `|Hess V|` in spectral norm, when known.
    pub fn hessian_norm_bound(&self) -> Option<f64> {
        self.hessian_bounds().map(|(m, big)| m.abs().max(big.abs()))
    }
}

/// Wire format for [`ScalarField`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ScalarFieldSpec {
    Quadratic { q: Vec<Vec<f64>>, b: Vec<f64>, #[serde(default)] c: f64 },
    Linear { a: Vec<f64>, #[serde(default)] c: f64 },
    LogSumExp { a: Vec<Vec<f64>>, b: Vec<f64> },
    Polynomial { dim: usize, terms: Vec<Monomial> },
}

impl TryFrom<ScalarFieldSpec> for ScalarField {
    type Error = Error;

    fn try_from(spec: ScalarFieldSpec) -> Result<Self> {
        let field = match spec {
            ScalarFieldSpec::Quadratic { q, b, c } => {
                let q = matrix_from_rows(&q)?;
                ScalarField::quadratic(q, DVector::from_vec(b), c)?
            }
            ScalarFieldSpec::Linear { a, c } => ScalarField::Linear { a: DVector::from_vec(a), c },
            ScalarFieldSpec::LogSumExp { a, b } => {
                let a = matrix_from_rows(&a)?;
                if a.nrows() == 0 || a.nrows() != b.len() {
                    return Err(Error::InvalidInstance("log-sum-exp needs one offset per row".into()));
                }
                ScalarField::LogSumExp { a, b: DVector::from_vec(b) }
            }
            ScalarFieldSpec::Polynomial { dim, terms } => {
                if let Some(t) = terms.iter().find(|t| t.powers.len() != dim) {
                    return Err(Error::DimensionMismatch { expected: dim, found: t.powers.len() });
                }
                ScalarField::Polynomial { dim, terms }
            }
        };
        if field.dim() == 0 {
            return Err(Error::InvalidInstance("zero-dimensional scalar field".into()));
        }
        Ok(field)
    }
}

impl From<ScalarField> for ScalarFieldSpec {
    fn from(f: ScalarField) -> Self {
        match f {
            ScalarField::Quadratic { q, b, c } => {
                ScalarFieldSpec::Quadratic { q: matrix_rows(&q), b: b.iter().copied().collect(), c }
            }
            ScalarField::Linear { a, c } => ScalarFieldSpec::Linear { a: a.iter().copied().collect(), c },
            ScalarField::LogSumExp { a, b } => {
                ScalarFieldSpec::LogSumExp { a: matrix_rows(&a), b: b.iter().copied().collect() }
            }
            ScalarField::Polynomial { dim, terms } => ScalarFieldSpec::Polynomial { dim, terms },
        }
    }
}
