//! Polynomial test functions `psi` whose gradients probe Wasserstein
//! derivatives along transport directions.

use nalgebra::DVector;
use rand::Rng;

use super::scalar::Monomial;
use crate::error::Result;
use crate::measure::{DiscreteMeasure, VelocityField};

/// All exponent vectors in `d` variables with total degree in `1..=max_degree`.
pub fn monomial_exponents(d: usize, max_degree: u32) -> Vec<Vec<u32>> {
    fn rec(d: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == d {
            if cur.iter().sum::<u32>() > 0 {
                out.push(cur.clone());
            }
            return;
        }
        for p in 0..=left {
            cur.push(p);
            rec(d, left - p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, max_degree, &mut Vec::new(), &mut out);
    out
}

/// `psi(x) = sum_k c_k x^{alpha_k}`; only its gradient is used.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialTestFunction {
    pub dim: usize,
    pub terms: Vec<Monomial>,
}

impl PolynomialTestFunction {
    pub const MAX_DEGREE: u32 = 4;

    pub fn monomial(powers: Vec<u32>) -> Self {
        Self { dim: powers.len(), terms: vec![Monomial { coef: 1.0, powers }] }
    }

    /// Every monomial of degree `<= max_degree` gets a coefficient drawn
    /// uniformly from `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(d: usize, max_degree: u32, rng: &mut R) -> Self {
        let terms = monomial_exponents(d, max_degree)
            .into_iter()
            .map(|powers| Monomial { coef: rng.random_range(-1.0..=1.0), powers })
            .collect();
        Self { dim: d, terms }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    pub fn gradient_at(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        for t in &self.terms {
            t.grad_into(x, &mut g);
        }
        g
    }

    /// `grad psi` restricted to the atoms of `mu`.
    pub fn field(&self, mu: &DiscreteMeasure) -> Result<VelocityField> {
        VelocityField::from_fn(mu, |x| self.gradient_at(x))
    }
}

/// Gradients of every monomial of degree `<= max_degree`, as fields over `mu`.
pub fn monomial_fields(mu: &DiscreteMeasure, max_degree: u32) -> Vec<VelocityField> {
    monomial_exponents(mu.dim(), max_degree)
        .into_iter()
        .map(|p| PolynomialTestFunction::monomial(p).field(mu).expect("finite polynomial gradient"))
        .collect()
}
