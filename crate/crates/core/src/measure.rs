//! Measure representations: weighted particle clouds, Gaussians, and
//! velocity fields over particle clouds.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

const MASS_TOL: f64 = 1e-12;
const RENORMALIZE_TOL: f64 = 1e-9;

/// Finitely supported probability measure `sum_i w_i delta_{x_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureSpec", into = "MeasureSpec")]
pub struct DiscreteMeasure {
    atoms: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure, renormalizing weights whose total is off by at most
    /// `1e-9`. Larger deviations are rejected.
    pub fn new(atoms: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let dim = atoms[0].len();
        if dim == 0 {
            return Err(Error::InvalidMeasure("zero-dimensional atoms".into()));
        }
        for a in &atoms {
            if a.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: a.len() });
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidMeasure("non-finite atom coordinate".into()));
            }
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        let weights = if (total - 1.0).abs() <= MASS_TOL {
            weights
        } else if (total - 1.0).abs() <= RENORMALIZE_TOL {
            weights.iter().map(|w| w / total).collect()
        } else {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}")));
        };
        Ok(Self { atoms, weights })
    }

    pub fn uniform(atoms: Vec<DVector<f64>>) -> Result<Self> {
        let n = atoms.len().max(1);
        Self::new(atoms, vec![1.0 / n as f64; n])
    }

    pub fn dirac(point: DVector<f64>) -> Result<Self> {
        Self::new(vec![point], vec![1.0])
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        Self::new(rows.into_iter().map(DVector::from_vec).collect(), weights)
    }

    pub fn uniform_from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::uniform(rows.into_iter().map(DVector::from_vec).collect())
    }

    /// Skips the ingestion checks; callers guarantee mass and dimension.
    pub(crate) fn from_parts_unchecked(atoms: Vec<DVector<f64>>, weights: Vec<f64>) -> Self {
        Self { atoms, weights }
    }

    pub fn atoms(&self) -> &[DVector<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DVector<f64>, f64)> {
        self.atoms.iter().zip(self.weights.iter().copied())
    }

    pub fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|w| (w - w0).abs() <= 1e-12)
    }

    /// `T#mu`: atoms mapped pointwise, weights untouched, coincident images
    /// kept as separate atoms.
    pub fn pushforward<F>(&self, map: F) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> DVector<f64>,
    {
        let mut images = Vec::with_capacity(self.len());
        let mut dim = None;
        for (i, x) in self.atoms.iter().enumerate() {
            let y = map(x);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteImage { atom: i });
            }
            match dim {
                None => dim = Some(y.len()),
                Some(d) if d != y.len() => {
                    return Err(Error::DimensionMismatch { expected: d, found: y.len() })
                }
                _ => {}
            }
            images.push(y);
        }
        Ok(Self { atoms: images, weights: self.weights.clone() })
    }

    pub fn pushforward_affine(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        if a.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: a.ncols() });
        }
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), found: b.len() });
        }
        self.pushforward(|x| a * x + b)
    }

    pub fn expect<F: Fn(&DVector<f64>) -> f64>(&self, f: F) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        for (x, w) in self.iter() {
            m.axpy(w, x, 1.0);
        }
        m
    }

    pub fn moments(&self) -> Moments {
        let mean = self.mean();
        let d = self.dim();
        let mut cov = DMatrix::zeros(d, d);
        let mut second = 0.0;
        for (x, w) in self.iter() {
            let c = x - &mean;
            cov += w * &c * c.transpose();
            second += w * x.norm_squared();
        }
        Moments { mean, covariance: cov, second_moment: second }
    }

    /// `E<a, x>` and `Var<a, x>`.
    pub fn projected_mean_var(&self, a: &DVector<f64>) -> (f64, f64) {
        let e = self.expect(|x| a.dot(x));
        let v = self.expect(|x| (a.dot(x) - e).powi(2));
        (e, v)
    }
}

/// Gaussian `N(mean, cov)` with SPD covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureSpec", into = "MeasureSpec")]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianMeasure {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidMeasure("zero-dimensional gaussian".into()));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: cov.nrows() });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite gaussian parameter".into()));
        }
        if linalg::max_asymmetry(&cov) > 1e-10 {
            return Err(Error::InvalidMeasure("covariance is not symmetric".into()));
        }
        let min_eig = linalg::min_eigenvalue(&cov);
        if min_eig <= 1e-12 {
            return Err(Error::InvalidMeasure(format!(
                "covariance not positive definite (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn from_rows(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let d = cov.len();
        let flat: Vec<f64> = cov.into_iter().flatten().collect();
        if flat.len() != d * d {
            return Err(Error::InvalidMeasure("covariance must be square".into()));
        }
        Self::new(DVector::from_vec(mean), DMatrix::from_row_slice(d, d, &flat))
    }

    pub fn standard(d: usize) -> Self {
        Self { mean: DVector::zeros(d), cov: DMatrix::identity(d, d) }
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn moments(&self) -> Moments {
        Moments {
            mean: self.mean.clone(),
            covariance: self.cov.clone(),
            second_moment: self.cov.trace() + self.mean.norm_squared(),
        }
    }

    /// Affine pushforward `x -> A x + b`; `A` must keep the covariance SPD.
    pub fn pushforward_affine(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        let cov = linalg::symmetrize(&(a * &self.cov * a.transpose()));
        Self::new(a * &self.mean + b, cov)
    }
}

/// Either representation, as read from instance files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureSpec", into = "MeasureSpec")]
pub enum Measure {
    Discrete(DiscreteMeasure),
    Gaussian(GaussianMeasure),
}

impl Measure {
    pub fn dim(&self) -> usize {
        match self {
            Measure::Discrete(m) => m.dim(),
            Measure::Gaussian(g) => g.dim(),
        }
    }

    pub fn moments(&self) -> Moments {
        match self {
            Measure::Discrete(m) => m.moments(),
            Measure::Gaussian(g) => g.moments(),
        }
    }
}

impl From<DiscreteMeasure> for Measure {
    fn from(m: DiscreteMeasure) -> Self {
        Measure::Discrete(m)
    }
}

impl From<GaussianMeasure> for Measure {
    fn from(g: GaussianMeasure) -> Self {
        Measure::Gaussian(g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub second_moment: f64,
}

/// Wire format for measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MeasureSpec {
    Discrete { atoms: Vec<Vec<f64>>, weights: Vec<f64> },
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
}

impl TryFrom<MeasureSpec> for Measure {
    type Error = Error;

    fn try_from(spec: MeasureSpec) -> Result<Self> {
        match spec {
            MeasureSpec::Discrete { atoms, weights } => {
                Ok(Measure::Discrete(DiscreteMeasure::from_rows(atoms, weights)?))
            }
            MeasureSpec::Gaussian { mean, cov } => {
                Ok(Measure::Gaussian(GaussianMeasure::from_rows(mean, cov)?))
            }
        }
    }
}

impl TryFrom<MeasureSpec> for DiscreteMeasure {
    type Error = Error;

    fn try_from(spec: MeasureSpec) -> Result<Self> {
        match Measure::try_from(spec)? {
            Measure::Discrete(m) => Ok(m),
            Measure::Gaussian(_) => Err(Error::IncompatibleRepresentation(
                "expected a discrete measure".into(),
            )),
        }
    }
}

impl TryFrom<MeasureSpec> for GaussianMeasure {
    type Error = Error;

    fn try_from(spec: MeasureSpec) -> Result<Self> {
        match Measure::try_from(spec)? {
            Measure::Gaussian(g) => Ok(g),
            Measure::Discrete(_) => Err(Error::IncompatibleRepresentation(
                "expected a gaussian measure".into(),
            )),
        }
    }
}

impl From<DiscreteMeasure> for MeasureSpec {
    fn from(m: DiscreteMeasure) -> Self {
        MeasureSpec::Discrete {
            atoms: m.atoms.iter().map(|a| a.iter().copied().collect()).collect(),
            weights: m.weights,
        }
    }
}

impl From<GaussianMeasure> for MeasureSpec {
    fn from(g: GaussianMeasure) -> Self {
        MeasureSpec::Gaussian { mean: g.mean.iter().copied().collect(), cov: matrix_rows(&g.cov) }
    }
}

impl From<Measure> for MeasureSpec {
    fn from(m: Measure) -> Self {
        match m {
            Measure::Discrete(d) => d.into(),
            Measure::Gaussian(g) => g.into(),
        }
    }
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidInstance("ragged matrix".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(r, c, &flat))
}

/// `n` equal-weight draws from `g`; the same seed always gives the same atoms.
pub fn sample_gaussian(g: &GaussianMeasure, n: usize, seed: u64) -> Result<DiscreteMeasure> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample count must be at least 1".into()));
    }
    let chol = nalgebra::Cholesky::new(g.cov.clone())
        .ok_or_else(|| Error::InvalidMeasure("covariance not positive definite".into()))?;
    let l = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = g.dim();
    let atoms = (0..n)
        .map(|_| {
            let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            &g.mean + &l * z
        })
        .collect();
    DiscreteMeasure::uniform(atoms)
}

/// Element of `L^2(mu; R^d)`: one vector per atom of the base measure.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    vectors: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl VelocityField {
    pub fn new(base: &DiscreteMeasure, vectors: Vec<DVector<f64>>) -> Result<Self> {
        if vectors.len() != base.len() {
            return Err(Error::InvalidMeasure(format!(
                "field has {} vectors for {} atoms",
                vectors.len(),
                base.len()
            )));
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != base.dim()) {
            return Err(Error::DimensionMismatch { expected: base.dim(), found: v.len() });
        }
        if vectors.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidMeasure("non-finite field vector".into()));
        }
        Ok(Self { vectors, weights: base.weights().to_vec() })
    }

    pub fn from_fn<F>(base: &DiscreteMeasure, f: F) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> DVector<f64>,
    {
        Self::new(base, base.atoms().iter().map(f).collect())
    }

    pub fn zeros(base: &DiscreteMeasure) -> Self {
        Self { vectors: vec![DVector::zeros(base.dim()); base.len()], weights: base.weights().to_vec() }
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn inner(&self, other: &VelocityField) -> f64 {
        self.vectors
            .iter()
            .zip(&other.vectors)
            .zip(&self.weights)
            .map(|((a, b), w)| w * a.dot(b))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { vectors: self.vectors.iter().map(|v| v * c).collect(), weights: self.weights.clone() }
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, c: f64, other: &VelocityField) -> Self {
        let vectors = self.vectors.iter().zip(&other.vectors).map(|(a, b)| a + b * c).collect();
        Self { vectors, weights: self.weights.clone() }
    }

    pub fn max_abs(&self) -> f64 {
        self.vectors.iter().map(|v| v.amax()).fold(0.0, f64::max)
    }
}
