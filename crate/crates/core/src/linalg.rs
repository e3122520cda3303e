//! Small dense symmetric-matrix helpers shared by the Gaussian code paths.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub fn sym_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let vals = eig.eigenvalues.map(f);
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&vals) * q.transpose();
    symmetrize(&out)
}

pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, |v| v.max(0.0).sqrt())
}

pub fn sym_inv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, |v| 1.0 / v.sqrt())
}

pub fn sym_inv(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, |v| 1.0 / v)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.max()
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}

/// Optimal map matrix between centered Gaussians: the unique SPD `B` with
/// `B from B = to`.
pub fn bures_map(from: &DMatrix<f64>, to: &DMatrix<f64>) -> DMatrix<f64> {
    let from_half = sym_sqrt(from);
    let from_inv_half = sym_inv_sqrt(from);
    let middle = sym_sqrt(&(&from_half * to * &from_half));
    symmetrize(&(&from_inv_half * middle * &from_inv_half))
}

/// Squared Bures-Wasserstein distance between two Gaussians.
pub fn bures_w2_squared(
    m1: &DVector<f64>,
    s1: &DMatrix<f64>,
    m2: &DVector<f64>,
    s2: &DMatrix<f64>,
) -> f64 {
    let s2_half = sym_sqrt(s2);
    let cross = sym_sqrt(&(&s2_half * s1 * &s2_half));
    let cov_term = s1.trace() + s2.trace() - 2.0 * cross.trace();
    ((m1 - m2).norm_squared() + cov_term).max(0.0)
}

pub fn log_det_spd(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .map(|v| v.ln())
        .sum()
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Serde adapters storing vectors as plain arrays and matrices as row lists.
pub(crate) mod serde_dvector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

pub(crate) mod serde_dmatrix {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        crate::measure::matrix_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        crate::measure::matrix_from_rows(&rows).map_err(D::Error::custom)
    }
}
