//! Small dense symmetric-matrix helpers shared by the solver, PCA and the
//! diagnostics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, UpalError};

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn sym_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = symmetrize(a);
    let eig = SymmetricEigen::try_new(sym, 1e-14, 0).expect("symmetric eigensolve");
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = eig.eigenvectors.select_columns(&order);
    (values, vectors)
}

pub fn eigen_extremes(a: &DMatrix<f64>) -> (f64, f64) {
    let (values, _) = sym_eigen(a);
    (values[0], values[values.len() - 1])
}

/// `A^p` for a symmetric positive semidefinite `A` (negative `p` needs PD).
pub fn sym_pow(a: &DMatrix<f64>, p: f64) -> Result<DMatrix<f64>> {
    let (values, vectors) = sym_eigen(a);
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut powered = DVector::zeros(values.len());
    for (k, &v) in values.iter().enumerate() {
        let v = if v.abs() <= 1e-14 * scale { 0.0 } else { v };
        if v < 0.0 || (p < 0.0 && v == 0.0) {
            return Err(UpalError::NotPositiveDefinite);
        }
        powered[k] = if v == 0.0 { 0.0 } else { v.powf(p) };
    }
    Ok(&vectors * DMatrix::from_diagonal(&powered) * vectors.transpose())
}

/// Spectral norm `||M||_2` of a general matrix.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    eigen_extremes(&gram).1.max(0.0).sqrt()
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn square_root_squares_back() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let r = sym_pow(&a, 0.5).unwrap();
        assert_relative_eq!(&r * &r, a, epsilon = 1e-12);
        let ri = sym_pow(&a, -0.5).unwrap();
        assert_relative_eq!(&ri * &r, DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn eigenvalues_ascending() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let (v, _) = sym_eigen(&a);
        assert_eq!(v.as_slice(), &[1.0, 2.0, 3.0]);
        assert_relative_eq!(op_norm(&a), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn inverse_power_rejects_singular() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        assert!(sym_pow(&a, -1.0).is_err());
        assert!(sym_pow(&a, 0.5).is_ok());
    }
}
