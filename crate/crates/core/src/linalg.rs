//! Dense linear-algebra helpers bridging `ndarray` and `nalgebra`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Eigenvalues are clamped to this floor when taking matrix powers.
pub const EIGEN_FLOOR: f64 = 1e-12;

pub(crate) fn to_na(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub(crate) fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
}

/// Symmetric eigendecomposition `(eigenvalues, eigenvectors-as-columns)`.
pub fn sym_eigen(a: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let eig = nalgebra::SymmetricEigen::new(to_na(a));
    (
        Array1::from_iter(eig.eigenvalues.iter().copied()),
        from_na(&eig.eigenvectors),
    )
}

/// `A^p` for a symmetric PSD matrix, eigenvalues clamped at [`EIGEN_FLOOR`].
pub fn sym_power(a: ArrayView2<f64>, p: f64) -> Array2<f64> {
    let (vals, vecs) = sym_eigen(a);
    let scaled = Array2::from_shape_fn(vecs.dim(), |(i, j)| {
        vecs[[i, j]] * vals[j].max(EIGEN_FLOOR).powf(p)
    });
    let mut out = scaled.dot(&vecs.t());
    symmetrize(&mut out);
    out
}

pub fn frobenius(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Rejects matrices that are not square, symmetric (relative 1e-12) and positive definite.
pub fn check_spd(a: ArrayView2<f64>, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSpd(format!(
            "{what} is {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what.into()));
    }
    let scale = a
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[[i, j]] - a[[j, i]]).abs() > 1e-12 * scale {
                return Err(Error::NotSpd(format!("{what} is not symmetric")));
            }
        }
    }
    let (vals, _) = sym_eigen(a);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::NotSpd(format!("{what} has eigenvalue {min:e}")));
    }
    Ok(())
}

/// Orthogonal polar factor `U Vᵀ` of `A = U S Vᵀ`.
pub fn polar_orthogonal(a: ArrayView2<f64>) -> Array2<f64> {
    let svd = nalgebra::SVD::new(to_na(a), true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vt");
    from_na(&(u * vt))
}

/// Solves `A x = b` for symmetric positive (semi)definite `A` with a small ridge.
pub(crate) fn solve_psd(a: &DMatrix<f64>, b: &[f64], ridge: f64) -> Option<Vec<f64>> {
    let n = a.nrows();
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] += ridge;
    }
    let rhs = nalgebra::DVector::from_column_slice(b);
    if let Some(ch) = nalgebra::Cholesky::new(m.clone()) {
        return Some(ch.solve(&rhs).iter().copied().collect());
    }
    m.lu().solve(&rhs).map(|x| x.iter().copied().collect())
}
