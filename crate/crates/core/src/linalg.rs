use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn pauli() -> [CMat; 3] {
    let o = c(0.0);
    [
        CMat::from_row_slice(2, 2, &[o, c(1.0), c(1.0), o]),
        CMat::from_row_slice(2, 2, &[o, -I, I, o]),
        CMat::from_row_slice(2, 2, &[c(1.0), o, o, c(-1.0)]),
    ]
}

/// Largest entry of |A - A^dagger|.
pub fn hermitian_deviation(m: &CMat) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

#[derive(Debug, Clone)]
pub struct Eigensystem {
    /// Ascending.
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors as columns, matching `values`.
    pub vectors: CMat,
}

impl Eigensystem {
    pub fn reconstruct(&self) -> CMat {
        let n = self.values.len();
        let mut d = CMat::zeros(n, n);
        for i in 0..n {
            d[(i, i)] = c(self.values[i]);
        }
        &self.vectors * d * self.vectors.adjoint()
    }

    /// Matrix elements of `m` in the eigenbasis.
    pub fn in_basis(&self, m: &CMat) -> CMat {
        self.vectors.adjoint() * m * &self.vectors
    }
}

pub fn hermitian_eigen(m: &CMat) -> Result<Eigensystem> {
    let dev = hermitian_deviation(m);
    if dev > 1e-12 * max_abs(m).max(1.0) {
        return Err(Error::NonHermitianInput(dev));
    }
    let sym = (m + m.adjoint()) * c(0.5);
    let eig = SymmetricEigen::new(sym);
    let n = m.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMat::zeros(n, n);
    for (col, &i) in idx.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    Ok(Eigensystem { values, vectors })
}

/// Determinant of a symmetric real matrix after diagonal scaling; returns
/// (det, det of the unit-diagonal matrix). Zero diagonal entries give zero.
pub fn scaled_det(g: &DMatrix<f64>) -> (f64, f64) {
    let n = g.nrows();
    let mut scale = 1.0;
    let mut s = vec![0.0; n];
    for i in 0..n {
        let d = g[(i, i)];
        if d <= 0.0 {
            return (g.determinant(), 0.0);
        }
        s[i] = d.sqrt();
        scale *= d;
    }
    let norm = DMatrix::from_fn(n, n, |i, j| g[(i, j)] / (s[i] * s[j]));
    let nd = norm.determinant();
    (nd * scale, nd)
}
