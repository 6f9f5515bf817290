//! Small dense helpers shared by the synthesis code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Symmetric square root of a positive semidefinite matrix. Negative
/// eigenvalues coming from round-off are clamped to zero.
pub fn psd_sqrt(m: &Mat) -> Mat {
    if m.nrows() == 0 {
        return m.clone();
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * Mat::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Solves `s x = rhs` for symmetric positive definite `s`.
pub fn solve_spd(s: &Mat, rhs: &Mat) -> Option<Mat> {
    s.clone().cholesky().map(|c| c.solve(rhs))
}

/// Frobenius norm of `a - reference` relative to the reference. Falls back to
/// the absolute error when the reference is exactly zero.
pub fn rel_error(a: &Mat, reference: &Mat) -> f64 {
    let diff = (a - reference).norm();
    let scale = reference.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

pub fn max_asymmetry(m: &Mat) -> f64 {
    (m - m.transpose()).amax()
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

pub fn sub(m: &Mat, row: usize, col: usize, rows: usize, cols: usize) -> Mat {
    m.view((row, col), (rows, cols)).into_owned()
}

/// Prefix sums of block sizes: entry i is the offset of block i, the last
/// entry is the total.
pub fn offsets(sizes: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut out = vec![0];
    for s in sizes {
        let last = *out.last().unwrap();
        out.push(last + s);
    }
    out
}

/// Stored size of a matrix in the byte accounting used by the harness.
pub fn matrix_bytes(m: &Mat) -> usize {
    8 * m.len()
}
