//! Dense symmetric positive definite helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Cholesky solve; falls back to a tiny diagonal jitter when the matrix is
/// numerically semidefinite.
pub(crate) fn solve_spd(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Some(ch.solve(g));
    }
    let scale = h.diagonal().amax().max(1.0);
    let jittered = h + DMatrix::identity(h.nrows(), h.ncols()) * (scale * 1e-10);
    jittered.cholesky().map(|ch| ch.solve(g))
}

pub(crate) fn inverse_spd(h: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    h.clone().cholesky().map(|ch| ch.inverse())
}

pub(crate) fn log_det_spd(h: &DMatrix<f64>) -> Option<f64> {
    h.clone()
        .cholesky()
        .map(|ch| 2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Indices of columns that are (numerically) linear combinations of earlier
/// columns, found by an incremental Cholesky of a Gram matrix.
pub(crate) fn collinear_columns(gram: &DMatrix<f64>) -> Vec<usize> {
    let p = gram.nrows();
    let mut l = DMatrix::<f64>::zeros(p, p);
    let mut kept = Vec::with_capacity(p);
    let mut dropped = Vec::new();
    for j in 0..p {
        let diag = gram[(j, j)];
        let mut pivot = diag;
        for &c in &kept {
            pivot -= l[(j, c)] * l[(j, c)];
        }
        if !(pivot > 1e-9 * diag.max(f64::MIN_POSITIVE)) || diag <= 0.0 {
            dropped.push(j);
            continue;
        }
        let root = pivot.sqrt();
        l[(j, j)] = root;
        for i in j + 1..p {
            let mut x = gram[(i, j)];
            for &c in &kept {
                x -= l[(i, c)] * l[(j, c)];
            }
            l[(i, j)] = x / root;
        }
        kept.push(j);
    }
    dropped
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_duplicate_column() {
        // columns: 1, x, x
        let x = DMatrix::from_row_slice(4, 3, &[1., 1., 1., 1., 2., 2., 1., 3., 3., 1., 4., 4.]);
        assert_eq!(collinear_columns(&(x.transpose() * &x)), vec![2]);
    }

    #[test]
    fn log_det_matches_product_of_eigenvalues() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        assert!((log_det_spd(&h).unwrap() - 6f64.ln()).abs() < 1e-14);
    }
}
