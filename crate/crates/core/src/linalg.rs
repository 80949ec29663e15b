//! Small dense helpers shared by the modules. Everything heavy goes through faer.

use faer::{Col, ColRef, Mat, MatRef, c64};

use crate::error::{Error, Result};

/// Largest dimension for which dense `n x n` storage is allowed.
pub const DENSE_LIMIT: usize = 5000;

pub fn check_dense_guard(n: usize) -> Result<()> {
    if n > DENSE_LIMIT {
        return Err(Error::SizeGuard { n, limit: DENSE_LIMIT });
    }
    Ok(())
}

/// Operator (spectral) norm via the singular values. Meant for small matrices.
pub fn op_norm(a: MatRef<'_, c64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.singular_values()
        .map(|s| s.first().copied().unwrap_or(0.0))
        .unwrap_or(f64::NAN)
}

/// Smallest singular value of a square matrix.
pub fn smallest_singular_value(a: MatRef<'_, c64>) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    a.singular_values()
        .map(|s| s.last().copied().unwrap_or(0.0))
        .unwrap_or(f64::NAN)
}

/// `<x, y>` with the convention `y^* x` (linear in the first argument).
pub fn inner(x: ColRef<'_, c64>, y: ColRef<'_, c64>) -> c64 {
    x.iter()
        .zip(y.iter())
        .fold(c64::new(0.0, 0.0), |acc, (a, b)| acc + a * b.conj())
}

pub fn norm(x: ColRef<'_, c64>) -> f64 {
    x.norm_l2()
}

pub fn normalized(x: ColRef<'_, c64>) -> Col<c64> {
    let s = norm(x);
    Col::from_fn(x.nrows(), |i| x[i] / s)
}

/// `1 - |<x, y>|` for unit vectors; zero iff collinear.
pub fn collinearity_defect(x: ColRef<'_, c64>, y: ColRef<'_, c64>) -> f64 {
    1.0 - inner(x, y).norm()
}

/// Orthonormal basis of the column span of a full-column-rank matrix (thin QR).
pub fn orthonormalize(a: MatRef<'_, c64>) -> Mat<c64> {
    if a.ncols() == 0 {
        return Mat::zeros(a.nrows(), 0);
    }
    a.qr().compute_thin_Q()
}

pub fn identity(r: usize) -> Mat<c64> {
    Mat::from_fn(r, r, |i, j| if i == j { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) })
}

pub fn column(a: MatRef<'_, c64>, j: usize) -> Col<c64> {
    a.col(j).to_owned()
}

/// Sub-matrix with the given row and column index lists.
pub fn select(a: MatRef<'_, c64>, rows: &[usize], cols: &[usize]) -> Mat<c64> {
    Mat::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

/// Null space of `a` at absolute singular-value tolerance `tol`, as orthonormal columns.
pub fn null_space(a: MatRef<'_, c64>, tol: f64) -> Result<Mat<c64>> {
    let svd = a.svd().map_err(|e| Error::Oracle(format!("svd failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let v = svd.V();
    let k = a.ncols();
    let keep: Vec<usize> = (0..k)
        .filter(|&j| j >= s.nrows() || s[j].re <= tol)
        .collect();
    Ok(Mat::from_fn(k, keep.len(), |i, j| v[(i, keep[j])]))
}

/// Cosines of the principal angles between two subspaces given by orthonormal bases.
pub fn principal_cosines(q1: MatRef<'_, c64>, q2: MatRef<'_, c64>) -> Vec<f64> {
    let g = q1.adjoint() * q2;
    g.singular_values().unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn op_norm_of_diagonal() {
        let d = Mat::from_fn(3, 3, |i, j| if i == j { c64::new(i as f64 + 1.0, 0.0) } else { c64::new(0.0, 0.0) });
        assert!((op_norm(d.as_ref()) - 3.0).abs() < 1e-12);
        assert!((smallest_singular_value(d.as_ref()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn null_space_of_rank_one() {
        let a = Mat::from_fn(3, 3, |i, j| c64::new((i + 1) as f64 * (j + 1) as f64, 0.0));
        let ns = null_space(a.as_ref(), 1e-10).unwrap();
        assert_eq!(ns.ncols(), 2);
        let res = &a * &ns;
        assert!(res.norm_l2() < 1e-10);
    }

    #[test]
    fn inner_is_linear_in_first_argument() {
        let x = Col::from_fn(2, |i| c64::new(i as f64, 1.0));
        let y = Col::from_fn(2, |i| c64::new(1.0, i as f64));
        let i = c64::new(0.0, 1.0);
        let scaled = Col::from_fn(2, |k| x[k] * i);
        assert!((inner(scaled.as_ref(), y.as_ref()) - i * inner(x.as_ref(), y.as_ref())).norm() < 1e-14);
    }
}
