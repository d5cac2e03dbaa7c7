//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Numerical rank of `x` by column-pivoted modified Gram–Schmidt, with the
/// indices of the retained columns in ascending order.
///
/// A column is retained while its residual norm exceeds
/// `tol · max(n, k) · ‖largest column‖`.
pub fn pivoted_rank(x: &DMatrix<f64>, tol: f64) -> (usize, Vec<usize>) {
    let (n, k) = x.shape();
    if k == 0 {
        return (0, Vec::new());
    }
    let mut work = x.clone();
    let mut norms: Vec<f64> = (0..k).map(|j| work.column(j).norm()).collect();
    let mut remaining: Vec<usize> = (0..k).collect();
    let mut kept = Vec::new();
    let scale = norms.iter().copied().fold(0.0, f64::max);
    if scale == 0.0 {
        return (0, kept);
    }
    let threshold = tol * (n.max(k) as f64) * scale;
    let mut q = DVector::zeros(n);
    while !remaining.is_empty() {
        let (pos, &best) = remaining
            .iter()
            .enumerate()
            .max_by(|a, b| norms[*a.1].total_cmp(&norms[*b.1]).then(b.1.cmp(a.1)))
            .expect("non-empty");
        let norm = norms[best];
        if norm <= threshold {
            break;
        }
        q.copy_from(&work.column(best));
        q /= norm;
        remaining.swap_remove(pos);
        for &j in &remaining {
            // Modified Gram–Schmidt with one re-orthogonalization pass.
            let mut col = work.column_mut(j);
            for _ in 0..2 {
                let c = q.dot(&col);
                col.axpy(-c, &q, 1.0);
            }
            norms[j] = col.norm();
        }
        kept.push(best);
    }
    kept.sort_unstable();
    (kept.len(), kept)
}

/// Solve `A x = b` for symmetric positive-definite `A`.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = a.clone().cholesky()?;
    let x = chol.solve(b);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Inverse of a symmetric positive-definite matrix.
pub fn inverse_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().cholesky().map(|c| c.inverse())
}

/// `log det A` for symmetric positive-definite `A`.
pub fn log_det_spd(a: &DMatrix<f64>) -> Option<f64> {
    let chol = a.clone().cholesky()?;
    Some(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Select columns of `x` by index.
pub fn select_columns(x: &DMatrix<f64>, columns: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), columns.len(), |i, j| x[(i, columns[j])])
}

/// Weighted column means `Σ wᵢ xᵢ / Σ wᵢ`.
pub fn weighted_means(x: &DMatrix<f64>, w: &DVector<f64>) -> DVector<f64> {
    let total: f64 = w.sum();
    DVector::from_fn(x.ncols(), |j, _| x.column(j).dot(w) / total)
}

/// Subtract `means` from every row of `x`.
pub fn center(x: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - means[j])
}

/// Dot product with four independent accumulators so it vectorizes.
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `Xᵀ diag(w) X`.
pub fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let (n, k) = x.shape();
    let mut wx = x.clone();
    for mut col in wx.column_iter_mut() {
        col.component_mul_assign(w);
    }
    let xs = x.as_slice();
    let ws = wx.as_slice();
    let mut out = DMatrix::zeros(k, k);
    for a in 0..k {
        let xa = &xs[a * n..(a + 1) * n];
        for b in a..k {
            let v = dot4(xa, &ws[b * n..(b + 1) * n]);
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicated_column_reduces_rank() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 1.0, 2.0, 0.5, 2.0, 3.0, 1.0, 3.0, 4.0, 7.0, 4.0]);
        let (r, kept) = pivoted_rank(&x, 1e-10);
        assert_eq!(r, 2);
        assert!(kept.contains(&1));
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let x = DMatrix::zeros(5, 2);
        assert_eq!(pivoted_rank(&x, 1e-10).0, 0);
    }

    #[test]
    fn spd_solve_roundtrip() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = solve_spd(&a, &b).unwrap();
        assert!((&a * x - b).norm() < 1e-14);
        assert!((log_det_spd(&a).unwrap() - 11f64.ln()).abs() < 1e-14);
    }
}
