//! Dense linear-algebra helpers shared by the solvers.
//!
//! Every rank decision in the crate goes through [`numerical_rank`]-style
//! thresholds: a singular value counts as zero when it is at most
//! `rank_tol * sigma_max`.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value threshold used when callers do not supply one.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresResult {
    pub solution: DVector<f64>,
    /// `‖A·solution − b‖₂`, recomputed from the returned solution.
    pub residual_norm: f64,
    pub rank: usize,
}

/// Singular values (descending, length `cols`) and the full right singular
/// basis (`cols × cols`, columns matched to the values).
///
/// Wide matrices are padded with zero rows so that the thin SVD still yields a
/// complete right basis; the padding contributes zero singular values.
pub fn right_singular_system(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (rows, cols) = a.shape();
    if cols == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = DMatrix::zeros(cols, cols);
    for (dst, &src) in order.iter().enumerate() {
        v.set_column(dst, &v_t.row(src).transpose());
    }
    (values, v)
}

fn rank_from_values(values: &[f64], rank_tol: f64) -> usize {
    let sigma_max = values.iter().cloned().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return 0;
    }
    values.iter().filter(|&&s| s > rank_tol * sigma_max).count()
}

pub fn numerical_rank(a: &DMatrix<f64>, rank_tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let values = a.singular_values();
    rank_from_values(values.as_slice(), rank_tol)
}

/// Flips `v` so that its first entry of non-negligible magnitude is positive.
pub fn canonical_sign(v: &mut DVector<f64>) {
    let scale = v.amax();
    if scale == 0.0 {
        return;
    }
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-9 * scale) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Splits `R^cols` into the row space and the kernel of `a`.
///
/// Returns `(row_space, kernel)`, both as matrices whose columns are
/// orthonormal and sign-normalized by [`canonical_sign`].
pub fn row_space_and_kernel(a: &DMatrix<f64>, rank_tol: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let cols = a.ncols();
    let (values, v) = right_singular_system(a);
    let rank = rank_from_values(&values, rank_tol);
    let pick = |range: std::ops::Range<usize>| {
        let mut m = DMatrix::zeros(cols, range.len());
        for (dst, src) in range.enumerate() {
            let mut col = v.column(src).into_owned();
            canonical_sign(&mut col);
            m.set_column(dst, &col);
        }
        m
    };
    (pick(0..rank), pick(rank..cols))
}

/// Orthonormal basis of `ker(a)` as the columns of the returned matrix.
pub fn orthonormal_nullspace(a: &DMatrix<f64>, rank_tol: f64) -> DMatrix<f64> {
    row_space_and_kernel(a, rank_tol).1
}

pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> LeastSquaresResult {
    least_squares_with_tol(a, b, DEFAULT_RANK_TOL)
}

/// Minimum-norm least-squares solution through a truncated SVD.
pub fn least_squares_with_tol(a: &DMatrix<f64>, b: &DVector<f64>, rank_tol: f64) -> LeastSquaresResult {
    assert_eq!(a.nrows(), b.len(), "least_squares: row count must match rhs length");
    let cols = a.ncols();
    if a.nrows() == 0 || cols == 0 {
        return LeastSquaresResult {
            solution: DVector::zeros(cols),
            residual_norm: b.norm(),
            rank: 0,
        };
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let values = svd.singular_values.as_slice();
    let sigma_max = values.iter().cloned().fold(0.0, f64::max);
    let mut solution = DVector::zeros(cols);
    let mut rank = 0;
    for (i, &sigma) in values.iter().enumerate() {
        if sigma_max == 0.0 || sigma <= rank_tol * sigma_max {
            continue;
        }
        rank += 1;
        let coeff = u.column(i).dot(b) / sigma;
        solution += v_t.row(i).transpose() * coeff;
    }
    let residual_norm = (a * &solution - b).norm();
    LeastSquaresResult {
        solution,
        residual_norm,
        rank,
    }
}

/// Determinant of `a` with row `i` and column `i` removed (0-based `i`).
///
/// A `1 × 1` input yields the empty determinant, 1.
pub fn principal_minor(a: &DMatrix<f64>, i: usize) -> f64 {
    assert!(a.is_square(), "principal_minor requires a square matrix");
    assert!(i < a.nrows(), "principal_minor index out of range");
    if a.nrows() == 1 {
        return 1.0;
    }
    a.clone().remove_row(i).remove_column(i).determinant()
}

/// Greedily picks `count` linearly independent rows of `a` by pivoted
/// Gram-Schmidt (the row analogue of column-pivoted QR).
///
/// Returns `None` when fewer than `count` rows have a residual norm above
/// `rank_tol` times the largest row norm.
pub fn select_independent_rows(a: &DMatrix<f64>, count: usize, rank_tol: f64) -> Option<Vec<usize>> {
    let rows: Vec<DVector<f64>> = a.row_iter().map(|r| r.transpose()).collect();
    let scale = rows.iter().map(|r| r.norm()).fold(0.0, f64::max);
    let mut residuals = rows.clone();
    let mut chosen = Vec::with_capacity(count);
    for _ in 0..count {
        let (best, norm) = residuals
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen.contains(i))
            .map(|(i, r)| (i, r.norm()))
            .fold((usize::MAX, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best == usize::MAX || norm <= rank_tol * scale || norm == 0.0 {
            return None;
        }
        chosen.push(best);
        let q = &residuals[best] / norm;
        for r in residuals.iter_mut() {
            let c = r.dot(&q);
            r.axpy(-c, &q, 1.0);
        }
    }
    chosen.sort_unstable();
    Some(chosen)
}

/// Ratio of the smallest to the largest singular value.
pub fn inverse_condition(a: &DMatrix<f64>) -> f64 {
    let values = a.singular_values();
    let max = values.max();
    if max == 0.0 {
        return 0.0;
    }
    values.min() / max
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Cofactor expansion along the first row; test oracle only.
    fn cofactor_det(a: &DMatrix<f64>) -> f64 {
        let n = a.nrows();
        match n {
            0 => 1.0,
            1 => a[(0, 0)],
            _ => (0..n)
                .map(|j| {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    let minor = a.clone().remove_row(0).remove_column(j);
                    sign * a[(0, j)] * cofactor_det(&minor)
                })
                .sum(),
        }
    }

    #[test]
    fn nullspace_of_line() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let n = orthonormal_nullspace(&a, DEFAULT_RANK_TOL);
        assert_eq!(n.ncols(), 1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((n[(0, 0)] - h).abs() < 1e-14);
        assert!((n[(1, 0)] - h).abs() < 1e-14);
    }

    #[test]
    fn nullspace_of_identity_is_empty() {
        let n = orthonormal_nullspace(&DMatrix::identity(3, 3), DEFAULT_RANK_TOL);
        assert_eq!(n.ncols(), 0);
    }

    #[test]
    fn nullspace_of_cycle_balance_matrix() {
        // rows = vertices A, B, C; columns = edges A->B, B->C, C->A
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 0.0, 1.0, 1.0, -1.0, 0.0, 0.0, 1.0, -1.0]);
        let n = orthonormal_nullspace(&a, DEFAULT_RANK_TOL);
        assert_eq!(n.ncols(), 1);
        let c = 1.0 / 3f64.sqrt();
        for i in 0..3 {
            assert!((n[(i, 0)] - c).abs() < 1e-14);
        }
    }

    #[test]
    fn least_squares_consistent() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let r = least_squares(&a, &DVector::from_vec(vec![2.0, 2.0]));
        assert!((r.solution[0] - 2.0).abs() < 1e-14);
        assert!(r.residual_norm < 1e-14);
        assert_eq!(r.rank, 1);
    }

    #[test]
    fn least_squares_inconsistent() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let r = least_squares(&a, &DVector::from_vec(vec![1.0, 3.0]));
        assert!((r.solution[0] - 2.0).abs() < 1e-14);
        assert!((r.residual_norm - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn least_squares_segre_log_system() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, -1.0]);
        let l = 1.5f64.ln();
        let r = least_squares(&a, &DVector::from_vec(vec![l, l]));
        assert!(r.residual_norm < 1e-15);
        assert_eq!(r.rank, 1);
    }

    #[test]
    fn principal_minor_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 3.0, 2.0, -3.0]);
        assert_eq!(principal_minor(&a, 0), -3.0);
        assert_eq!(principal_minor(&a, 1), -2.0);
        assert_eq!(principal_minor(&DMatrix::from_element(1, 1, 7.5), 0), 1.0);
    }

    #[test]
    fn independent_rows_skip_duplicates() {
        let a = DMatrix::from_row_slice(4, 3, &[1.0, -1.0, 0.0, 2.0, -2.0, 0.0, 0.0, 1.0, -1.0, 1.0, 0.0, -1.0]);
        let rows = select_independent_rows(&a, 2, DEFAULT_RANK_TOL).unwrap();
        let sub = DMatrix::from_rows(&rows.iter().map(|&i| a.row(i).into_owned()).collect::<Vec<_>>());
        assert_eq!(numerical_rank(&sub, DEFAULT_RANK_TOL), 2);
        assert!(select_independent_rows(&a, 3, DEFAULT_RANK_TOL).is_none());
    }

    fn small_matrix() -> impl Strategy<Value = DMatrix<f64>> {
        (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-3.0f64..3.0, r * c).prop_map(move |v| DMatrix::from_row_slice(r, c, &v))
        })
    }

    fn low_rank_matrix() -> impl Strategy<Value = DMatrix<f64>> {
        (1usize..=5, 1usize..=5, 1usize..=3).prop_flat_map(|(r, c, k)| {
            (
                proptest::collection::vec(-2.0f64..2.0, r * k),
                proptest::collection::vec(-2.0f64..2.0, k * c),
            )
                .prop_map(move |(left, right)| {
                    DMatrix::from_row_slice(r, k, &left) * DMatrix::from_row_slice(k, c, &right)
                })
        })
    }

    proptest! {
        #[test]
        fn nullspace_is_orthonormal_kernel(a in prop_oneof![small_matrix(), low_rank_matrix()]) {
            let tol = DEFAULT_RANK_TOL;
            let n = orthonormal_nullspace(&a, tol);
            let gram = n.transpose() * &n;
            let eye = DMatrix::<f64>::identity(n.ncols(), n.ncols());
            prop_assert!((gram - eye).amax() < 1e-12);
            let norm_a = a.norm();
            for col in n.column_iter() {
                prop_assert!((&a * col).norm() <= 10.0 * tol * norm_a + 1e-14);
            }
            prop_assert_eq!(numerical_rank(&a, tol) + n.ncols(), a.ncols());
        }

        #[test]
        fn least_squares_residual_orthogonal(a in small_matrix(), seed in proptest::collection::vec(-5.0f64..5.0, 6)) {
            let b = DVector::from_iterator(a.nrows(), seed.into_iter().cycle().take(a.nrows()));
            let r = least_squares(&a, &b);
            let resid = &a * &r.solution - &b;
            prop_assert!((resid.norm() - r.residual_norm).abs() < 1e-12 * (1.0 + b.norm()));
            prop_assert!((a.transpose() * resid).norm() <= 1e-8 * a.norm() * b.norm() + 1e-12);
            prop_assert!(r.rank <= a.nrows().min(a.ncols()));
        }

        #[test]
        fn principal_minor_matches_cofactor(n in 1usize..=6, vals in proptest::collection::vec(-2.0f64..2.0, 36), i in 0usize..6) {
            let a = DMatrix::from_row_slice(n, n, &vals[..n * n]);
            let i = i % n;
            let lu = principal_minor(&a, i);
            let oracle = if n == 1 { 1.0 } else { cofactor_det(&a.clone().remove_row(i).remove_column(i)) };
            prop_assert!((lu - oracle).abs() <= 1e-9 * oracle.abs().max(1.0));
        }
    }
}
