//! Dense linear algebra primitives: symmetric PSD matrices, Moore–Penrose
//! pseudo-inverse, the in-span rank-one pseudo-inverse update and
//! column-space membership tests.
//!
//! Eigen/singular decompositions are delegated to `nalgebra`; for a
//! symmetric PSD matrix the symmetric eigendecomposition and the SVD
//! coincide, so everything here goes through [`sym_eigen`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{CoresetError, Result};

pub type DenseVector = DVector<f64>;
pub type DenseMatrix = DMatrix<f64>;

/// Relative cutoff on singular values (times the largest one) below which a
/// direction is treated as numerically absent.
pub const RANK_TOL: f64 = 1e-10;

/// Default relative residual tolerance for [`in_column_space`].
pub const SPAN_TOL: f64 = 1e-8;

pub(crate) fn check_vector(x: &DenseVector) -> Result<()> {
    if x.is_empty() {
        return Err(CoresetError::Input("vector has length 0".into()));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(CoresetError::Input(format!(
            "vector entry {i} is not finite ({})",
            x[i]
        )));
    }
    Ok(())
}

pub(crate) fn check_matrix(m: &DenseMatrix) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(CoresetError::Input("matrix has non-finite entries".into()));
    }
    Ok(())
}

fn max_abs(m: &DenseMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
/// Columns of the returned matrix are the matching unit eigenvectors.
pub fn sym_eigen(m: &DenseMatrix) -> (DenseVector, DenseMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Number of eigenvalues above `RANK_TOL * max(eigenvalue)`.
fn numerical_rank(values: &DenseVector) -> usize {
    let top = values.iter().fold(0.0_f64, |acc, v| acc.max(*v));
    if top <= 0.0 {
        return 0;
    }
    values.iter().filter(|&&v| v > RANK_TOL * top).count()
}

/// A square, symmetric, positive semi-definite matrix with its numerical rank.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricPsd {
    matrix: DenseMatrix,
    rank: usize,
}

impl SymmetricPsd {
    /// Validates symmetry (to `1e-12 * maxabs`) and semi-definiteness
    /// (eigenvalues `>= -1e-10 * maxabs`).
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        check_matrix(&matrix)?;
        if !matrix.is_square() {
            return Err(CoresetError::Input(format!(
                "expected a square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = max_abs(&matrix);
        let n = matrix.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(CoresetError::Input(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let (values, _) = sym_eigen(&matrix);
        if let Some(min) = values.iter().copied().reduce(f64::min) {
            if min < -1e-10 * scale {
                return Err(CoresetError::Input(format!(
                    "matrix is not positive semi-definite (eigenvalue {min:e})"
                )));
            }
        }
        let rank = numerical_rank(&values);
        Ok(SymmetricPsd { matrix, rank })
    }

    /// Averages `m` with its transpose before validating; use for products
    /// such as `WᵀMW` that are symmetric only up to rounding.
    pub fn symmetrized(m: DenseMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(CoresetError::Input("expected a square matrix".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Self::new(sym)
    }

    /// `Σ wᵢ xᵢxᵢᵀ` over the given rows. All rows must share one dimension.
    pub fn weighted_gram<'a, I>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, &'a DenseVector)>,
    {
        let mut g = DMatrix::zeros(dim, dim);
        for (w, x) in rows {
            if x.len() != dim {
                return Err(CoresetError::Dimension {
                    expected: dim,
                    found: x.len(),
                });
            }
            g.ger(w, x, x, 1.0);
        }
        Self::symmetrized(g)
    }

    /// Gram matrix `AᵀA` of the rows of `a`.
    pub fn gram_of_rows(a: &DenseMatrix) -> Result<Self> {
        let g = a.tr_mul(a);
        Self::symmetrized(g)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.matrix
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Moore–Penrose pseudo-inverse of a symmetric PSD matrix. Eigenvalues at or
/// below `RANK_TOL * λ_max` are treated as zero.
pub fn pseudo_inverse(m: &SymmetricPsd) -> DenseMatrix {
    let (values, vectors) = sym_eigen(m.matrix());
    let n = m.dim();
    let rank = numerical_rank(&values);
    let mut out = DMatrix::zeros(n, n);
    for k in 0..rank {
        let v = vectors.column(k);
        out.ger(1.0 / values[k], &v, &v, 1.0);
    }
    out
}

/// Applies `inv ← inv − (inv·y)(inv·y)ᵀ / (1 + yᵀ·inv·y)` in place and
/// returns the denominator.
pub(crate) fn sherman_morrison_in_place(inv: &mut DenseMatrix, y: &DenseVector) -> Result<f64> {
    let iy = &*inv * y;
    let denom = 1.0 + y.dot(&iy);
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(CoresetError::Numerical(format!(
            "rank-one update denominator is {denom:e}; pseudo-inverse state is corrupted"
        )));
    }
    inv.ger(-1.0 / denom, &iy, &iy, 1.0);
    Ok(denom)
}

/// `(M + xxᵀ)† = M† − M†xxᵀM† / (1 + xᵀM†x)` for `x` in the column space of
/// `M`, given `m_inv = M†`. The caller is responsible for the span check
/// (see [`in_column_space`]); outside the span the formula is not the
/// pseudo-inverse.
pub fn rank_one_pinv_update(m_inv: &DenseMatrix, x: &DenseVector) -> Result<DenseMatrix> {
    check_matrix(m_inv)?;
    check_vector(x)?;
    if !m_inv.is_square() || m_inv.nrows() != x.len() {
        return Err(CoresetError::Dimension {
            expected: m_inv.nrows(),
            found: x.len(),
        });
    }
    let mut out = m_inv.clone();
    sherman_morrison_in_place(&mut out, x)?;
    Ok(out)
}

/// Orthonormal basis (as columns) of the column space of `m`: the
/// eigenvectors whose eigenvalues exceed `RANK_TOL * λ_max`.
pub fn orthonormal_column_basis(m: &SymmetricPsd) -> DenseMatrix {
    let (values, vectors) = sym_eigen(m.matrix());
    let rank = numerical_rank(&values);
    vectors.columns(0, rank).into_owned()
}

/// Residual `x − QQᵀx` of projecting `x` onto the span of the orthonormal
/// columns of `q`.
pub fn span_residual(q: &DenseMatrix, x: &DenseVector) -> DenseVector {
    if q.ncols() == 0 {
        return x.clone();
    }
    let coords = q.tr_mul(x);
    x - q * coords
}

/// True iff `‖x − QQᵀx‖ <= tol·‖x‖`; a zero vector is always in the span.
pub fn in_column_space(q: &DenseMatrix, x: &DenseVector, tol: f64) -> bool {
    let norm = x.norm();
    if norm == 0.0 {
        return true;
    }
    span_residual(q, x).norm() <= tol * norm
}

/// Stacks equal-length vectors as the rows of a matrix.
pub fn stack_rows<'a, I>(dim: usize, rows: I) -> Result<DenseMatrix>
where
    I: IntoIterator<Item = &'a DenseVector>,
{
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        if r.len() != dim {
            return Err(CoresetError::Dimension {
                expected: dim,
                found: r.len(),
            });
        }
        data.extend(r.iter().copied());
        n += 1;
    }
    Ok(DMatrix::from_row_slice(n, dim, &data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn psd(rows: usize, data: &[f64]) -> SymmetricPsd {
        SymmetricPsd::new(DMatrix::from_row_slice(rows, rows, data)).unwrap()
    }

    fn assert_close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) {
        let scale = b.norm().max(1.0);
        assert!((a - b).norm() <= tol * scale, "{a} vs {b}");
    }

    #[test]
    fn pinv_identity_and_diagonal() {
        let i3 = SymmetricPsd::new(DMatrix::identity(3, 3)).unwrap();
        assert_close(&pseudo_inverse(&i3), &DMatrix::identity(3, 3), 1e-14);

        let d = psd(2, &[2.0, 0.0, 0.0, 0.0]);
        assert_eq!(d.rank(), 1);
        assert_close(
            &pseudo_inverse(&d),
            &DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]),
            1e-14,
        );
    }

    #[test]
    fn pinv_rank_one_outer_product() {
        // a = (1, 2): (aaᵀ)† = aaᵀ / ‖a‖⁴ = aaᵀ / 25
        let m = psd(2, &[1.0, 2.0, 2.0, 4.0]);
        let p = pseudo_inverse(&m);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]) / 25.0;
        assert_close(&p, &expected, 1e-12);
        let a = m.matrix();
        assert_close(&(a * &p * a), a, 1e-12);
        assert_close(&(&p * a * &p), &p, 1e-12);
        assert_close(&(a * &p).transpose(), &(a * &p), 1e-12);
        assert_close(&(&p * a).transpose(), &(&p * a), 1e-12);
    }

    #[test]
    fn pinv_rejects_non_finite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert!(matches!(SymmetricPsd::new(m), Err(CoresetError::Input(_))));
    }

    #[test]
    fn psd_rejects_asymmetric_and_indefinite() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(SymmetricPsd::new(asym).is_err());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(SymmetricPsd::new(indef).is_err());
    }

    #[test]
    fn rank_one_update_examples() {
        let i2 = DMatrix::identity(2, 2);
        let up = rank_one_pinv_update(&i2, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_close(&up, &DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]), 1e-15);

        // M = diag(1, 0), x = (2, 0): (diag(5, 0))† = diag(1/5, 0)
        let m_inv = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let up = rank_one_pinv_update(&m_inv, &DVector::from_vec(vec![2.0, 0.0])).unwrap();
        let direct = pseudo_inverse(&psd(2, &[5.0, 0.0, 0.0, 0.0]));
        assert_close(&up, &direct, 1e-14);
        assert_close(&up, &DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.0, 0.0]), 1e-14);

        let up = rank_one_pinv_update(&i2, &DVector::zeros(2)).unwrap();
        assert_close(&up, &i2, 0.0);
    }

    #[test]
    fn rank_one_update_detects_corrupted_state() {
        // A negative-definite "inverse" makes the denominator non-positive.
        let bad = DMatrix::from_row_slice(1, 1, &[-2.0]);
        let err = rank_one_pinv_update(&bad, &DVector::from_vec(vec![1.0])).unwrap_err();
        assert!(matches!(err, CoresetError::Numerical(_)));
    }

    #[test]
    fn basis_examples() {
        let q = orthonormal_column_basis(&psd(2, &[3.0, 0.0, 0.0, 0.0]));
        assert_eq!(q.ncols(), 1);
        assert!((q[(0, 0)].abs() - 1.0).abs() < 1e-14 && q[(1, 0)].abs() < 1e-14);

        let q = orthonormal_column_basis(&SymmetricPsd::new(DMatrix::identity(2, 2)).unwrap());
        assert_close(&(&q * q.transpose()), &DMatrix::identity(2, 2), 1e-14);

        // a = (3, 4): basis is ±(0.6, 0.8)
        let q = orthonormal_column_basis(&psd(2, &[9.0, 12.0, 12.0, 16.0]));
        assert_eq!(q.ncols(), 1);
        let proj = &q * q.transpose();
        let expected = DMatrix::from_row_slice(2, 2, &[0.36, 0.48, 0.48, 0.64]);
        assert_close(&proj, &expected, 1e-12);
    }

    #[test]
    fn column_space_examples() {
        let q = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert!(in_column_space(&q, &DVector::from_vec(vec![5.0, 0.0]), 1e-8));
        assert!(!in_column_space(&q, &DVector::from_vec(vec![0.0, 1.0]), 1e-8));
        assert!(in_column_space(&q, &DVector::zeros(2), 1e-8));

        // residual of (1, 1.000001) off span{(1,1)} is 1e-6/√2 ≈ 7.07e-7,
        // relative to ‖x‖ ≈ √2 that is 5e-7.
        let s = 1.0 / 2f64.sqrt();
        let q = DMatrix::from_column_slice(2, 1, &[s, s]);
        let x = DVector::from_vec(vec![1.0, 1.000001]);
        let rel = span_residual(&q, &x).norm() / x.norm();
        assert!((rel - 5.0e-7).abs() < 1e-9, "{rel}");
        assert!(in_column_space(&q, &x, 1e-3));
        assert!(!in_column_space(&q, &x, 1e-8));
    }
}
