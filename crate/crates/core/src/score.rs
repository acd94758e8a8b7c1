//! Online leverage scores `ẽᵢ = xᵢᵀ (Σ_{j≤i} xⱼxⱼᵀ)† xᵢ`.
//!
//! [`ScoreState`] keeps the running covariance `M`, its pseudo-inverse and an
//! orthonormal basis `Q` of its column space. Rows inside `col(Q)` take the
//! rank-one pseudo-inverse update; rows that leave it trigger a basis
//! refresh.
//!
//! The default representation stores `M` and `M†` in basis coordinates:
//! `M = Q C Qᵀ`, `M† = Q C⁻¹ Qᵀ` with `C` of size `rank × rank`. The in-span
//! update `M† ← M† − M†xxᵀM†/(1+xᵀM†x)` is then the same formula applied to
//! `C⁻¹` with `y = Qᵀx`, and growing the basis is a bordered inverse. This
//! keeps lifted kernel states (ambient dimension `d^q`) tractable. The dense
//! representation in [`ScoreMode::DenseRecompute`] materialises `M` and
//! recomputes `M†` from an eigendecomposition on every row; it exists as an
//! oracle.

use nalgebra::{DMatrix, DVector, Dyn};

use crate::error::{CoresetError, Result};
use crate::linalg::{
    check_vector, orthonormal_column_basis, pseudo_inverse,
    DenseMatrix, DenseVector, SymmetricPsd, RANK_TOL, SPAN_TOL,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ScoreMode {
    /// Factored state, rank-one update on in-span rows.
    #[default]
    Incremental,
    /// Dense `M`, `M†` recomputed from scratch on every row.
    DenseRecompute,
}

#[derive(Clone, Debug)]
enum Repr {
    Factored(Factored),
    Dense {
        gram: DenseMatrix,
        pinv: DenseMatrix,
        basis: DenseMatrix,
    },
}

/// `M = Q C Qᵀ` with `Q` the first `rank` columns of `basis` and `C`, `C⁻¹`
/// the leading `rank × rank` blocks of `gram`, `inv`. Buffers grow
/// geometrically.
#[derive(Clone, Debug)]
struct Factored {
    basis: DenseMatrix,
    gram: DenseMatrix,
    inv: DenseMatrix,
    rank: usize,
    since_refresh: usize,
}

/// Running state of the online leverage score computation for one stream.
#[derive(Clone, Debug)]
pub struct ScoreState {
    dim: usize,
    rows_seen: usize,
    span_tol: f64,
    repr: Repr,
}

impl ScoreState {
    pub fn new(dim: usize) -> Self {
        Self::with_mode(dim, ScoreMode::Incremental)
    }

    pub fn with_mode(dim: usize, mode: ScoreMode) -> Self {
        let repr = match mode {
            ScoreMode::Incremental => Repr::Factored(Factored {
                basis: DMatrix::zeros(dim, 0),
                gram: DMatrix::zeros(0, 0),
                inv: DMatrix::zeros(0, 0),
                rank: 0,
                since_refresh: 0,
            }),
            ScoreMode::DenseRecompute => Repr::Dense {
                gram: DMatrix::zeros(dim, dim),
                pinv: DMatrix::zeros(dim, dim),
                basis: DMatrix::zeros(dim, 0),
            },
        };
        ScoreState {
            dim,
            rows_seen: 0,
            span_tol: SPAN_TOL,
            repr,
        }
    }

    /// Relative residual tolerance for the in-span test.
    pub fn with_span_tol(mut self, tol: f64) -> Self {
        self.span_tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows_seen(&self) -> usize {
        self.rows_seen
    }

    pub fn rank(&self) -> usize {
        match &self.repr {
            Repr::Factored(f) => f.rank,
            Repr::Dense { basis, .. } => basis.ncols(),
        }
    }

    /// Orthonormal basis of `col(M)`, one column per direction.
    pub fn basis(&self) -> DenseMatrix {
        match &self.repr {
            Repr::Factored(f) => f.basis.columns(0, f.rank).into_owned(),
            Repr::Dense { basis, .. } => basis.clone(),
        }
    }

    /// The running covariance `M = Σ xxᵀ` (materialised).
    pub fn gram(&self) -> DenseMatrix {
        match &self.repr {
            Repr::Factored(f) => {
                let q = f.basis.columns(0, f.rank);
                q * f.gram.view((0, 0), (f.rank, f.rank)) * q.transpose()
            }
            Repr::Dense { gram, .. } => gram.clone(),
        }
    }

    /// The maintained `M†` (materialised).
    pub fn pinv(&self) -> DenseMatrix {
        match &self.repr {
            Repr::Factored(f) => {
                let q = f.basis.columns(0, f.rank);
                q * f.inv.view((0, 0), (f.rank, f.rank)) * q.transpose()
            }
            Repr::Dense { pinv, .. } => pinv.clone(),
        }
    }

    /// `xᵀM†x` against the current state, without updating it.
    pub fn peek(&self, x: &DenseVector) -> f64 {
        match &self.repr {
            Repr::Factored(f) => {
                let y = f.basis.columns(0, f.rank).tr_mul(x);
                y.dot(&(f.inv.view((0, 0), (f.rank, f.rank)) * &y))
            }
            Repr::Dense { pinv, .. } => x.dot(&(pinv * x)),
        }
    }

    /// Feeds `x`, updating `M ← M + xxᵀ`, and returns `ẽ = xᵀ(M + xxᵀ)†x`
    /// clamped to `[0, 1]`. Zero rows score 0 and leave the state unchanged.
    pub fn update(&mut self, x: &DenseVector) -> Result<f64> {
        if x.len() != self.dim {
            return Err(CoresetError::Dimension {
                expected: self.dim,
                found: x.len(),
            });
        }
        check_vector(x)?;
        self.rows_seen += 1;
        if x.iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        let score = match &mut self.repr {
            Repr::Factored(f) => f.update(x, self.span_tol)?,
            Repr::Dense { gram, pinv, basis } => {
                gram.ger(1.0, x, x, 1.0);
                let psd = SymmetricPsd::symmetrized(gram.clone())?;
                *pinv = pseudo_inverse(&psd);
                *basis = orthonormal_column_basis(&psd);
                x.dot(&(&*pinv * x))
            }
        };
        Ok(score.clamp(0.0, 1.0))
    }

    /// Relative deviation (Frobenius) between the maintained `M†` and a
    /// fresh pseudo-inverse of the maintained `M`.
    pub fn pinv_drift(&self) -> Result<f64> {
        let fresh = pseudo_inverse(&SymmetricPsd::symmetrized(self.gram())?);
        let kept = self.pinv();
        Ok((&kept - &fresh).norm() / fresh.norm().max(f64::MIN_POSITIVE))
    }
}

/// Sherman–Morrison on a view; returns `(C⁻¹y, 1 + yᵀC⁻¹y)` for the old `C`.
fn rank_one_in_place<S>(
    inv: &mut nalgebra::Matrix<f64, Dyn, Dyn, S>,
    y: &DenseVector,
) -> Result<(DenseVector, f64)>
where
    S: nalgebra::StorageMut<f64, Dyn, Dyn>,
{
    let iy = &*inv * y;
    let denom = 1.0 + y.dot(&iy);
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(CoresetError::Numerical(format!(
            "rank-one update denominator is {denom:e}; pseudo-inverse state is corrupted"
        )));
    }
    inv.ger(-1.0 / denom, &iy, &iy, 1.0);
    Ok((iy, denom))
}

impl Factored {
    fn reserve(&mut self) {
        let cap = self.gram.nrows();
        if self.rank < cap {
            return;
        }
        let m = self.basis.nrows();
        let new_cap = (cap * 2).max(8).min(m.max(1));
        let k = self.rank;
        let mut basis = DMatrix::zeros(m, new_cap);
        basis.columns_mut(0, k).copy_from(&self.basis.columns(0, k));
        let mut gram = DMatrix::zeros(new_cap, new_cap);
        gram.view_mut((0, 0), (k, k)).copy_from(&self.gram.view((0, 0), (k, k)));
        let mut inv = DMatrix::zeros(new_cap, new_cap);
        inv.view_mut((0, 0), (k, k)).copy_from(&self.inv.view((0, 0), (k, k)));
        self.basis = basis;
        self.gram = gram;
        self.inv = inv;
    }

    fn update(&mut self, x: &DenseVector, span_tol: f64) -> Result<f64> {
        let k = self.rank;
        let norm = x.norm();
        let (mut y, resid) = {
            let q = self.basis.columns(0, k);
            let mut y = q.tr_mul(x);
            let mut resid = x - &q * &y;
            // second Gram–Schmidt pass keeps the basis orthonormal
            if k > 0 && resid.norm() > span_tol * norm {
                let c2 = q.tr_mul(&resid);
                resid -= &q * &c2;
                y += c2;
            }
            (y, resid)
        };
        let rho = resid.norm();
        let trace = self.gram.view((0, 0), (k, k)).trace() + norm * norm;
        let fresh = rho > span_tol * norm && rho * rho > RANK_TOL * trace && k < self.basis.nrows();

        self.since_refresh += 1;
        self.gram.view_mut((0, 0), (k, k)).ger(1.0, &y, &y, 1.0);
        let (iy, denom) = if k > 0 {
            rank_one_in_place(&mut self.inv.view_mut((0, 0), (k, k)), &y)?
        } else {
            (DenseVector::zeros(0), 1.0)
        };
        if fresh {
            // border A⁻¹ (A = C + yyᵀ, just updated) with b = ρy, c = ρ²:
            // A⁻¹b = ρC⁻¹y / (1 + yᵀC⁻¹y) and the Schur complement is
            // ρ² / (1 + yᵀC⁻¹y), both free of cancellation
            let b = &y * rho;
            let z = iy * (rho / denom);
            let schur = rho * rho / denom;
            if !(schur > 0.0 && schur.is_finite()) {
                return Err(CoresetError::Numerical(format!(
                    "non-positive Schur complement {schur:e} while growing the basis"
                )));
            }
            self.reserve();
            self.inv.view_mut((0, 0), (k, k)).ger(1.0 / schur, &z, &z, 1.0);
            for i in 0..k {
                self.inv[(i, k)] = -z[i] / schur;
                self.inv[(k, i)] = -z[i] / schur;
                self.gram[(i, k)] = b[i];
                self.gram[(k, i)] = b[i];
            }
            self.inv[(k, k)] = 1.0 / schur;
            self.gram[(k, k)] = rho * rho;
            self.basis.set_column(k, &(resid / rho));
            self.rank = k + 1;
            y = DVector::from_iterator(k + 1, y.iter().copied().chain(std::iter::once(rho)));
        }

        let k = self.rank;
        if self.since_refresh >= k.max(64) {
            if let Some(chol) = self.gram.view((0, 0), (k, k)).into_owned().cholesky() {
                self.inv.view_mut((0, 0), (k, k)).copy_from(&chol.inverse());
            }
            self.since_refresh = 0;
        }
        Ok(y.dot(&(self.inv.view((0, 0), (k, k)) * &y)))
    }
}
