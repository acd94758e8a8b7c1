//! Brute-force oracles and error metrics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::coreset::Coreset;
use crate::error::{CoresetError, Result};
use crate::linalg::{sym_eigen, DenseMatrix, DenseVector, SymmetricPsd, RANK_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// `Σ (aᵀx)^p`; for non-integer `p` the sign of `aᵀx` is kept.
    Signed,
    /// `Σ |aᵀx|^p`.
    Absolute,
}

/// `t^p` under the given mode.
pub fn signed_power(t: f64, p: f64, mode: Mode) -> f64 {
    let is_int = p.fract() == 0.0 && p.abs() < i32::MAX as f64;
    match mode {
        Mode::Absolute if is_int => t.abs().powi(p as i32),
        Mode::Absolute => t.abs().powf(p),
        Mode::Signed if is_int => t.powi(p as i32),
        Mode::Signed => t.signum() * t.abs().powf(p),
    }
}

/// `Σᵢ (aᵢᵀx)^p` or `Σᵢ |aᵢᵀx|^p`. Weighted rows contribute through their
/// stored, rescaled vectors.
pub fn contraction_sum<'a, I>(rows: I, x: &DenseVector, p: f64, mode: Mode) -> f64
where
    I: IntoIterator<Item = &'a DenseVector>,
{
    rows.into_iter()
        .map(|a| signed_power(a.dot(x), p, mode))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    RandomUnit,
    SingularDirections,
    SubspaceRandom(usize),
}

/// Which end of the (nonzero) singular spectrum spans the query subspace.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SpectrumEnd {
    #[default]
    Top,
    /// Smallest nonzero singular values.
    Bottom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueryStrategy {
    /// Uniform on the whole unit sphere.
    RandomUnit,
    /// The `k` right singular vectors only.
    SingularDirections(SpectrumEnd),
    /// Uniform on the unit sphere of a `k`-dim right-singular subspace, plus
    /// its `k` singular directions.
    Subspace(SpectrumEnd),
}

#[derive(Clone, Debug)]
pub struct QuerySet {
    pub vectors: Vec<DenseVector>,
    pub provenance: Provenance,
}

impl QuerySet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> DenseVector {
    loop {
        let v = DenseVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Right singular vectors of `a` (columns), selected from one end of the
/// nonzero spectrum.
pub fn right_singular_vectors(a: &DenseMatrix, k: usize, end: SpectrumEnd) -> Result<DenseMatrix> {
    let d = a.ncols();
    if k > d {
        return Err(CoresetError::Config(format!("k = {k} exceeds dimension {d}")));
    }
    let (values, vectors) = sym_eigen(&a.tr_mul(a));
    let top = values.get(0).copied().unwrap_or(0.0);
    let rank = values.iter().filter(|&&v| v > RANK_TOL * top && v > 0.0).count();
    let (start, take) = match end {
        SpectrumEnd::Top => (0, k),
        SpectrumEnd::Bottom => (rank.saturating_sub(k), k.min(rank)),
    };
    Ok(vectors.columns(start, take).into_owned())
}

/// `count` uniform unit vectors in the span of the orthonormal columns of
/// `basis`, followed by the columns themselves.
pub fn queries_in_basis(basis: &DenseMatrix, count: usize, seed: u64) -> QuerySet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = basis.ncols();
    let mut vectors: Vec<DenseVector> = (0..count)
        .map(|_| {
            let c = random_unit(k, &mut rng);
            let v = basis * c;
            let n = v.norm();
            v / n
        })
        .collect();
    vectors.extend(basis.column_iter().map(|c| c.into_owned()));
    QuerySet {
        vectors,
        provenance: Provenance::SubspaceRandom(k),
    }
}

pub fn make_queries(
    a: &DenseMatrix,
    k: usize,
    count: usize,
    seed: u64,
    strategy: QueryStrategy,
) -> Result<QuerySet> {
    match strategy {
        QueryStrategy::RandomUnit => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(QuerySet {
                vectors: (0..count).map(|_| random_unit(a.ncols(), &mut rng)).collect(),
                provenance: Provenance::RandomUnit,
            })
        }
        QueryStrategy::SingularDirections(end) => {
            let basis = right_singular_vectors(a, k, end)?;
            Ok(QuerySet {
                vectors: basis.column_iter().map(|c| c.into_owned()).collect(),
                provenance: Provenance::SingularDirections,
            })
        }
        QueryStrategy::Subspace(end) => {
            let basis = right_singular_vectors(a, k, end)?;
            Ok(queries_in_basis(&basis, count, seed))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorStats {
    pub max: f64,
    pub median: f64,
    pub mean: f64,
    /// Per-query error, `NaN` for excluded queries.
    pub per_query: Vec<f64>,
    /// Queries with a zero denominator.
    pub excluded: usize,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per-query `|F(x) − F̂(x)| / Σ|aᵀx|^p`, aggregated.
pub fn relative_error(
    full: &[DenseVector],
    coreset: &Coreset,
    queries: &QuerySet,
    p: f64,
    mode: Mode,
) -> ErrorStats {
    let per_query: Vec<f64> = queries
        .vectors
        .iter()
        .map(|x| {
            let denom = contraction_sum(full, x, p, Mode::Absolute);
            if !(denom > 0.0) {
                return f64::NAN;
            }
            let exact = if mode == Mode::Absolute {
                denom
            } else {
                contraction_sum(full, x, p, mode)
            };
            let approx = contraction_sum(coreset.rows(), x, p, mode);
            (exact - approx).abs() / denom
        })
        .collect();
    let kept: Vec<f64> = per_query.iter().copied().filter(|v| !v.is_nan()).collect();
    let excluded = per_query.len() - kept.len();
    let (max, mean) = if kept.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (
            kept.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            kept.iter().sum::<f64>() / kept.len() as f64,
        )
    };
    ErrorStats {
        max,
        median: median(&kept),
        mean,
        per_query,
        excluded,
    }
}

/// Tolerance on coreset mass outside `col(G)`, relative to `λ_max(G)`.
pub const OUTSIDE_MASS_TOL: f64 = 1e-8;

/// `‖G^{†/2}(G − Ĝ)G^{†/2}‖₂` on `col(G)`: the smallest `ε` with
/// `(1−ε)G ⪯ Ĝ ⪯ (1+ε)G` there. Infinite when `Ĝ` has mass outside `col(G)`.
pub fn spectral_error(full: &SymmetricPsd, coreset: &SymmetricPsd) -> Result<f64> {
    if full.dim() != coreset.dim() {
        return Err(CoresetError::Dimension {
            expected: full.dim(),
            found: coreset.dim(),
        });
    }
    let (values, vectors) = sym_eigen(full.matrix());
    let top = values.get(0).copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Ok(if coreset.matrix().norm() == 0.0 { 0.0 } else { f64::INFINITY });
    }
    let rank = values.iter().filter(|&&v| v > RANK_TOL * top).count();
    let u = vectors.columns(0, rank).into_owned();
    let g_hat = coreset.matrix();
    let proj = &u * u.transpose();
    let inside = &proj * g_hat * &proj;
    if (g_hat - &inside).norm() > OUTSIDE_MASS_TOL * top {
        return Ok(f64::INFINITY);
    }
    let scale = DenseVector::from_iterator(rank, values.iter().take(rank).map(|v| 1.0 / v.sqrt()));
    let mut k = u.tr_mul(g_hat) * &u;
    for i in 0..rank {
        for j in 0..rank {
            k[(i, j)] *= scale[i] * scale[j];
        }
    }
    let k = (&k + k.transpose()) * 0.5;
    let (ev, _) = sym_eigen(&k);
    Ok(ev.iter().map(|&l| (l - 1.0).abs()).fold(0.0, f64::max))
}

/// `Σ ã ãᵀ` over the stored rows of a coreset.
pub fn coreset_gram(coreset: &Coreset, dim: usize) -> Result<SymmetricPsd> {
    SymmetricPsd::weighted_gram(dim, coreset.rows().map(|r| (1.0, r)))
}
