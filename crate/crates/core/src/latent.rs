//! Single-topic model recovery from (coreset) moments: whitening, the reduced
//! third-order tensor, robust tensor power iteration and inverse whitening.
//!
//! With topics `μ_h` and proportions `ω_h`, `M₂ = Σ ω_h μ_h μ_hᵀ` and
//! `M₃ = Σ ω_h μ_h^{⊗3}`. A whitening `W` (`WᵀM₂W = I_k`) makes
//! `M₃(W,W,W) = Σ λ_h v_h^{⊗3}` orthogonal with `v_h = √ω_h Wᵀμ_h` and
//! `λ_h = ω_h^{-1/2}`, so each topic is recovered as `μ_h = λ_h (Wᵀ)† v_h`
//! and its weight as `λ_h^{-2}`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::coreset::WeightedRow;
use crate::error::{CoresetError, Result};
use crate::linalg::{sym_eigen, DenseMatrix, DenseVector, SymmetricPsd, RANK_TOL};

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_ITERATIONS: usize = 100;

/// Dense symmetric `k × k × k` tensor, `data[(i k + j) k + l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    k: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(k: usize) -> Self {
        Tensor3 {
            k,
            data: vec![0.0; k * k * k],
        }
    }

    /// Entries in row-major `(i, j, l)` order.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.data[(i * self.k + j) * self.k + l]
    }

    /// `self += c · v^{⊗3}`.
    pub fn add_cube(&mut self, c: f64, v: &DenseVector) {
        let k = self.k;
        for i in 0..k {
            let a = c * v[i];
            for j in 0..k {
                let b = a * v[j];
                let base = (i * k + j) * k;
                for l in 0..k {
                    self.data[base + l] += b * v[l];
                }
            }
        }
    }

    /// `T(I, v, v)`.
    pub fn contract_two(&self, v: &DenseVector) -> DenseVector {
        let k = self.k;
        DenseVector::from_fn(k, |i, _| {
            let mut s = 0.0;
            for j in 0..k {
                let base = (i * k + j) * k;
                let mut inner = 0.0;
                for l in 0..k {
                    inner += self.data[base + l] * v[l];
                }
                s += inner * v[j];
            }
            s
        })
    }

    /// `T(v, v, v)`.
    pub fn contract_all(&self, v: &DenseVector) -> f64 {
        self.contract_two(v).dot(v)
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|x| *x *= c);
    }

    /// Largest deviation from full index symmetry.
    pub fn asymmetry(&self) -> f64 {
        let k = self.k;
        let mut worst = 0.0_f64;
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    let t = self.get(i, j, l);
                    for u in [
                        self.get(i, l, j),
                        self.get(j, i, l),
                        self.get(j, l, i),
                        self.get(l, i, j),
                        self.get(l, j, i),
                    ] {
                        worst = worst.max((t - u).abs());
                    }
                }
            }
        }
        worst
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// `W = U_k Σ_k^{-1/2}` from the top-`k` eigenpairs of `m2`.
pub fn whitening(m2: &SymmetricPsd, k: usize) -> Result<DenseMatrix> {
    let (values, vectors) = sym_eigen(m2.matrix());
    let top = values.get(0).copied().unwrap_or(0.0);
    let rank = values.iter().filter(|&&v| v > RANK_TOL * top && v > 0.0).count();
    if k == 0 || rank < k {
        return Err(CoresetError::Rank {
            required: k,
            found: rank,
        });
    }
    let mut w = vectors.columns(0, k).into_owned();
    for (c, mut col) in w.column_iter_mut().enumerate() {
        col /= values[c].sqrt();
    }
    Ok(w)
}

/// `M₂ = Σ ã ãᵀ` over the stored (rescaled) rows and its whitening.
pub fn build_moments(rows: &[WeightedRow], k: usize) -> Result<(SymmetricPsd, DenseMatrix)> {
    let Some(first) = rows.first() else {
        return Err(CoresetError::Rank { required: k, found: 0 });
    };
    let d = first.row.len();
    let m2 = SymmetricPsd::weighted_gram(d, rows.iter().map(|r| (1.0, &r.row)))?;
    let w = whitening(&m2, k)?;
    Ok((m2, w))
}

/// `Σ (Wᵀã)^{⊗3}` accumulated row by row.
pub fn reduce_tensor<'a, I>(rows: I, w: &DenseMatrix) -> Tensor3
where
    I: IntoIterator<Item = &'a DenseVector>,
{
    let mut t = Tensor3::zeros(w.ncols());
    for a in rows {
        t.add_cube(1.0, &w.tr_mul(a));
    }
    t
}

#[derive(Clone, Debug)]
pub struct RtpiResult {
    /// `(λ, v)` pairs, `λ` descending.
    pub factors: Vec<(f64, DenseVector)>,
    /// False when a non-positive `λ` stopped the deflation early.
    pub complete: bool,
}

fn power_iterate(t: &Tensor3, mut v: DenseVector, iterations: usize) -> DenseVector {
    for _ in 0..iterations {
        let next = t.contract_two(&v);
        let n = next.norm();
        if !(n > 0.0) {
            break;
        }
        v = next / n;
    }
    v
}

/// Robust tensor power iteration with deflation.
pub fn rtpi(t: &Tensor3, k: usize, restarts: usize, iterations: usize, seed: u64) -> RtpiResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = t.clone();
    let dim = t.dim();
    let mut factors = Vec::with_capacity(k);
    let mut complete = true;
    for _ in 0..k.min(dim) {
        let mut best: Option<(f64, DenseVector)> = None;
        for _ in 0..restarts.max(1) {
            let start = loop {
                let v = DenseVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
                let n = v.norm();
                if n > 1e-12 {
                    break v / n;
                }
            };
            let v = power_iterate(&work, start, iterations);
            let lambda = work.contract_all(&v);
            if best.as_ref().is_none_or(|(b, _)| lambda > *b) {
                best = Some((lambda, v));
            }
        }
        let (_, v) = best.expect("at least one restart");
        let v = power_iterate(&work, v, iterations);
        let lambda = work.contract_all(&v);
        if !(lambda > 0.0) {
            complete = false;
            break;
        }
        work.add_cube(-lambda, &v);
        factors.push((lambda, v));
    }
    if factors.len() < k {
        complete = false;
    }
    factors.sort_by(|a, b| b.0.total_cmp(&a.0));
    RtpiResult { factors, complete }
}

/// `λ (Wᵀ)† v`, clipped to the nonnegative orthant and ℓ1-normalised.
pub fn unwhiten(w: &DenseMatrix, lambda: f64, v: &DenseVector) -> Result<DenseVector> {
    let wtw = w.tr_mul(w);
    let inv = wtw
        .try_inverse()
        .ok_or_else(|| CoresetError::Numerical("whitening matrix has dependent columns".into()))?;
    let mu = w * (inv * v) * lambda;
    let clipped = mu.map(|x| x.max(0.0));
    let s = clipped.sum();
    if s > 0.0 {
        Ok(clipped / s)
    } else {
        Ok(DenseVector::from_element(mu.len(), 1.0 / mu.len() as f64))
    }
}

#[derive(Clone, Debug)]
pub struct MomentSummary {
    pub m2: SymmetricPsd,
    pub whitening: DenseMatrix,
    pub reduced: Tensor3,
    pub factors: Vec<(f64, DenseVector)>,
    pub complete: bool,
}

#[derive(Clone, Debug)]
pub struct TopicEstimate {
    pub summary: MomentSummary,
    /// Topic-word distributions.
    pub topics: Vec<DenseVector>,
    /// Topic proportions from `λ⁻²`, normalised to sum to 1.
    pub weights: Vec<f64>,
}

/// Full single-topic estimation from the stored rows of a coreset. Topic
/// vectors are ℓ1-normalised, so the overall scale of the moments (and of
/// the sampling rescale) does not enter.
pub fn estimate_topics(
    rows: &[WeightedRow],
    k: usize,
    restarts: usize,
    iterations: usize,
    seed: u64,
) -> Result<TopicEstimate> {
    let (m2, w) = build_moments(rows, k)?;
    let reduced = reduce_tensor(rows.iter().map(|r| &r.row), &w);
    let result = rtpi(&reduced, k, restarts, iterations, seed);
    let topics = result
        .factors
        .iter()
        .map(|(l, v)| unwhiten(&w, *l, v))
        .collect::<Result<Vec<_>>>()?;
    let raw: Vec<f64> = result.factors.iter().map(|(l, _)| 1.0 / (l * l)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|x| x / total).collect();
    Ok(TopicEstimate {
        summary: MomentSummary {
            m2,
            whitening: w,
            reduced,
            factors: result.factors,
            complete: result.complete,
        },
        topics,
        weights,
    })
}

/// Greedy minimum-ℓ1 matching; returns the average matched distance.
pub fn match_topics(estimated: &[DenseVector], reference: &[DenseVector]) -> Result<f64> {
    if estimated.len() != reference.len() {
        return Err(CoresetError::Dimension {
            expected: reference.len(),
            found: estimated.len(),
        });
    }
    if estimated.is_empty() {
        return Ok(0.0);
    }
    let mut pairs = Vec::with_capacity(estimated.len() * reference.len());
    for (i, e) in estimated.iter().enumerate() {
        for (j, r) in reference.iter().enumerate() {
            if e.len() != r.len() {
                return Err(CoresetError::Dimension {
                    expected: r.len(),
                    found: e.len(),
                });
            }
            pairs.push(((e - r).abs().sum(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut used_e = vec![false; estimated.len()];
    let mut used_r = vec![false; reference.len()];
    let mut total = 0.0;
    for (dist, i, j) in pairs {
        if !used_e[i] && !used_r[j] {
            used_e[i] = true;
            used_r[j] = true;
            total += dist;
        }
    }
    Ok(total / estimated.len() as f64)
}
