//! ℓp Lewis weights and weight-proportional row sampling.
//!
//! The weights are the fixed point of
//! `wᵢ = (aᵢᵀ (AᵀW^{1−2/p}A)† aᵢ)^{p/2}`. The iteration starts from all
//! ones and applies `w ← w^{1−θ} · update^θ`. The undamped map (`θ = 1`) is a
//! contraction for `p < 4`; from `p = 4` on the step is damped to
//! `θ = min{1/2, 2/p}`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::coreset::{check_power, stage_rng, Coreset, WeightedRow};
use crate::error::{CoresetError, Result};
use crate::linalg::{check_matrix, pseudo_inverse, DenseMatrix, SymmetricPsd};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct LewisWeights {
    pub weights: Vec<f64>,
    pub p: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LewisWeights {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Damping used for power `p`.
pub fn damping(p: f64) -> f64 {
    if p < 4.0 {
        1.0
    } else {
        (2.0 / p).min(0.5)
    }
}

/// `aᵢᵀ (Aᵀ diag(s) A)† aᵢ` for every row.
pub fn scaled_leverage(a: &DenseMatrix, s: &[f64]) -> Result<Vec<f64>> {
    let d = a.ncols();
    let mut g = DenseMatrix::zeros(d, d);
    for (i, row) in a.row_iter().enumerate() {
        if s[i] != 0.0 {
            let r = row.transpose();
            g.ger(s[i], &r, &r, 1.0);
        }
    }
    let pinv = pseudo_inverse(&SymmetricPsd::symmetrized(g)?);
    let b = a * pinv;
    Ok((0..a.nrows())
        .map(|i| b.row(i).dot(&a.row(i)).max(0.0))
        .collect())
}

/// Statistical leverage scores `aᵢᵀ(AᵀA)†aᵢ`.
pub fn leverage_scores(a: &DenseMatrix) -> Result<Vec<f64>> {
    check_matrix(a)?;
    scaled_leverage(a, &vec![1.0; a.nrows()])
}

/// Lewis weights from all-ones initialisation.
pub fn lewis_weights(a: &DenseMatrix, p: f64, tol: f64, max_iter: usize) -> Result<LewisWeights> {
    lewis_weights_from(a, p, tol, max_iter, None)
}

/// Lewis weights from a caller-supplied starting point.
pub fn lewis_weights_from(
    a: &DenseMatrix,
    p: f64,
    tol: f64,
    max_iter: usize,
    init: Option<&[f64]>,
) -> Result<LewisWeights> {
    check_power(p)?;
    check_matrix(a)?;
    let n = a.nrows();
    if n == 0 {
        return Err(CoresetError::Input("Lewis weights of an empty matrix".into()));
    }
    let nonzero: Vec<bool> = a.row_iter().map(|r| r.iter().any(|&v| v != 0.0)).collect();
    if !nonzero.iter().any(|&b| b) {
        return Err(CoresetError::Input("Lewis weights of an all-zero matrix".into()));
    }
    let mut w: Vec<f64> = match init {
        Some(w0) if w0.len() == n => w0.to_vec(),
        Some(w0) => {
            return Err(CoresetError::Dimension {
                expected: n,
                found: w0.len(),
            })
        }
        None => vec![1.0; n],
    };
    for (wi, &nz) in w.iter_mut().zip(&nonzero) {
        if !nz {
            *wi = 0.0;
        }
    }
    let theta = damping(p);
    let expo = 1.0 - 2.0 / p;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let s: Vec<f64> = w.iter().map(|&wi| if wi > 0.0 { wi.powf(expo) } else { 0.0 }).collect();
        let tau = scaled_leverage(a, &s)?;
        let mut change = 0.0_f64;
        for i in 0..n {
            if !nonzero[i] {
                continue;
            }
            let update = tau[i].powf(p / 2.0);
            let next = if theta == 1.0 {
                update
            } else {
                w[i].powf(1.0 - theta) * update.powf(theta)
            };
            let rel = (next - w[i]).abs() / w[i].max(f64::MIN_POSITIVE);
            change = change.max(rel);
            w[i] = next;
        }
        if change <= tol {
            converged = true;
            break;
        }
    }
    Ok(LewisWeights {
        weights: w,
        p,
        converged,
        iterations,
    })
}

/// Keep probabilities `min{1, count · wᵢ / Σw}`.
pub fn keep_probabilities(weights: &[f64], count: f64) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights
        .iter()
        .map(|&w| {
            if total > 0.0 {
                (count * w / total).min(1.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Independent keep decisions at the given probabilities, rescaled for `p`.
pub(crate) fn sample_rows(
    rows: &[WeightedRow],
    probs: &[f64],
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<WeightedRow> {
    rows.iter()
        .zip(probs)
        .filter_map(|(row, &q)| {
            let u: f64 = rng.random();
            (u < q).then(|| row.resampled(q, p))
        })
        .collect()
}

/// Samples the rows of `a` by Lewis weights.
pub fn lw_sample(a: &DenseMatrix, w: &LewisWeights, count: f64, seed: u64) -> Result<Coreset> {
    if w.weights.len() != a.nrows() {
        return Err(CoresetError::Dimension {
            expected: a.nrows(),
            found: w.weights.len(),
        });
    }
    let rows: Vec<WeightedRow> = a
        .row_iter()
        .enumerate()
        .map(|(i, r)| WeightedRow::raw(r.transpose(), i))
        .collect();
    let probs = keep_probabilities(&w.weights, count);
    let mut rng = stage_rng(seed, 0);
    let kept = sample_rows(&rows, &probs, w.p, &mut rng);
    Ok(Coreset::new(kept, w.p, a.nrows(), "lewis"))
}
