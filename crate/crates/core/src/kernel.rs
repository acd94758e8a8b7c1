//! Kernelization and the KernelFilter sampler.
//!
//! A row is lifted to `vec(a^{⊗q})` with `q = ⌈p/2⌉`, so `⟨á, x́⟩ = (aᵀx)^q`
//! and a degree-`p` form becomes a quadratic (even `p`) or a
//! `2p/(p+1)`-power (odd `p`) form in the lifted space. KernelFilter scores
//! rows there but emits the original rows.

use rand_chacha::ChaCha8Rng;

use crate::coreset::{check_oversampling, run_sampler, stage_rng, Coreset, Sampler, WeightedRow};
use crate::error::{CoresetError, Result};
use crate::linalg::DenseVector;
use crate::linefilter::{Acceptor, OnlineFilter, Step};
use crate::score::ScoreState;

/// Largest lifted dimension `d^q` accepted.
pub const LIFT_CAPACITY: u128 = 10_000_000;

/// `d^q`, or a capacity error when it exceeds [`LIFT_CAPACITY`].
pub fn lifted_dim(d: usize, q: u32) -> Result<usize> {
    let mut n: u128 = 1;
    for _ in 0..q {
        n = n.saturating_mul(d as u128);
        if n > LIFT_CAPACITY {
            return Err(CoresetError::Capacity {
                what: format!("lift of dimension {d} to order {q}"),
                required: (d as u128).saturating_pow(q),
                limit: LIFT_CAPACITY,
            });
        }
    }
    Ok(n as usize)
}

/// `vec(x^{⊗q})`, with the last factor varying fastest.
pub fn kernelize(x: &DenseVector, q: u32) -> Result<DenseVector> {
    if q == 0 {
        return Err(CoresetError::Config("lift order must be >= 1".into()));
    }
    lifted_dim(x.len(), q)?;
    let mut cur: Vec<f64> = x.iter().copied().collect();
    for _ in 1..q {
        let mut next = Vec::with_capacity(cur.len() * x.len());
        for &c in &cur {
            next.extend(x.iter().map(|&xi| c * xi));
        }
        cur = next;
    }
    Ok(DenseVector::from_vec(cur))
}

/// Double-double value `hi + lo`.
#[derive(Clone, Copy)]
struct Dd(f64, f64);

impl Dd {
    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let z = s - a;
        Dd(s, (a - (s - z)) + (b - z))
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.0, o.0);
        let lo = s.1 + self.1 + o.1;
        Dd::two_sum(s.0, lo)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p) + (self.0 * o.1 + self.1 * o.0);
        Dd::two_sum(p, e)
    }
}

/// `⟨vec(x^{⊗q}), vec(y^{⊗q})⟩` in double-double arithmetic, term order as
/// in [`kernelize`].
fn lifted_dot_dd(x: &DenseVector, y: &DenseVector, q: u32) -> f64 {
    let lift = |v: &DenseVector| {
        let mut cur: Vec<Dd> = v.iter().map(|&a| Dd(a, 0.0)).collect();
        for _ in 1..q {
            cur = cur
                .iter()
                .flat_map(|&c| v.iter().map(move |&a| c.mul(Dd(a, 0.0))))
                .collect();
        }
        cur
    };
    let (lx, ly) = (lift(x), lift(y));
    let s = lx
        .iter()
        .zip(&ly)
        .fold(Dd(0.0, 0.0), |acc, (a, b)| acc.add(a.mul(*b)));
    s.0 + s.1
}

/// `(|xᵀy|^p, lifted form)` with the lift of order `⌈p/2⌉`. Inner products
/// are evaluated in double-double so that the comparison is not dominated
/// by cancellation when `xᵀy` is small relative to `‖x‖‖y‖`.
pub fn kernel_identity_check(x: &DenseVector, y: &DenseVector, p: u32) -> Result<(f64, f64)> {
    if p < 2 {
        return Err(CoresetError::Config(format!("p must be >= 2, got {p}")));
    }
    if x.len() != y.len() {
        return Err(CoresetError::Dimension {
            expected: x.len(),
            found: y.len(),
        });
    }
    let q = p.div_ceil(2);
    lifted_dim(x.len(), q)?;
    let lhs = lifted_dot_dd(x, y, 1).abs().powi(p as i32);
    let lifted = lifted_dot_dd(x, y, q).abs();
    let rhs = if p.is_multiple_of(2) {
        lifted * lifted
    } else {
        lifted.powf(2.0 * p as f64 / (p as f64 + 1.0))
    };
    Ok((lhs, rhs))
}

/// `é` for even `p`, `é^{p/(p+1)}` for odd `p`.
pub fn kernel_sensitivity(e: f64, p: u32) -> f64 {
    if e <= 0.0 {
        0.0
    } else if p.is_multiple_of(2) {
        e.min(1.0)
    } else {
        e.powf(p as f64 / (p as f64 + 1.0)).min(1.0)
    }
}

/// Online KernelFilter state for one stream.
#[derive(Clone, Debug)]
pub struct KernelFilter {
    order: u32,
    p_int: u32,
    score: ScoreState,
    acc: Acceptor,
    label: String,
}

impl KernelFilter {
    pub fn new(dim: usize, p: u32, r: f64, seed: u64) -> Result<Self> {
        Self::with_rng(dim, p, r, stage_rng(seed, 0))
    }

    pub fn with_rng(dim: usize, p: u32, r: f64, rng: ChaCha8Rng) -> Result<Self> {
        if p < 2 {
            return Err(CoresetError::Config(format!(
                "kernelfilter needs an integer p >= 2, got {p}"
            )));
        }
        check_oversampling(r)?;
        let order = p.div_ceil(2);
        let lifted = lifted_dim(dim, order)?;
        Ok(KernelFilter {
            order,
            p_int: p,
            score: ScoreState::new(lifted),
            acc: Acceptor::new(p as f64, r, rng),
            label: format!("kernelfilter(p={p})"),
        })
    }

    pub fn lift_order(&self) -> u32 {
        self.order
    }

    pub fn rows_seen(&self) -> usize {
        self.acc.seen
    }

    pub fn total_score(&self) -> f64 {
        self.acc.total
    }

    pub fn score_state(&self) -> &ScoreState {
        &self.score
    }

    pub fn step(&mut self, row: &WeightedRow) -> Result<Step> {
        let l = self.score_row(row)?;
        Ok(self.accept(l, row))
    }

    pub fn process(&mut self, a: &DenseVector) -> Result<Option<WeightedRow>> {
        let row = WeightedRow::raw(a.clone(), self.acc.seen);
        Ok(self.step(&row)?.kept)
    }
}

impl OnlineFilter for KernelFilter {
    fn score_row(&mut self, row: &WeightedRow) -> Result<f64> {
        let lifted = kernelize(&row.row, self.order)?;
        let e = self.score.update(&lifted)?;
        self.acc.seen += 1;
        Ok(kernel_sensitivity(e, self.p_int))
    }

    fn accept(&mut self, score: f64, row: &WeightedRow) -> Step {
        self.acc.decide(score, row)
    }

    fn set_oversampling(&mut self, r: f64) -> Result<()> {
        check_oversampling(r)?;
        self.acc.r = r;
        Ok(())
    }

    fn oversampling(&self) -> f64 {
        self.acc.r
    }
}

impl Sampler for KernelFilter {
    fn label(&self) -> &str {
        &self.label
    }

    fn push(&mut self, row: WeightedRow, out: &mut Vec<WeightedRow>) -> Result<()> {
        if let Some(kept) = self.step(&row)?.kept {
            out.push(kept);
        }
        Ok(())
    }

    fn effective_r(&self) -> Option<f64> {
        Some(self.acc.r)
    }
}

pub fn kf_run<I>(rows: I, dim: usize, p: u32, r: f64, seed: u64) -> Result<Coreset>
where
    I: IntoIterator<Item = DenseVector>,
{
    let mut kf = KernelFilter::new(dim, p, r, seed)?;
    run_sampler(&mut kf, rows, p as f64)
}

/// The `l̃` sequence KernelFilter assigns to `rows` (no sampling).
pub fn kf_scores(rows: &[DenseVector], p: u32) -> Result<Vec<f64>> {
    let dim = rows.first().map_or(0, |r| r.len());
    let order = p.div_ceil(2);
    let mut score = ScoreState::new(lifted_dim(dim, order)?);
    rows.iter()
        .map(|a| Ok(kernel_sensitivity(score.update(&kernelize(a, order)?)?, p)))
        .collect()
}
