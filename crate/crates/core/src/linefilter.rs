//! LineFilter: online sensitivity sampling for p-order contraction.
//!
//! Row `i` gets `l̃ᵢ = min{i^{p/2−1} ẽᵢ^{p/2}, 1}` from its online leverage
//! score, is kept with probability `pᵢ = min{r l̃ᵢ / Lᵢ, 1}` where `Lᵢ` is the
//! running sum of `l̃`, and is emitted as `aᵢ / pᵢ^{1/p}`. The decision for a
//! row depends only on the values of earlier rows.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coreset::{
    check_oversampling, check_power, run_sampler, stage_rng, Coreset, Sampler, WeightedRow,
};
use crate::error::Result;
use crate::linalg::DenseVector;
use crate::score::{ScoreMode, ScoreState};

/// `min{i^{p/2−1} e^{p/2}, 1}`.
pub fn sensitivity_bound(i: usize, e: f64, p: f64) -> f64 {
    if e <= 0.0 {
        return 0.0;
    }
    let half = p / 2.0;
    let log = (half - 1.0) * (i as f64).ln() + half * e.ln();
    if log >= 0.0 {
        1.0
    } else {
        log.exp()
    }
}

/// Outcome of feeding one row to an online filter.
#[derive(Clone, Debug)]
pub struct Step {
    /// `l̃` for this row.
    pub score: f64,
    /// Keep probability `min{r l̃ / L, 1}`.
    pub prob: f64,
    pub kept: Option<WeightedRow>,
}

/// How a score `l̃` and the running mass `L` become a keep probability.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeepRule {
    /// `min{r l̃ / L, 1}`.
    #[default]
    RunningMass,
    /// `min{r l̃, 1}`, the matrix-coreset form used for `p = 2`.
    Direct,
}

impl KeepRule {
    /// Keep probability for `score` once it has been added to `total`.
    pub fn probability(self, r: f64, score: f64, total: f64) -> f64 {
        if score <= 0.0 {
            return 0.0;
        }
        match self {
            KeepRule::RunningMass => (r * score / total).min(1.0),
            KeepRule::Direct => (r * score).min(1.0),
        }
    }

    pub fn is_default(&self) -> bool {
        *self == KeepRule::RunningMass
    }
}

/// Running sum, counter and coin flips shared by the online filters.
#[derive(Clone, Debug)]
pub(crate) struct Acceptor {
    pub(crate) p: f64,
    pub(crate) r: f64,
    pub(crate) rule: KeepRule,
    pub(crate) total: f64,
    pub(crate) seen: usize,
    rng: ChaCha8Rng,
}

impl Acceptor {
    pub(crate) fn new(p: f64, r: f64, rng: ChaCha8Rng) -> Self {
        Acceptor {
            p,
            r,
            rule: KeepRule::RunningMass,
            total: 0.0,
            seen: 0,
            rng,
        }
    }

    pub(crate) fn decide(&mut self, score: f64, row: &WeightedRow) -> Step {
        self.total += score;
        let prob = self.rule.probability(self.r, score, self.total);
        let u: f64 = self.rng.random();
        let kept = (u < prob).then(|| row.resampled(prob, self.p));
        Step { score, prob, kept }
    }
}

/// An online filter whose scoring and keep decision can be run separately.
///
/// `step` is `score_row` followed by `accept`. Scores never depend on `r`
/// or on earlier decisions, which is what makes calibrating `r` on scores
/// already computed possible.
pub trait OnlineFilter: Sampler {
    /// Advances the score state and returns `l̃` for `row`.
    fn score_row(&mut self, row: &WeightedRow) -> Result<f64>;

    /// Adds `score` to `L` and flips the coin for `row`.
    fn accept(&mut self, score: f64, row: &WeightedRow) -> Step;

    fn set_oversampling(&mut self, r: f64) -> Result<()>;

    fn oversampling(&self) -> f64;

    fn keep_rule(&self) -> KeepRule {
        KeepRule::RunningMass
    }
}

/// Keep probabilities `min{r l̃ᵢ / Lᵢ, 1}` for a score sequence.
pub fn keep_probabilities(scores: &[f64], r: f64) -> Vec<f64> {
    keep_probabilities_with(scores, r, KeepRule::RunningMass)
}

pub fn keep_probabilities_with(scores: &[f64], r: f64, rule: KeepRule) -> Vec<f64> {
    let mut total = 0.0;
    scores
        .iter()
        .map(|&l| {
            total += l;
            rule.probability(r, l, total)
        })
        .collect()
}

/// Expected number of kept rows, `Σ min{r l̃ᵢ / Lᵢ, 1}`.
pub fn expected_size(scores: &[f64], r: f64) -> f64 {
    expected_size_with(scores, r, KeepRule::RunningMass)
}

pub fn expected_size_with(scores: &[f64], r: f64, rule: KeepRule) -> f64 {
    keep_probabilities_with(scores, r, rule).iter().sum()
}

/// The `r ≥ 1` whose expected size on `scores` is `target` (bisection),
/// or 1 when even `r = 1` overshoots.
pub fn calibrate_oversampling(scores: &[f64], target: f64) -> f64 {
    calibrate_oversampling_with(scores, target, KeepRule::RunningMass)
}

pub fn calibrate_oversampling_with(scores: &[f64], target: f64, rule: KeepRule) -> f64 {
    calibrate_with(|r| expected_size_with(scores, r, rule), target)
}

pub(crate) fn calibrate_with<F: Fn(f64) -> f64>(size: F, target: f64) -> f64 {
    if size(1.0) >= target {
        return 1.0;
    }
    let mut hi = 2.0;
    while size(hi) < target && hi < 1e15 {
        hi *= 2.0;
    }
    let mut lo = hi / 2.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if size(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Replays the keep decisions of an online filter with oversampling `r` on
/// precomputed scores. With the filter's generator this reproduces its
/// output exactly.
pub fn replay(
    rows: &[WeightedRow],
    scores: &[f64],
    r: f64,
    p: f64,
    rng: ChaCha8Rng,
) -> Vec<WeightedRow> {
    replay_with(rows, scores, r, p, KeepRule::RunningMass, rng)
}

pub fn replay_with(
    rows: &[WeightedRow],
    scores: &[f64],
    r: f64,
    p: f64,
    rule: KeepRule,
    rng: ChaCha8Rng,
) -> Vec<WeightedRow> {
    let mut acc = Acceptor::new(p, r, rng);
    acc.rule = rule;
    rows.iter()
        .zip(scores)
        .filter_map(|(row, &l)| acc.decide(l, row).kept)
        .collect()
}

/// Online LineFilter state for one stream.
#[derive(Clone, Debug)]
pub struct LineFilter {
    score: ScoreState,
    score_power: f64,
    acc: Acceptor,
    label: String,
}

impl LineFilter {
    /// LineFilter at power `p` with oversampling `r`, seeded by `seed`.
    pub fn new(dim: usize, p: f64, r: f64, seed: u64) -> Result<Self> {
        Self::with_rng(dim, p, p, r, stage_rng(seed, 0))
    }

    /// Scores computed at power `score_power`, rows rescaled for power `p`.
    pub fn with_rng(
        dim: usize,
        score_power: f64,
        p: f64,
        r: f64,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        check_power(p)?;
        check_power(score_power)?;
        check_oversampling(r)?;
        let label = if score_power == p {
            format!("linefilter(p={p})")
        } else {
            format!("linefilter(p={score_power})")
        };
        Ok(LineFilter {
            score: ScoreState::new(dim),
            score_power,
            acc: Acceptor::new(p, r, rng),
            label,
        })
    }

    pub fn with_keep_rule(mut self, rule: KeepRule) -> Self {
        self.acc.rule = rule;
        if rule == KeepRule::Direct {
            self.label = self.label.replacen(')', ",direct)", 1);
        }
        self
    }

    /// Uses the dense recompute score path on every row.
    pub fn with_score_mode(mut self, mode: ScoreMode) -> Self {
        self.score = ScoreState::with_mode(self.score.dim(), mode);
        self
    }

    pub fn p(&self) -> f64 {
        self.acc.p
    }

    pub fn rows_seen(&self) -> usize {
        self.acc.seen
    }

    /// `L`, the running sum of `l̃`.
    pub fn total_score(&self) -> f64 {
        self.acc.total
    }

    pub fn score_state(&self) -> &ScoreState {
        &self.score
    }

    /// Feeds a (possibly already weighted) row.
    pub fn step(&mut self, row: &WeightedRow) -> Result<Step> {
        let l = self.score_row(row)?;
        Ok(self.accept(l, row))
    }

    /// Feeds a raw row; the stream position is the number of rows seen.
    pub fn process(&mut self, a: &DenseVector) -> Result<Option<WeightedRow>> {
        let row = WeightedRow::raw(a.clone(), self.acc.seen);
        Ok(self.step(&row)?.kept)
    }
}

impl OnlineFilter for LineFilter {
    fn score_row(&mut self, row: &WeightedRow) -> Result<f64> {
        let e = self.score.update(&row.row)?;
        self.acc.seen += 1;
        Ok(sensitivity_bound(self.acc.seen, e, self.score_power))
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

    fn keep_rule(&self) -> KeepRule {
        self.acc.rule
    }
}

impl Sampler for LineFilter {
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

/// Runs LineFilter over a stream. An empty stream gives an empty coreset.
pub fn lf_run<I>(rows: I, dim: usize, p: f64, r: f64, seed: u64) -> Result<Coreset>
where
    I: IntoIterator<Item = DenseVector>,
{
    let mut lf = LineFilter::new(dim, p, r, seed)?;
    run_sampler(&mut lf, rows, p)
}

/// The `l̃` sequence LineFilter assigns to `rows` (no sampling).
pub fn lf_scores(rows: &[DenseVector], p: f64) -> Result<Vec<f64>> {
    let dim = rows.first().map_or(0, |r| r.len());
    let mut score = ScoreState::new(dim);
    rows.iter()
        .enumerate()
        .map(|(i, a)| Ok(sensitivity_bound(i + 1, score.update(a)?, p)))
        .collect()
}
