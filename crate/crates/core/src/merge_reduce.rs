//! Merge-and-reduce over an offline reducer.
//!
//! Rows fill a buffer of `M` rows. A full buffer becomes a level-0 block;
//! whenever two blocks meet at level `j` they are concatenated and reduced
//! with error budget `ρ_{j+1}` into level `j+1`, like a carry in binary
//! addition. The schedule is `ρ_j = ε / (c (j+1)²)` with `c` the smallest
//! constant such that `Π_{j≤40} (1 + ρ_j) ≤ 1 + ε/2`.

use rand_chacha::ChaCha8Rng;

use crate::coreset::{stage_rng, Coreset, Sampler, WeightedRow};
use crate::error::{CoresetError, Result};
use crate::lewis::{keep_probabilities, lewis_weights, sample_rows, scaled_leverage};
use crate::lewis::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::linalg::stack_rows;

/// Levels covered by the schedule constant.
pub const SCHEDULE_LEVELS: usize = 40;

fn schedule_product(eps: f64, c: f64) -> f64 {
    (0..=SCHEDULE_LEVELS)
        .map(|j| 1.0 + eps / (c * ((j + 1) as f64).powi(2)))
        .product()
}

/// Smallest `c` with `Π_{j≤40}(1 + ε/(c(j+1)²)) ≤ 1 + ε/2`, by bisection.
pub fn schedule_constant(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(CoresetError::Config(format!("epsilon must be positive, got {eps}")));
    }
    let target = 1.0 + eps / 2.0;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while schedule_product(eps, hi) > target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if schedule_product(eps, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// An offline coreset construction applied to a merged block.
pub trait Reducer {
    fn name(&self) -> &str;

    /// Reduces `rows` to roughly `count` rows.
    fn reduce(
        &self,
        rows: Vec<WeightedRow>,
        count: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<WeightedRow>>;
}

/// Lewis-weight sampling (StreamingLW).
#[derive(Clone, Debug)]
pub struct LewisReducer {
    pub p: f64,
}

impl Reducer for LewisReducer {
    fn name(&self) -> &str {
        "lewis"
    }

    fn reduce(
        &self,
        rows: Vec<WeightedRow>,
        count: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<WeightedRow>> {
        let Some(first) = rows.first() else {
            return Ok(rows);
        };
        let a = stack_rows(first.row.len(), rows.iter().map(|r| &r.row))?;
        let w = lewis_weights(&a, self.p, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
        let probs = keep_probabilities(&w.weights, count);
        Ok(sample_rows(&rows, &probs, self.p, rng))
    }
}

/// Offline sensitivity bound `min{1, n^{p/2−1}‖uᵢ‖^p}` from exact leverage
/// scores `‖uᵢ‖²` (StreamingLF).
#[derive(Clone, Debug)]
pub struct LeverageReducer {
    pub p: f64,
}

impl Reducer for LeverageReducer {
    fn name(&self) -> &str {
        "leverage"
    }

    fn reduce(
        &self,
        rows: Vec<WeightedRow>,
        count: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<WeightedRow>> {
        let Some(first) = rows.first() else {
            return Ok(rows);
        };
        let a = stack_rows(first.row.len(), rows.iter().map(|r| &r.row))?;
        let tau = scaled_leverage(&a, &vec![1.0; rows.len()])?;
        let n = rows.len() as f64;
        let half = self.p / 2.0;
        let scores: Vec<f64> = tau
            .iter()
            .map(|&t| (n.powf(half - 1.0) * t.powf(half)).min(1.0))
            .collect();
        let probs = keep_probabilities(&scores, count);
        Ok(sample_rows(&rows, &probs, self.p, rng))
    }
}

/// Keeps every row unchanged.
#[derive(Clone, Debug, Default)]
pub struct PassThrough;

impl Reducer for PassThrough {
    fn name(&self) -> &str {
        "pass-through"
    }

    fn reduce(
        &self,
        rows: Vec<WeightedRow>,
        _count: f64,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Vec<WeightedRow>> {
        Ok(rows)
    }
}

#[derive(Clone, Debug)]
pub struct MergeReduceConfig {
    /// Buffer capacity `M`.
    pub block_size: usize,
    pub epsilon: f64,
    /// Reduce target is `min{shrink · M, kappa · d / ρ²}` rows.
    pub kappa: f64,
    pub shrink: f64,
}

impl MergeReduceConfig {
    pub fn new(block_size: usize, epsilon: f64) -> Self {
        MergeReduceConfig {
            block_size,
            epsilon,
            kappa: 1.0,
            shrink: 0.75,
        }
    }
}

/// `M · (⌈log₂(n/M)⌉ + 2)`.
pub fn working_set_bound(n: usize, block_size: usize) -> usize {
    let ratio = n as f64 / block_size as f64;
    let levels = if ratio <= 1.0 { 0.0 } else { ratio.log2().ceil() };
    block_size * (levels as usize + 2)
}

pub struct MergeReduce {
    config: MergeReduceConfig,
    c: f64,
    reducer: Box<dyn Reducer>,
    rng: ChaCha8Rng,
    buffer: Vec<WeightedRow>,
    levels: Vec<Option<Vec<WeightedRow>>>,
    dim: Option<usize>,
    ingested: usize,
    live: usize,
    peak: usize,
    label: String,
}

impl MergeReduce {
    pub fn new(config: MergeReduceConfig, reducer: Box<dyn Reducer>, seed: u64) -> Result<Self> {
        Self::with_rng(config, reducer, stage_rng(seed, 0))
    }

    pub fn with_rng(
        config: MergeReduceConfig,
        reducer: Box<dyn Reducer>,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if config.block_size == 0 {
            return Err(CoresetError::Config("block_size must be positive".into()));
        }
        if !(config.shrink > 0.0 && config.kappa > 0.0) {
            return Err(CoresetError::Config("shrink and kappa must be positive".into()));
        }
        let c = schedule_constant(config.epsilon)?;
        let label = format!("merge_reduce({}, M={})", reducer.name(), config.block_size);
        Ok(MergeReduce {
            config,
            c,
            reducer,
            rng,
            buffer: Vec::new(),
            levels: Vec::new(),
            dim: None,
            ingested: 0,
            live: 0,
            peak: 0,
            label,
        })
    }

    pub fn schedule_c(&self) -> f64 {
        self.c
    }

    /// `ρ_j = ε / (c (j+1)²)`.
    pub fn rho(&self, j: usize) -> f64 {
        self.config.epsilon / (self.c * ((j + 1) as f64).powi(2))
    }

    pub fn rows_ingested(&self) -> usize {
        self.ingested
    }

    /// Largest number of rows held at once, merges in flight included.
    pub fn peak_working_set(&self) -> usize {
        self.peak
    }

    /// Occupancy of each level (`None` for an empty level).
    pub fn level_sizes(&self) -> Vec<Option<usize>> {
        self.levels.iter().map(|l| l.as_ref().map(Vec::len)).collect()
    }

    pub fn occupied_levels(&self) -> usize {
        self.levels.iter().filter(|l| l.is_some()).count()
    }

    fn reduce_count(&self, level: usize) -> f64 {
        let d = self.dim.unwrap_or(1) as f64;
        let rho = self.rho(level);
        (self.config.shrink * self.config.block_size as f64).min(self.config.kappa * d / (rho * rho))
    }

    fn note_live(&mut self, extra: usize) {
        self.peak = self.peak.max(self.live + extra);
    }

    fn reduce_at(&mut self, rows: Vec<WeightedRow>, level: usize) -> Result<Vec<WeightedRow>> {
        let count = self.reduce_count(level);
        let input = rows.len();
        let out = self
            .reducer
            .reduce(rows, count, &mut self.rng)
            .map_err(|e| CoresetError::Reduce {
                level,
                source: Box::new(e),
            })?;
        // input and output coexist while the reducer runs
        self.note_live(out.len());
        self.live = self.live - input + out.len();
        Ok(out)
    }

    pub fn insert(&mut self, row: WeightedRow) -> Result<()> {
        match self.dim {
            None => self.dim = Some(row.row.len()),
            Some(d) if d != row.row.len() => {
                return Err(CoresetError::Dimension {
                    expected: d,
                    found: row.row.len(),
                })
            }
            _ => {}
        }
        self.ingested += 1;
        self.buffer.push(row);
        self.live += 1;
        self.note_live(0);
        if self.buffer.len() < self.config.block_size {
            return Ok(());
        }
        let mut carry = std::mem::take(&mut self.buffer);
        let mut j = 0;
        loop {
            if self.levels.len() <= j {
                self.levels.push(None);
            }
            match self.levels[j].take() {
                None => {
                    self.levels[j] = Some(carry);
                    return Ok(());
                }
                Some(mut block) => {
                    block.append(&mut carry);
                    carry = self.reduce_at(block, j + 1)?;
                    j += 1;
                }
            }
        }
    }

    /// Merges everything still held. A single block, or a union of at most
    /// `M` rows, is returned as is; otherwise the union is reduced once more
    /// at the top budget.
    pub fn finalize(&mut self) -> Result<Vec<WeightedRow>> {
        let top = self.levels.iter().rposition(|l| l.is_some());
        let mut parts: Vec<Vec<WeightedRow>> = self.levels.drain(..).flatten().collect();
        if !self.buffer.is_empty() {
            parts.push(std::mem::take(&mut self.buffer));
        }
        let components = parts.len();
        let mut union: Vec<WeightedRow> = parts.into_iter().flatten().collect();
        let out = if components <= 1 || union.len() <= self.config.block_size {
            union
        } else {
            let level = top.map_or(0, |t| t + 1);
            union.sort_by_key(|r| r.raw_index);
            self.reduce_at(std::mem::take(&mut union), level)?
        };
        self.live = 0;
        let mut out = out;
        out.sort_by_key(|r| r.raw_index);
        Ok(out)
    }
}

impl Sampler for MergeReduce {
    fn label(&self) -> &str {
        &self.label
    }

    fn push(&mut self, row: WeightedRow, _out: &mut Vec<WeightedRow>) -> Result<()> {
        self.insert(row)
    }

    fn finish(&mut self, out: &mut Vec<WeightedRow>) -> Result<()> {
        out.extend(self.finalize()?);
        Ok(())
    }

    fn live_rows(&self) -> usize {
        self.live
    }
}

/// Runs merge-and-reduce over a stream of raw rows.
pub fn mr_run<I>(
    rows: I,
    config: MergeReduceConfig,
    reducer: Box<dyn Reducer>,
    p: f64,
    seed: u64,
) -> Result<(Coreset, usize)>
where
    I: IntoIterator<Item = crate::linalg::DenseVector>,
{
    let mut tree = MergeReduce::new(config, reducer, seed)?;
    for (i, r) in rows.into_iter().enumerate() {
        tree.insert(WeightedRow::raw(r, i))?;
    }
    let n = tree.rows_ingested();
    let label = tree.label.clone();
    let out = tree.finalize()?;
    Ok((Coreset::new(out, p, n, &label), tree.peak_working_set()))
}
