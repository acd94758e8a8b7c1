//! Coreset elements, the coreset container and the streaming sampler trait.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoresetError, Result};
use crate::linalg::DenseVector;

/// A sampled row, already rescaled by `q^{-1/p}`.
///
/// `sample_prob` is the product of the keep probabilities of every stage the
/// row survived, so `1 / sample_prob` is its effective multiplicity.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedRow {
    pub row: DenseVector,
    pub raw_index: usize,
    pub sample_prob: f64,
}

impl WeightedRow {
    /// An unsampled input row.
    pub fn raw(row: DenseVector, raw_index: usize) -> Self {
        WeightedRow {
            row,
            raw_index,
            sample_prob: 1.0,
        }
    }

    /// `1 / sample_prob`.
    pub fn weight(&self) -> f64 {
        1.0 / self.sample_prob
    }

    /// The row after a further keep decision at probability `q` under power `p`.
    pub fn resampled(&self, q: f64, p: f64) -> WeightedRow {
        let row = if q == 1.0 {
            self.row.clone()
        } else {
            &self.row * q.powf(-1.0 / p)
        };
        WeightedRow {
            row,
            raw_index: self.raw_index,
            sample_prob: self.sample_prob * q,
        }
    }

    /// The row with the rescaling undone.
    pub fn unscaled(&self, p: f64) -> DenseVector {
        &self.row * self.sample_prob.powf(1.0 / p)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageSummary {
    pub label: String,
    pub input: usize,
    pub output: usize,
}

/// An ordered set of weighted rows with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Coreset {
    pub elements: Vec<WeightedRow>,
    pub p: f64,
    pub source_count: usize,
    pub stage_label: String,
    pub stages: Vec<StageSummary>,
}

impl Coreset {
    pub fn new(elements: Vec<WeightedRow>, p: f64, source_count: usize, label: &str) -> Self {
        let stages = vec![StageSummary {
            label: label.to_string(),
            input: source_count,
            output: elements.len(),
        }];
        Coreset {
            elements,
            p,
            source_count,
            stage_label: label.to_string(),
            stages,
        }
    }

    /// Every row at weight one.
    pub fn identity(rows: &[DenseVector], p: f64) -> Self {
        let elements = rows
            .iter()
            .enumerate()
            .map(|(i, r)| WeightedRow::raw(r.clone(), i))
            .collect();
        Coreset::new(elements, p, rows.len(), "identity")
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.elements.first().map(|e| e.row.len())
    }

    pub fn rows(&self) -> impl Iterator<Item = &DenseVector> {
        self.elements.iter().map(|e| &e.row)
    }

    /// Sorts elements by stream position.
    pub fn sort(&mut self) {
        self.elements.sort_by_key(|e| e.raw_index);
    }
}

/// A streaming sampler stage. Rows enter one at a time; kept rows are
/// appended to `out`, either immediately or at `finish`.
pub trait Sampler {
    fn label(&self) -> &str;

    fn push(&mut self, row: WeightedRow, out: &mut Vec<WeightedRow>) -> Result<()>;

    fn finish(&mut self, _out: &mut Vec<WeightedRow>) -> Result<()> {
        Ok(())
    }

    /// Rows currently held by the stage (buffers, level coresets).
    fn live_rows(&self) -> usize {
        0
    }

    /// Oversampling (or keep probability) in effect, when the stage has one.
    fn effective_r(&self) -> Option<f64> {
        None
    }

    /// True when the stage's parameters were set by a heuristic.
    fn heuristic(&self) -> bool {
        false
    }
}

/// Per-stage generator: one ChaCha8 stream per stage of a seeded run.
pub fn stage_rng(seed: u64, stage: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng
}

pub(crate) fn check_power(p: f64) -> Result<()> {
    if !(p.is_finite() && p >= 2.0) {
        return Err(CoresetError::Config(format!("p must be a finite real >= 2, got {p}")));
    }
    Ok(())
}

pub(crate) fn check_oversampling(r: f64) -> Result<()> {
    if !(r.is_finite() && r >= 1.0) {
        return Err(CoresetError::Config(format!(
            "oversampling r must be finite and >= 1, got {r}"
        )));
    }
    Ok(())
}

/// Runs a single sampler over a stream of raw rows.
pub fn run_sampler<S, I>(sampler: &mut S, rows: I, p: f64) -> Result<Coreset>
where
    S: Sampler + ?Sized,
    I: IntoIterator<Item = DenseVector>,
{
    let mut out = Vec::new();
    let mut n = 0;
    for (i, row) in rows.into_iter().enumerate() {
        sampler.push(WeightedRow::raw(row, i), &mut out)?;
        n += 1;
    }
    sampler.finish(&mut out)?;
    out.sort_by_key(|e| e.raw_index);
    Ok(Coreset::new(out, p, n, sampler.label()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn resampling_composes_probabilities() {
        let w = WeightedRow::raw(dvector![1.0, 2.0], 4);
        let once = w.resampled(0.5, 2.0);
        let twice = once.resampled(0.25, 2.0);
        assert!((twice.sample_prob - 0.125).abs() < 1e-15);
        assert!((twice.row[0] - 0.125f64.powf(-0.5)).abs() < 1e-12);
        let back = twice.unscaled(2.0);
        assert!((back[1] - 2.0).abs() < 1e-12);
        assert_eq!(twice.raw_index, 4);
    }

    #[test]
    fn stage_streams_differ() {
        use rand::Rng;
        let a: u64 = stage_rng(7, 0).random();
        let b: u64 = stage_rng(7, 1).random();
        let c: u64 = stage_rng(7, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
