//! Sampler chains. Each stage consumes the rescaled rows emitted by the
//! previous one as if they were raw rows; keep probabilities multiply.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coreset::{check_power, stage_rng, Coreset, Sampler, StageSummary, WeightedRow};
use crate::error::{CoresetError, Result};
use crate::kernel::KernelFilter;
use crate::linalg::DenseVector;
use crate::linefilter::{calibrate_with, expected_size_with, KeepRule, LineFilter, OnlineFilter};
use crate::merge_reduce::{LeverageReducer, LewisReducer, MergeReduce, MergeReduceConfig};

/// Prefix length used by target-size calibration when none is given.
pub const DEFAULT_CALIBRATION_PREFIX: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub p: f64,
    #[serde(default)]
    pub seed: u64,
    /// Error budget shared equally by merge-and-reduce stages without their
    /// own `epsilon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub stages: Vec<StageConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputDescriptor>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDescriptor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

/// Oversampling of an online filter: a fixed `r`, or a target expected
/// output size calibrated on a stream prefix.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_size: Option<f64>,
    /// Rows this stage will see; defaults to `input.rows` for the first stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_input: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_prefix: Option<usize>,
    /// LineFilter stages only.
    #[serde(default, skip_serializing_if = "KeepRule::is_default")]
    pub keep_rule: KeepRule,
}

impl FilterParams {
    pub fn fixed(r: f64) -> Self {
        FilterParams {
            r: Some(r),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StageConfig {
    Linefilter(FilterParams),
    Kernelfilter(FilterParams),
    /// LineFilter scores at `p = 2`, rows rescaled for the pipeline's `p`.
    Leverage2(FilterParams),
    StreamingLw {
        block_size: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
    },
    StreamingLf {
        block_size: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
    },
    Uniform {
        count: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        population: Option<usize>,
    },
}

impl StageConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            StageConfig::Linefilter(_) => "linefilter",
            StageConfig::Kernelfilter(_) => "kernelfilter",
            StageConfig::Leverage2(_) => "leverage2",
            StageConfig::StreamingLw { .. } => "streaming_lw",
            StageConfig::StreamingLf { .. } => "streaming_lf",
            StageConfig::Uniform { .. } => "uniform",
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: PipelineConfig =
            serde_json::from_str(text).map_err(|e| CoresetError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn merge_stages(&self) -> usize {
        self.stages
            .iter()
            .filter(|s| matches!(s, StageConfig::StreamingLw { .. } | StageConfig::StreamingLf { .. }))
            .count()
    }

    /// ε for a merge-and-reduce stage.
    pub fn stage_epsilon(&self, own: Option<f64>) -> Result<f64> {
        match (own, self.epsilon) {
            (Some(e), _) => Ok(e),
            (None, Some(total)) => Ok(total / self.merge_stages().max(1) as f64),
            (None, None) => Err(CoresetError::Config(
                "merge-and-reduce stage needs `epsilon` (on the stage or the pipeline)".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_power(self.p)?;
        if self.stages.is_empty() {
            return Err(CoresetError::Config("`stages` must not be empty".into()));
        }
        for (i, stage) in self.stages.iter().enumerate() {
            let err = |msg: String| CoresetError::Config(format!("stages[{i}] ({}): {msg}", stage.kind()));
            match stage {
                StageConfig::Linefilter(f) | StageConfig::Kernelfilter(f) | StageConfig::Leverage2(f) => {
                    match (f.r, f.target_size) {
                        (Some(_), Some(_)) => return Err(err("give either `r` or `target_size`, not both".into())),
                        (None, None) => return Err(err("missing field `r` or `target_size`".into())),
                        (Some(r), None) if !(r.is_finite() && r >= 1.0) => {
                            return Err(err(format!("`r` must be >= 1, got {r}")))
                        }
                        (None, Some(t)) if !(t.is_finite() && t > 0.0) => {
                            return Err(err(format!("`target_size` must be positive, got {t}")))
                        }
                        (None, Some(_)) if self.expected_input(i, f).is_none() => {
                            return Err(err("`target_size` needs `expected_input` (or `input.rows` on the first stage)".into()))
                        }
                        _ => {}
                    }
                    if matches!(stage, StageConfig::Kernelfilter(_)) {
                        if self.p.fract() != 0.0 {
                            return Err(err(format!("kernelfilter needs an integer p, got {}", self.p)));
                        }
                        if !f.keep_rule.is_default() {
                            return Err(err("`keep_rule` applies to linefilter stages only".into()));
                        }
                    }
                }
                StageConfig::StreamingLw { block_size, epsilon }
                | StageConfig::StreamingLf { block_size, epsilon } => {
                    if *block_size == 0 {
                        return Err(err("`block_size` must be positive".into()));
                    }
                    let e = self.stage_epsilon(*epsilon).map_err(|e| err(e.to_string()))?;
                    if !(e > 0.0 && e.is_finite()) {
                        return Err(err(format!("`epsilon` must be positive, got {e}")));
                    }
                }
                StageConfig::Uniform { count, population } => {
                    if !(count.is_finite() && *count >= 0.0) {
                        return Err(err(format!("`count` must be non-negative, got {count}")));
                    }
                    let pop = population.or(if i == 0 { self.input.as_ref().and_then(|d| d.rows) } else { None });
                    if pop.is_none() {
                        return Err(err("needs `population` (or `input.rows` on the first stage)".into()));
                    }
                }
            }
        }
        Ok(())
    }

    fn expected_input(&self, index: usize, f: &FilterParams) -> Option<usize> {
        f.expected_input
            .or(if index == 0 { self.input.as_ref().and_then(|d| d.rows) } else { None })
    }
}

/// Keeps each row independently with probability `min{1, count / population}`.
#[derive(Clone, Debug)]
pub struct UniformSampler {
    q: f64,
    p: f64,
    rng: ChaCha8Rng,
}

impl UniformSampler {
    pub fn new(count: f64, population: usize, p: f64, rng: ChaCha8Rng) -> Self {
        let q = if population == 0 {
            1.0
        } else {
            (count / population as f64).min(1.0)
        };
        UniformSampler { q, p, rng }
    }
}

impl Sampler for UniformSampler {
    fn label(&self) -> &str {
        "uniform"
    }

    fn push(&mut self, row: WeightedRow, out: &mut Vec<WeightedRow>) -> Result<()> {
        let u: f64 = self.rng.random();
        if u < self.q {
            out.push(row.resampled(self.q, self.p));
        }
        Ok(())
    }

    fn effective_r(&self) -> Option<f64> {
        Some(self.q)
    }
}

/// Runs uniform sampling over a stream whose length is known.
pub fn uniform_sampler<I>(rows: I, count: f64, population: usize, p: f64, seed: u64) -> Result<Coreset>
where
    I: IntoIterator<Item = DenseVector>,
{
    let mut s = UniformSampler::new(count, population, p, stage_rng(seed, 0));
    crate::coreset::run_sampler(&mut s, rows, p)
}

/// LineFilter with `p = 2` scores and rescaling for power `p`.
pub fn leverage_sampler<I>(rows: I, dim: usize, p: f64, r: f64, seed: u64) -> Result<Coreset>
where
    I: IntoIterator<Item = DenseVector>,
{
    let mut lf = LineFilter::with_rng(dim, 2.0, p, r, stage_rng(seed, 0))?;
    let mut c = crate::coreset::run_sampler(&mut lf, rows, p)?;
    c.stage_label = "leverage2".into();
    c.stages[0].label = "leverage2".into();
    Ok(c)
}

/// Target-size wrapper: holds a prefix of scored rows, picks `r` so that the
/// prefix's expected output plus the projected remainder meets the target,
/// then releases the prefix.
///
/// The remainder is projected as `r · ln(L_N / L_P)` (uncapped rows keep
/// `r l̃ / L`, which integrates to a log of the score mass), or as
/// `r · (L_N − L_P)` under [`KeepRule::Direct`], with `L_N / L_P ≈ (N / P)^γ`
/// and `γ` the local growth exponent of `L` over the second half of the
/// prefix. This is a heuristic.
pub struct Calibrated<F> {
    inner: F,
    target: f64,
    expected_input: usize,
    prefix_len: usize,
    prefix: Vec<(WeightedRow, f64)>,
    chosen: Option<f64>,
}

impl<F: OnlineFilter> Calibrated<F> {
    pub fn new(inner: F, target: f64, expected_input: usize, prefix_len: usize) -> Self {
        Calibrated {
            inner,
            target,
            expected_input,
            prefix_len: prefix_len.max(2),
            prefix: Vec::new(),
            chosen: None,
        }
    }

    fn calibrate(&mut self, out: &mut Vec<WeightedRow>) -> Result<()> {
        let scores: Vec<f64> = self.prefix.iter().map(|(_, s)| *s).collect();
        let p_len = scores.len();
        let total: f64 = scores.iter().sum();
        let half: f64 = scores[..p_len / 2].iter().sum();
        let gamma = if half > 0.0 && total > half && p_len >= 4 {
            ((total / half).ln() / 2f64.ln()).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let growth = self.expected_input as f64 / p_len as f64;
        let rule = self.inner.keep_rule();
        let remaining = match rule {
            _ if growth <= 1.0 => 0.0,
            KeepRule::RunningMass => gamma * growth.ln(),
            KeepRule::Direct => total * (growth.powf(gamma) - 1.0),
        };
        let r = calibrate_with(|r| expected_size_with(&scores, r, rule) + r * remaining, self.target);
        self.inner.set_oversampling(r)?;
        self.chosen = Some(r);
        for (row, score) in self.prefix.drain(..) {
            if let Some(kept) = self.inner.accept(score, &row).kept {
                out.push(kept);
            }
        }
        Ok(())
    }
}

impl<F: OnlineFilter> Sampler for Calibrated<F> {
    fn label(&self) -> &str {
        self.inner.label()
    }

    fn push(&mut self, row: WeightedRow, out: &mut Vec<WeightedRow>) -> Result<()> {
        if self.chosen.is_some() {
            return self.inner.push(row, out);
        }
        let score = self.inner.score_row(&row)?;
        self.prefix.push((row, score));
        if self.prefix.len() >= self.prefix_len {
            self.calibrate(out)?;
        }
        Ok(())
    }

    fn finish(&mut self, out: &mut Vec<WeightedRow>) -> Result<()> {
        if self.chosen.is_none() && !self.prefix.is_empty() {
            self.calibrate(out)?;
        }
        self.inner.finish(out)
    }

    fn live_rows(&self) -> usize {
        self.prefix.len()
    }

    fn effective_r(&self) -> Option<f64> {
        self.chosen
    }

    fn heuristic(&self) -> bool {
        true
    }
}

fn online_stage<F: OnlineFilter + 'static>(
    inner: F,
    params: &FilterParams,
    expected: Option<usize>,
) -> Box<dyn Sampler> {
    match (params.r, params.target_size) {
        (None, Some(target)) => Box::new(Calibrated::new(
            inner,
            target,
            expected.unwrap_or(0),
            params.calibration_prefix.unwrap_or(DEFAULT_CALIBRATION_PREFIX),
        )),
        _ => Box::new(inner),
    }
}

/// Instantiates stage `index` of `config` for rows of dimension `dim`.
pub fn build_stage(config: &PipelineConfig, index: usize, dim: usize) -> Result<Box<dyn Sampler>> {
    let rng = stage_rng(config.seed, index as u64);
    let p = config.p;
    let stage = &config.stages[index];
    let r0 = |f: &FilterParams| f.r.unwrap_or(1.0);
    Ok(match stage {
        StageConfig::Linefilter(f) => {
            let lf = LineFilter::with_rng(dim, p, p, r0(f), rng)?.with_keep_rule(f.keep_rule);
            online_stage(lf, f, config.expected_input(index, f))
        }
        StageConfig::Leverage2(f) => {
            let lf = LineFilter::with_rng(dim, 2.0, p, r0(f), rng)?.with_keep_rule(f.keep_rule);
            online_stage(lf, f, config.expected_input(index, f))
        }
        StageConfig::Kernelfilter(f) => {
            let kf = KernelFilter::with_rng(dim, p as u32, r0(f), rng)?;
            online_stage(kf, f, config.expected_input(index, f))
        }
        StageConfig::StreamingLw { block_size, epsilon } => Box::new(MergeReduce::with_rng(
            MergeReduceConfig::new(*block_size, config.stage_epsilon(*epsilon)?),
            Box::new(LewisReducer { p }),
            rng,
        )?),
        StageConfig::StreamingLf { block_size, epsilon } => Box::new(MergeReduce::with_rng(
            MergeReduceConfig::new(*block_size, config.stage_epsilon(*epsilon)?),
            Box::new(LeverageReducer { p }),
            rng,
        )?),
        StageConfig::Uniform { count, population } => {
            let pop = population
                .or(config.input.as_ref().and_then(|d| d.rows))
                .unwrap_or(0);
            Box::new(UniformSampler::new(*count, pop, p, rng))
        }
    })
}

#[cfg(not(target_arch = "wasm32"))]
mod clock {
    pub struct Stopwatch(std::time::Instant);

    impl Stopwatch {
        pub fn start() -> Self {
            Stopwatch(std::time::Instant::now())
        }

        pub fn seconds(&self) -> f64 {
            self.0.elapsed().as_secs_f64()
        }
    }
}

#[cfg(target_arch = "wasm32")]
mod clock {
    pub struct Stopwatch;

    impl Stopwatch {
        pub fn start() -> Self {
            Stopwatch
        }

        pub fn seconds(&self) -> f64 {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub label: String,
    pub input: usize,
    pub output: usize,
    pub seconds: f64,
    /// Oversampling `r` in effect (keep probability for uniform stages).
    pub oversampling: Option<f64>,
    /// ε used by a merge-and-reduce stage.
    pub epsilon: Option<f64>,
    /// Whether `r` came from the target-size heuristic.
    pub heuristic: bool,
}

#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub coreset: Coreset,
    pub stages: Vec<StageReport>,
    /// Most rows held by all stages at once.
    pub peak_live_rows: usize,
}

/// A configured sampler chain fed one row at a time.
pub struct Pipeline {
    config: PipelineConfig,
    dim: usize,
    stages: Vec<Box<dyn Sampler>>,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    seconds: Vec<f64>,
    emitted: Vec<WeightedRow>,
    seen: usize,
    peak: usize,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        let stages = (0..config.stages.len())
            .map(|i| {
                build_stage(&config, i, dim).map_err(|e| CoresetError::Stage {
                    index: i,
                    label: config.stages[i].kind().into(),
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let n = stages.len();
        Ok(Pipeline {
            config,
            dim,
            stages,
            inputs: vec![0; n],
            outputs: vec![0; n],
            seconds: vec![0.0; n],
            emitted: Vec::new(),
            seen: 0,
            peak: 0,
        })
    }

    pub fn rows_seen(&self) -> usize {
        self.seen
    }

    fn wrap(&self, index: usize, e: CoresetError) -> CoresetError {
        CoresetError::Stage {
            index,
            label: self.stages[index].label().to_string(),
            source: Box::new(e),
        }
    }

    /// Feeds `rows` into stage `from` and cascades whatever comes out.
    fn cascade(&mut self, from: usize, rows: Vec<WeightedRow>) -> Result<()> {
        let mut batch = rows;
        for k in from..self.stages.len() {
            if batch.is_empty() {
                return Ok(());
            }
            let mut next = Vec::new();
            let watch = clock::Stopwatch::start();
            for row in batch {
                self.inputs[k] += 1;
                if let Err(e) = self.stages[k].push(row, &mut next) {
                    return Err(self.wrap(k, e));
                }
            }
            self.seconds[k] += watch.seconds();
            self.outputs[k] += next.len();
            batch = next;
        }
        self.emitted.extend(batch);
        Ok(())
    }

    fn note_live(&mut self) {
        let live: usize = self.stages.iter().map(|s| s.live_rows()).sum();
        self.peak = self.peak.max(live);
    }

    pub fn push(&mut self, row: DenseVector) -> Result<()> {
        if row.len() != self.dim {
            return Err(CoresetError::Dimension {
                expected: self.dim,
                found: row.len(),
            });
        }
        let w = WeightedRow::raw(row, self.seen);
        self.seen += 1;
        self.cascade(0, vec![w])?;
        self.note_live();
        Ok(())
    }

    pub fn finish(mut self) -> Result<PipelineRun> {
        for k in 0..self.stages.len() {
            let mut out = Vec::new();
            let watch = clock::Stopwatch::start();
            if let Err(e) = self.stages[k].finish(&mut out) {
                return Err(self.wrap(k, e));
            }
            self.seconds[k] += watch.seconds();
            self.outputs[k] += out.len();
            self.cascade(k + 1, out)?;
            self.note_live();
        }
        let mut elements = std::mem::take(&mut self.emitted);
        elements.sort_by_key(|r| r.raw_index);
        let reports: Vec<StageReport> = self
            .stages
            .iter()
            .enumerate()
            .map(|(k, s)| StageReport {
                label: s.label().to_string(),
                input: self.inputs[k],
                output: self.outputs[k],
                seconds: self.seconds[k],
                oversampling: s.effective_r().or(match &self.config.stages[k] {
                    StageConfig::Linefilter(f) | StageConfig::Kernelfilter(f) | StageConfig::Leverage2(f) => f.r,
                    _ => None,
                }),
                epsilon: match &self.config.stages[k] {
                    StageConfig::StreamingLw { epsilon, .. } | StageConfig::StreamingLf { epsilon, .. } => {
                        self.config.stage_epsilon(*epsilon).ok()
                    }
                    _ => None,
                },
                heuristic: s.heuristic(),
            })
            .collect();
        let label = reports.iter().map(|r| r.label.as_str()).collect::<Vec<_>>().join("+");
        let coreset = Coreset {
            elements,
            p: self.config.p,
            source_count: self.seen,
            stage_label: label,
            stages: reports
                .iter()
                .map(|r| StageSummary {
                    label: r.label.clone(),
                    input: r.input,
                    output: r.output,
                })
                .collect(),
        };
        Ok(PipelineRun {
            coreset,
            stages: reports,
            peak_live_rows: self.peak,
        })
    }
}

/// Streams `rows` through the configured stages. The row dimension comes from
/// the first row (or `input.dim`); an empty stream yields an empty coreset.
pub fn run_pipeline<I>(config: &PipelineConfig, rows: I) -> Result<PipelineRun>
where
    I: IntoIterator<Item = DenseVector>,
{
    config.validate()?;
    let mut iter = rows.into_iter().peekable();
    let dim = match (iter.peek(), config.input.as_ref().and_then(|d| d.dim)) {
        (Some(r), _) => r.len(),
        (None, Some(d)) => d,
        (None, None) => 1,
    };
    let mut pipeline = Pipeline::new(config.clone(), dim)?;
    for row in iter {
        pipeline.push(row)?;
    }
    pipeline.finish()
}
