use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use coreset::eval::{
    coreset_gram, make_queries, median, relative_error, spectral_error, Mode, QueryStrategy, SpectrumEnd,
};
use coreset::latent::{estimate_topics, match_topics, DEFAULT_ITERATIONS, DEFAULT_RESTARTS};
use coreset::linalg::{stack_rows, DenseVector, SymmetricPsd};
use coreset::pipeline::{
    run_pipeline, FilterParams, InputDescriptor, Pipeline, PipelineConfig, PipelineRun, StageConfig,
};
use coreset::synth::{
    rare_subspace, scaled_gaussian_rows, topic_corpus, RareSubspaceParams, TopicCorpusParams,
};
use coreset::{CoresetError, WeightedRow};

use crate::error::CliError;
use crate::io::{read_coreset, write_coreset, write_rows, Format, Record, RowReader};
use crate::report::{ContractionStats, Real, RunReport, TableRow};

#[derive(Debug, Parser)]
#[command(name = "coreset", version, about = "Streaming coresets for tensor contraction and lp embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stream rows through a sampler pipeline and write the coreset.
    Sample(SampleArgs),
    /// Compare a coreset against the full data on a query set.
    Eval(EvalArgs),
    /// Generate synthetic data.
    Synth(SynthArgs),
    /// Sample size against median error, one column per sampler.
    Experiment(ExperimentArgs),
    /// Estimate single-topic model topics from documents or a coreset.
    Topics(TopicsArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Row file (CSV or binary); `-` or absent reads stdin.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Pipeline configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Coreset file; `-` or absent writes stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Run report (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    /// Uniform unit vectors.
    Random,
    /// The k right singular vectors.
    Singular,
    /// Uniform in the span of k right singular vectors, plus the vectors.
    Subspace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EndArg {
    Top,
    Bottom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Signed,
    Absolute,
}

#[derive(Debug, Args, Clone)]
pub struct QueryArgs {
    #[arg(long, value_enum, default_value = "random")]
    pub strategy: StrategyArg,
    /// Number of random queries.
    #[arg(long, default_value_t = 500)]
    pub queries: usize,
    /// Singular subspace dimension; defaults to the row dimension.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value = "top")]
    pub end: EndArg,
    #[arg(long, value_enum, default_value = "signed")]
    pub mode: ModeArg,
    /// Query seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Full data.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub coreset: PathBuf,
    /// Contraction power; read from a CSV coreset header when absent.
    #[arg(long)]
    pub p: Option<f64>,
    #[command(flatten)]
    pub query: QueryArgs,
    /// Include every per-query error in the report.
    #[arg(long)]
    pub per_query: bool,
    /// Report file; absent writes stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    RareSubspace,
    TopicCorpus,
    Gaussian,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    /// Rows (documents for topic_corpus).
    #[arg(long)]
    pub n: Option<usize>,
    /// Dimension (vocabulary size for topic_corpus).
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub r1: Option<usize>,
    #[arg(long)]
    pub r2: Option<usize>,
    /// Fraction of rows in the rare subspace.
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub topics: Option<usize>,
    /// Words per document; 0 gives the exact topic vector.
    #[arg(long)]
    pub doc_length: Option<usize>,
    #[arg(long)]
    pub concentration: Option<f64>,
    /// Log-normal row scale for gaussian data.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Where to write the true topic-word vectors (topic_corpus only).
    #[arg(long)]
    pub topics_output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Uniform,
    Linefilter,
    /// LineFilter with `p = 2` scores.
    Leverage2,
    Kernelfilter,
    /// LineFilter to four times the target, then KernelFilter.
    LfKf,
}

impl SamplerArg {
    fn label(self) -> &'static str {
        match self {
            SamplerArg::Uniform => "uniform",
            SamplerArg::Linefilter => "linefilter",
            SamplerArg::Leverage2 => "leverage2",
            SamplerArg::Kernelfilter => "kernelfilter",
            SamplerArg::LfKf => "lf+kf",
        }
    }
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub p: f64,
    /// Expected coreset sizes.
    #[arg(long, value_delimiter = ',', default_value = "100,300,500")]
    pub sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "uniform,leverage2,lf-kf")]
    pub samplers: Vec<SamplerArg>,
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[command(flatten)]
    pub query: QueryArgs,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TopicsArgs {
    /// Documents or a coreset of documents.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// True topics, one per row, for the matched ℓ1 error.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Estimated topics as rows; absent writes stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn is_stdio(path: &Option<PathBuf>) -> bool {
    path.as_deref().is_none_or(|p| p == Path::new("-"))
}

fn open_input(path: &Option<PathBuf>) -> Result<Box<dyn Read>, CliError> {
    if is_stdio(path) {
        return Ok(Box::new(io::stdin()));
    }
    let p = path.as_ref().expect("checked");
    File::open(p)
        .map(|f| Box::new(f) as Box<dyn Read>)
        .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
}

fn open_file(path: &Path) -> Result<Box<dyn Read>, CliError> {
    open_input(&Some(path.to_path_buf()))
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    if is_stdio(path) {
        return Ok(Box::new(BufWriter::new(io::stdout())));
    }
    let p = path.as_ref().expect("checked");
    File::create(p)
        .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>)
        .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
}

fn emit_report(report: &RunReport, path: &Option<PathBuf>) -> Result<(), CliError> {
    let mut out = open_output(path)?;
    out.write_all(report.to_json().as_bytes())?;
    out.flush()?;
    Ok(())
}

fn read_config(path: &Path) -> Result<PipelineConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    // Validated once the input has filled in `input.rows`.
    serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))
}

fn read_rows(path: &Path) -> Result<(Vec<DenseVector>, usize), CliError> {
    let (header, records) = RowReader::new(open_file(path)?)?.read_all()?;
    let dim = header.dim.unwrap_or(0);
    Ok((records.into_iter().map(|r: Record| r.row).collect(), dim))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Sample(a) => sample(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
        Command::Experiment(a) => experiment(a),
        Command::Topics(a) => topics(a),
    }
}

/// Streams the input once through the configured pipeline.
pub fn sample(args: SampleArgs) -> Result<(), CliError> {
    let mut config = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let mut reader = RowReader::new(open_input(&args.input)?)?;
    let first = reader.next_record()?;
    let dim = first
        .as_ref()
        .map(|r| r.row.len())
        .or(reader.header.dim)
        .or(config.input.as_ref().and_then(|i| i.dim))
        .unwrap_or(1);
    let declared = config.input.get_or_insert_with(InputDescriptor::default);
    if let Some(expected) = declared.dim {
        if expected != dim {
            return Err(CoresetError::Dimension { expected, found: dim }.into());
        }
    }
    if declared.rows.is_none() {
        declared.rows = reader.header.rows;
    }
    if config.input == Some(InputDescriptor::default()) {
        config.input = None;
    }
    let mut pipeline = Pipeline::new(config.clone(), dim)?;
    let mut next = first;
    while let Some(record) = next {
        pipeline.push(record.row)?;
        next = reader.next_record()?;
    }
    let run = pipeline.finish()?;
    let mut out = open_output(&args.output)?;
    write_coreset(&mut out, &run.coreset, dim, args.format)?;
    out.flush()?;
    let report = RunReport::from_run(&config, &run);
    match &args.report {
        Some(path) => emit_report(&report, &Some(path.clone()))?,
        None if !is_stdio(&args.output) => emit_report(&report, &None)?,
        None => {}
    }
    Ok(())
}

fn mode(m: ModeArg) -> (Mode, &'static str) {
    match m {
        ModeArg::Signed => (Mode::Signed, "signed"),
        ModeArg::Absolute => (Mode::Absolute, "absolute"),
    }
}

fn strategy(q: &QueryArgs) -> (QueryStrategy, String) {
    let end = match q.end {
        EndArg::Top => SpectrumEnd::Top,
        EndArg::Bottom => SpectrumEnd::Bottom,
    };
    let end_label = if end == SpectrumEnd::Top { "top" } else { "bottom" };
    match q.strategy {
        StrategyArg::Random => (QueryStrategy::RandomUnit, "random".into()),
        StrategyArg::Singular => (QueryStrategy::SingularDirections(end), format!("singular-{end_label}")),
        StrategyArg::Subspace => (QueryStrategy::Subspace(end), format!("subspace-{end_label}")),
    }
}

fn check_dims(full: usize, coreset: usize) -> Result<(), CliError> {
    if full != coreset {
        return Err(CliError::Input(format!(
            "dimension mismatch: full data has {full} columns, coreset has {coreset}"
        )));
    }
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let (full, dim) = read_rows(&args.input)?;
    if full.is_empty() {
        return Err(CliError::Input(format!("{}: no rows", args.input.display())));
    }
    let (cs, cdim) = read_coreset(open_file(&args.coreset)?, args.p)?;
    if !cs.is_empty() || cdim != 0 {
        check_dims(dim, cdim)?;
    }
    let p = cs.p;
    let a = stack_rows(dim, full.iter())?;
    let (strat, strat_label) = strategy(&args.query);
    let k = args.query.k.unwrap_or(dim);
    let queries = make_queries(&a, k, args.query.queries, args.query.seed, strat)?;
    let (m, m_label) = mode(args.query.mode);
    let stats = relative_error(&full, &cs, &queries, p, m);
    let mut report = RunReport::new("eval", args.query.seed);
    report.source_count = Some(full.len());
    report.coreset_size = Some(cs.len());
    report.metrics.contraction = Some(ContractionStats::new(&stats, p, m_label, &strat_label, args.per_query));
    if p == 2.0 {
        let g = SymmetricPsd::weighted_gram(dim, full.iter().map(|r| (1.0, r)))?;
        let h = coreset_gram(&cs, dim)?;
        report.metrics.spectral_error = Some(Real(spectral_error(&g, &h)?));
    }
    emit_report(&report, &args.report)
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    if args.topics_output.is_some() && args.kind != SynthKind::TopicCorpus {
        return Err(CliError::Config("--topics-output applies to topic_corpus only".into()));
    }
    let rows = match args.kind {
        SynthKind::RareSubspace => {
            let defaults = RareSubspaceParams::default();
            let params = RareSubspaceParams {
                n: args.n.unwrap_or(defaults.n),
                d: args.d.unwrap_or(defaults.d),
                r1: args.r1.unwrap_or(defaults.r1),
                r2: args.r2.unwrap_or(defaults.r2),
                fraction: args.fraction.unwrap_or(defaults.fraction),
            };
            rare_subspace(&params, args.seed)?
        }
        SynthKind::TopicCorpus => {
            let defaults = TopicCorpusParams::default();
            let params = TopicCorpusParams {
                docs: args.n.unwrap_or(defaults.docs),
                d: args.d.unwrap_or(defaults.d),
                topics: args.topics.unwrap_or(defaults.topics),
                doc_length: args.doc_length.unwrap_or(defaults.doc_length),
                concentration: args.concentration.unwrap_or(defaults.concentration),
            };
            let corpus = topic_corpus(&params, args.seed)?;
            if let Some(path) = &args.topics_output {
                let mut out = open_output(&Some(path.clone()))?;
                write_rows(&mut out, &corpus.topics, args.format)?;
                out.flush()?;
            }
            corpus.documents
        }
        SynthKind::Gaussian => {
            if !(args.sigma.is_finite() && args.sigma >= 0.0) {
                return Err(CliError::Config(format!("--sigma must be non-negative, got {}", args.sigma)));
            }
            let d = args.d.unwrap_or(10);
            if d == 0 {
                return Err(CliError::Config("--d must be positive".into()));
            }
            scaled_gaussian_rows(args.n.unwrap_or(10_000), d, args.sigma, args.seed)
        }
    };
    let mut out = open_output(&args.output)?;
    write_rows(&mut out, &rows, args.format)?;
    out.flush()?;
    Ok(())
}

fn experiment_config(sampler: SamplerArg, p: f64, size: usize, n: usize, seed: u64) -> PipelineConfig {
    let target = |t: usize, input: Option<usize>| FilterParams {
        target_size: Some(t as f64),
        expected_input: input,
        ..Default::default()
    };
    let stages = match sampler {
        SamplerArg::Uniform => vec![StageConfig::Uniform {
            count: size as f64,
            population: Some(n),
        }],
        SamplerArg::Linefilter => vec![StageConfig::Linefilter(target(size, None))],
        SamplerArg::Leverage2 => vec![StageConfig::Leverage2(target(size, None))],
        SamplerArg::Kernelfilter => vec![StageConfig::Kernelfilter(target(size, None))],
        SamplerArg::LfKf => {
            let mid = (4 * size).min(n);
            vec![
                StageConfig::Linefilter(target(mid, None)),
                StageConfig::Kernelfilter(target(size, Some(mid))),
            ]
        }
    };
    PipelineConfig {
        p,
        seed,
        epsilon: None,
        stages,
        input: Some(InputDescriptor {
            rows: Some(n),
            dim: None,
        }),
    }
}

/// Median error over seeds for each sampler and size, printed as a table.
pub fn experiment(args: ExperimentArgs) -> Result<(), CliError> {
    let (full, dim) = read_rows(&args.input)?;
    if full.is_empty() {
        return Err(CliError::Input(format!("{}: no rows", args.input.display())));
    }
    if args.seeds == 0 || args.sizes.is_empty() || args.samplers.is_empty() {
        return Err(CliError::Config("need at least one seed, size and sampler".into()));
    }
    let n = full.len();
    let a = stack_rows(dim, full.iter())?;
    let (strat, strat_label) = strategy(&args.query);
    let queries = make_queries(&a, args.query.k.unwrap_or(dim), args.query.queries, args.query.seed, strat)?;
    let (m, _) = mode(args.query.mode);
    let mut report = RunReport::new("experiment", args.query.seed);
    report.source_count = Some(n);
    let mut table = io::stdout().lock();
    let header: Vec<&str> = args.samplers.iter().map(|s| s.label()).collect();
    writeln!(table, "# p={} queries={} ({strat_label}), median over {} seeds", args.p, queries.len(), args.seeds)?;
    writeln!(table, "size\t{}", header.join("\t"))?;
    for &size in &args.sizes {
        let mut row = TableRow {
            size,
            errors: Vec::new(),
            sizes: Vec::new(),
        };
        for &sampler in &args.samplers {
            let mut errors = Vec::new();
            let mut sizes = Vec::new();
            for seed in 0..args.seeds {
                let config = experiment_config(sampler, args.p, size, n, seed);
                let run: PipelineRun = run_pipeline(&config, full.iter().cloned())?;
                let stats = relative_error(&full, &run.coreset, &queries, args.p, m);
                errors.push(stats.max);
                sizes.push(run.coreset.len() as f64);
            }
            row.errors.push((sampler.label().into(), Real(median(&errors))));
            row.sizes.push((sampler.label().into(), Real(sizes.iter().sum::<f64>() / sizes.len() as f64)));
        }
        let cells: Vec<String> = row.errors.iter().map(|(_, e)| format!("{:.4}", e.0)).collect();
        writeln!(table, "{size}\t{}", cells.join("\t"))?;
        report.table.push(row);
    }
    if let Some(path) = &args.report {
        emit_report(&report, &Some(path.clone()))?;
    }
    Ok(())
}

pub fn topics(args: TopicsArgs) -> Result<(), CliError> {
    let (_, records) = RowReader::new(open_file(&args.input)?)?.read_all()?;
    let rows: Vec<WeightedRow> = records
        .into_iter()
        .enumerate()
        .map(|(i, r)| WeightedRow {
            row: r.row,
            raw_index: i,
            sample_prob: r.sample_prob.unwrap_or(1.0),
        })
        .collect();
    if rows.is_empty() {
        return Err(CliError::Input(format!("{}: no rows", args.input.display())));
    }
    let est = estimate_topics(&rows, args.k, args.restarts, args.iterations, args.seed)?;
    let mut report = RunReport::new("topics", args.seed);
    report.source_count = Some(rows.len());
    if let Some(truth) = &args.truth {
        let (reference, _) = read_rows(truth)?;
        report.metrics.topic_error = Some(Real(match_topics(&est.topics, &reference)?));
    }
    let mut out = open_output(&args.output)?;
    write_rows(&mut out, &est.topics, Format::Csv)?;
    out.flush()?;
    if args.report.is_some() || !is_stdio(&args.output) {
        emit_report(&report, &args.report)?;
    }
    Ok(())
}
