//! JSON run reports.

use coreset::eval::ErrorStats;
use coreset::pipeline::{PipelineConfig, PipelineRun};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const FORMAT_VERSION: u32 = 1;

/// An `f64` that survives JSON: finite values are numbers, `NaN` and the
/// infinities are the strings `"NaN"`, `"inf"` and `"-inf"`.
#[derive(Clone, Copy, Debug)]
pub struct Real(pub f64);

impl PartialEq for Real {
    fn eq(&self, other: &Self) -> bool {
        self.0.total_cmp(&other.0).is_eq()
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Real(v)),
            Raw::Text(t) => match t.as_str() {
                "NaN" => Ok(Real(f64::NAN)),
                "inf" => Ok(Real(f64::INFINITY)),
                "-inf" => Ok(Real(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("not a number: `{other}`"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageEntry {
    pub label: String,
    pub input: usize,
    pub output: usize,
    pub seconds: Real,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oversampling: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Real>,
    pub heuristic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractionStats {
    pub p: Real,
    pub mode: String,
    pub strategy: String,
    pub queries: usize,
    pub excluded: usize,
    pub max: Real,
    pub median: Real,
    pub mean: Real,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_query: Vec<Real>,
}

impl ContractionStats {
    pub fn new(stats: &ErrorStats, p: f64, mode: &str, strategy: &str, per_query: bool) -> Self {
        ContractionStats {
            p: Real(p),
            mode: mode.into(),
            strategy: strategy.into(),
            queries: stats.per_query.len(),
            excluded: stats.excluded,
            max: Real(stats.max),
            median: Real(stats.median),
            mean: Real(stats.mean),
            per_query: if per_query {
                stats.per_query.iter().map(|&v| Real(v)).collect()
            } else {
                Vec::new()
            },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contraction: Option<ContractionStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_error: Option<Real>,
    /// Matched average ℓ1 topic error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_error: Option<Real>,
}

/// One row of an experiment table: median error per sampler at one size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRow {
    pub size: usize,
    /// Sampler label and median relative error over seeds.
    pub errors: Vec<(String, Real)>,
    /// Sampler label and mean coreset size over seeds.
    pub sizes: Vec<(String, Real)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub format_version: u32,
    pub command: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PipelineConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coreset_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_live_rows: Option<usize>,
    #[serde(default)]
    pub metrics: Metrics,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<TableRow>,
}

impl RunReport {
    pub fn new(command: &str, seed: u64) -> Self {
        RunReport {
            format_version: FORMAT_VERSION,
            command: command.into(),
            seed,
            config: None,
            source_count: None,
            coreset_size: None,
            stages: Vec::new(),
            peak_live_rows: None,
            metrics: Metrics::default(),
            table: Vec::new(),
        }
    }

    pub fn from_run(config: &PipelineConfig, run: &PipelineRun) -> Self {
        let mut report = RunReport::new("sample", config.seed);
        report.config = Some(config.clone());
        report.source_count = Some(run.coreset.source_count);
        report.coreset_size = Some(run.coreset.len());
        report.peak_live_rows = Some(run.peak_live_rows);
        report.stages = run
            .stages
            .iter()
            .map(|s| StageEntry {
                label: s.label.clone(),
                input: s.input,
                output: s.output,
                seconds: Real(s.seconds),
                oversampling: s.oversampling.map(Real),
                epsilon: s.epsilon.map(Real),
                heuristic: s.heuristic,
            })
            .collect();
        report
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}
