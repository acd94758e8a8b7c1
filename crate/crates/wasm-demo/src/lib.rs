//! Browser demo: a 2-D stream with a rare direction, sampled by the online
//! filters, drawn on a canvas by `www/index.html`.
//!
//! Results cross the boundary as flat `f64` arrays; seeds are `u32` so they
//! stay plain JS numbers.

use coreset::eval::{median, relative_error, Mode, Provenance, QuerySet};
use coreset::linalg::DenseVector;
use coreset::pipeline::{run_pipeline, FilterParams, InputDescriptor, PipelineConfig, StageConfig};
use coreset::synth::scaled_gaussian_rows;
use coreset::{Coreset, CoresetError, Result};
use wasm_bindgen::prelude::*;

/// Anisotropic cloud along the x axis; every `1/rare_fraction`-th row is
/// replaced by a point far out along y.
pub fn demo_points(n: usize, rare_fraction: f64, sigma: f64, seed: u64) -> Vec<DenseVector> {
    let stride = if rare_fraction > 0.0 {
        (1.0 / rare_fraction).round().max(1.0) as usize
    } else {
        usize::MAX
    };
    scaled_gaussian_rows(n, 2, sigma, seed)
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            if i % stride == stride / 2 {
                DenseVector::from_vec(vec![0.1 * g[0], 3.0 + 0.3 * g[1].abs()])
            } else {
                DenseVector::from_vec(vec![g[0], 0.08 * g[1]])
            }
        })
        .collect()
}

pub fn config_for(kind: &str, p: f64, target: f64, n: usize, seed: u64) -> Result<PipelineConfig> {
    let filter = |t: f64, input: Option<usize>| FilterParams {
        target_size: Some(t),
        expected_input: input,
        ..Default::default()
    };
    let stages = match kind {
        "uniform" => vec![StageConfig::Uniform {
            count: target,
            population: Some(n),
        }],
        "linefilter" => vec![StageConfig::Linefilter(filter(target, None))],
        "kernelfilter" => vec![StageConfig::Kernelfilter(filter(target, None))],
        "lf+kf" => {
            let mid = (4.0 * target).min(n as f64);
            vec![
                StageConfig::Linefilter(filter(mid, None)),
                StageConfig::Kernelfilter(filter(target, Some(mid.ceil() as usize))),
            ]
        }
        other => return Err(CoresetError::Config(format!("unknown sampler `{other}`"))),
    };
    Ok(PipelineConfig {
        p,
        seed,
        epsilon: None,
        stages,
        input: Some(InputDescriptor {
            rows: Some(n),
            dim: Some(2),
        }),
    })
}

/// `steps` unit directions evenly spaced on the half circle; `|aᵀx|^p` is
/// even in `x`, so the other half mirrors it.
pub fn directions(steps: usize) -> QuerySet {
    QuerySet {
        vectors: (0..steps)
            .map(|i| {
                let t = std::f64::consts::PI * i as f64 / steps as f64;
                DenseVector::from_vec(vec![t.cos(), t.sin()])
            })
            .collect(),
        provenance: Provenance::RandomUnit,
    }
}

pub fn sample_points(points: &[DenseVector], kind: &str, p: f64, target: f64, seed: u64) -> Result<Coreset> {
    let config = config_for(kind, p, target, points.len(), seed)?;
    Ok(run_pipeline(&config, points.iter().cloned())?.coreset)
}

/// Angle, full-data `Σ|aᵀx|^p` and coreset estimate, per direction.
pub fn profile_of(points: &[DenseVector], coreset: &Coreset, p: f64, steps: usize) -> Vec<f64> {
    let q = directions(steps);
    let mut out = Vec::with_capacity(3 * steps);
    for (i, x) in q.vectors.iter().enumerate() {
        let full: f64 = points.iter().map(|a| a.dot(x).abs().powf(p)).sum();
        let approx: f64 = coreset.rows().map(|a| a.dot(x).abs().powf(p)).sum();
        out.extend([std::f64::consts::PI * i as f64 / steps as f64, full, approx]);
    }
    out
}

/// Per sampler, per size: median over seeds of the worst directional error.
pub fn error_table(points: &[DenseVector], kinds: &[&str], p: f64, sizes: &[f64], seeds: u64) -> Result<Vec<f64>> {
    let q = directions(180);
    let mut out = Vec::with_capacity(kinds.len() * sizes.len());
    for kind in kinds {
        for &size in sizes {
            let errors = (0..seeds)
                .map(|s| {
                    let cs = sample_points(points, kind, p, size, s)?;
                    Ok(relative_error(points, &cs, &q, p, Mode::Absolute).max)
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(median(&errors));
        }
    }
    Ok(out)
}

fn js(e: CoresetError) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    points: Vec<DenseVector>,
    coreset: Option<Coreset>,
    p: f64,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, rare_fraction: f64, sigma: f64, seed: u32) -> Demo {
        Demo {
            points: demo_points(n, rare_fraction, sigma, seed as u64),
            coreset: None,
            p: 2.0,
        }
    }

    /// `[x, y]` per point.
    pub fn points(&self) -> Vec<f64> {
        self.points.iter().flat_map(|r| [r[0], r[1]]).collect()
    }

    /// Runs a sampler; returns `[x, y, weight, index]` per kept row, with the
    /// rescaling undone so kept rows sit on the original points.
    pub fn sample(&mut self, kind: &str, p: f64, target: f64, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
        let cs = sample_points(&self.points, kind, p, target, seed as u64).map_err(js)?;
        let out = cs
            .elements
            .iter()
            .flat_map(|e| {
                let a = e.unscaled(p);
                [a[0], a[1], e.weight(), e.raw_index as f64]
            })
            .collect();
        self.coreset = Some(cs);
        self.p = p;
        Ok(out)
    }

    /// `[angle, full, coreset]` per direction for the last sample.
    pub fn profile(&self, steps: usize) -> Vec<f64> {
        match &self.coreset {
            Some(cs) => profile_of(&self.points, cs, self.p, steps.max(1)),
            None => Vec::new(),
        }
    }

    /// Median worst-direction error, row-major over `kinds` (comma-separated)
    /// then `sizes`.
    pub fn error_curve(&self, kinds: &str, p: f64, sizes: Vec<f64>, seeds: u32) -> std::result::Result<Vec<f64>, JsError> {
        let kinds: Vec<&str> = kinds.split(',').map(str::trim).filter(|k| !k.is_empty()).collect();
        error_table(&self.points, &kinds, p, &sizes, seeds.max(1) as u64).map_err(js)
    }
}
