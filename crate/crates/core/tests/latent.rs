use coreset::eval::median;
use coreset::latent::{estimate_topics, match_topics, DEFAULT_ITERATIONS, DEFAULT_RESTARTS};
use coreset::pipeline::{run_pipeline, FilterParams, InputDescriptor, PipelineConfig, StageConfig};
use coreset::synth::{topic_corpus, TopicCorpusParams};
use coreset::WeightedRow;

fn error(rows: &[WeightedRow], truth: &[coreset::linalg::DenseVector], k: usize, seed: u64) -> f64 {
    let est = estimate_topics(rows, k, DEFAULT_RESTARTS, DEFAULT_ITERATIONS, seed).unwrap();
    assert_eq!(est.topics.len(), k);
    for t in &est.topics {
        assert!(t.iter().all(|&v| v >= -1e-8));
        assert!((t.sum() - 1.0).abs() < 1e-12);
    }
    let w = &est.summary.whitening;
    let check = w.transpose() * est.summary.m2.matrix() * w;
    assert!((check - coreset::linalg::DenseMatrix::identity(k, k)).norm() < 1e-6);
    match_topics(&est.topics, truth).unwrap()
}

#[test]
fn twelve_topics_from_a_thousand_documents() {
    let params = TopicCorpusParams {
        docs: 5000,
        d: 50,
        topics: 12,
        doc_length: 10,
        concentration: 0.1,
    };
    let (mut full, mut small) = (Vec::new(), Vec::new());
    for seed in 0..3u64 {
        let corpus = topic_corpus(&params, 40 + seed).unwrap();
        let raw: Vec<WeightedRow> = corpus
            .documents
            .iter()
            .enumerate()
            .map(|(i, d)| WeightedRow::raw(d.clone(), i))
            .collect();
        full.push(error(&raw, &corpus.topics, 12, seed));
        let config = PipelineConfig {
            p: 3.0,
            seed,
            epsilon: None,
            stages: vec![
                StageConfig::Linefilter(FilterParams {
                    target_size: Some(3000.0),
                    ..Default::default()
                }),
                StageConfig::Kernelfilter(FilterParams {
                    target_size: Some(1000.0),
                    expected_input: Some(3000),
                    ..Default::default()
                }),
            ],
            input: Some(InputDescriptor {
                rows: Some(params.docs),
                dim: None,
            }),
        };
        let run = run_pipeline(&config, corpus.documents.clone()).unwrap();
        small.push(error(&run.coreset.elements, &corpus.topics, 12, seed));
    }
    let (f, s) = (median(&full), median(&small));
    eprintln!("median topic error: coreset {s:.4}, full data {f:.4}");
    assert!(s <= 2.0 * f, "coreset {s:.4} vs full {f:.4} ({small:?} / {full:?})");
}
