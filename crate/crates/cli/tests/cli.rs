use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use coreset_cli::report::RunReport;
use tempfile::TempDir;

fn coreset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coreset"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = coreset(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(path: &Path) -> RunReport {
    RunReport::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn data_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(str::to_string)
        .collect()
}

const UNIFORM_ALL: &str = r#"{"p": 3, "stages": [{"kind": "uniform", "count": 3, "population": 3}]}"#;

#[test]
fn uniform_over_three_rows_keeps_them_at_weight_one() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.csv", "1,2\n3,4\n5,6\n");
    let config = write(&dir, "c.json", UNIFORM_ALL);
    let out = dir.path().join("out.csv");
    let rep = dir.path().join("r.json");
    ok(&["sample", "--input", s(&input), "--config", s(&config), "--output", s(&out), "--report", s(&rep)]);
    let lines = data_lines(&out);
    assert_eq!(lines, ["1.0,2.0,1.0,1.0", "3.0,4.0,1.0,1.0", "5.0,6.0,1.0,1.0"]);
    let r = report(&rep);
    assert_eq!(r.source_count, Some(3));
    assert_eq!(r.coreset_size, Some(3));
}

#[test]
fn empty_input_gives_an_empty_coreset() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.csv", "");
    let config = write(&dir, "c.json", UNIFORM_ALL);
    let out = dir.path().join("out.csv");
    let rep = dir.path().join("r.json");
    ok(&["sample", "--input", s(&input), "--config", s(&config), "--output", s(&out), "--report", s(&rep)]);
    assert!(data_lines(&out).is_empty());
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("#coreset;p=3.0"));
    assert_eq!(report(&rep).source_count, Some(0));
}

#[test]
fn malformed_line_is_reported_with_its_number() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.csv", "1,2\n3,4\n\n5,oops\n");
    let config = write(&dir, "c.json", UNIFORM_ALL);
    let out = coreset(&["sample", "--input", s(&input), "--config", s(&config)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn unknown_config_field_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.csv", "1,2\n");
    let config = write(&dir, "c.json", r#"{"p": 3, "stages": [{"kind": "linefilter", "r": 2, "oversample": 3}]}"#);
    let out = coreset(&["sample", "--input", s(&input), "--config", s(&config)]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("oversample"), "{err}");
}

#[test]
fn invalid_power_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "in.csv", "1,2\n");
    let config = write(&dir, "c.json", r#"{"p": 1, "stages": [{"kind": "linefilter", "r": 2}]}"#);
    let out = coreset(&["sample", "--input", s(&input), "--config", s(&config)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn copy_of_the_input_has_zero_error() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.csv");
    ok(&["synth", "--kind", "gaussian", "--n", "300", "--d", "4", "--seed", "3", "--output", s(&input)]);
    for p in ["2", "3"] {
        let rep = dir.path().join(format!("r{p}.json"));
        ok(&["eval", "--input", s(&input), "--coreset", s(&input), "--p", p, "--queries", "50", "--report", s(&rep)]);
        let r = report(&rep);
        let c = r.metrics.contraction.unwrap();
        assert_eq!(c.queries, 50);
        assert_eq!(c.max.0, 0.0);
        match p {
            "2" => assert!(r.metrics.spectral_error.unwrap().0 < 1e-12),
            _ => assert!(r.metrics.spectral_error.is_none()),
        }
    }
}

#[test]
fn eval_rejects_a_dimension_mismatch() {
    let dir = TempDir::new().unwrap();
    let full = write(&dir, "a.csv", "1,2\n3,4\n");
    let cs = write(&dir, "b.csv", "#coreset;p=3\n1,2,3,1,1\n");
    let out = coreset(&["eval", "--input", s(&full), "--coreset", s(&cs)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension mismatch"));
}

#[test]
fn rare_subspace_with_no_rare_rows_has_rank_r1() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("rs.bin");
    ok(&[
        "synth", "--kind", "rare-subspace", "--n", "500", "--fraction", "0", "--format", "bin", "--output", s(&data),
    ]);
    let bytes = std::fs::read(&data).unwrap();
    assert_eq!(&bytes[..5], b"MCRS1");
    assert_eq!(bytes.len(), 5 + 16 + 500 * 30 * 8);
    let rows: Vec<f64> = bytes[21..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let a = nalgebra::DMatrix::from_row_slice(500, 30, &rows);
    let sv = a.singular_values();
    let top = sv.max();
    assert_eq!(sv.iter().filter(|&&v| v > 1e-8 * top).count(), 8);
    for r in a.row_iter() {
        assert!((r.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn rare_subspace_rejects_oversized_ranks() {
    let out = coreset(&["synth", "--kind", "rare-subspace", "--n", "10", "--d", "10", "--r1", "8", "--r2", "4"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn single_topic_with_exact_documents_repeats_the_topic() {
    let dir = TempDir::new().unwrap();
    let docs = dir.path().join("docs.csv");
    let truth = dir.path().join("truth.csv");
    ok(&[
        "synth", "--kind", "topic-corpus", "--n", "20", "--d", "8", "--topics", "1", "--doc-length", "0",
        "--output", s(&docs), "--topics-output", s(&truth),
    ]);
    let topic = data_lines(&truth);
    assert_eq!(topic.len(), 1);
    let lines = data_lines(&docs);
    assert_eq!(lines.len(), 20);
    assert!(lines.iter().all(|l| *l == topic[0]));
}

#[test]
fn same_seed_gives_byte_identical_coresets() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.bin");
    ok(&["synth", "--kind", "gaussian", "--n", "3000", "--d", "5", "--sigma", "1", "--format", "bin", "--output", s(&data)]);
    let config = write(
        &dir,
        "c.json",
        r#"{"p": 4, "seed": 5, "stages": [
            {"kind": "linefilter", "target_size": 600},
            {"kind": "kernelfilter", "target_size": 150, "expected_input": 600}]}"#,
    );
    let mut outputs = Vec::new();
    for (i, format) in ["bin", "bin", "csv"].iter().enumerate() {
        let out = dir.path().join(format!("o{i}"));
        ok(&["sample", "--input", s(&data), "--config", s(&config), "--format", format, "--output", s(&out), "--report", s(&dir.path().join("r.json"))]);
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let other = dir.path().join("o-other");
    ok(&["sample", "--input", s(&data), "--config", s(&config), "--seed", "6", "--format", "bin", "--output", s(&other)]);
    assert_ne!(std::fs::read(&other).unwrap(), outputs[0]);
}

#[test]
fn lf_kf_report_matches_the_coreset_file() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("rs.csv");
    ok(&["synth", "--kind", "rare-subspace", "--n", "4000", "--fraction", "0.005", "--seed", "2", "--output", s(&data)]);
    let config = write(
        &dir,
        "c.json",
        r#"{"p": 4, "seed": 1, "stages": [
            {"kind": "linefilter", "target_size": 1000},
            {"kind": "kernelfilter", "target_size": 300, "expected_input": 1000}]}"#,
    );
    let out = dir.path().join("cs.csv");
    let rep = dir.path().join("r.json");
    ok(&["sample", "--input", s(&data), "--config", s(&config), "--output", s(&out), "--report", s(&rep)]);
    let r = report(&rep);
    let rows = data_lines(&out).len();
    assert_eq!(r.coreset_size, Some(rows));
    assert_eq!(r.source_count, Some(4000));
    assert_eq!(r.stages.len(), 2);
    assert_eq!(r.stages[0].input, 4000);
    assert_eq!(r.stages[0].output, r.stages[1].input);
    assert_eq!(r.stages[1].output, rows);
    assert_eq!(r.config.unwrap().input.unwrap().rows, Some(4000));
    for line in data_lines(&out) {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        let (q, w) = (f[30], f[31]);
        assert!(q > 0.0 && q <= 1.0);
        assert!((w * q - 1.0).abs() < 1e-12);
    }
    let eval = dir.path().join("e.json");
    ok(&[
        "eval", "--input", s(&data), "--coreset", s(&out), "--strategy", "singular", "--end", "bottom", "--k", "1",
        "--report", s(&eval),
    ]);
    let c = report(&eval).metrics.contraction.unwrap();
    assert_eq!(c.queries, 1);
    assert!(c.max.0 < 0.5, "error on the rare direction: {}", c.max.0);
}

#[test]
fn binary_input_fills_in_the_row_count() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.bin");
    ok(&["synth", "--kind", "gaussian", "--n", "50", "--d", "3", "--format", "bin", "--output", s(&data)]);
    let config = write(&dir, "c.json", r#"{"p": 3, "stages": [{"kind": "uniform", "count": 10}]}"#);
    let rep = dir.path().join("r.json");
    let out = dir.path().join("o.bin");
    ok(&["sample", "--input", s(&data), "--config", s(&config), "--format", "bin", "--output", s(&out), "--report", s(&rep)]);
    let r = report(&rep);
    assert_eq!(r.source_count, Some(50));
    let bytes = std::fs::read(&out).unwrap();
    let n = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
    assert_eq!(n, r.coreset_size.unwrap());
    assert_eq!(bytes.len(), 21 + n * 3 * 8 + n * 8);
    // The coreset file reads back as a coreset with its weights.
    let e = dir.path().join("e.json");
    ok(&["eval", "--input", s(&data), "--coreset", s(&out), "--p", "3", "--queries", "20", "--report", s(&e)]);
}

#[test]
fn experiment_prints_one_row_per_size() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.csv");
    ok(&["synth", "--kind", "gaussian", "--n", "2000", "--d", "4", "--sigma", "1", "--output", s(&data)]);
    let rep = dir.path().join("r.json");
    let out = ok(&[
        "experiment", "--input", s(&data), "--p", "3", "--sizes", "100,400", "--samplers", "uniform,lf-kf",
        "--seeds", "3", "--queries", "50", "--report", s(&rep),
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "size\tuniform\tlf+kf");
    assert!(rows[1].starts_with("100\t") && rows[2].starts_with("400\t"));
    let r = report(&rep);
    assert_eq!(r.table.len(), 2);
    assert_eq!(r.table[1].errors.len(), 2);
}

#[test]
fn topics_from_exact_documents_recover_the_truth() {
    let dir = TempDir::new().unwrap();
    let docs = dir.path().join("docs.csv");
    let truth = dir.path().join("truth.csv");
    ok(&[
        "synth", "--kind", "topic-corpus", "--n", "600", "--d", "20", "--topics", "3", "--doc-length", "0",
        "--output", s(&docs), "--topics-output", s(&truth),
    ]);
    let est = dir.path().join("est.csv");
    let rep = dir.path().join("r.json");
    ok(&["topics", "--input", s(&docs), "--k", "3", "--truth", s(&truth), "--output", s(&est), "--report", s(&rep)]);
    assert_eq!(data_lines(&est).len(), 3);
    assert!(report(&rep).metrics.topic_error.unwrap().0 < 1e-6);
}
