use std::fs;
use std::path::{Path, PathBuf};

use milkstream::data::TaskKind;
use milkstream::harness::{self, RunConfig};
use milkstream::model::evaluate;

fn tiny(dir: &Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.train_size = 400;
    c.valid_size = 20;
    c.test_size = 60;
    c.warm_start_steps = 40;
    c.train.steps = 30;
    c.train.batch_size = 16;
    c.train.eval_interval = 10;
    c.model.hidden_dim = 16;
    c.model.embed_dim = 8;
    c.model.attention_dim = 8;
    c.out_dir = dir.to_path_buf();
    c
}

#[test]
fn sweep_records_match_their_traces() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path());
    c.sweep.methods = ["milk", "monotonic", "mocha", "wait_k", "soft"].map(String::from).to_vec();
    c.sweep.lambdas = vec![0.0, 0.3];
    c.sweep.chunk_sizes = vec![1];
    c.sweep.ks = vec![2, 300];
    c.train.lambda = 0.3;
    let summary = harness::cmd_sweep(&c, |_| {}).unwrap();
    assert!(summary.failures.is_empty(), "{:?}", summary.failures);
    assert_eq!(summary.records.len(), 8);
    for r in &summary.records {
        let trace = dir.path().join("traces").join(format!("{}_{}_{}.jsonl", r.method, r.param, r.seed));
        let s = harness::cmd_eval_latency(&[trace]).unwrap().remove(0);
        assert_eq!(s.sentences, 60);
        assert!(s.max_recorded_diff < 1e-12, "{}", s.max_recorded_diff);
        for (a, b) in [(s.mean.ap, r.ap), (s.mean.al, r.al), (s.mean.dal, r.dal)] {
            assert!((a - b).abs() < 1e-9, "{} {}: {a} vs {b}", r.method, r.param);
        }
    }
    let find = |m: &str, p: f64| summary.records.iter().find(|r| r.method == m && r.param == p).unwrap();
    for (m, p) in [("soft", 0.0), ("wait_k", 300.0)] {
        assert!((find(m, p).ap - 1.0).abs() < 1e-6, "{m} AP {}", find(m, p).ap);
    }
    let (mocha, mono) = (find("mocha", 1.0), find("monotonic", 0.3));
    assert_eq!((mocha.quality, mocha.dal), (mono.quality, mono.dal));
}

#[test]
fn soft_traces_read_everything_first() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path());
    c.model.attention = "soft".into();
    harness::cmd_train(&c, |_, _| {}).unwrap();
    let stored = harness::read_traces(&dir.path().join("test_traces.jsonl"), None).unwrap();
    assert_eq!(stored.len(), 60);
    for s in stored {
        let first_write = s.trace.actions.iter().position(|a| !a.is_read()).unwrap();
        assert_eq!(first_write, s.trace.source_len);
        assert!(s.trace.actions[first_write..].iter().all(|a| !a.is_read()));
    }
}

#[test]
fn wait_six_histogram_is_one_spike() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny(dir.path());
    c.model.attention = "wait_k".into();
    c.model.k = 6;
    harness::cmd_train(&c, |_, _| {}).unwrap();
    let traces: Vec<PathBuf> = vec![dir.path().join("test_traces.jsonl")];
    let h = harness::cmd_delay_histogram(&traces, &dir.path().join("hist")).unwrap();
    let counts = &h.series[0].1;
    let six = h.bins.iter().position(|&b| b == 6).unwrap();
    assert_eq!(counts[six], 60);
    assert_eq!(counts.iter().sum::<usize>(), 60);
}

/// Copy model trained to convergence under soft attention, then under a
/// wait-3 schedule from it.
#[test]
fn copy_training_reaches_full_accuracy_and_wait_three_lags_by_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::default();
    c.task.kind = TaskKind::Copy;
    c.task.vocab_size = 16;
    c.task.min_len = 3;
    c.task.max_len = 8;
    c.train_size = 4000;
    c.valid_size = 200;
    c.test_size = 200;
    c.model.attention = "soft".into();
    c.train.steps = 2000;
    c.out_dir = dir.path().join("soft");
    let soft = harness::cmd_train(&c, |_, _| {}).unwrap();
    let data = harness::load_data(&c).unwrap();
    let (model, _) = milkstream::model::load_checkpoint(&soft.checkpoint).unwrap();
    let valid = harness::evaluate_test(&model, &data.valid).unwrap();
    assert!(valid.sequence_accuracy >= 0.99, "validation accuracy {}", valid.sequence_accuracy);

    c.model.attention = "wait_k".into();
    c.model.k = 3;
    c.warm_start_steps = 2000;
    c.train.steps = 500;
    c.out_dir = dir.path().join("wait3");
    let wait = harness::cmd_train(&c, |_, _| {}).unwrap();
    let input = dir.path().join("in.txt");
    fs::write(&input, "a b c\nd a f\n").unwrap();
    let reports = harness::cmd_decode(
        &wait.checkpoint,
        &input,
        &dir.path().join("out.txt"),
        &dir.path().join("traces.jsonl"),
        None,
    )
    .unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("out.txt")).unwrap(), "a b c\nd a f\n");
    for r in reports {
        assert_eq!(r.al, 3.0);
    }
}

#[test]
fn extreme_latency_weight_drives_expected_lag_to_its_floor() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::default();
    c.train_size = 2000;
    c.valid_size = 100;
    c.test_size = 50;
    c.model.attention = "milk".into();
    c.warm_start_steps = 500;
    c.train.steps = 600;
    c.train.lambda = 10.0;
    c.train.eval_interval = 100;
    c.out_dir = dir.path().to_path_buf();
    let run = harness::cmd_train(&c, |_, _| {}).unwrap();
    assert!(run.report.diverged.is_none());
    let data = harness::load_data(&c).unwrap();
    let (model, _) = milkstream::model::load_checkpoint(&run.checkpoint).unwrap();
    let valid = evaluate(&model, &data.valid, 10.0).unwrap();
    assert!(valid.expected_dal < 1.5, "expected DAL {}", valid.expected_dal);
}
