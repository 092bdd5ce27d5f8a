//! Fixtures shared by the benchmarks.

use milkstream::attention::{AttentionConfig, AttentionKind};
use milkstream::data::{generate_split, make_batches, Batch, SentencePair, TaskSpec};
use milkstream::model::{ModelConfig, Seq2Seq};
use milkstream::numerics::SeededRng;

/// Selection probabilities, previous alignment and energies for one row.
pub fn attention_row(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = SeededRng::new(seed);
    let p = (0..n).map(|_| rng.uniform_range(0.05, 0.95)).collect();
    let raw: Vec<f64> = (0..n).map(|_| 0.01 + rng.uniform()).collect();
    let total: f64 = raw.iter().sum();
    let prev = raw.iter().map(|a| a / total).collect();
    let u = (0..n).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
    (p, prev, u)
}

/// Sorted delays for a source of `n` tokens and a target of `n` tokens.
pub fn delays(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = SeededRng::new(seed);
    let mut g: Vec<f64> = (0..n).map(|_| 1.0 + rng.below(n as u64) as f64).collect();
    g.sort_by(f64::total_cmp);
    g
}

/// Default-size model on the default synthetic task.
pub fn model(kind: AttentionKind) -> Seq2Seq {
    let spec = TaskSpec::default();
    let attention = AttentionConfig {
        kind,
        ..AttentionConfig::default()
    };
    Seq2Seq::new(ModelConfig::new(spec.vocabulary().len(), attention), 1).expect("valid config")
}

pub fn pairs(count: usize) -> Vec<SentencePair> {
    generate_split(&TaskSpec::default(), 0, count).expect("valid task")
}

pub fn batch(size: usize) -> Batch {
    make_batches(&pairs(size), size, 0).expect("non-empty").remove(0)
}
