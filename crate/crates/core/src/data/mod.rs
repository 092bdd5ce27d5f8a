//! Vocabularies, synthetic tasks, corpus loading and batching.

mod tasks;
mod vocab;

pub use tasks::{generate_pair, generate_split, symbol, TaskKind, TaskSpec, EARLY_MARKER, LATE_MARKER};
pub use vocab::{Vocabulary, BOS, EOS, PAD, RESERVED, UNK};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Source and target ids, each ending with EOS.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Vec<u32>,
    pub target: Vec<u32>,
}

/// Reads two line-aligned, whitespace-tokenized files.
pub fn load_parallel_corpus(src_path: &Path, tgt_path: &Path, vocab: &Vocabulary) -> Result<Vec<SentencePair>> {
    let src = fs::read_to_string(src_path).map_err(|e| Error::io(src_path, e))?;
    let tgt = fs::read_to_string(tgt_path).map_err(|e| Error::io(tgt_path, e))?;
    let (src, tgt): (Vec<&str>, Vec<&str>) = (src.lines().collect(), tgt.lines().collect());
    if src.len() != tgt.len() {
        let (path, line) = if src.len() < tgt.len() {
            (tgt_path, src.len() + 1)
        } else {
            (src_path, tgt.len() + 1)
        };
        return Err(Error::format(
            path,
            line,
            format!("line counts differ: {} source vs {} target", src.len(), tgt.len()),
        ));
    }
    Ok(src
        .iter()
        .zip(&tgt)
        .map(|(s, t)| SentencePair {
            source: vocab.encode_line(s),
            target: vocab.encode_line(t),
        })
        .collect())
}

/// Sentence pairs padded to a common length within the batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub source: Vec<Vec<u32>>,
    pub target: Vec<Vec<u32>>,
    pub source_lens: Vec<usize>,
    pub target_lens: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    /// Unpadded pair `i`.
    pub fn pair(&self, i: usize) -> (&[u32], &[u32]) {
        (
            &self.source[i][..self.source_lens[i]],
            &self.target[i][..self.target_lens[i]],
        )
    }

    /// `true` at real (non-PAD) source positions of sentence `i`.
    pub fn source_mask(&self, i: usize) -> Vec<bool> {
        (0..self.source[i].len()).map(|j| j < self.source_lens[i]).collect()
    }

    pub fn target_mask(&self, i: usize) -> Vec<bool> {
        (0..self.target[i].len()).map(|j| j < self.target_lens[i]).collect()
    }
}

fn pad(rows: &[&[u32]]) -> (Vec<Vec<u32>>, Vec<usize>) {
    let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let padded = rows
        .iter()
        .map(|r| {
            let mut v = r.to_vec();
            v.resize(width, PAD);
            v
        })
        .collect();
    (padded, rows.iter().map(|r| r.len()).collect())
}

/// Shuffles `pairs` with `seed` and cuts them into batches of `batch_size`
/// (the last may be smaller).
pub fn make_batches(pairs: &[SentencePair], batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::invalid("make_batches: batch size must be >= 1"));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    SeededRng::new(seed).shuffle(&mut order);
    Ok(order
        .chunks(batch_size)
        .map(|idx| {
            let src: Vec<&[u32]> = idx.iter().map(|&i| pairs[i].source.as_slice()).collect();
            let tgt: Vec<&[u32]> = idx.iter().map(|&i| pairs[i].target.as_slice()).collect();
            let (source, source_lens) = pad(&src);
            let (target, target_lens) = pad(&tgt);
            Batch {
                source,
                target,
                source_lens,
                target_lens,
            }
        })
        .collect())
}
