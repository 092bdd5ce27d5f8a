//! Plain-text checkpoints.
//!
//! ```text
//! MILKSTREAM-CKPT-1
//! config <key>=<value> ...
//! vocab <count>
//! <one token per line, reserved ids omitted>
//! tensors <count>
//! tensor <name> <dim> ...
//! <values>
//! ```
//!
//! Values use the shortest decimal form that parses back to the same bits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::params::Params;
use super::{ModelConfig, Seq2Seq};
use crate::attention::{AttentionConfig, AttentionKind, WaitKSchedule};
use crate::data::{Vocabulary, RESERVED};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &str = "MILKSTREAM-CKPT-1";

fn config_line(c: &ModelConfig) -> String {
    let a = &c.attention;
    let (chunk, k, rate) = match a.kind {
        AttentionKind::Mocha { chunk_size } => (chunk_size, 0, 0.0),
        AttentionKind::WaitK(s) => (0, s.k, s.emission_rate),
        _ => (0, 0, 0.0),
    };
    format!(
        "config vocab_size={} embed_dim={} hidden_dim={} attention_dim={} encoder_layers={} \
         decoder_layers={} label_smoothing={:?} attention={} chunk_size={chunk} k={k} emission_rate={rate:?} \
         noise={:?} energy_offset={:?} eps={:?} preserve_mass={}",
        c.vocab_size,
        c.embed_dim,
        c.hidden_dim,
        c.attention_dim,
        c.encoder_layers,
        c.decoder_layers,
        c.label_smoothing,
        a.kind.name(),
        a.noise,
        a.energy_offset,
        a.eps,
        a.preserve_mass
    )
}

/// Serializes the model and its vocabulary.
pub fn write_checkpoint(model: &Seq2Seq, vocab: &Vocabulary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{CHECKPOINT_MAGIC}");
    let _ = writeln!(s, "{}", config_line(model.config()));
    let _ = writeln!(s, "vocab {}", vocab.len() - RESERVED.len());
    s.push_str(&vocab.to_text());
    let params = model.params();
    let _ = writeln!(s, "tensors {}", params.len());
    for (name, t) in params.iter() {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "tensor {name} {}", dims.join(" "));
        let values: Vec<String> = t.data().iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(s, "{}", values.join(" "));
    }
    s
}

struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(self.err(format!("unexpected end of file, expected {what}"))),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::format(self.path, self.line + usize::from(self.line == 0), msg)
    }

    fn header(&mut self, key: &str) -> Result<usize> {
        let l = self.next(key)?;
        l.strip_prefix(key)
            .and_then(|r| r.trim().parse().ok())
            .ok_or_else(|| self.err(format!("expected '{key} <count>'")))
    }
}

fn parse_config(lines: &Lines<'_>, text: &str) -> Result<ModelConfig> {
    let body = text
        .strip_prefix("config ")
        .ok_or_else(|| lines.err("expected config line"))?;
    let mut kv = BTreeMap::new();
    for item in body.split_whitespace() {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| lines.err(format!("malformed config entry '{item}'")))?;
        kv.insert(k, v);
    }
    fn get<T: std::str::FromStr>(lines: &Lines<'_>, kv: &BTreeMap<&str, &str>, key: &str) -> Result<T> {
        kv.get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| lines.err(format!("missing or invalid config key '{key}'")))
    }
    let kind = match get::<String>(lines, &kv, "attention")?.as_str() {
        "mocha" => AttentionKind::Mocha {
            chunk_size: get(lines, &kv, "chunk_size")?,
        },
        "wait_k" => AttentionKind::WaitK(WaitKSchedule {
            k: get(lines, &kv, "k")?,
            emission_rate: get(lines, &kv, "emission_rate")?,
        }),
        other => other.parse().map_err(|_| lines.err(format!("unknown attention kind '{other}'")))?,
    };
    Ok(ModelConfig {
        vocab_size: get(lines, &kv, "vocab_size")?,
        embed_dim: get(lines, &kv, "embed_dim")?,
        hidden_dim: get(lines, &kv, "hidden_dim")?,
        attention_dim: get(lines, &kv, "attention_dim")?,
        encoder_layers: get(lines, &kv, "encoder_layers")?,
        decoder_layers: get(lines, &kv, "decoder_layers")?,
        label_smoothing: get(lines, &kv, "label_smoothing")?,
        attention: AttentionConfig {
            kind,
            noise: get(lines, &kv, "noise")?,
            energy_offset: get(lines, &kv, "energy_offset")?,
            eps: get(lines, &kv, "eps")?,
            preserve_mass: get(lines, &kv, "preserve_mass")?,
        },
    })
}

/// Parses [`write_checkpoint`] output; `path` is only used in errors.
pub fn read_checkpoint(text: &str, path: &Path) -> Result<(Seq2Seq, Vocabulary)> {
    let mut lines = Lines {
        path,
        inner: text.lines().enumerate(),
        line: 0,
    };
    let magic = lines.next("magic string").map_err(|_| Error::Version("empty checkpoint".into()))?;
    if magic.trim() != CHECKPOINT_MAGIC {
        return Err(Error::Version(format!(
            "{}: expected '{CHECKPOINT_MAGIC}', found '{}'",
            path.display(),
            magic.chars().take(40).collect::<String>()
        )));
    }
    let config_text = lines.next("config")?;
    let config = parse_config(&lines, config_text)?;
    let n = lines.header("vocab")?;
    let mut tokens = Vec::with_capacity(n);
    for _ in 0..n {
        tokens.push(lines.next("vocabulary token")?.to_string());
    }
    let vocab = Vocabulary::new(tokens).map_err(|e| lines.err(e.to_string()))?;
    let count = lines.header("tensors")?;
    let mut params = Params::new();
    for _ in 0..count {
        let head = lines.next("tensor header")?;
        let mut parts = head.split_whitespace();
        if parts.next() != Some("tensor") {
            return Err(lines.err("expected 'tensor <name> <dims>'"));
        }
        let name = parts.next().ok_or_else(|| lines.err("tensor without a name"))?.to_string();
        let shape = parts
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| lines.err(format!("bad shape for tensor {name}")))?;
        let values = lines
            .next("tensor values")?
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| lines.err(format!("bad value in tensor {name}")))?;
        let t = Tensor::new(values, shape).map_err(|e| lines.err(format!("tensor {name}: {e}")))?;
        params.push(name, t);
    }
    if vocab.len() != config.vocab_size {
        return Err(lines.err(format!(
            "vocabulary has {} ids but the model expects {}",
            vocab.len(),
            config.vocab_size
        )));
    }
    let model = Seq2Seq::from_params(config, params).map_err(|e| lines.err(e.to_string()))?;
    Ok((model, vocab))
}

pub fn save_checkpoint(path: &Path, model: &Seq2Seq, vocab: &Vocabulary) -> Result<()> {
    fs::write(path, write_checkpoint(model, vocab)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Seq2Seq, Vocabulary)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&text, path)
}
