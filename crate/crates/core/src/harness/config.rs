//! Flat `key = value` run configuration with `[section]` headers.
//!
//! Every key is addressed as `section.key`, both in files and in command
//! line overrides, and [`RunConfig::to_text`] writes back every key.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::attention::{AttentionConfig, AttentionKind, WaitKSchedule};
use crate::data::TaskSpec;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TrainConfig};

/// λ grid of the latency-weight sweep.
pub const DEFAULT_LAMBDAS: [f64; 9] = [0.75, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.01, 0.0];
/// Wait-k grid; 300 is the full-attention sentinel.
pub const DEFAULT_KS: [usize; 9] = [1, 2, 3, 4, 6, 8, 10, 12, 300];
pub const DEFAULT_CHUNK_SIZES: [usize; 5] = [1, 2, 4, 8, 16];

/// Line-aligned corpus files used instead of a synthetic task.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusFiles {
    pub vocab: PathBuf,
    pub train: (PathBuf, PathBuf),
    pub valid: (PathBuf, PathBuf),
    pub test: (PathBuf, PathBuf),
}

/// Model hyperparameters without the vocabulary size, which comes from the
/// data.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSettings {
    pub attention: String,
    pub chunk_size: usize,
    pub k: usize,
    pub emission_rate: f64,
    pub noise: f64,
    pub energy_offset: f64,
    pub eps: f64,
    pub preserve_mass: bool,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub label_smoothing: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let a = AttentionConfig::default();
        let m = ModelConfig::new(1, a);
        ModelSettings {
            attention: a.kind.name().into(),
            chunk_size: 2,
            k: 3,
            emission_rate: 1.0,
            noise: a.noise,
            energy_offset: a.energy_offset,
            eps: a.eps,
            preserve_mass: a.preserve_mass,
            embed_dim: m.embed_dim,
            hidden_dim: m.hidden_dim,
            attention_dim: m.attention_dim,
            encoder_layers: m.encoder_layers,
            decoder_layers: m.decoder_layers,
            label_smoothing: m.label_smoothing,
        }
    }
}

impl ModelSettings {
    /// The configured kind with its chunk size or schedule filled in.
    pub fn kind(&self) -> Result<AttentionKind> {
        Ok(match self.attention.parse::<AttentionKind>()? {
            AttentionKind::Mocha { .. } => AttentionKind::Mocha {
                chunk_size: self.chunk_size,
            },
            AttentionKind::WaitK(_) => AttentionKind::WaitK(WaitKSchedule::new(self.k, self.emission_rate)?),
            other => other,
        })
    }

    pub fn model_config(&self, vocab_size: usize, kind: AttentionKind) -> Result<ModelConfig> {
        let c = ModelConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            attention_dim: self.attention_dim,
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            label_smoothing: self.label_smoothing,
            attention: AttentionConfig {
                kind,
                noise: self.noise,
                energy_offset: self.energy_offset,
                eps: self.eps,
                preserve_mass: self.preserve_mass,
            },
        };
        c.validate()?;
        Ok(c)
    }
}

/// Grids of a latency–quality sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSettings {
    /// Attention kinds to sweep: `milk` and `monotonic` over λ, `wait_k`
    /// over k, `mocha` over chunk sizes, `soft` once.
    pub methods: Vec<String>,
    pub lambdas: Vec<f64>,
    pub ks: Vec<usize>,
    pub chunk_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            methods: vec!["milk".into(), "wait_k".into()],
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            ks: DEFAULT_KS.to_vec(),
            chunk_sizes: DEFAULT_CHUNK_SIZES.to_vec(),
            seeds: vec![1],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: TaskSpec,
    pub train_size: usize,
    pub valid_size: usize,
    pub test_size: usize,
    /// Used instead of `task` when set.
    pub corpus: Option<CorpusFiles>,
    pub model: ModelSettings,
    pub train: TrainConfig,
    /// Steps of soft-attention training that every streaming model starts
    /// from; 0 trains streaming models from their own initialisation.
    pub warm_start_steps: usize,
    pub sweep: SweepSettings,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: TaskSpec::default(),
            train_size: 10_000,
            valid_size: 200,
            test_size: 1_000,
            corpus: None,
            model: ModelSettings::default(),
            train: TrainConfig::default(),
            warm_start_steps: 3000,
            sweep: SweepSettings::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("config: invalid value '{value}' for {key}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn path_text(p: &Path) -> String {
    p.display().to_string()
}

impl RunConfig {
    /// Parses a config file body on top of the defaults.
    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(path, n + 1, format!("expected key = value, found '{line}'")))?;
            let full = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            cfg.set(&full, value.trim()).map_err(|e| Error::format(path, n + 1, e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_text(&text, path)
    }

    fn corpus_mut(&mut self) -> &mut CorpusFiles {
        self.corpus.get_or_insert_with(CorpusFiles::default)
    }

    /// Sets one `section.key`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "task.kind" => self.task.kind = parse(key, v)?,
            "task.vocab_size" => self.task.vocab_size = parse(key, v)?,
            "task.min_len" => self.task.min_len = parse(key, v)?,
            "task.max_len" => self.task.max_len = parse(key, v)?,
            "task.lookahead_fraction" => self.task.lookahead_fraction = parse(key, v)?,
            "task.seed" => self.task.seed = parse(key, v)?,
            "task.train_size" => self.train_size = parse(key, v)?,
            "task.valid_size" => self.valid_size = parse(key, v)?,
            "task.test_size" => self.test_size = parse(key, v)?,
            "corpus.vocab" => self.corpus_mut().vocab = v.into(),
            "corpus.train_source" => self.corpus_mut().train.0 = v.into(),
            "corpus.train_target" => self.corpus_mut().train.1 = v.into(),
            "corpus.valid_source" => self.corpus_mut().valid.0 = v.into(),
            "corpus.valid_target" => self.corpus_mut().valid.1 = v.into(),
            "corpus.test_source" => self.corpus_mut().test.0 = v.into(),
            "corpus.test_target" => self.corpus_mut().test.1 = v.into(),
            "model.attention" => {
                v.parse::<AttentionKind>()?;
                self.model.attention = v.to_ascii_lowercase().replace('-', "_");
            }
            "model.chunk_size" => self.model.chunk_size = parse(key, v)?,
            "model.k" => self.model.k = parse(key, v)?,
            "model.emission_rate" => self.model.emission_rate = parse(key, v)?,
            "model.noise" => self.model.noise = parse(key, v)?,
            "model.energy_offset" => self.model.energy_offset = parse(key, v)?,
            "model.eps" => self.model.eps = parse(key, v)?,
            "model.preserve_mass" => self.model.preserve_mass = parse(key, v)?,
            "model.embed_dim" => self.model.embed_dim = parse(key, v)?,
            "model.hidden_dim" => self.model.hidden_dim = parse(key, v)?,
            "model.attention_dim" => self.model.attention_dim = parse(key, v)?,
            "model.encoder_layers" => self.model.encoder_layers = parse(key, v)?,
            "model.decoder_layers" => self.model.decoder_layers = parse(key, v)?,
            "model.label_smoothing" => self.model.label_smoothing = parse(key, v)?,
            "train.steps" => self.train.steps = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.learning_rate" => self.train.learning_rate = parse(key, v)?,
            "train.clip_norm" => self.train.clip_norm = parse(key, v)?,
            "train.latency_weight" => self.train.lambda = parse(key, v)?,
            "train.eval_interval" => self.train.eval_interval = parse(key, v)?,
            "train.seed" => self.train.seed = parse(key, v)?,
            "train.warm_start_steps" => self.warm_start_steps = parse(key, v)?,
            "sweep.methods" => {
                let methods: Vec<String> = parse_list(key, v)?;
                for m in &methods {
                    m.parse::<AttentionKind>()?;
                }
                self.sweep.methods = methods;
            }
            "sweep.lambdas" => self.sweep.lambdas = parse_list(key, v)?,
            "sweep.ks" => self.sweep.ks = parse_list(key, v)?,
            "sweep.chunk_sizes" => self.sweep.chunk_sizes = parse_list(key, v)?,
            "sweep.seeds" => self.sweep.seeds = parse_list(key, v)?,
            "output.dir" => self.out_dir = v.into(),
            other => return Err(Error::invalid(format!("config: unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Checks every setting that can be checked without loading data.
    pub fn validate(&self) -> Result<()> {
        if self.corpus.is_none() {
            self.task.validate()?;
            if self.train_size == 0 || self.test_size == 0 {
                return Err(Error::invalid("config: train_size and test_size must be >= 1"));
            }
        }
        let kind = self.model.kind()?;
        self.model.model_config(crate::data::RESERVED.len() + 1, kind)?;
        self.train.validate()?;
        if self.sweep.seeds.is_empty() {
            return Err(Error::invalid("config: sweep.seeds is empty"));
        }
        if let Some(l) = self.sweep.lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(Error::invalid(format!("config: latency weight {l} must be >= 0")));
        }
        if self.sweep.ks.contains(&0) || self.sweep.chunk_sizes.contains(&0) {
            return Err(Error::invalid("config: k and chunk sizes must be >= 1"));
        }
        Ok(())
    }

    /// Every setting, in the file format accepted by [`RunConfig::from_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let t = &self.task;
        let _ = writeln!(s, "[task]");
        let _ = writeln!(s, "kind = {}", t.kind);
        let _ = writeln!(s, "vocab_size = {}", t.vocab_size);
        let _ = writeln!(s, "min_len = {}", t.min_len);
        let _ = writeln!(s, "max_len = {}", t.max_len);
        let _ = writeln!(s, "lookahead_fraction = {:?}", t.lookahead_fraction);
        let _ = writeln!(s, "seed = {}", t.seed);
        let _ = writeln!(s, "train_size = {}", self.train_size);
        let _ = writeln!(s, "valid_size = {}", self.valid_size);
        let _ = writeln!(s, "test_size = {}", self.test_size);
        if let Some(c) = &self.corpus {
            let _ = writeln!(s, "\n[corpus]");
            let _ = writeln!(s, "vocab = {}", path_text(&c.vocab));
            for (name, (src, tgt)) in [("train", &c.train), ("valid", &c.valid), ("test", &c.test)] {
                let _ = writeln!(s, "{name}_source = {}", path_text(src));
                let _ = writeln!(s, "{name}_target = {}", path_text(tgt));
            }
        }
        let m = &self.model;
        let _ = writeln!(s, "\n[model]");
        let _ = writeln!(s, "attention = {}", m.attention);
        let _ = writeln!(s, "chunk_size = {}", m.chunk_size);
        let _ = writeln!(s, "k = {}", m.k);
        let _ = writeln!(s, "emission_rate = {:?}", m.emission_rate);
        let _ = writeln!(s, "noise = {:?}", m.noise);
        let _ = writeln!(s, "energy_offset = {:?}", m.energy_offset);
        let _ = writeln!(s, "eps = {:?}", m.eps);
        let _ = writeln!(s, "preserve_mass = {}", m.preserve_mass);
        let _ = writeln!(s, "embed_dim = {}", m.embed_dim);
        let _ = writeln!(s, "hidden_dim = {}", m.hidden_dim);
        let _ = writeln!(s, "attention_dim = {}", m.attention_dim);
        let _ = writeln!(s, "encoder_layers = {}", m.encoder_layers);
        let _ = writeln!(s, "decoder_layers = {}", m.decoder_layers);
        let _ = writeln!(s, "label_smoothing = {:?}", m.label_smoothing);
        let r = &self.train;
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "steps = {}", r.steps);
        let _ = writeln!(s, "batch_size = {}", r.batch_size);
        let _ = writeln!(s, "learning_rate = {:?}", r.learning_rate);
        let _ = writeln!(s, "clip_norm = {:?}", r.clip_norm);
        let _ = writeln!(s, "latency_weight = {:?}", r.lambda);
        let _ = writeln!(s, "eval_interval = {}", r.eval_interval);
        let _ = writeln!(s, "seed = {}", r.seed);
        let _ = writeln!(s, "warm_start_steps = {}", self.warm_start_steps);
        let w = &self.sweep;
        let _ = writeln!(s, "\n[sweep]");
        let _ = writeln!(s, "methods = {}", w.methods.join(","));
        let lambdas: Vec<String> = w.lambdas.iter().map(|l| format!("{l:?}")).collect();
        let _ = writeln!(s, "lambdas = {}", lambdas.join(","));
        let _ = writeln!(s, "ks = {}", join(&w.ks));
        let _ = writeln!(s, "chunk_sizes = {}", join(&w.chunk_sizes));
        let _ = writeln!(s, "seeds = {}", join(&w.seeds));
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "dir = {}", path_text(&self.out_dir));
        s
    }
}
