//! Desk-scale streaming encoder–decoder.
//!
//! A unidirectional recurrent encoder feeds a recurrent decoder through any
//! [`AttentionKind`]. Training runs attention in expectation and adds the
//! DAL of the expected delays to the label-smoothed NLL; inference drives
//! a hard head over a source that is read one token at a time.

mod checkpoint;
mod decode;
mod network;
mod params;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use decode::{
    default_max_len, greedy_simultaneous_decode, sequence_accuracy, wait_k_decode, Accuracy, DecodeOutput,
    DecoderStep,
};
pub use params::{Adam, Params};
pub use train::{
    evaluate, train, train_step, EvalSummary, LogEntry, StepOutput, TrainConfig, TrainReport,
};

use crate::attention::{AttentionConfig, AttentionKind};
use crate::error::{Error, Result};
use crate::numerics::Graph;
use network::{Layout, Net};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Width of the additive energy hidden layer.
    pub attention_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub attention: AttentionConfig,
    pub label_smoothing: f64,
}

impl ModelConfig {
    /// Default sizes for a vocabulary of `vocab_size` ids.
    pub fn new(vocab_size: usize, attention: AttentionConfig) -> Self {
        ModelConfig {
            vocab_size,
            embed_dim: 16,
            hidden_dim: 32,
            attention_dim: 16,
            encoder_layers: 1,
            decoder_layers: 1,
            attention,
            label_smoothing: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("attention_dim", self.attention_dim),
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, d)| *d == 0) {
            return Err(Error::invalid(format!("model: {name} must be >= 1")));
        }
        if self.vocab_size <= crate::data::RESERVED.len() {
            return Err(Error::invalid(format!(
                "model: vocab_size {} leaves no room beyond the reserved ids",
                self.vocab_size
            )));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::invalid(format!(
                "model: label_smoothing {} outside [0, 1)",
                self.label_smoothing
            )));
        }
        self.attention.validate()
    }
}

/// Model configuration plus parameters.
#[derive(Clone, Debug)]
pub struct Seq2Seq {
    config: ModelConfig,
    params: Params,
    layout: Layout,
}

impl Seq2Seq {
    /// Fresh model with parameters drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (params, layout) = network::init(&config, seed);
        Ok(Seq2Seq {
            config,
            params,
            layout,
        })
    }

    pub fn from_params(config: ModelConfig, params: Params) -> Result<Self> {
        config.validate()?;
        let layout = network::check_shapes(&config, &params)?;
        Ok(Seq2Seq {
            config,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn set_params(&mut self, params: Params) -> Result<()> {
        network::check_shapes(&self.config, &params)?;
        self.params = params;
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    pub fn kind(&self) -> AttentionKind {
        self.config.attention.kind
    }

    /// Same parameters under a different attention configuration. All
    /// kinds share one layout, so this never fails on shapes.
    pub fn with_attention(&self, attention: AttentionConfig) -> Result<Self> {
        let config = ModelConfig {
            attention,
            ..self.config
        };
        Seq2Seq::from_params(config, self.params.clone())
    }

    pub(crate) fn load(&self, g: &mut Graph, trainable: bool) -> Net {
        Net::load(g, &self.params, &self.layout, trainable)
    }

    /// Encoder states `h_1..h_upto` for the first `upto` tokens.
    pub fn encode_prefix(&self, tokens: &[u32], upto: usize) -> Result<Vec<Vec<f64>>> {
        if upto > tokens.len() {
            return Err(Error::invalid(format!(
                "encode_prefix: upto {upto} beyond {} tokens",
                tokens.len()
            )));
        }
        let mut g = Graph::new();
        let net = self.load(&mut g, false);
        let mut state = net.encoder_start(&mut g);
        tokens[..upto]
            .iter()
            .map(|&t| {
                let h = net.encoder_step(&mut g, &mut state, t)?;
                Ok(g.data(h).to_vec())
            })
            .collect()
    }
}
