//! Parameter layout and graph construction for the encoder–decoder.
//!
//! Recurrent layers use a minimal gated unit:
//!
//! ```text
//! f  = σ(W_f [x; h] + b_f)
//! h̃  = tanh(W_c [x; f ⊙ h] + b_c)
//! h' = h + f ⊙ (h̃ − h)
//! ```
//!
//! The decoder query for step `i` is computed from the previous token and
//! the previous context only, so it can be formed before the head moves.

use super::params::{uniform_init, Params};
use super::ModelConfig;
use crate::attention::{EnergyVars, MonotonicScale};
use crate::error::{Error, Result};
use crate::numerics::{Graph, SeededRng, Tensor, Var};

#[derive(Clone, Copy, Debug)]
pub(crate) struct CellIdx {
    wf: usize,
    bf: usize,
    wc: usize,
    bc: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct EnergyIdx {
    query: usize,
    key: usize,
    bias: usize,
    v: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    src_embed: usize,
    tgt_embed: usize,
    encoder: Vec<CellIdx>,
    decoder: Vec<CellIdx>,
    soft: EnergyIdx,
    mono: EnergyIdx,
    gain: usize,
    offset: usize,
    out_w: usize,
    out_b: usize,
}

fn add_cell(p: &mut Params, rng: &mut SeededRng, name: &str, input: usize, hidden: usize) -> CellIdx {
    let fan = input + hidden;
    CellIdx {
        wf: p.push(format!("{name}.wf"), uniform_init(rng, &[hidden, fan], fan)),
        // open forget gates so early training propagates state
        bf: p.push(format!("{name}.bf"), Tensor::vector(vec![1.0; hidden])),
        wc: p.push(format!("{name}.wc"), uniform_init(rng, &[hidden, fan], fan)),
        bc: p.push(format!("{name}.bc"), Tensor::zeros(&[hidden])),
    }
}

fn add_energy(p: &mut Params, rng: &mut SeededRng, name: &str, cfg: &ModelConfig) -> EnergyIdx {
    let (a, h) = (cfg.attention_dim, cfg.hidden_dim);
    EnergyIdx {
        query: p.push(format!("{name}.query"), uniform_init(rng, &[a, h], h)),
        key: p.push(format!("{name}.key"), uniform_init(rng, &[a, h], h)),
        bias: p.push(format!("{name}.bias"), Tensor::zeros(&[a])),
        v: p.push(format!("{name}.v"), uniform_init(rng, &[a], a)),
    }
}

/// Fresh parameters and their layout. Every attention kind allocates the
/// same set, so parameter counts and initial values do not depend on it.
pub(crate) fn init(cfg: &ModelConfig, seed: u64) -> (Params, Layout) {
    let mut rng = SeededRng::new(seed);
    let mut p = Params::new();
    let (v, e, h) = (cfg.vocab_size, cfg.embed_dim, cfg.hidden_dim);
    let src_embed = p.push("src_embed", uniform_init(&mut rng, &[v, e], 1));
    let tgt_embed = p.push("tgt_embed", uniform_init(&mut rng, &[v, e], 1));
    let encoder = (0..cfg.encoder_layers)
        .map(|l| add_cell(&mut p, &mut rng, &format!("enc{l}"), if l == 0 { e } else { h }, h))
        .collect();
    let decoder = (0..cfg.decoder_layers)
        .map(|l| add_cell(&mut p, &mut rng, &format!("dec{l}"), if l == 0 { e + h } else { h }, h))
        .collect();
    let soft = add_energy(&mut p, &mut rng, "soft", cfg);
    let mono = add_energy(&mut p, &mut rng, "mono", cfg);
    let gain = p.push("mono.gain", Tensor::vector(vec![1.0]));
    let offset = p.push("mono.offset", Tensor::vector(vec![cfg.attention.energy_offset]));
    let out_w = p.push("out.w", uniform_init(&mut rng, &[v, 2 * h], 2 * h));
    let out_b = p.push("out.b", Tensor::zeros(&[v]));
    let layout = Layout {
        src_embed,
        tgt_embed,
        encoder,
        decoder,
        soft,
        mono,
        gain,
        offset,
        out_w,
        out_b,
    };
    (p, layout)
}

/// Checks that `params` has exactly the names and shapes `cfg` implies.
pub(crate) fn check_shapes(cfg: &ModelConfig, params: &Params) -> Result<Layout> {
    let (fresh, layout) = init(cfg, 0);
    if fresh.len() != params.len() {
        return Err(Error::invalid(format!(
            "expected {} parameter tensors, found {}",
            fresh.len(),
            params.len()
        )));
    }
    for ((n1, t1), (n2, t2)) in fresh.iter().zip(params.iter()) {
        if n1 != n2 || t1.shape() != t2.shape() {
            return Err(Error::invalid(format!(
                "parameter mismatch: expected {n1} {:?}, found {n2} {:?}",
                t1.shape(),
                t2.shape()
            )));
        }
    }
    Ok(layout)
}

#[derive(Clone, Copy)]
struct Cell {
    wf: Var,
    bf: Var,
    wc: Var,
    bc: Var,
}

/// Parameters loaded into one graph.
pub(crate) struct Net {
    pub vars: Vec<Var>,
    src_embed: Var,
    tgt_embed: Var,
    encoder: Vec<Cell>,
    decoder: Vec<Cell>,
    pub soft: EnergyVars,
    pub mono: EnergyVars,
    pub scale: MonotonicScale,
    out_w: Var,
    out_b: Var,
    hidden: usize,
    vocab: usize,
}

impl Net {
    /// Loads `params` as leaves when `trainable`, otherwise as constants.
    pub fn load(g: &mut Graph, params: &Params, layout: &Layout, trainable: bool) -> Net {
        let vars: Vec<Var> = params
            .tensors()
            .iter()
            .map(|t| if trainable { g.leaf(t.clone()) } else { g.constant(t.clone()) })
            .collect();
        let cell = |c: &CellIdx| Cell {
            wf: vars[c.wf],
            bf: vars[c.bf],
            wc: vars[c.wc],
            bc: vars[c.bc],
        };
        let energy = |e: &EnergyIdx| EnergyVars {
            query: vars[e.query],
            key: vars[e.key],
            bias: vars[e.bias],
            v: vars[e.v],
        };
        let out_w = params.tensor(layout.out_w);
        Net {
            src_embed: vars[layout.src_embed],
            tgt_embed: vars[layout.tgt_embed],
            encoder: layout.encoder.iter().map(cell).collect(),
            decoder: layout.decoder.iter().map(cell).collect(),
            soft: energy(&layout.soft),
            mono: energy(&layout.mono),
            scale: MonotonicScale {
                gain: vars[layout.gain],
                offset: vars[layout.offset],
            },
            out_w: vars[layout.out_w],
            out_b: vars[layout.out_b],
            hidden: out_w.cols() / 2,
            vocab: out_w.rows(),
            vars,
        }
    }

    fn cell_step(g: &mut Graph, c: Cell, x: Var, h: Var) -> Result<Var> {
        let xh = g.concat(&[x, h])?;
        let f = g.matvec(c.wf, xh)?;
        let f = g.add(f, c.bf)?;
        let f = g.sigmoid(f);
        let fh = g.mul(f, h)?;
        let xfh = g.concat(&[x, fh])?;
        let cand = g.matvec(c.wc, xfh)?;
        let cand = g.add(cand, c.bc)?;
        let cand = g.tanh(cand);
        let delta = g.sub(cand, h)?;
        let delta = g.mul(f, delta)?;
        g.add(h, delta)
    }

    fn stack_step(g: &mut Graph, cells: &[Cell], state: &mut [Var], mut x: Var) -> Result<Var> {
        for (c, h) in cells.iter().zip(state.iter_mut()) {
            *h = Self::cell_step(g, *c, x, *h)?;
            x = *h;
        }
        Ok(x)
    }

    fn embed(&self, g: &mut Graph, table: Var, token: u32) -> Result<Var> {
        if token as usize >= self.vocab {
            return Err(Error::invalid(format!(
                "token id {token} outside vocabulary of {}",
                self.vocab
            )));
        }
        g.row(table, token as usize)
    }

    /// Zero state for each encoder layer.
    pub fn encoder_start(&self, g: &mut Graph) -> Vec<Var> {
        (0..self.encoder.len()).map(|_| g.constant_vector(vec![0.0; self.hidden])).collect()
    }

    pub fn decoder_start(&self, g: &mut Graph) -> Vec<Var> {
        (0..self.decoder.len()).map(|_| g.constant_vector(vec![0.0; self.hidden])).collect()
    }

    pub fn zero_context(&self, g: &mut Graph) -> Var {
        g.constant_vector(vec![0.0; self.hidden])
    }

    /// Consumes one source token; returns the top-layer state.
    pub fn encoder_step(&self, g: &mut Graph, state: &mut [Var], token: u32) -> Result<Var> {
        let x = self.embed(g, self.src_embed, token)?;
        Self::stack_step(g, &self.encoder, state, x)
    }

    /// Query for the next output step from the previous token and context.
    pub fn decoder_step(&self, g: &mut Graph, state: &mut [Var], prev_token: u32, prev_context: Var) -> Result<Var> {
        let x = self.embed(g, self.tgt_embed, prev_token)?;
        let x = g.concat(&[x, prev_context])?;
        Self::stack_step(g, &self.decoder, state, x)
    }

    pub fn log_probs(&self, g: &mut Graph, query: Var, context: Var) -> Result<Var> {
        let qc = g.concat(&[query, context])?;
        let logits = g.matvec(self.out_w, qc)?;
        let logits = g.add(logits, self.out_b)?;
        Ok(g.log_softmax(logits))
    }
}
