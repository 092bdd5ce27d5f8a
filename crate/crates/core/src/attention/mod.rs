//! Soft, monotonic, MoChA and MILk attention.
//!
//! Training uses the expectation path: stopping probabilities `p`, the
//! monotonic distribution `α` over head positions, and the induced output
//! distribution `β`. Inference uses a hard head that scans left to right
//! and stops at the first positive monotonic energy.
//!
//! Positions in the public API are 1-indexed, matching delays: a head at
//! position `t` has read `t` source tokens.

mod energy;
mod fused;
mod hard;
mod rows;

pub use energy::{monotonic_energy, soft_energy, EnergyParams, EnergyVars, MonotonicScale};
pub use hard::{hard_decode_step, HardHead, StreamingSource};
pub use rows::{
    alpha_row_var, expected_context_var, milk_beta_var, mocha_beta_var, preserve_mass_var,
};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::ops::{cumprod_kernel, cumsum_kernel};
use crate::numerics::{gaussian_noise, logistic, masked_softmax, SeededRng, Tensor, DIVIDE_EPS};

/// Tolerance on `Σα` when a distribution is required to be normalized.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Fixed read/write schedule: read `k` tokens, then alternate at
/// `emission_rate` reads per write.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaitKSchedule {
    pub k: usize,
    pub emission_rate: f64,
}

impl WaitKSchedule {
    pub fn new(k: usize, emission_rate: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("wait-k: k must be >= 1"));
        }
        if !(emission_rate > 0.0 && emission_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "wait-k: emission rate must be > 0, got {emission_rate}"
            )));
        }
        Ok(WaitKSchedule { k, emission_rate })
    }

    /// Source tokens read before the `i`-th write (1-indexed).
    ///
    /// After `w` writes the reader has consumed `k + ⌊w·rate⌋` tokens, so a
    /// rate of 1.1 takes one extra read every ten writes.
    pub fn reads_before_write(&self, i: usize, source_len: usize) -> usize {
        let written = i.saturating_sub(1) as f64;
        let extra = (written * self.emission_rate + 1e-9).floor() as usize;
        self.k.saturating_add(extra).min(source_len)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AttentionKind {
    Soft,
    Monotonic,
    Mocha { chunk_size: usize },
    Milk,
    WaitK(WaitKSchedule),
}

impl AttentionKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttentionKind::Soft => "soft",
            AttentionKind::Monotonic => "monotonic",
            AttentionKind::Mocha { .. } => "mocha",
            AttentionKind::Milk => "milk",
            AttentionKind::WaitK(_) => "wait_k",
        }
    }

    /// Whether reads are driven by a learned monotonic head.
    pub fn has_monotonic_head(&self) -> bool {
        matches!(
            self,
            AttentionKind::Monotonic | AttentionKind::Mocha { .. } | AttentionKind::Milk
        )
    }

    /// Whether the kind can run on a partially read source.
    pub fn is_streaming(&self) -> bool {
        !matches!(self, AttentionKind::Soft)
    }
}

impl fmt::Display for AttentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses a bare kind name. MoChA gets chunk size 2 and wait-k gets `k = 3`
/// at rate 1; callers override those afterwards.
impl FromStr for AttentionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "soft" => Ok(AttentionKind::Soft),
            "monotonic" => Ok(AttentionKind::Monotonic),
            "mocha" => Ok(AttentionKind::Mocha { chunk_size: 2 }),
            "milk" => Ok(AttentionKind::Milk),
            "wait_k" | "waitk" => Ok(AttentionKind::WaitK(WaitKSchedule { k: 3, emission_rate: 1.0 })),
            other => Err(Error::invalid(format!("unknown attention kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttentionConfig {
    pub kind: AttentionKind,
    /// Standard deviation of the pre-sigmoid noise used in training.
    pub noise: f64,
    /// Initial value of the monotonic energy offset `r`.
    pub energy_offset: f64,
    pub eps: f64,
    /// Move leftover monotonic mass onto the final (EOS) position.
    pub preserve_mass: bool,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            kind: AttentionKind::Milk,
            noise: 1.0,
            energy_offset: -4.0,
            eps: DIVIDE_EPS,
            preserve_mass: true,
        }
    }
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            AttentionKind::Mocha { chunk_size: 0 } => {
                return Err(Error::invalid("mocha: chunk size must be >= 1"));
            }
            AttentionKind::WaitK(s) => {
                WaitKSchedule::new(s.k, s.emission_rate)?;
            }
            _ => {}
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid(format!("noise must be >= 0, got {}", self.noise)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid(format!("eps must be > 0, got {}", self.eps)));
        }
        if !self.energy_offset.is_finite() {
            return Err(Error::invalid("energy offset must be finite"));
        }
        Ok(())
    }
}

/// Monotonic and soft energies for one sentence, `|y|×|x|` each. Padded
/// source positions hold `-∞`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyPair {
    monotonic: Tensor,
    soft: Tensor,
}

impl EnergyPair {
    pub fn new(monotonic: Tensor, soft: Tensor) -> Result<Self> {
        if monotonic.rank() != 2 || monotonic.shape() != soft.shape() {
            return Err(Error::invalid(format!(
                "energy pair: shapes {:?} and {:?}",
                monotonic.shape(),
                soft.shape()
            )));
        }
        let padded = |x: f64| x == f64::NEG_INFINITY;
        if monotonic
            .data()
            .iter()
            .zip(soft.data())
            .any(|(&a, &b)| padded(a) != padded(b))
        {
            return Err(Error::invalid("energy pair: padding masks differ"));
        }
        Ok(EnergyPair { monotonic, soft })
    }

    pub fn monotonic(&self) -> &Tensor {
        &self.monotonic
    }

    pub fn soft(&self) -> &Tensor {
        &self.soft
    }

    pub fn target_len(&self) -> usize {
        self.monotonic.rows()
    }

    pub fn source_len(&self) -> usize {
        self.monotonic.cols()
    }
}

/// Distributions for one output step.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRow {
    pub p: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub residual_mass: f64,
}

impl AttentionRow {
    /// Expected head position `Σ j·α_j`.
    pub fn expected_delay(&self) -> f64 {
        self.alpha.iter().enumerate().map(|(j, a)| (j + 1) as f64 * a).sum()
    }
}

fn check_same_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("{what}: length mismatch {a} vs {b}")));
    }
    Ok(())
}

fn check_normalized(what: &str, alpha: &[f64]) -> Result<()> {
    let total: f64 = alpha.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::invalid(format!("{what}: alpha sums to {total}, expected 1")));
    }
    Ok(())
}

/// `σ(e + N(0, n²))` in training mode, `σ(e)` otherwise.
pub fn selection_probabilities(
    energies: &[f64],
    noise: f64,
    rng: &mut SeededRng,
    training: bool,
) -> Result<Vec<f64>> {
    if !(noise >= 0.0) {
        return Err(Error::invalid(format!("noise must be >= 0, got {noise}")));
    }
    energies
        .iter()
        .map(|&e| {
            let z = if training { gaussian_noise(rng, noise)? } else { 0.0 };
            Ok(logistic(e + z))
        })
        .collect()
}

/// Monotonic attention for one output step in closed form:
/// `α = p · cp · cumsum(α_prev / cp)` with `cp` the exclusive cumulative
/// product of `1 − p` clamped into `[eps, 1]`.
pub fn monotonic_alpha_row(p: &[f64], alpha_prev: &[f64], eps: f64) -> Result<Vec<f64>> {
    check_same_len("monotonic_alpha_row", p.len(), alpha_prev.len())?;
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("monotonic_alpha_row: eps must be > 0, got {eps}")));
    }
    let prev_total: f64 = alpha_prev.iter().sum();
    if prev_total > 1.0 + NORMALIZATION_TOL {
        return Err(Error::invalid(format!(
            "monotonic_alpha_row: previous row sums to {prev_total}"
        )));
    }
    let keep: Vec<f64> = p.iter().map(|x| (1.0 - x).clamp(eps, 1.0)).collect();
    let cp = cumprod_kernel(&keep, true);
    let ratio: Vec<f64> = alpha_prev.iter().zip(&cp).map(|(a, c)| a / c.max(eps)).collect();
    let acc = cumsum_kernel(&ratio);
    Ok(p.iter()
        .zip(&cp)
        .zip(&acc)
        .map(|((p, c), s)| p * c * s)
        .collect())
}

/// The same quantity evaluated through the literal recurrence
/// `α_j = p_j ((1 − p_{j−1}) α_{j−1} / p_{j−1} + α_prev_j)`, rewritten
/// without the division as `q_j = (1 − p_{j−1}) q_{j−1} + α_prev_j`,
/// `α_j = p_j q_j`. Kept as a reference for the closed form.
pub fn monotonic_alpha_row_sequential(p: &[f64], alpha_prev: &[f64]) -> Result<Vec<f64>> {
    check_same_len("monotonic_alpha_row_sequential", p.len(), alpha_prev.len())?;
    let mut out = Vec::with_capacity(p.len());
    let mut q = 0.0;
    for j in 0..p.len() {
        q = if j == 0 { alpha_prev[0] } else { (1.0 - p[j - 1]) * q + alpha_prev[j] };
        out.push(p[j] * q);
    }
    Ok(out)
}

/// Adds `1 − Σα` to the last entry.
pub fn preserve_mass(alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::invalid("preserve_mass: empty input"));
    }
    let total: f64 = alpha.iter().sum();
    if total > 1.0 + NORMALIZATION_TOL {
        return Err(Error::numeric(format!("preserve_mass: alpha sums to {total}")));
    }
    let mut out = alpha.to_vec();
    *out.last_mut().expect("non-empty") += 1.0 - total;
    Ok(out)
}

/// MILk output distribution: each head position `k` spreads its mass as a
/// softmax of `u` over `1..=k`.
pub fn milk_beta_row(alpha: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_same_len("milk_beta_row", alpha.len(), u.len())?;
    check_normalized("milk_beta_row", alpha)?;
    Ok(fused::milk_beta_forward(alpha, u))
}

/// MoChA output distribution: as MILk, with each softmax restricted to the
/// `chunk_size` positions ending at the head.
pub fn mocha_beta_row(alpha: &[f64], u: &[f64], chunk_size: usize) -> Result<Vec<f64>> {
    if chunk_size == 0 {
        return Err(Error::invalid("mocha_beta_row: chunk size must be >= 1"));
    }
    check_same_len("mocha_beta_row", alpha.len(), u.len())?;
    check_normalized("mocha_beta_row", alpha)?;
    Ok(fused::mocha_beta_forward(alpha, u, chunk_size))
}

/// `Σ_j β_j h_j` over the rows of `encoder_states`.
pub fn expected_context(beta: &[f64], encoder_states: &Tensor) -> Result<Vec<f64>> {
    if encoder_states.rank() != 2 {
        return Err(Error::invalid("expected_context: encoder states must be a matrix"));
    }
    check_same_len("expected_context", beta.len(), encoder_states.rows())?;
    let mut out = vec![0.0; encoder_states.cols()];
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (o, h) in out.iter_mut().zip(encoder_states.row(j)) {
                *o += b * h;
            }
        }
    }
    Ok(out)
}

/// One expectation-mode step for any attention kind.
///
/// `valid_len` is the unpadded source length and `step` the 1-indexed
/// output position (used only by wait-k). Soft attention and wait-k are
/// expressed as a head fixed at the end of what they may see, so their
/// `α` is one-hot and `expected_delay` gives their read count.
pub fn expectation_row(
    config: &AttentionConfig,
    energies: (&[f64], &[f64]),
    alpha_prev: &[f64],
    valid_len: usize,
    step: usize,
    rng: &mut SeededRng,
    training: bool,
) -> Result<AttentionRow> {
    let (e, u) = energies;
    let n = e.len();
    check_same_len("expectation_row", n, u.len())?;
    check_same_len("expectation_row", n, alpha_prev.len())?;
    if valid_len == 0 || valid_len > n {
        return Err(Error::invalid(format!("expectation_row: valid length {valid_len} of {n}")));
    }
    let fixed_head = |t: usize| -> Result<AttentionRow> {
        let mut alpha = vec![0.0; n];
        alpha[t - 1] = 1.0;
        Ok(AttentionRow {
            p: alpha.clone(),
            beta: masked_softmax(u, t)?,
            alpha,
            residual_mass: 0.0,
        })
    };
    match config.kind {
        AttentionKind::Soft => fixed_head(valid_len),
        AttentionKind::WaitK(s) => fixed_head(s.reads_before_write(step, valid_len)),
        kind => {
            let mut p = selection_probabilities(&e[..valid_len], config.noise, rng, training)?;
            p.resize(n, 0.0);
            let raw = monotonic_alpha_row(&p, alpha_prev, config.eps)?;
            let residual = 1.0 - raw.iter().sum::<f64>();
            let alpha = if config.preserve_mass {
                let mut a = preserve_mass(&raw[..valid_len])?;
                a.resize(n, 0.0);
                a
            } else {
                raw
            };
            let beta = match kind {
                AttentionKind::Monotonic => alpha.clone(),
                AttentionKind::Mocha { chunk_size } if config.preserve_mass => {
                    mocha_beta_row(&alpha, u, chunk_size)?
                }
                AttentionKind::Mocha { chunk_size } => fused::mocha_beta_forward(&alpha, u, chunk_size),
                _ if config.preserve_mass => milk_beta_row(&alpha, u)?,
                _ => fused::milk_beta_forward(&alpha, u),
            };
            Ok(AttentionRow {
                p,
                alpha,
                beta,
                residual_mass: if config.preserve_mass { 0.0 } else { residual.max(0.0) },
            })
        }
    }
}

/// Initial `α_prev`: all mass on position 1.
pub fn initial_alpha(source_len: usize) -> Vec<f64> {
    let mut a = vec![0.0; source_len];
    if let Some(first) = a.first_mut() {
        *first = 1.0;
    }
    a
}
