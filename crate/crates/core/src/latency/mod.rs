//! Latency metrics over delay vectors.
//!
//! `g[i]` is the number of source tokens read before target token `i` is
//! written. Hard traces give integer delays; expectation training gives
//! fractional ones through [`expected_delay`].

mod trace;

pub use trace::{Action, DecodeTrace};

use crate::attention::NORMALIZATION_TOL;
use crate::error::{Error, Result};
use crate::numerics::{CustomOp, Graph, Tensor, Var};

/// Slack allowed when matching a fractional delay against `|x|`.
pub const DELAY_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct DelayVector {
    g: Vec<f64>,
    source_len: usize,
}

impl DelayVector {
    /// `γ` is derived from `g.len()`, so pass the delays of whichever
    /// target sequence is being scored.
    pub fn new(g: Vec<f64>, source_len: usize) -> Result<Self> {
        if g.is_empty() || source_len == 0 {
            return Err(Error::invalid(format!(
                "delay vector: lengths |y|={} |x|={source_len} must be positive",
                g.len()
            )));
        }
        let hi = source_len as f64 + DELAY_TOL;
        if let Some((i, d)) = g.iter().enumerate().find(|(_, &d)| !(d >= 1.0 - DELAY_TOL && d <= hi)) {
            return Err(Error::invalid(format!(
                "delay vector: g[{}] = {d} outside [1, {source_len}]",
                i + 1
            )));
        }
        Ok(DelayVector { g, source_len })
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn target_len(&self) -> usize {
        self.g.len()
    }

    pub fn gamma(&self) -> f64 {
        self.target_len() as f64 / self.source_len as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencyReport {
    pub ap: f64,
    pub al: f64,
    pub dal: f64,
}

impl LatencyReport {
    pub fn of(d: &DelayVector) -> Self {
        LatencyReport {
            ap: average_proportion(d),
            al: average_lagging(d),
            dal: differentiable_average_lagging(d),
        }
    }
}

/// `Σ_j j·α_j` with 1-indexed `j`.
pub fn expected_delay(alpha: &[f64]) -> Result<f64> {
    let total: f64 = alpha.iter().sum();
    if alpha.is_empty() || (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::invalid(format!("expected_delay: alpha sums to {total}")));
    }
    Ok(alpha.iter().enumerate().map(|(j, a)| (j + 1) as f64 * a).sum())
}

/// Differentiable [`expected_delay`].
pub fn expected_delay_var(g: &mut Graph, alpha: Var) -> Result<Var> {
    let n = g.data(alpha).len();
    let positions = g.constant_vector((1..=n).map(|j| j as f64).collect());
    g.dot(alpha, positions)
}

pub fn average_proportion(d: &DelayVector) -> f64 {
    d.g.iter().sum::<f64>() / (d.source_len as f64 * d.target_len() as f64)
}

/// Mean lag behind an ideal wait-0 writer, over the steps up to and
/// including the first one that has read the whole source.
pub fn average_lagging(d: &DelayVector) -> f64 {
    let x = d.source_len as f64;
    let tau = d
        .g
        .iter()
        .position(|&gi| gi >= x - DELAY_TOL)
        .map_or(d.target_len(), |i| i + 1);
    let step = 1.0 / d.gamma();
    d.g[..tau]
        .iter()
        .enumerate()
        .map(|(i, gi)| gi - i as f64 * step)
        .sum::<f64>()
        / tau as f64
}

/// Clamped delays and, for each entry, the index of the raw delay it was
/// propagated from. Ties keep the raw delay.
fn clamp_with_origin(g: &[f64], step: f64) -> (Vec<f64>, Vec<usize>) {
    let mut out = Vec::with_capacity(g.len());
    let mut origin = Vec::with_capacity(g.len());
    for (i, &gi) in g.iter().enumerate() {
        match out.last() {
            Some(&prev) if prev + step > gi => {
                out.push(prev + step);
                origin.push(origin[i - 1]);
            }
            _ => {
                out.push(gi);
                origin.push(i);
            }
        }
    }
    (out, origin)
}

/// `g′[1] = g[1]`, `g′[i] = max(g[i], g′[i−1] + 1/γ)`.
pub fn clamp_delays(d: &DelayVector) -> Vec<f64> {
    clamp_with_origin(&d.g, 1.0 / d.gamma()).0
}

fn dal_value(clamped: &[f64], step: f64) -> f64 {
    clamped
        .iter()
        .enumerate()
        .map(|(i, gi)| gi - i as f64 * step)
        .sum::<f64>()
        / clamped.len() as f64
}

pub fn differentiable_average_lagging(d: &DelayVector) -> f64 {
    let step = 1.0 / d.gamma();
    dal_value(&clamp_delays(d), step)
}

struct DalOp {
    origin: Vec<usize>,
}

impl CustomOp for DalOp {
    fn name(&self) -> &'static str {
        "dal"
    }

    fn backward(&self, _inputs: &[&Tensor], _output: &Tensor, upstream: &[f64]) -> Vec<Vec<f64>> {
        let n = self.origin.len();
        let share = upstream[0] / n as f64;
        let mut grad = vec![0.0; n];
        for &k in &self.origin {
            grad[k] += share;
        }
        vec![grad]
    }
}

/// DAL of a differentiable delay vector against a source of `source_len`
/// tokens. Each clamped delay depends on exactly one raw delay, so the
/// gradient of `g[k]` is the share of steps whose clamp chain starts at `k`.
pub fn dal_var(g: &mut Graph, delays: Var, source_len: usize) -> Result<Var> {
    let m = g.data(delays).len();
    if m == 0 || source_len == 0 {
        return Err(Error::invalid("dal: empty delays or source"));
    }
    let step = source_len as f64 / m as f64;
    let (clamped, origin) = clamp_with_origin(g.data(delays), step);
    let value = dal_value(&clamped, step);
    if !value.is_finite() {
        return Err(Error::numeric(format!("dal: non-finite value {value}")));
    }
    Ok(g.custom(&[delays], Tensor::scalar(value), Box::new(DalOp { origin })))
}

/// `nll + λ·DAL(g)` as a plain number.
pub fn augmented_loss(nll: f64, dal: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda == 0.0 {
        return Ok(nll);
    }
    Ok(nll + lambda * dal)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("latency weight must be >= 0, got {lambda}")));
    }
    Ok(())
}

/// `nll + λ·DAL(g)` on the graph; with `λ = 0` the loss is `nll` itself.
pub fn latency_augmented_loss(
    g: &mut Graph,
    nll: Var,
    delays: Var,
    lambda: f64,
    source_len: usize,
) -> Result<Var> {
    check_lambda(lambda)?;
    if lambda == 0.0 {
        return Ok(nll);
    }
    let dal = dal_var(g, delays, source_len)?;
    let weighted = g.scale(dal, lambda);
    g.add_scalar(nll, weighted)
}

/// Delays implied by a trace: reads preceding each write.
pub fn delays_from_trace(trace: &DecodeTrace) -> Result<DelayVector> {
    trace.validate()?;
    let mut reads = 0usize;
    let mut g = Vec::new();
    for action in &trace.actions {
        match action {
            Action::Read { .. } => reads += 1,
            Action::Write { .. } => {
                if reads == 0 {
                    return Err(Error::invalid("trace writes before reading any source token"));
                }
                g.push(reads as f64);
            }
        }
    }
    if g.is_empty() {
        return Err(Error::invalid("trace has no writes"));
    }
    DelayVector::new(g, trace.source_len)
}
