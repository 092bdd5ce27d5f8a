//! Differentiable versions of the per-step attention distributions.

use super::fused::{milk_beta_forward, mocha_beta_forward, MilkBetaOp, MochaBetaOp};
use super::NORMALIZATION_TOL;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

fn same_len(g: &Graph, what: &str, a: Var, b: Var) -> Result<()> {
    let (x, y) = (g.data(a).len(), g.data(b).len());
    if x != y {
        return Err(Error::invalid(format!("{what}: length mismatch {x} vs {y}")));
    }
    Ok(())
}

/// Closed-form monotonic attention row; see [`super::monotonic_alpha_row`].
pub fn alpha_row_var(g: &mut Graph, p: Var, alpha_prev: Var, eps: f64) -> Result<Var> {
    same_len(g, "alpha_row_var", p, alpha_prev)?;
    let keep = g.one_minus(p);
    let keep = g.clamp(keep, eps, 1.0);
    let cp = g.cumprod(keep, true)?;
    let ratio = g.clamped_divide(alpha_prev, cp, eps)?;
    let acc = g.cumsum(ratio)?;
    let head = g.mul(p, cp)?;
    g.mul(head, acc)
}

/// Moves `1 − Σα` onto the last entry; the residual keeps its gradient.
pub fn preserve_mass_var(g: &mut Graph, alpha: Var) -> Result<Var> {
    let n = g.data(alpha).len();
    if n == 0 {
        return Err(Error::invalid("preserve_mass_var: empty input"));
    }
    let total = g.sum(alpha);
    if g.scalar(total) > 1.0 + NORMALIZATION_TOL {
        return Err(Error::numeric(format!(
            "preserve_mass: alpha sums to {}",
            g.scalar(total)
        )));
    }
    let residual = g.one_minus(total);
    let mut last = vec![0.0; n];
    last[n - 1] = 1.0;
    let last = g.constant_vector(last);
    let shift = g.mul_scalar(last, residual)?;
    g.add(alpha, shift)
}

pub fn milk_beta_var(g: &mut Graph, alpha: Var, u: Var) -> Result<Var> {
    same_len(g, "milk_beta_var", alpha, u)?;
    let beta = milk_beta_forward(g.data(alpha), g.data(u));
    Ok(g.custom(&[alpha, u], Tensor::vector(beta), Box::new(MilkBetaOp)))
}

pub fn mocha_beta_var(g: &mut Graph, alpha: Var, u: Var, chunk_size: usize) -> Result<Var> {
    if chunk_size == 0 {
        return Err(Error::invalid("mocha_beta_var: chunk size must be >= 1"));
    }
    same_len(g, "mocha_beta_var", alpha, u)?;
    let beta = mocha_beta_forward(g.data(alpha), g.data(u), chunk_size);
    Ok(g.custom(
        &[alpha, u],
        Tensor::vector(beta),
        Box::new(MochaBetaOp { chunk_size }),
    ))
}

/// `Σ_j β_j h_j` with `states` an `|x|×H` matrix.
pub fn expected_context_var(g: &mut Graph, beta: Var, states: Var) -> Result<Var> {
    g.mat_t_vec(states, beta)
}
