//! Scan primitives and activations on plain slices.
//!
//! These are the forward kernels shared by the differentiable graph and by
//! the non-differentiable inference paths, so both compute bit-identical
//! values.

use crate::error::{Error, Result};

/// Repo-wide clamp for divisions by vanishing cumulative products.
pub const DIVIDE_EPS: f64 = 1e-10;

fn require_non_empty(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        Err(Error::invalid(format!("{what}: empty input")))
    } else {
        Ok(())
    }
}

pub fn cumulative_sum(v: &[f64]) -> Result<Vec<f64>> {
    require_non_empty(v, "cumulative_sum")?;
    Ok(cumsum_kernel(v))
}

pub fn cumulative_product(v: &[f64]) -> Result<Vec<f64>> {
    require_non_empty(v, "cumulative_product")?;
    Ok(cumprod_kernel(v, false))
}

pub fn reversed_cumulative_sum(v: &[f64]) -> Result<Vec<f64>> {
    require_non_empty(v, "reversed_cumulative_sum")?;
    Ok(rev_cumsum_kernel(v))
}

pub fn clamped_divide(num: &[f64], den: &[f64], eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("clamped_divide: eps must be > 0, got {eps}")));
    }
    if num.len() != den.len() {
        return Err(Error::invalid(format!(
            "clamped_divide: length mismatch {} vs {}",
            num.len(),
            den.len()
        )));
    }
    Ok(num
        .iter()
        .zip(den)
        .map(|(n, d)| n / d.max(eps))
        .collect())
}

/// Logistic sigmoid, evaluated on the branch that never exponentiates a
/// positive argument.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let z = x.exp();
        z / (1.0 + z)
    }
}

/// Softmax over the first `valid_len` entries; the rest are exactly zero.
pub fn masked_softmax(e: &[f64], valid_len: usize) -> Result<Vec<f64>> {
    if valid_len == 0 || valid_len > e.len() {
        return Err(Error::invalid(format!(
            "masked_softmax: valid_len {valid_len} outside 1..={}",
            e.len()
        )));
    }
    let mut out = vec![0.0; e.len()];
    softmax_into(&e[..valid_len], &mut out[..valid_len]);
    Ok(out)
}

pub(crate) fn softmax_into(e: &[f64], out: &mut [f64]) {
    let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &x) in out.iter_mut().zip(e) {
        *o = (x - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub(crate) fn cumsum_kernel(v: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    v.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

pub(crate) fn rev_cumsum_kernel(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    let mut acc = 0.0;
    for (o, x) in out.iter_mut().zip(v).rev() {
        acc += x;
        *o = acc;
    }
    out
}

/// Inclusive or exclusive cumulative product. The exclusive variant starts
/// from 1 and omits the current element.
pub(crate) fn cumprod_kernel(v: &[f64], exclusive: bool) -> Vec<f64> {
    let mut acc = 1.0;
    v.iter()
        .map(|x| {
            if exclusive {
                let prev = acc;
                acc *= x;
                prev
            } else {
                acc *= x;
                acc
            }
        })
        .collect()
}

/// Gradient of a cumulative product without dividing by the inputs, so zero
/// factors are handled exactly. O(n^2), fine for sentence-length vectors.
pub(crate) fn cumprod_backward(v: &[f64], upstream: &[f64], exclusive: bool) -> Vec<f64> {
    let n = v.len();
    let mut grad = vec![0.0; n];
    let mut prefix = 1.0;
    for k in 0..n {
        // d out_j / d v_k = prod_{l in range(j), l != k} v_l
        let mut partial = prefix;
        let start = if exclusive { k + 1 } else { k };
        let mut acc = 0.0;
        for j in start..n {
            if exclusive {
                if j > k + 1 {
                    partial *= v[j - 1];
                }
            } else if j > k {
                partial *= v[j];
            }
            acc += upstream[j] * partial;
        }
        grad[k] = acc;
        prefix *= v[k];
    }
    grad
}
