//! Fused forward/backward kernels for the lookback attention distributions.
//!
//! Both MILk and MoChA induce `β_j = Σ_k α_k · P_k(j)`, where `P_k` is a
//! softmax of `u` over a window ending at `k`: the whole prefix `1..=k` for
//! MILk, the last `cs` positions for MoChA. With `gα_k = Σ_j gβ_j P_k(j)`
//! the backward rules are
//!
//! ```text
//! ∂L/∂α_k = gα_k
//! ∂L/∂u_l = gβ_l β_l − Σ_{k : l ∈ window(k)} α_k gα_k P_k(l)
//! ```
//!
//! MILk evaluates both sums as running-max rescaled scans in O(|x|); MoChA
//! evaluates each window directly in O(|x|·cs).

use crate::numerics::{CustomOp, Tensor};

/// Prefix statistics shared by the MILk forward and backward scans:
/// running max `m_k` and rescaled normalizer `d_k = Σ_{l≤k} exp(u_l − m_k)`.
struct PrefixStats {
    max: Vec<f64>,
    norm: Vec<f64>,
}

fn prefix_stats(u: &[f64]) -> PrefixStats {
    let n = u.len();
    let mut max = Vec::with_capacity(n);
    let mut norm = Vec::with_capacity(n);
    let mut m = f64::NEG_INFINITY;
    let mut d = 0.0;
    for &x in u {
        if x > m {
            // rescale the running sum onto the new maximum
            d = if m == f64::NEG_INFINITY { 0.0 } else { d * (m - x).exp() };
            m = x;
        }
        if x != f64::NEG_INFINITY {
            d += (x - m).exp();
        }
        max.push(m);
        norm.push(d);
    }
    PrefixStats { max, norm }
}

/// Decay factor `exp(m_j − m_{j+1})` between consecutive running maxima.
fn decay(max: &[f64], j: usize) -> f64 {
    if max[j] == max[j + 1] {
        1.0
    } else {
        (max[j] - max[j + 1]).exp()
    }
}

fn weight(u: f64, m: f64) -> f64 {
    if u == f64::NEG_INFINITY {
        0.0
    } else {
        (u - m).exp()
    }
}

/// `β_j = Σ_{k≥j} α_k exp(u_j) / Σ_{l≤k} exp(u_l)`, computed as a reversed
/// cumulative sum rescaled by the running maximum of `u`.
pub(crate) fn milk_beta_forward(alpha: &[f64], u: &[f64]) -> Vec<f64> {
    let n = alpha.len();
    let PrefixStats { max, norm } = prefix_stats(u);
    let mut beta = vec![0.0; n];
    let mut suffix = 0.0;
    for j in (0..n).rev() {
        let own = if norm[j] > 0.0 { alpha[j] / norm[j] } else { 0.0 };
        suffix = if j + 1 < n { own + decay(&max, j) * suffix } else { own };
        beta[j] = weight(u[j], max[j]) * suffix;
    }
    beta
}

fn milk_beta_backward(alpha: &[f64], u: &[f64], beta: &[f64], up: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = alpha.len();
    let PrefixStats { max, norm } = prefix_stats(u);
    let mut g_alpha = vec![0.0; n];
    let mut acc = 0.0;
    for k in 0..n {
        if k > 0 {
            acc *= decay(&max, k - 1);
        }
        acc += up[k] * weight(u[k], max[k]);
        g_alpha[k] = if norm[k] > 0.0 { acc / norm[k] } else { 0.0 };
    }
    let mut g_u = vec![0.0; n];
    let mut suffix = 0.0;
    for l in (0..n).rev() {
        let own = if norm[l] > 0.0 { alpha[l] * g_alpha[l] / norm[l] } else { 0.0 };
        suffix = if l + 1 < n { own + decay(&max, l) * suffix } else { own };
        g_u[l] = up[l] * beta[l] - weight(u[l], max[l]) * suffix;
    }
    (g_alpha, g_u)
}

fn window_start(k: usize, cs: usize) -> usize {
    (k + 1).saturating_sub(cs)
}

/// Softmax of `u` over `window_start(k)..=k`.
fn window_softmax(u: &[f64], k: usize, cs: usize) -> (usize, Vec<f64>) {
    let start = window_start(k, cs);
    let win = &u[start..=k];
    let m = win.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return (start, vec![0.0; win.len()]);
    }
    let mut w: Vec<f64> = win.iter().map(|&x| weight(x, m)).collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    (start, w)
}

pub(crate) fn mocha_beta_forward(alpha: &[f64], u: &[f64], cs: usize) -> Vec<f64> {
    let n = alpha.len();
    let mut beta = vec![0.0; n];
    for k in 0..n {
        if alpha[k] == 0.0 {
            continue;
        }
        let (start, w) = window_softmax(u, k, cs);
        for (off, p) in w.iter().enumerate() {
            beta[start + off] += alpha[k] * p;
        }
    }
    beta
}

fn mocha_beta_backward(alpha: &[f64], u: &[f64], cs: usize, beta: &[f64], up: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = alpha.len();
    let mut g_alpha = vec![0.0; n];
    let mut g_u: Vec<f64> = up.iter().zip(beta).map(|(g, b)| g * b).collect();
    for k in 0..n {
        let (start, w) = window_softmax(u, k, cs);
        let ga: f64 = w.iter().enumerate().map(|(off, p)| up[start + off] * p).sum();
        g_alpha[k] = ga;
        let coef = alpha[k] * ga;
        if coef != 0.0 {
            for (off, p) in w.iter().enumerate() {
                g_u[start + off] -= coef * p;
            }
        }
    }
    (g_alpha, g_u)
}

pub(crate) struct MilkBetaOp;

impl CustomOp for MilkBetaOp {
    fn name(&self) -> &'static str {
        "milk_beta"
    }

    fn backward(&self, inputs: &[&Tensor], output: &Tensor, upstream: &[f64]) -> Vec<Vec<f64>> {
        let (ga, gu) = milk_beta_backward(inputs[0].data(), inputs[1].data(), output.data(), upstream);
        vec![ga, gu]
    }
}

pub(crate) struct MochaBetaOp {
    pub chunk_size: usize,
}

impl CustomOp for MochaBetaOp {
    fn name(&self) -> &'static str {
        "mocha_beta"
    }

    fn backward(&self, inputs: &[&Tensor], output: &Tensor, upstream: &[f64]) -> Vec<Vec<f64>> {
        let (ga, gu) = mocha_beta_backward(
            inputs[0].data(),
            inputs[1].data(),
            self.chunk_size,
            output.data(),
            upstream,
        );
        vec![ga, gu]
    }
}
