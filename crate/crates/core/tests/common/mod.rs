//! Brute-force oracles shared by integration tests.

#![allow(dead_code)]

use milkstream::attention::{expected_context, milk_beta_row, monotonic_alpha_row, preserve_mass};
use milkstream::numerics::{masked_softmax, Tensor, DIVIDE_EPS};

/// Expected MILk contexts by exhaustive enumeration of hard schedules.
///
/// A schedule is a nondecreasing sequence of stop positions `t_1..t_|y|`.
/// Its probability is the product of Bernoulli decisions made while the
/// head scans from `t_{i-1}`; the last position always stops.
pub fn enumerate_contexts(p: &[Vec<f64>], u: &[Vec<f64>], h: &Tensor) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; h.cols()]; p.len()];
    #[allow(clippy::too_many_arguments)]
    fn walk(
        i: usize,
        start: usize,
        prob: f64,
        stops: &mut Vec<usize>,
        p: &[Vec<f64>],
        u: &[Vec<f64>],
        h: &Tensor,
        out: &mut [Vec<f64>],
    ) {
        let (ny, nx) = (p.len(), h.rows());
        if i == ny {
            for (row, &t) in stops.iter().enumerate() {
                let w = masked_softmax(&u[row][..t], t).unwrap();
                let c = expected_context(&w, &Tensor::matrix(t, h.cols(), h.data()[..t * h.cols()].to_vec()).unwrap()).unwrap();
                for (o, x) in out[row].iter_mut().zip(c) {
                    *o += prob * x;
                }
            }
            return;
        }
        let mut pass = 1.0;
        for t in start..=nx {
            let stop = if t == nx { 1.0 } else { p[i][t - 1] };
            stops.push(t);
            walk(i + 1, t, prob * pass * stop, stops, p, u, h, out);
            stops.pop();
            pass *= 1.0 - stop;
        }
    }
    walk(0, 1, 1.0, &mut Vec::new(), p, u, h, &mut out);
    out
}

pub fn expectation_contexts(p: &[Vec<f64>], u: &[Vec<f64>], h: &Tensor) -> Vec<Vec<f64>> {
    let nx = h.rows();
    let mut prev = vec![0.0; nx];
    prev[0] = 1.0;
    let mut out = Vec::new();
    for (pi, ui) in p.iter().zip(u) {
        let alpha = preserve_mass(&monotonic_alpha_row(pi, &prev, DIVIDE_EPS).unwrap()).unwrap();
        let beta = milk_beta_row(&alpha, ui).unwrap();
        out.push(expected_context(&beta, h).unwrap());
        prev = alpha;
    }
    out
}
