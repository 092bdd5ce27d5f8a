use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

/// Additive energy parameters: `vᵀ tanh(W_s s + W_h h + b)`.
///
/// The monotonic variant replaces `v` with `gain · v/‖v‖` and adds an
/// offset `r`; the soft variant ignores `gain` and `offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyParams {
    /// `A×S`, applied to the decoder state.
    pub query: Tensor,
    /// `A×H`, applied to the encoder state.
    pub key: Tensor,
    pub bias: Tensor,
    pub v: Tensor,
    pub gain: f64,
    pub offset: f64,
}

impl EnergyParams {
    pub fn zeros(attention_dim: usize, state_dim: usize, encoder_dim: usize) -> Self {
        EnergyParams {
            query: Tensor::zeros(&[attention_dim, state_dim]),
            key: Tensor::zeros(&[attention_dim, encoder_dim]),
            bias: Tensor::zeros(&[attention_dim]),
            v: Tensor::zeros(&[attention_dim]),
            gain: 0.0,
            offset: 0.0,
        }
    }

    fn check(&self, s: &[f64], h: &[f64]) -> Result<()> {
        let a = self.v.len();
        let ok = self.query.rank() == 2
            && self.key.rank() == 2
            && self.query.rows() == a
            && self.key.rows() == a
            && self.bias.len() == a
            && self.query.cols() == s.len()
            && self.key.cols() == h.len();
        if !ok {
            return Err(Error::invalid(format!(
                "energy: params W_s {:?}, W_h {:?}, b {:?}, v {:?} with states {} and {}",
                self.query.shape(),
                self.key.shape(),
                self.bias.shape(),
                self.v.shape(),
                s.len(),
                h.len()
            )));
        }
        Ok(())
    }

    /// Loads the parameters into `g` as leaves.
    pub fn to_vars(&self, g: &mut Graph) -> (EnergyVars, MonotonicScale) {
        let vars = EnergyVars {
            query: g.leaf(self.query.clone()),
            key: g.leaf(self.key.clone()),
            bias: g.leaf(self.bias.clone()),
            v: g.leaf(self.v.clone()),
        };
        let scale = MonotonicScale {
            gain: g.leaf(Tensor::vector(vec![self.gain])),
            offset: g.leaf(Tensor::vector(vec![self.offset])),
        };
        (vars, scale)
    }
}

/// Graph handles for one additive energy function.
#[derive(Clone, Copy, Debug)]
pub struct EnergyVars {
    pub query: Var,
    pub key: Var,
    pub bias: Var,
    pub v: Var,
}

/// Learned gain and offset of the monotonic energy, as length-1 vectors.
#[derive(Clone, Copy, Debug)]
pub struct MonotonicScale {
    pub gain: Var,
    pub offset: Var,
}

impl EnergyVars {
    /// `K h` for one encoder state.
    pub fn key(&self, g: &mut Graph, state: Var) -> Result<Var> {
        g.matvec(self.key, state)
    }

    /// `K h_j` stacked into a `|x|×A` matrix, computed once per sentence and
    /// reused by every output step.
    pub fn keys(&self, g: &mut Graph, states: &[Var]) -> Result<Var> {
        let rows = states
            .iter()
            .map(|&h| self.key(g, h))
            .collect::<Result<Vec<_>>>()?;
        g.stack_rows(&rows)
    }

    fn hidden(&self, g: &mut Graph, keys: Var, query: Var) -> Result<Var> {
        let q = g.matvec(self.query, query)?;
        let q = g.add(q, self.bias)?;
        let pre = g.add_row(keys, q)?;
        Ok(g.tanh(pre))
    }

    /// Soft energies `u_j` for every precomputed key row.
    pub fn soft_row(&self, g: &mut Graph, keys: Var, query: Var) -> Result<Var> {
        let hidden = self.hidden(g, keys, query)?;
        g.matvec(hidden, self.v)
    }

    /// Monotonic energies `e_j` for every precomputed key row.
    pub fn monotonic_row(&self, g: &mut Graph, keys: Var, query: Var, scale: MonotonicScale) -> Result<Var> {
        let hidden = self.hidden(g, keys, query)?;
        let unit = g.normalize(self.v)?;
        let raw = g.matvec(hidden, unit)?;
        let scaled = g.mul_scalar(raw, scale.gain)?;
        g.add_scalar(scaled, scale.offset)
    }
}

fn single(params: &EnergyParams, s: &[f64], h: &[f64], monotonic: bool) -> Result<f64> {
    params.check(s, h)?;
    let mut g = Graph::new();
    let (vars, scale) = params.to_vars(&mut g);
    let hv = g.constant_vector(h.to_vec());
    let sv = g.constant_vector(s.to_vec());
    let keys = vars.keys(&mut g, &[hv])?;
    let out = if monotonic {
        vars.monotonic_row(&mut g, keys, sv, scale)?
    } else {
        vars.soft_row(&mut g, keys, sv)?
    };
    Ok(g.data(out)[0])
}

/// `vᵀ tanh(W_s s + W_h h + b)`.
pub fn soft_energy(decoder_state: &[f64], encoder_state: &[f64], params: &EnergyParams) -> Result<f64> {
    single(params, decoder_state, encoder_state, false)
}

/// `gain · (v/‖v‖)ᵀ tanh(W_s s + W_h h + b) + r`.
pub fn monotonic_energy(decoder_state: &[f64], encoder_state: &[f64], params: &EnergyParams) -> Result<f64> {
    single(params, decoder_state, encoder_state, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{check_gradient, finite_difference_gradient, logistic};

    fn sample_params() -> EnergyParams {
        EnergyParams {
            query: Tensor::matrix(2, 3, vec![0.2, -0.5, 0.1, 0.7, 0.3, -0.4]).unwrap(),
            key: Tensor::matrix(2, 2, vec![-0.6, 0.9, 0.25, 0.4]).unwrap(),
            bias: Tensor::vector(vec![0.05, -0.1]),
            v: Tensor::vector(vec![1.3, -0.8]),
            gain: 1.7,
            offset: -0.9,
        }
    }

    fn flatten(p: &EnergyParams) -> Vec<f64> {
        let mut x = Vec::new();
        for t in [&p.query, &p.key, &p.bias, &p.v] {
            x.extend_from_slice(t.data());
        }
        x.push(p.gain);
        x.push(p.offset);
        x
    }

    fn unflatten(x: &[f64]) -> EnergyParams {
        EnergyParams {
            query: Tensor::matrix(2, 3, x[0..6].to_vec()).unwrap(),
            key: Tensor::matrix(2, 2, x[6..10].to_vec()).unwrap(),
            bias: Tensor::vector(x[10..12].to_vec()),
            v: Tensor::vector(x[12..14].to_vec()),
            gain: x[14],
            offset: x[15],
        }
    }

    #[test]
    fn zero_weights_give_zero_energy() {
        let p = EnergyParams::zeros(4, 3, 2);
        assert_eq!(soft_energy(&[1.0, -2.0, 3.0], &[0.5, 0.5], &p).unwrap(), 0.0);
    }

    #[test]
    fn hand_evaluated_soft_energy() {
        let mut p = EnergyParams::zeros(2, 2, 2);
        p.key = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        p.v = Tensor::vector(vec![1.0, 0.0]);
        let e = soft_energy(&[9.0, 9.0], &[0.5, -1.0], &p).unwrap();
        assert!((e - 0.5f64.tanh()).abs() < 1e-15);
        assert!((e - 0.4621).abs() < 1e-4);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = sample_params();
        assert!(matches!(soft_energy(&[1.0], &[0.0, 0.0], &p), Err(Error::InvalidArgument(_))));
        assert!(monotonic_energy(&[1.0, 2.0, 3.0], &[0.0], &p).is_err());
    }

    #[test]
    fn zero_gain_leaves_only_the_offset() {
        let mut p = sample_params();
        p.gain = 0.0;
        p.offset = -4.0;
        for (s, h) in [([0.0, 0.0, 0.0], [0.0, 0.0]), ([5.0, -3.0, 1.0], [2.0, 7.0])] {
            let e = monotonic_energy(&s, &h, &p).unwrap();
            assert_eq!(e, -4.0);
            assert!((logistic(e) - 0.018).abs() < 1e-3);
        }
    }

    #[test]
    fn projection_scale_does_not_matter() {
        let p = sample_params();
        let mut q = p.clone();
        q.v = Tensor::vector(p.v.data().iter().map(|x| 2.0 * x).collect());
        let (s, h) = ([0.3, -0.2, 0.9], [1.0, -0.5]);
        let a = monotonic_energy(&s, &h, &p).unwrap();
        let b = monotonic_energy(&s, &h, &q).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (s, h) = ([0.3, -0.2, 0.9], [1.0, -0.5]);
        for monotonic in [false, true] {
            let p = sample_params();
            let mut g = Graph::new();
            let (vars, scale) = p.to_vars(&mut g);
            let sv = g.leaf(Tensor::vector(s.to_vec()));
            let hv = g.leaf(Tensor::vector(h.to_vec()));
            let keys = vars.keys(&mut g, &[hv]).unwrap();
            let row = if monotonic {
                vars.monotonic_row(&mut g, keys, sv, scale).unwrap()
            } else {
                vars.soft_row(&mut g, keys, sv).unwrap()
            };
            let root = g.sum(row);
            g.backward(root).unwrap();
            let energy = |x: &[f64]| {
                let q = unflatten(x);
                if monotonic {
                    monotonic_energy(&s, &h, &q)
                } else {
                    soft_energy(&s, &h, &q)
                }
            };
            let x0 = flatten(&p);
            let numeric = finite_difference_gradient(energy, &x0, 1e-6).unwrap();
            let mut analytic = Vec::new();
            for var in [vars.query, vars.key, vars.bias, vars.v, scale.gain, scale.offset] {
                let n = g.data(var).len();
                analytic.extend(g.grad(var).map(|x| x.to_vec()).unwrap_or(vec![0.0; n]));
            }
            check_gradient(&analytic, &numeric, 1e-4, 1e-9).unwrap();
            // state gradients
            let numeric = finite_difference_gradient(
                |x: &[f64]| {
                    if monotonic {
                        monotonic_energy(&x[..3], &x[3..], &p)
                    } else {
                        soft_energy(&x[..3], &x[3..], &p)
                    }
                },
                &[s.as_slice(), h.as_slice()].concat(),
                1e-6,
            )
            .unwrap();
            let analytic = [g.grad(sv).unwrap(), g.grad(hv).unwrap()].concat();
            check_gradient(&analytic, &numeric, 1e-4, 1e-9).unwrap();
        }
    }
}
