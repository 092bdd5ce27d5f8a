use super::network::Net;
use super::Seq2Seq;
use crate::attention::{hard_decode_step, AttentionKind, HardHead, StreamingSource, WaitKSchedule};
use crate::data::{BOS, EOS};
use crate::error::{Error, Result};
use crate::latency::{delays_from_trace, DecodeTrace, DelayVector};
use crate::numerics::{Graph, Var};

/// Decoder state, attention context and output distribution of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderStep {
    pub state: Vec<f64>,
    pub context: Vec<f64>,
    pub distribution: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutput {
    /// Written tokens, including a final EOS when one was produced.
    pub tokens: Vec<u32>,
    pub trace: DecodeTrace,
    pub steps: Vec<DecoderStep>,
    /// Attention weights of each step over the full source; zero past
    /// what had been read.
    pub attention: Vec<Vec<f64>>,
    /// Source tokens read before each write.
    pub heads: Vec<usize>,
}

impl DecodeOutput {
    pub fn delays(&self) -> Result<DelayVector> {
        delays_from_trace(&self.trace)
    }
}

/// Source consumed token by token, encoding as it goes.
struct Reader<'a> {
    g: &'a mut Graph,
    net: &'a Net,
    source: &'a [u32],
    enc: Vec<Var>,
    states: Vec<Var>,
    soft_keys: Vec<Var>,
    mono_keys: Vec<Var>,
    monotonic: bool,
    query: Option<Var>,
    trace: DecodeTrace,
}

impl Reader<'_> {
    fn read_upto(&mut self, n: usize) -> Result<()> {
        while self.states.len() < n {
            self.read_next()?;
        }
        Ok(())
    }
}

impl StreamingSource for Reader<'_> {
    fn read_len(&self) -> usize {
        self.states.len()
    }

    fn read_next(&mut self) -> Result<()> {
        let j = self.states.len();
        let token = *self
            .source
            .get(j)
            .ok_or_else(|| Error::ContractViolation(format!("read past source end at {}", j + 1)))?;
        let h = self.net.encoder_step(self.g, &mut self.enc, token)?;
        self.soft_keys.push(self.net.soft.key(self.g, h)?);
        if self.monotonic {
            self.mono_keys.push(self.net.mono.key(self.g, h)?);
        }
        self.states.push(h);
        self.trace.push_read(token);
        Ok(())
    }

    fn monotonic_energy(&mut self, position: usize) -> Result<f64> {
        let query = self.query.ok_or_else(|| Error::ContractViolation("energy requested before query".into()))?;
        let key = *self
            .mono_keys
            .get(position.wrapping_sub(1))
            .ok_or_else(|| Error::ContractViolation(format!("energy at unread position {position}")))?;
        let keys = self.g.stack_rows(&[key])?;
        let e = self.net.mono.monotonic_row(self.g, keys, query, self.net.scale)?;
        Ok(self.g.data(e)[0])
    }
}

/// `2|x| + 10`.
pub fn default_max_len(source_len: usize) -> usize {
    2 * source_len + 10
}

fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

fn decode_with(model: &Seq2Seq, kind: AttentionKind, source: &[u32], max_len: Option<usize>) -> Result<DecodeOutput> {
    let n = source.len();
    if n == 0 {
        return Err(Error::invalid("decode: empty source"));
    }
    let max_len = max_len.unwrap_or_else(|| default_max_len(n));
    if max_len == 0 {
        return Err(Error::invalid("decode: max_len must be >= 1"));
    }
    let mut g = Graph::new();
    let net = model.load(&mut g, false);
    let enc = net.encoder_start(&mut g);
    let mut dec = net.decoder_start(&mut g);
    let mut context = net.zero_context(&mut g);
    let mut r = Reader {
        g: &mut g,
        net: &net,
        source,
        enc,
        states: Vec::with_capacity(n),
        soft_keys: Vec::with_capacity(n),
        mono_keys: Vec::new(),
        monotonic: kind.has_monotonic_head(),
        query: None,
        trace: DecodeTrace::new(n),
    };
    if kind == AttentionKind::Soft {
        r.read_upto(n)?;
    }
    let mut out = DecodeOutput {
        tokens: Vec::new(),
        trace: DecodeTrace::new(n),
        steps: Vec::new(),
        attention: Vec::new(),
        heads: Vec::new(),
    };
    let mut head = HardHead::start();
    let mut prev = BOS;
    for i in 1..=max_len {
        let query = net.decoder_step(r.g, &mut dec, prev, context)?;
        r.query = Some(query);
        let (lo, t) = match kind {
            AttentionKind::Soft => (1, n),
            AttentionKind::WaitK(s) => {
                let t = s.reads_before_write(i, n);
                r.read_upto(t)?;
                (1, t)
            }
            AttentionKind::Monotonic => {
                let (next, t) = hard_decode_step(&mut r, head, n)?;
                head = next;
                (t, t)
            }
            AttentionKind::Mocha { chunk_size } => {
                let (next, t) = hard_decode_step(&mut r, head, n)?;
                head = next;
                (t + 1 - chunk_size.min(t), t)
            }
            AttentionKind::Milk => {
                let (next, t) = hard_decode_step(&mut r, head, n)?;
                head = next;
                (1, t)
            }
        };
        let g = &mut *r.g;
        let mut weights = vec![0.0; n];
        if lo == t {
            weights[t - 1] = 1.0;
            context = r.states[t - 1];
        } else {
            let keys = g.stack_rows(&r.soft_keys[lo - 1..t])?;
            let u = net.soft.soft_row(g, keys, query)?;
            let w = g.masked_softmax(u, t + 1 - lo)?;
            weights[lo - 1..t].copy_from_slice(g.data(w));
            let states = g.stack_rows(&r.states[lo - 1..t])?;
            context = g.mat_t_vec(states, w)?;
        }
        let log_probs = net.log_probs(g, query, context)?;
        let distribution: Vec<f64> = g.data(log_probs).iter().map(|x| x.exp()).collect();
        let y = argmax(&distribution) as u32;
        out.steps.push(DecoderStep {
            state: g.data(query).to_vec(),
            context: g.data(context).to_vec(),
            distribution,
        });
        out.attention.push(weights);
        out.heads.push(t);
        out.tokens.push(y);
        r.trace.push_write(y);
        prev = y;
        if y == EOS {
            r.trace.terminated = true;
            break;
        }
    }
    out.trace = r.trace;
    Ok(out)
}

/// Greedy decoding under the model's own attention kind. Monotonic kinds
/// move a hard head that stops at the first positive monotonic energy;
/// soft attention reads the whole source first; wait-k follows its
/// schedule. `max_len` defaults to `2|x| + 10`.
pub fn greedy_simultaneous_decode(model: &Seq2Seq, source: &[u32], max_len: Option<usize>) -> Result<DecodeOutput> {
    decode_with(model, model.kind(), source, max_len)
}

/// Greedy decoding under a fixed schedule, whatever the model was trained
/// with.
pub fn wait_k_decode(
    model: &Seq2Seq,
    source: &[u32],
    schedule: WaitKSchedule,
    max_len: Option<usize>,
) -> Result<DecodeOutput> {
    WaitKSchedule::new(schedule.k, schedule.emission_rate)?;
    decode_with(model, AttentionKind::WaitK(schedule), source, max_len)
}

/// Exact-match and position-wise agreement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accuracy {
    pub sequence: f64,
    /// Matching positions over the longer of each hypothesis/reference.
    pub token: f64,
}

pub fn sequence_accuracy<H: AsRef<[u32]>, R: AsRef<[u32]>>(hyps: &[H], refs: &[R]) -> Result<Accuracy> {
    if hyps.len() != refs.len() {
        return Err(Error::invalid(format!(
            "sequence_accuracy: {} hypotheses for {} references",
            hyps.len(),
            refs.len()
        )));
    }
    if hyps.is_empty() {
        return Err(Error::invalid("sequence_accuracy: no sentences"));
    }
    let (mut exact, mut hits, mut total) = (0usize, 0usize, 0usize);
    for (h, r) in hyps.iter().zip(refs) {
        let (h, r) = (h.as_ref(), r.as_ref());
        exact += usize::from(h == r);
        hits += h.iter().zip(r).filter(|(a, b)| a == b).count();
        total += h.len().max(r.len());
    }
    Ok(Accuracy {
        sequence: exact as f64 / hyps.len() as f64,
        token: if total == 0 { 1.0 } else { hits as f64 / total as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::AttentionConfig;
    use crate::latency::{average_lagging, Action};
    use crate::model::ModelConfig;

    fn model(kind: AttentionKind) -> Seq2Seq {
        let mut c = ModelConfig::new(10, AttentionConfig { kind, ..Default::default() });
        c.embed_dim = 4;
        c.hidden_dim = 6;
        c.attention_dim = 5;
        Seq2Seq::new(c, 21).unwrap()
    }

    #[test]
    fn accuracy_counts() {
        let r = vec![vec![4, 2], vec![5, 2], vec![6, 2], vec![7, 2]];
        assert_eq!(sequence_accuracy(&r, &r).unwrap().sequence, 1.0);
        let d: Vec<Vec<u32>> = r.iter().map(|x| vec![x[0] + 1, 9, 9]).collect();
        assert_eq!(sequence_accuracy(&d, &r).unwrap().sequence, 0.0);
        let mut h = r.clone();
        h[3] = vec![7, 7, 2];
        let a = sequence_accuracy(&h, &r).unwrap();
        assert_eq!(a.sequence, 0.75);
        assert_eq!(a.token, 7.0 / 9.0);
        assert!(sequence_accuracy(&h[..2], &r).is_err());
    }

    #[test]
    fn soft_reads_everything_first() {
        let x = [4, 5, 6, 7, 2];
        let out = greedy_simultaneous_decode(&model(AttentionKind::Soft), &x, Some(6)).unwrap();
        assert!(out.trace.actions[..5].iter().all(Action::is_read));
        assert!(out.trace.actions[5..].iter().all(|a| !a.is_read()));
        assert!(out.delays().unwrap().g().iter().all(|&d| d == 5.0));
    }

    #[test]
    fn wait_k_follows_the_schedule() {
        let x = [4, 5, 6, 2];
        let m = model(AttentionKind::Milk);
        let s = WaitKSchedule::new(3, 1.0).unwrap();
        let out = wait_k_decode(&m, &x, s, Some(4)).unwrap();
        assert_eq!(out.delays().unwrap().g(), &[3.0, 4.0, 4.0, 4.0][..out.tokens.len()]);
        if out.tokens.len() == 4 {
            assert_eq!(average_lagging(&out.delays().unwrap()), 3.0);
        }
        let s = WaitKSchedule::new(300, 1.0).unwrap();
        let out = wait_k_decode(&m, &x, s, Some(3)).unwrap();
        assert!(out.heads.iter().all(|&h| h == 4));
    }

    #[test]
    fn outputs_are_well_formed() {
        let x = [4, 9, 5, 8, 6, 7, 2];
        for kind in [
            AttentionKind::Soft,
            AttentionKind::Monotonic,
            AttentionKind::Mocha { chunk_size: 3 },
            AttentionKind::Milk,
            AttentionKind::WaitK(WaitKSchedule::new(2, 1.1).unwrap()),
        ] {
            let out = greedy_simultaneous_decode(&model(kind), &x, None).unwrap();
            out.trace.validate().unwrap();
            assert!(out.tokens.len() <= default_max_len(x.len()));
            assert!(out.heads.windows(2).all(|w| w[0] <= w[1]), "{kind}");
            assert_eq!(out.delays().unwrap().g(), out.heads.iter().map(|&h| h as f64).collect::<Vec<_>>());
            for (step, row) in out.steps.iter().zip(&out.attention) {
                assert!((step.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            for (row, &t) in out.attention.iter().zip(&out.heads) {
                assert!(row[t..].iter().all(|&b| b == 0.0));
            }
        }
    }

    #[test]
    fn zero_max_len_and_empty_source_are_rejected() {
        let m = model(AttentionKind::Milk);
        assert!(greedy_simultaneous_decode(&m, &[], None).is_err());
        assert!(greedy_simultaneous_decode(&m, &[4, 2], Some(0)).is_err());
    }
}
