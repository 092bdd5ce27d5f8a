use rayon::prelude::*;

use super::network::Net;
use super::params::{Adam, Params};
use super::Seq2Seq;
use crate::attention::{
    alpha_row_var, expected_context_var, initial_alpha, milk_beta_var, mocha_beta_var, preserve_mass_var,
    AttentionKind,
};
use crate::data::{make_batches, Batch, SentencePair, BOS};
use crate::error::{Error, Result};
use crate::latency::{dal_var, expected_delay_var};
use crate::numerics::{gaussian_noise, Graph, SeededRng, Var};

/// Graph of one teacher-forced sentence.
pub(crate) struct Forward {
    pub loss: Var,
    pub nll: f64,
    pub dal: f64,
}

fn check_pair(model: &Seq2Seq, source: &[u32], target: &[u32]) -> Result<()> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::invalid("empty source or target sentence"));
    }
    let v = model.config.vocab_size as u32;
    if let Some(t) = source.iter().chain(target).find(|&&t| t >= v) {
        return Err(Error::invalid(format!("token id {t} outside vocabulary of {v}")));
    }
    Ok(())
}

/// Builds loss `Σ_i −log p(y_i) + λ·DAL(g)` with attention in expectation.
/// Noise is drawn from `rng` only when `training` is set.
pub(crate) fn sentence_forward(
    model: &Seq2Seq,
    g: &mut Graph,
    net: &Net,
    source: &[u32],
    target: &[u32],
    lambda: f64,
    rng: &mut SeededRng,
    training: bool,
) -> Result<Forward> {
    check_pair(model, source, target)?;
    let cfg = &model.config;
    let att = cfg.attention;
    let n = source.len();
    let mut enc = net.encoder_start(g);
    let states = source
        .iter()
        .map(|&t| net.encoder_step(g, &mut enc, t))
        .collect::<Result<Vec<_>>>()?;
    let state_matrix = g.stack_rows(&states)?;
    let soft_keys = net.soft.keys(g, &states)?;
    let mono_keys = if att.kind.has_monotonic_head() {
        Some(net.mono.keys(g, &states)?)
    } else {
        None
    };

    let v = cfg.vocab_size;
    let smooth = cfg.label_smoothing;
    let mut dec = net.decoder_start(g);
    let mut context = net.zero_context(g);
    let mut alpha_prev = g.constant_vector(initial_alpha(n));
    let mut prev = BOS;
    let mut nll: Option<Var> = None;
    let mut delays = Vec::with_capacity(target.len());
    for (i, &y) in target.iter().enumerate() {
        let query = net.decoder_step(g, &mut dec, prev, context)?;
        let u = net.soft.soft_row(g, soft_keys, query)?;
        let beta = match (att.kind, mono_keys) {
            (AttentionKind::Soft, _) => {
                delays.push(g.constant_vector(vec![n as f64]));
                g.masked_softmax(u, n)?
            }
            (AttentionKind::WaitK(s), _) => {
                let t = s.reads_before_write(i + 1, n);
                delays.push(g.constant_vector(vec![t as f64]));
                g.masked_softmax(u, t)?
            }
            (kind, Some(keys)) => {
                let mut e = net.mono.monotonic_row(g, keys, query, net.scale)?;
                if training && att.noise > 0.0 {
                    let z = (0..n)
                        .map(|_| gaussian_noise(rng, att.noise))
                        .collect::<Result<Vec<_>>>()?;
                    let z = g.constant_vector(z);
                    e = g.add(e, z)?;
                }
                let p = g.sigmoid(e);
                let mut alpha = alpha_row_var(g, p, alpha_prev, att.eps)?;
                if att.preserve_mass {
                    alpha = preserve_mass_var(g, alpha)?;
                }
                delays.push(expected_delay_var(g, alpha)?);
                alpha_prev = alpha;
                match kind {
                    AttentionKind::Monotonic => alpha,
                    AttentionKind::Mocha { chunk_size } => mocha_beta_var(g, alpha, u, chunk_size)?,
                    _ => milk_beta_var(g, alpha, u)?,
                }
            }
            (kind, None) => unreachable!("{kind} has a monotonic head"),
        };
        context = expected_context_var(g, beta, state_matrix)?;
        let log_probs = net.log_probs(g, query, context)?;
        let mut dist = vec![smooth / v as f64; v];
        dist[y as usize] += 1.0 - smooth;
        let dist = g.constant_vector(dist);
        let ll = g.dot(log_probs, dist)?;
        let tok = g.scale(ll, -1.0);
        nll = Some(match nll {
            Some(acc) => g.add(acc, tok)?,
            None => tok,
        });
        prev = y;
    }
    let nll = nll.expect("target is non-empty");
    let delays = g.concat(&delays)?;
    let dal = dal_var(g, delays, n)?;
    let dal_value = g.scalar(dal);
    let loss = if lambda == 0.0 {
        nll
    } else {
        let weighted = g.scale(dal, lambda);
        g.add_scalar(nll, weighted)?
    };
    Ok(Forward {
        loss,
        nll: g.scalar(nll),
        dal: dal_value,
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("latency weight must be >= 0, got {lambda}")));
    }
    Ok(())
}

fn tag(i: usize, e: Error) -> Error {
    match e {
        Error::NumericFailure(m) => Error::NumericFailure(format!("sentence {i}: {m}")),
        other => other,
    }
}

/// Mean objective over a batch and its gradient.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub loss: f64,
    pub nll: f64,
    /// Mean DAL of the expected delays.
    pub dal: f64,
    pub gradients: Params,
}

/// Loss and gradients of one batch, averaged over its sentences.
///
/// One seed per sentence is drawn from `rng` up front, so the result does
/// not depend on how sentences are scheduled across threads.
pub fn train_step(model: &Seq2Seq, batch: &Batch, lambda: f64, rng: &mut SeededRng) -> Result<StepOutput> {
    check_lambda(lambda)?;
    if batch.is_empty() {
        return Err(Error::invalid("train_step: empty batch"));
    }
    let seeds: Vec<u64> = (0..batch.len()).map(|_| rng.next_u64()).collect();
    let per_sentence: Vec<Result<(f64, f64, f64, Params)>> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let (source, target) = batch.pair(i);
            let mut g = Graph::new();
            let net = model.load(&mut g, true);
            let mut rng = SeededRng::new(seed);
            let f = sentence_forward(model, &mut g, &net, source, target, lambda, &mut rng, true).map_err(|e| tag(i, e))?;
            let loss = g.scalar(f.loss);
            if !loss.is_finite() {
                return Err(Error::numeric(format!(
                    "sentence {i}: loss is {loss} (nll {}, dal {})",
                    f.nll, f.dal
                )));
            }
            g.backward(f.loss).map_err(|e| tag(i, e))?;
            let mut grads = model.params.zeros_like();
            for (k, var) in net.vars.iter().enumerate() {
                if let Some(d) = g.grad(*var) {
                    grads.tensor_mut(k).data_mut().copy_from_slice(d);
                }
            }
            Ok((loss, f.nll, f.dal, grads))
        })
        .collect();
    let b = batch.len() as f64;
    let mut out = StepOutput {
        loss: 0.0,
        nll: 0.0,
        dal: 0.0,
        gradients: model.params.zeros_like(),
    };
    for r in per_sentence {
        let (loss, nll, dal, grads) = r?;
        out.loss += loss;
        out.nll += nll;
        out.dal += dal;
        out.gradients.add_assign(&grads);
    }
    out.loss /= b;
    out.nll /= b;
    out.dal /= b;
    out.gradients.scale(1.0 / b);
    Ok(out)
}

/// Noise-free objective on held-out pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSummary {
    pub loss: f64,
    pub nll: f64,
    pub expected_dal: f64,
}

pub fn evaluate(model: &Seq2Seq, pairs: &[SentencePair], lambda: f64) -> Result<EvalSummary> {
    check_lambda(lambda)?;
    if pairs.is_empty() {
        return Err(Error::invalid("evaluate: no sentence pairs"));
    }
    let rows: Vec<Result<(f64, f64, f64)>> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut g = Graph::new();
            let net = model.load(&mut g, false);
            let mut rng = SeededRng::new(0);
            let f = sentence_forward(model, &mut g, &net, &p.source, &p.target, lambda, &mut rng, false)
                .map_err(|e| tag(i, e))?;
            Ok((g.scalar(f.loss), f.nll, f.dal))
        })
        .collect();
    let mut s = EvalSummary {
        loss: 0.0,
        nll: 0.0,
        expected_dal: 0.0,
    };
    for r in rows {
        let (loss, nll, dal) = r?;
        s.loss += loss;
        s.nll += nll;
        s.expected_dal += dal;
    }
    let n = pairs.len() as f64;
    s.loss /= n;
    s.nll /= n;
    s.expected_dal /= n;
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub lambda: f64,
    pub eval_interval: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_size: 32,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            lambda: 0.0,
            eval_interval: 200,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 || self.eval_interval == 0 {
            return Err(Error::invalid("train: steps, batch_size and eval_interval must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.clip_norm > 0.0) {
            return Err(Error::invalid("train: learning_rate and clip_norm must be > 0"));
        }
        check_lambda(self.lambda)
    }
}

/// One evaluation point of a training run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    /// Mean training objective since the previous entry.
    pub train_loss: f64,
    /// Mean expected DAL on training batches since the previous entry.
    pub train_dal: f64,
    pub valid: Option<EvalSummary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub log: Vec<LogEntry>,
    /// Step whose parameters were kept.
    pub best_step: usize,
    pub best_valid_loss: Option<f64>,
    /// Set when training stopped on a non-finite loss or gradient.
    pub diverged: Option<String>,
}

/// Trains `model` in place and leaves it at the checkpoint with the lowest
/// validation objective (or the last step when `valid` is empty).
pub fn train(
    model: &mut Seq2Seq,
    train_pairs: &[SentencePair],
    valid: &[SentencePair],
    cfg: &TrainConfig,
    mut on_log: impl FnMut(&LogEntry),
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::invalid("train: no training pairs"));
    }
    let mut rng = SeededRng::new(cfg.seed);
    let mut opt = Adam::new(&model.params, cfg.learning_rate, cfg.clip_norm);
    let epoch_seed = |epoch: u64| SeededRng::for_stream(cfg.seed, epoch).next_u64();
    let mut epoch = 0;
    let mut batches = make_batches(train_pairs, cfg.batch_size, epoch_seed(epoch))?;
    let mut next = 0;
    let mut report = TrainReport {
        log: Vec::new(),
        best_step: 0,
        best_valid_loss: None,
        diverged: None,
    };
    let mut best = model.params.clone();
    let (mut sum_loss, mut sum_dal, mut count) = (0.0, 0.0, 0usize);
    for step in 1..=cfg.steps {
        if next == batches.len() {
            epoch += 1;
            batches = make_batches(train_pairs, cfg.batch_size, epoch_seed(epoch))?;
            next = 0;
        }
        let out = match train_step(model, &batches[next], cfg.lambda, &mut rng) {
            Ok(out) => out,
            Err(Error::NumericFailure(m)) => {
                report.diverged = Some(format!("step {step}: {m}"));
                break;
            }
            Err(e) => return Err(e),
        };
        next += 1;
        if let Err(Error::NumericFailure(m)) = opt.update(&mut model.params, &out.gradients) {
            report.diverged = Some(format!("step {step}: {m}"));
            break;
        }
        sum_loss += out.loss;
        sum_dal += out.dal;
        count += 1;
        if step % cfg.eval_interval == 0 || step == cfg.steps {
            let valid = if valid.is_empty() {
                None
            } else {
                match evaluate(model, valid, cfg.lambda) {
                    Ok(s) if s.loss.is_finite() => Some(s),
                    Ok(s) => {
                        report.diverged = Some(format!("step {step}: validation loss is {}", s.loss));
                        break;
                    }
                    Err(Error::NumericFailure(m)) => {
                        report.diverged = Some(format!("step {step}: {m}"));
                        break;
                    }
                    Err(e) => return Err(e),
                }
            };
            let entry = LogEntry {
                step,
                train_loss: sum_loss / count as f64,
                train_dal: sum_dal / count as f64,
                valid,
            };
            (sum_loss, sum_dal, count) = (0.0, 0.0, 0);
            on_log(&entry);
            report.log.push(entry);
            let improved = match (valid, report.best_valid_loss) {
                (None, _) => true,
                (Some(s), None) => s.loss.is_finite(),
                (Some(s), Some(b)) => s.loss < b,
            };
            if improved {
                report.best_step = step;
                report.best_valid_loss = valid.map(|s| s.loss);
                best.clone_from(&model.params);
            }
        }
    }
    model.params = best;
    Ok(report)
}
