//! Experiment orchestration behind the command line: training runs,
//! latency–quality sweeps, decoding with trace export, attention dumps,
//! and initial-delay histograms.

mod config;
mod svg;
mod traces;

pub use config::{
    CorpusFiles, ModelSettings, RunConfig, SweepSettings, DEFAULT_CHUNK_SIZES, DEFAULT_KS, DEFAULT_LAMBDAS,
};
pub use svg::{attention_heatmap, histogram};
pub use traces::{read_traces, write_trace, StoredTrace};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::attention::{AttentionKind, WaitKSchedule};
use crate::data::{generate_split, load_parallel_corpus, SentencePair, Vocabulary};
use crate::error::{Error, Result};
use crate::latency::{delays_from_trace, LatencyReport};
use crate::model::{
    greedy_simultaneous_decode, save_checkpoint, sequence_accuracy, train, DecodeOutput, LogEntry, Seq2Seq,
    TrainConfig, TrainReport,
};

/// Header of sweep curve files.
pub const CURVE_HEADER: &str = "method,param,seed,quality,AP,AL,DAL";

/// Training, validation and test pairs with their vocabulary.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub train: Vec<SentencePair>,
    pub valid: Vec<SentencePair>,
    pub test: Vec<SentencePair>,
}

/// Generates the synthetic splits (disjoint index ranges of one task) or
/// loads the configured corpus.
pub fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    if let Some(c) = &cfg.corpus {
        let vocab = Vocabulary::from_file(&c.vocab)?;
        let load = |(s, t): &(PathBuf, PathBuf)| load_parallel_corpus(s, t, &vocab);
        let train = load(&c.train)?;
        let valid = if c.valid.0.as_os_str().is_empty() {
            Vec::new()
        } else {
            load(&c.valid)?
        };
        let test = load(&c.test)?;
        if train.is_empty() || test.is_empty() {
            return Err(Error::invalid("corpus: train and test files must be non-empty"));
        }
        return Ok(Dataset {
            vocab,
            train,
            valid,
            test,
        });
    }
    let t = &cfg.task;
    let n_train = cfg.train_size as u64;
    let n_valid = cfg.valid_size as u64;
    Ok(Dataset {
        vocab: t.vocabulary(),
        train: generate_split(t, 0, cfg.train_size)?,
        valid: generate_split(t, n_train, cfg.valid_size)?,
        test: generate_split(t, n_train + n_valid, cfg.test_size)?,
    })
}

/// One point of a latency–quality curve.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRecord {
    pub method: String,
    /// λ, k or chunk size, depending on the method.
    pub param: f64,
    pub seed: u64,
    /// Sequence accuracy on the test split.
    pub quality: f64,
    pub ap: f64,
    pub al: f64,
    pub dal: f64,
    pub wall_time_s: f64,
}

impl ExperimentRecord {
    fn failed(method: &str, param: f64, seed: u64) -> Self {
        ExperimentRecord {
            method: method.into(),
            param,
            seed,
            quality: f64::NAN,
            ap: f64::NAN,
            al: f64::NAN,
            dal: f64::NAN,
            wall_time_s: 0.0,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.dal.is_nan()
    }

    /// CSV row matching [`CURVE_HEADER`].
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.method, self.param, self.seed, self.quality, self.ap, self.al, self.dal
        )
    }
}

/// Test-set quality and mean per-sentence latency of decoded outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct TestEvaluation {
    pub sequence_accuracy: f64,
    pub token_accuracy: f64,
    pub latency: LatencyReport,
    pub outputs: Vec<DecodeOutput>,
}

impl TestEvaluation {
    /// Reads before the first write of every sentence.
    pub fn initial_delays(&self) -> Vec<usize> {
        self.outputs
            .iter()
            .map(|o| o.trace.initial_delay().unwrap_or(o.trace.reads()))
            .collect()
    }
}

/// Greedy decoding of every test pair; γ uses the hypothesis length.
pub fn evaluate_test(model: &Seq2Seq, pairs: &[SentencePair]) -> Result<TestEvaluation> {
    if pairs.is_empty() {
        return Err(Error::invalid("evaluate_test: no sentence pairs"));
    }
    let outputs = pairs
        .par_iter()
        .map(|p| greedy_simultaneous_decode(model, &p.source, None))
        .collect::<Result<Vec<_>>>()?;
    let hyps: Vec<&[u32]> = outputs.iter().map(|o| o.tokens.as_slice()).collect();
    let refs: Vec<&[u32]> = pairs.iter().map(|p| p.target.as_slice()).collect();
    let acc = sequence_accuracy(&hyps, &refs)?;
    let mut total = LatencyReport {
        ap: 0.0,
        al: 0.0,
        dal: 0.0,
    };
    for o in &outputs {
        let r = LatencyReport::of(&o.delays()?);
        total.ap += r.ap;
        total.al += r.al;
        total.dal += r.dal;
    }
    let n = pairs.len() as f64;
    Ok(TestEvaluation {
        sequence_accuracy: acc.sequence,
        token_accuracy: acc.token,
        latency: LatencyReport {
            ap: total.ap / n,
            al: total.al / n,
            dal: total.dal / n,
        },
        outputs,
    })
}

/// A trained model with its training log and test evaluation.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub model: Seq2Seq,
    pub report: TrainReport,
    pub test: TestEvaluation,
    pub wall_time_s: f64,
}

/// Soft-attention model trained for `cfg.warm_start_steps` steps from
/// `seed`, or `None` when warm starts are disabled.
pub fn warm_start(
    cfg: &RunConfig,
    data: &Dataset,
    seed: u64,
    on_log: impl FnMut(&LogEntry),
) -> Result<Option<(Seq2Seq, TrainReport)>> {
    if cfg.warm_start_steps == 0 {
        return Ok(None);
    }
    let mut model = Seq2Seq::new(cfg.model.model_config(data.vocab.len(), AttentionKind::Soft)?, seed)?;
    let train_cfg = TrainConfig {
        steps: cfg.warm_start_steps,
        lambda: 0.0,
        seed,
        ..cfg.train
    };
    let report = train(&mut model, &data.train, &data.valid, &train_cfg, on_log)?;
    if let Some(why) = &report.diverged {
        return Err(Error::numeric(format!("warm start diverged at {why}")));
    }
    Ok(Some((model, report)))
}

/// Starting point of a run: the warm-start parameters for every kind but
/// soft, a fresh initialisation otherwise.
pub fn initial_model(
    cfg: &RunConfig,
    data: &Dataset,
    kind: AttentionKind,
    seed: u64,
    warm: Option<&Seq2Seq>,
) -> Result<Seq2Seq> {
    let model_cfg = cfg.model.model_config(data.vocab.len(), kind)?;
    match warm {
        Some(w) if kind != AttentionKind::Soft => w.with_attention(model_cfg.attention),
        _ => Seq2Seq::new(model_cfg, seed),
    }
}

/// Trains one model of `kind` with latency weight `lambda` and seed `seed`
/// (batch order, noise, and parameters when not warm-started), then
/// decodes the test split.
pub fn run_point(
    cfg: &RunConfig,
    data: &Dataset,
    kind: AttentionKind,
    lambda: f64,
    seed: u64,
    warm: Option<&Seq2Seq>,
    on_log: impl FnMut(&LogEntry),
) -> Result<RunOutcome> {
    let start = Instant::now();
    let mut model = initial_model(cfg, data, kind, seed, warm)?;
    let train_cfg = TrainConfig {
        lambda,
        seed,
        ..cfg.train
    };
    let report = train(&mut model, &data.train, &data.valid, &train_cfg, on_log)?;
    if let Some(why) = &report.diverged {
        return Err(Error::numeric(format!("training diverged at {why}")));
    }
    let test = evaluate_test(&model, &data.test)?;
    Ok(RunOutcome {
        model,
        report,
        test,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn log_csv(phases: &[(&str, &[LogEntry])]) -> String {
    let mut s = String::from("phase,step,train_loss,train_expected_dal,valid_loss,valid_nll,valid_expected_dal\n");
    for (phase, log) in phases {
        for e in log.iter() {
            let (vl, vn, vd) = e
                .valid
                .map_or((f64::NAN, f64::NAN, f64::NAN), |v| (v.loss, v.nll, v.expected_dal));
            let _ = writeln!(s, "{phase},{},{},{},{vl},{vn},{vd}", e.step, e.train_loss, e.train_dal);
        }
    }
    s
}

fn traces_text(outputs: &[DecodeOutput], vocab: &Vocabulary) -> Result<String> {
    let mut s = String::new();
    for o in outputs {
        write_trace(&mut s, &o.trace, vocab)?;
    }
    Ok(s)
}

/// Result of [`cmd_train`].
#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub report: TrainReport,
    pub test: Option<TestEvaluation>,
}

/// Trains the configured model, after the warm start for streaming kinds.
/// Writes `config.txt`, `train_log.csv`, `model.ckpt` (best validation
/// objective), and test translations and traces. A diverged run still
/// writes its last good checkpoint before failing with a numeric error.
pub fn cmd_train(cfg: &RunConfig, mut on_log: impl FnMut(&str, &LogEntry)) -> Result<TrainSummary> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let kind = cfg.model.kind()?;
    let dir = &cfg.out_dir;
    create_dir(dir)?;
    write_file(&dir.join("config.txt"), cfg.to_text())?;
    let warm = if kind == AttentionKind::Soft {
        None
    } else {
        warm_start(cfg, &data, cfg.train.seed, |e| on_log("warm", e))?
    };
    let mut model = initial_model(cfg, &data, kind, cfg.train.seed, warm.as_ref().map(|w| &w.0))?;
    let report = train(&mut model, &data.train, &data.valid, &cfg.train, |e| on_log("main", e))?;
    let warm_log = warm.as_ref().map_or(&[][..], |w| &w.1.log[..]);
    write_file(&dir.join("train_log.csv"), log_csv(&[("warm", warm_log), ("main", &report.log)]))?;
    let checkpoint = dir.join("model.ckpt");
    save_checkpoint(&checkpoint, &model, &data.vocab)?;
    if let Some(why) = &report.diverged {
        return Err(Error::numeric(format!(
            "training diverged at {why}; last good checkpoint kept in {}",
            checkpoint.display()
        )));
    }
    let test = evaluate_test(&model, &data.test)?;
    let lines: Vec<String> = test.outputs.iter().map(|o| data.vocab.decode_line(&o.tokens)).collect();
    write_file(&dir.join("test_output.txt"), lines.join("\n") + "\n")?;
    write_file(&dir.join("test_traces.jsonl"), traces_text(&test.outputs, &data.vocab)?)?;
    let summary = format!(
        "best_step={}\nsequence_accuracy={}\ntoken_accuracy={}\nAP={}\nAL={}\nDAL={}\n",
        report.best_step,
        test.sequence_accuracy,
        test.token_accuracy,
        test.latency.ap,
        test.latency.al,
        test.latency.dal
    );
    write_file(&dir.join("summary.txt"), summary)?;
    Ok(TrainSummary {
        checkpoint,
        report,
        test: Some(test),
    })
}

/// Grid points of a sweep as `(method, param, kind, λ)`.
pub fn sweep_points(cfg: &RunConfig) -> Result<Vec<(String, f64, AttentionKind, f64)>> {
    let lambda = cfg.train.lambda;
    let mut points = Vec::new();
    for m in &cfg.sweep.methods {
        match m.parse::<AttentionKind>()? {
            kind @ (AttentionKind::Milk | AttentionKind::Monotonic) => {
                for &l in &cfg.sweep.lambdas {
                    points.push((kind.name().to_string(), l, kind, l));
                }
            }
            AttentionKind::Mocha { .. } => {
                for &cs in &cfg.sweep.chunk_sizes {
                    points.push(("mocha".into(), cs as f64, AttentionKind::Mocha { chunk_size: cs }, lambda));
                }
            }
            AttentionKind::WaitK(_) => {
                for &k in &cfg.sweep.ks {
                    let s = WaitKSchedule::new(k, cfg.model.emission_rate)?;
                    points.push(("wait_k".into(), k as f64, AttentionKind::WaitK(s), 0.0));
                }
            }
            AttentionKind::Soft => points.push(("soft".into(), 0.0, AttentionKind::Soft, 0.0)),
        }
    }
    Ok(points)
}

/// Sorts rows by method, then DAL ascending; failed rows go last.
pub fn sort_records(records: &mut [ExperimentRecord]) {
    records.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.dal.total_cmp(&b.dal))
            .then(a.param.total_cmp(&b.param))
            .then(a.seed.cmp(&b.seed))
    });
}

pub fn curves_csv(records: &[ExperimentRecord]) -> String {
    let mut s = format!("{CURVE_HEADER}\n");
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Result of [`cmd_sweep`].
#[derive(Clone, Debug)]
pub struct SweepSummary {
    pub records: Vec<ExperimentRecord>,
    pub curves: PathBuf,
    /// `(record index, error)` for runs that failed.
    pub failures: Vec<(usize, String)>,
}

fn run_name(method: &str, param: f64, seed: u64) -> String {
    format!("{method}_{param}_{seed}")
}

/// Trains and evaluates every grid point for every seed, streaming kinds
/// from one warm start per seed. Writes
/// `curves.csv`, `config.txt`, and per-run traces and checkpoints under
/// `traces/` and `checkpoints/`. A failed run becomes a row of NaNs.
pub fn cmd_sweep(cfg: &RunConfig, mut progress: impl FnMut(&ExperimentRecord)) -> Result<SweepSummary> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let dir = &cfg.out_dir;
    for d in [dir.clone(), dir.join("traces"), dir.join("checkpoints")] {
        create_dir(&d)?;
    }
    write_file(&dir.join("config.txt"), cfg.to_text())?;
    let points = sweep_points(cfg)?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut timing = String::from("method,param,seed,wall_time_s,status\n");
    for &seed in &cfg.sweep.seeds {
        let warm = if points.iter().any(|p| p.2 != AttentionKind::Soft) {
            match warm_start(cfg, &data, seed, |_| {}) {
                Ok(Some((w, _))) => {
                    save_checkpoint(&dir.join("checkpoints").join(format!("warm_{seed}.ckpt")), &w, &data.vocab)?;
                    Ok(Some(w))
                }
                Ok(None) => Ok(None),
                Err(e @ Error::NumericFailure(_)) => Err(e.to_string()),
                Err(e) => return Err(e),
            }
        } else {
            Ok(None)
        };
        for (method, param, kind, lambda) in &points {
            let (method, param, kind, lambda) = (method.as_str(), *param, *kind, *lambda);
            let name = run_name(method, param, seed);
            let outcome = match &warm {
                Ok(w) => run_point(cfg, &data, kind, lambda, seed, w.as_ref(), |_| {}),
                Err(why) if kind != AttentionKind::Soft => Err(Error::numeric(why.clone())),
                Err(_) => run_point(cfg, &data, kind, lambda, seed, None, |_| {}),
            };
            let record = match outcome {
                Ok(run) => {
                    write_file(
                        &dir.join("traces").join(format!("{name}.jsonl")),
                        traces_text(&run.test.outputs, &data.vocab)?,
                    )?;
                    save_checkpoint(&dir.join("checkpoints").join(format!("{name}.ckpt")), &run.model, &data.vocab)?;
                    ExperimentRecord {
                        method: method.into(),
                        param,
                        seed,
                        quality: run.test.sequence_accuracy,
                        ap: run.test.latency.ap,
                        al: run.test.latency.al,
                        dal: run.test.latency.dal,
                        wall_time_s: run.wall_time_s,
                    }
                }
                Err(e @ (Error::NumericFailure(_) | Error::ContractViolation(_))) => {
                    failures.push((records.len(), e.to_string()));
                    ExperimentRecord::failed(method, param, seed)
                }
                Err(e) => return Err(e),
            };
            let status = if record.is_failed() { "failed" } else { "ok" };
            let _ = writeln!(timing, "{method},{param},{seed},{:.3},{status}", record.wall_time_s);
            progress(&record);
            records.push(record);
        }
    }
    let mut sorted = records.clone();
    sort_records(&mut sorted);
    let curves = dir.join("curves.csv");
    write_file(&curves, curves_csv(&sorted))?;
    write_file(&dir.join("timing.csv"), timing)?;
    Ok(SweepSummary {
        records: sorted,
        curves,
        failures,
    })
}

/// Decodes every line of `input`. Writes translations to `output` and
/// traces to `traces`; `kind` overrides the checkpoint's attention kind
/// for decoding (wait-k schedules apply to any model).
pub fn cmd_decode(
    checkpoint: &Path,
    input: &Path,
    output: &Path,
    traces: &Path,
    kind: Option<AttentionKind>,
) -> Result<Vec<LatencyReport>> {
    let (model, vocab) = crate::model::load_checkpoint(checkpoint)?;
    let model = match kind {
        Some(k) => model.with_attention(crate::attention::AttentionConfig {
            kind: k,
            ..model.config().attention
        })?,
        None => model,
    };
    let text = fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let sources: Vec<Vec<u32>> = text.lines().map(|l| vocab.encode_line(l)).collect();
    let outputs = sources
        .par_iter()
        .map(|s| greedy_simultaneous_decode(&model, s, None))
        .collect::<Result<Vec<_>>>()?;
    let mut lines = String::new();
    let mut trace_text = String::new();
    let mut reports = Vec::new();
    for o in &outputs {
        lines.push_str(&vocab.decode_line(&o.tokens));
        lines.push('\n');
        reports.push(write_trace(&mut trace_text, &o.trace, &vocab)?);
    }
    write_file(output, lines)?;
    write_file(traces, trace_text)?;
    Ok(reports)
}

/// Attention matrix of one decoded sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionDump {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub heads: Vec<usize>,
}

impl AttentionDump {
    /// One row per output step: `step,token,head,w_1,...,w_|x|`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,token,head");
        for (j, t) in self.source.iter().enumerate() {
            let _ = write!(s, ",{}:{}", j + 1, t.replace(',', "_"));
        }
        s.push('\n');
        for (i, row) in self.weights.iter().enumerate() {
            let _ = write!(s, "{},{},{}", i + 1, self.target[i].replace(',', "_"), self.heads[i]);
            for w in row {
                let _ = write!(s, ",{w}");
            }
            s.push('\n');
        }
        s
    }
}

/// Decodes `sentence` and writes `attention.csv` and `attention.svg` into
/// `out_dir`.
pub fn cmd_dump_attention(checkpoint: &Path, sentence: &str, out_dir: &Path) -> Result<AttentionDump> {
    let (model, vocab) = crate::model::load_checkpoint(checkpoint)?;
    let source = vocab.encode_line(sentence);
    let out = greedy_simultaneous_decode(&model, &source, None)?;
    let name = |t: &u32| vocab.token(*t).unwrap_or("<unk>").to_string();
    let dump = AttentionDump {
        source: source.iter().map(name).collect(),
        target: out.tokens.iter().map(name).collect(),
        weights: out.attention,
        heads: out.heads,
    };
    create_dir(out_dir)?;
    write_file(&out_dir.join("attention.csv"), dump.to_csv())?;
    write_file(
        &out_dir.join("attention.svg"),
        attention_heatmap(&dump.weights, &dump.heads, &dump.source, &dump.target),
    )?;
    Ok(dump)
}

/// Initial-delay counts per trace file.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayHistogram {
    pub bins: Vec<usize>,
    /// `(system name, count per bin)`.
    pub series: Vec<(String, Vec<usize>)>,
}

impl DelayHistogram {
    pub fn to_table(&self) -> String {
        let mut s = String::from("initial_delay");
        for (name, _) in &self.series {
            let _ = write!(s, ",{name}");
        }
        s.push('\n');
        for (b, bin) in self.bins.iter().enumerate() {
            let _ = write!(s, "{bin}");
            for (_, counts) in &self.series {
                let _ = write!(s, ",{}", counts[b]);
            }
            s.push('\n');
        }
        s
    }
}

fn system_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Pure histogram of initial delays: one series per named system.
pub fn delay_histogram(systems: &[(String, Vec<usize>)]) -> Result<DelayHistogram> {
    if systems.is_empty() || systems.iter().all(|(_, d)| d.is_empty()) {
        return Err(Error::invalid("delay histogram: no traces"));
    }
    let max = systems.iter().flat_map(|(_, d)| d.iter().copied()).max().unwrap_or(0);
    let bins: Vec<usize> = (0..=max).collect();
    let series = systems
        .iter()
        .map(|(name, delays)| {
            let mut counts = vec![0; bins.len()];
            for &d in delays {
                counts[d] += 1;
            }
            (name.clone(), counts)
        })
        .collect();
    Ok(DelayHistogram { bins, series })
}

/// Bins initial delays of each trace file (one system per file) and writes
/// `initial_delays.csv` and `initial_delays.svg` into `out_dir`.
pub fn cmd_delay_histogram(trace_files: &[PathBuf], out_dir: &Path) -> Result<DelayHistogram> {
    if trace_files.is_empty() {
        return Err(Error::invalid("delay histogram: no trace files"));
    }
    let mut systems = Vec::new();
    for path in trace_files {
        let delays = read_traces(path, None)?
            .iter()
            .map(|t| t.trace.initial_delay().unwrap_or(t.trace.reads()))
            .collect();
        systems.push((system_name(path), delays));
    }
    let h = delay_histogram(&systems)?;
    create_dir(out_dir)?;
    write_file(&out_dir.join("initial_delays.csv"), h.to_table())?;
    write_file(&out_dir.join("initial_delays.svg"), histogram(&h.series, &h.bins))?;
    Ok(h)
}

/// Latency of one trace file, recomputed from its actions.
#[derive(Clone, Debug, PartialEq)]
pub struct LatencySummary {
    pub name: String,
    pub sentences: usize,
    pub mean: LatencyReport,
    /// Largest difference between recomputed and recorded per-sentence
    /// metrics.
    pub max_recorded_diff: f64,
}

/// Recomputes AP/AL/DAL of every sentence in each trace file.
pub fn cmd_eval_latency(trace_files: &[PathBuf]) -> Result<Vec<LatencySummary>> {
    if trace_files.is_empty() {
        return Err(Error::invalid("eval-latency: no trace files"));
    }
    let mut out = Vec::new();
    for path in trace_files {
        let stored = read_traces(path, None)?;
        if stored.is_empty() {
            return Err(Error::invalid(format!("{}: no traces", path.display())));
        }
        let mut mean = LatencyReport {
            ap: 0.0,
            al: 0.0,
            dal: 0.0,
        };
        let mut diff: f64 = 0.0;
        for s in &stored {
            let r = LatencyReport::of(&delays_from_trace(&s.trace)?);
            mean.ap += r.ap;
            mean.al += r.al;
            mean.dal += r.dal;
            for (a, b) in [(r.ap, s.recorded.ap), (r.al, s.recorded.al), (r.dal, s.recorded.dal)] {
                diff = diff.max((a - b).abs());
            }
        }
        let n = stored.len() as f64;
        out.push(LatencySummary {
            name: system_name(path),
            sentences: stored.len(),
            mean: LatencyReport {
                ap: mean.ap / n,
                al: mean.al / n,
                dal: mean.dal / n,
            },
            max_recorded_diff: diff,
        });
    }
    Ok(out)
}
