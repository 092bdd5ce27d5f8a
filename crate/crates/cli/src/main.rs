use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use milkstream::harness::{self, ModelSettings, RunConfig};
use milkstream::Error;

#[derive(Parser)]
#[command(name = "milkstream", version, about = "Simultaneous attention models: train, sweep, decode, inspect")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and evaluate it on the test split.
    Train(RunArgs),
    /// Train a grid of models and write latency–quality curves.
    Sweep(RunArgs),
    /// Translate a file with a checkpoint and export read/write traces.
    Decode(DecodeArgs),
    /// Write the attention matrix of one sentence as CSV and SVG.
    DumpAttention(DumpArgs),
    /// Histogram of initial delays from trace files.
    DelayHistogram(HistogramArgs),
    /// Recompute AP, AL and DAL from trace files.
    EvalLatency(EvalArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file; flags override its keys.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Attention kind (sweep: comma-separated methods).
    #[arg(long, value_name = "KIND")]
    attention: Option<String>,
    /// Latency loss weight λ (sweep: comma-separated grid).
    #[arg(long, value_name = "λ")]
    latency_weight: Option<String>,
    /// Wait-k lag (sweep: comma-separated grid).
    #[arg(long, value_name = "N")]
    k: Option<String>,
    /// MoChA chunk size (sweep: comma-separated grid).
    #[arg(long, value_name = "N")]
    chunk_size: Option<String>,
    /// Standard deviation of pre-sigmoid training noise.
    #[arg(long, value_name = "N")]
    noise: Option<String>,
    /// Wait-k emission rate.
    #[arg(long, value_name = "R")]
    emission_rate: Option<String>,
    /// Seed (sweep: comma-separated seeds).
    #[arg(long, value_name = "N")]
    seed: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Any other config key, as section.key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// One source sentence per line.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Receives translations.txt and traces.jsonl.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Decode with this attention kind instead of the checkpoint's.
    #[arg(long, value_name = "KIND")]
    attention: Option<String>,
    #[arg(long, value_name = "N")]
    k: Option<usize>,
    #[arg(long, value_name = "N")]
    chunk_size: Option<usize>,
    #[arg(long, value_name = "R")]
    emission_rate: Option<f64>,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
    /// Space-separated source tokens.
    #[arg(long)]
    sentence: String,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct HistogramArgs {
    /// JSONL trace files, one system each.
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// JSONL trace files.
    #[arg(required = true)]
    traces: Vec<PathBuf>,
}

/// 1 usage, 2 numeric, 3 io or format.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 1,
        Error::NumericFailure(_) | Error::ContractViolation(_) => 2,
        Error::Format { .. } | Error::Version(_) | Error::Io { .. } => 3,
    }
}

fn run_config(a: &RunArgs, sweep: bool) -> Result<RunConfig, Error> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let keys: [(&Option<String>, &str, &str); 7] = [
        (&a.attention, "model.attention", "sweep.methods"),
        (&a.latency_weight, "train.latency_weight", "sweep.lambdas"),
        (&a.k, "model.k", "sweep.ks"),
        (&a.chunk_size, "model.chunk_size", "sweep.chunk_sizes"),
        (&a.noise, "model.noise", "model.noise"),
        (&a.emission_rate, "model.emission_rate", "model.emission_rate"),
        (&a.seed, "train.seed", "sweep.seeds"),
    ];
    for (value, single, grid) in keys {
        if let Some(v) = value {
            cfg.set(if sweep { grid } else { single }, v)?;
        }
    }
    if let Some(out) = &a.out {
        cfg.out_dir = out.clone();
    }
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(a: &RunArgs) -> Result<(), Error> {
    let cfg = run_config(a, false)?;
    let summary = harness::cmd_train(&cfg, |phase, e| {
        let valid = e
            .valid
            .map(|v| format!(" valid loss {:.4} expected DAL {:.3}", v.loss, v.expected_dal))
            .unwrap_or_default();
        eprintln!(
            "{phase} step {}: loss {:.4} expected DAL {:.3}{valid}",
            e.step, e.train_loss, e.train_dal
        );
    })?;
    println!("checkpoint {}", summary.checkpoint.display());
    if let Some(t) = summary.test {
        println!(
            "test sequence accuracy {:.4} token accuracy {:.4} AP {:.4} AL {:.4} DAL {:.4}",
            t.sequence_accuracy, t.token_accuracy, t.latency.ap, t.latency.al, t.latency.dal
        );
    }
    Ok(())
}

fn sweep(a: &RunArgs) -> Result<(), Error> {
    let cfg = run_config(a, true)?;
    let summary = harness::cmd_sweep(&cfg, |r| {
        eprintln!(
            "{} {} seed {}: quality {:.4} AP {:.4} AL {:.4} DAL {:.4} ({:.1} s)",
            r.method, r.param, r.seed, r.quality, r.ap, r.al, r.dal, r.wall_time_s
        )
    })?;
    print!("{}", harness::curves_csv(&summary.records));
    for (i, why) in &summary.failures {
        eprintln!("run {i} failed: {why}");
    }
    eprintln!("curves written to {}", summary.curves.display());
    Ok(())
}

fn decode(a: &DecodeArgs) -> Result<(), Error> {
    let kind = match &a.attention {
        Some(name) => {
            let d = ModelSettings::default();
            let settings = ModelSettings {
                attention: name.clone(),
                k: a.k.unwrap_or(d.k),
                chunk_size: a.chunk_size.unwrap_or(d.chunk_size),
                emission_rate: a.emission_rate.unwrap_or(d.emission_rate),
                ..d
            };
            Some(settings.kind()?)
        }
        None => None,
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    let reports = harness::cmd_decode(
        &a.checkpoint,
        &a.input,
        &a.out.join("translations.txt"),
        &a.out.join("traces.jsonl"),
        kind,
    )?;
    let n = reports.len().max(1) as f64;
    let mean = |f: fn(&milkstream::latency::LatencyReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    println!(
        "{} sentences: AP {:.4} AL {:.4} DAL {:.4}",
        reports.len(),
        mean(|r| r.ap),
        mean(|r| r.al),
        mean(|r| r.dal)
    );
    Ok(())
}

fn dump_attention(a: &DumpArgs) -> Result<(), Error> {
    let dump = harness::cmd_dump_attention(&a.checkpoint, &a.sentence, &a.out)?;
    println!("{}", dump.target.join(" "));
    print!("{}", dump.to_csv());
    Ok(())
}

fn delay_histogram(a: &HistogramArgs) -> Result<(), Error> {
    let h = harness::cmd_delay_histogram(&a.traces, &a.out)?;
    print!("{}", h.to_table());
    Ok(())
}

fn eval_latency(a: &EvalArgs) -> Result<(), Error> {
    println!("system,sentences,AP,AL,DAL,max_recorded_diff");
    for s in harness::cmd_eval_latency(&a.traces)? {
        println!(
            "{},{},{},{},{},{:e}",
            s.name, s.sentences, s.mean.ap, s.mean.al, s.mean.dal, s.max_recorded_diff
        );
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Sweep(a) => sweep(a),
        Command::Decode(a) => decode(a),
        Command::DumpAttention(a) => dump_attention(a),
        Command::DelayHistogram(a) => delay_histogram(a),
        Command::EvalLatency(a) => eval_latency(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

