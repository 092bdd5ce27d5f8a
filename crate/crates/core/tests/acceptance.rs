//! Acceptance suite: criteria 1 to 9, one pass/fail line each.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use milkstream::attention::{milk_beta_row, mocha_beta_row, AttentionConfig, AttentionKind, WaitKSchedule};
use milkstream::data::{generate_split, make_batches, TaskKind, TaskSpec};
use milkstream::harness::{self, ExperimentRecord, RunConfig, SweepSummary};
use milkstream::latency::{
    average_lagging, average_proportion, clamp_delays, delays_from_trace, differentiable_average_lagging,
    DecodeTrace, DelayVector, LatencyReport,
};
use milkstream::model::{evaluate, load_checkpoint, train_step, ModelConfig, Seq2Seq};
use milkstream::numerics::{check_gradient, finite_difference_gradient, masked_softmax, SeededRng, Tensor};

mod common;
use common::{enumerate_contexts, expectation_contexts};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() < tol
}

fn metric_identities() -> Outcome {
    let tol = 1e-12;
    let d = DelayVector::new(vec![3.0, 4.0, 4.0, 4.0], 4).unwrap();
    let al = average_lagging(&d);
    let untruncated = d.g().iter().enumerate().map(|(i, g)| g - i as f64 / d.gamma()).sum::<f64>() / 4.0;
    let clamped = clamp_delays(&d);
    let dal = differentiable_average_lagging(&d);
    let ap = average_proportion(&DelayVector::new(vec![1.0, 2.0], 2).unwrap());
    let pass = close(al, 3.0, tol)
        && close(untruncated, 2.25, tol)
        && clamped == vec![3.0, 4.0, 5.0, 6.0]
        && close(dal, 3.0, tol)
        && close(ap, 0.75, tol);
    outcome(
        pass,
        format!("AL={al} untruncated={untruncated} g'={clamped:?} DAL={dal} AP={ap}"),
    )
}

fn wait_k_law() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for k in 1..=8 {
        let s = WaitKSchedule::new(k, 1.0).unwrap();
        for n in k..=20 {
            let mut t = DecodeTrace::new(n);
            for i in 1..=n {
                while t.reads() < s.reads_before_write(i, n) {
                    t.push_read(4);
                }
                t.push_write(4);
            }
            let r = LatencyReport::of(&delays_from_trace(&t).unwrap());
            worst = worst.max((r.al - k as f64).abs()).max((r.dal - k as f64).abs());
            cases += 1;
        }
    }
    outcome(worst == 0.0, format!("{cases} traces, max |lag - k| = {worst:e}"))
}

fn random_rows(rng: &mut SeededRng, rows: usize, cols: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.uniform_range(lo, hi)).collect())
        .collect()
}

fn oracle_equivalence() -> Outcome {
    let mut rng = SeededRng::new(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let nx = 1 + rng.below(6) as usize;
        let ny = 1 + rng.below(4) as usize;
        let p = random_rows(&mut rng, ny, nx, 0.02, 0.98);
        let u = random_rows(&mut rng, ny, nx, -3.0, 3.0);
        let h = Tensor::matrix(nx, 3, random_rows(&mut rng, 1, nx * 3, -2.0, 2.0).remove(0)).unwrap();
        let brute = enumerate_contexts(&p, &u, &h);
        let closed = expectation_contexts(&p, &u, &h);
        for (a, b) in brute.iter().flatten().zip(closed.iter().flatten()) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst < 1e-8, format!("100 instances, max abs err {worst:e}"))
}

fn reductions() -> Outcome {
    let mut rng = SeededRng::new(4);
    let (mut to_mono, mut to_milk, mut to_soft): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let max_err = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    for _ in 0..100 {
        let n = 1 + rng.below(10) as usize;
        let raw: Vec<f64> = (0..n).map(|_| 0.01 + rng.uniform()).collect();
        let total: f64 = raw.iter().sum::<f64>();
        let alpha: Vec<f64> = raw.iter().map(|a| a / total).collect();
        let u: Vec<f64> = (0..n).map(|_| rng.uniform_range(-4.0, 4.0)).collect();
        to_mono = to_mono.max(max_err(&mocha_beta_row(&alpha, &u, 1).unwrap(), &alpha));
        to_milk = to_milk.max(max_err(
            &mocha_beta_row(&alpha, &u, n).unwrap(),
            &milk_beta_row(&alpha, &u).unwrap(),
        ));
        let mut one_hot = vec![0.0; n];
        one_hot[n - 1] = 1.0;
        to_soft = to_soft.max(max_err(
            &milk_beta_row(&one_hot, &u).unwrap(),
            &masked_softmax(&u, n).unwrap(),
        ));
    }
    let pass = to_mono < 1e-10 && to_milk < 1e-10 && to_soft < 1e-10;
    outcome(
        pass,
        format!("max err mocha(1)/monotonic {to_mono:e}, mocha(|x|)/milk {to_milk:e}, milk(one-hot)/soft {to_soft:e}"),
    )
}

fn gradient_integrity() -> Outcome {
    let spec = TaskSpec {
        kind: TaskKind::Copy,
        vocab_size: 2,
        min_len: 2,
        max_len: 3,
        ..TaskSpec::default()
    };
    let pairs = generate_split(&spec, 0, 2).unwrap();
    let batch = make_batches(&pairs, 2, 0).unwrap().remove(0);
    let attention = AttentionConfig {
        kind: AttentionKind::Milk,
        noise: 0.0,
        ..AttentionConfig::default()
    };
    let mut c = ModelConfig::new(spec.vocabulary().len(), attention);
    c.embed_dim = 2;
    c.hidden_dim = 3;
    c.attention_dim = 2;
    c.label_smoothing = 0.0;
    let model = Seq2Seq::new(c, 5).unwrap();
    let count = model.parameter_count();
    let lambda = 0.2;
    let analytic = train_step(&model, &batch, lambda, &mut SeededRng::new(0))
        .unwrap()
        .gradients
        .flatten();
    let mut probe = model.clone();
    let numeric = finite_difference_gradient(
        |x| {
            let mut p = model.params().clone();
            p.assign_flat(x)?;
            probe.set_params(p)?;
            Ok(train_step(&probe, &batch, lambda, &mut SeededRng::new(0))?.loss)
        },
        &model.params().flatten(),
        1e-5,
    )
    .unwrap();
    match check_gradient(&analytic, &numeric, 1e-4, 1e-7) {
        Ok(()) => outcome(count <= 200, format!("{count} parameters, every coordinate within tolerance")),
        Err(w) => outcome(false, format!("{count} parameters, worst {w:?}")),
    }
}

/// Shared sweep behind criteria 6 to 8.
struct Sweep {
    cfg: RunConfig,
    summary: SweepSummary,
    elapsed: Duration,
}

impl Sweep {
    fn find(&self, method: &str, param: f64) -> &ExperimentRecord {
        self.summary
            .records
            .iter()
            .find(|r| r.method == method && r.param == param)
            .unwrap_or_else(|| panic!("no {method} {param} row"))
    }

    fn rows(&self, method: &str) -> Vec<&ExperimentRecord> {
        self.summary.records.iter().filter(|r| r.method == method).collect()
    }

    fn initial_delays(&self, method: &str, param: f64) -> Vec<f64> {
        let path = self.cfg.out_dir.join("traces").join(format!("{method}_{param}_1.jsonl"));
        harness::read_traces(&path, None)
            .unwrap()
            .iter()
            .map(|t| t.trace.initial_delay().unwrap_or(t.trace.reads()) as f64)
            .collect()
    }
}

fn run_sweep(dir: &Path) -> Sweep {
    let mut cfg = RunConfig::default();
    cfg.train_size = 10_000;
    cfg.valid_size = 200;
    cfg.test_size = 1_000;
    cfg.warm_start_steps = 3000;
    cfg.train.steps = 1500;
    cfg.train.eval_interval = 500;
    cfg.sweep.methods = vec!["milk".into(), "wait_k".into()];
    cfg.out_dir = dir.to_path_buf();
    let start = Instant::now();
    let summary = harness::cmd_sweep(&cfg, |r| {
        eprintln!(
            "  sweep {} {}: quality {:.3} AP {:.3} AL {:.3} DAL {:.3} ({:.0} s)",
            r.method, r.param, r.quality, r.ap, r.al, r.dal, r.wall_time_s
        )
    })
    .unwrap();
    Sweep {
        cfg,
        summary,
        elapsed: start.elapsed(),
    }
}

fn mass_preservation(s: &Sweep) -> Outcome {
    let data = harness::load_data(&s.cfg).unwrap();
    let ceiling = data
        .test
        .iter()
        .map(|p| {
            let n = p.source.len();
            differentiable_average_lagging(&DelayVector::new(vec![n as f64; p.target.len()], n).unwrap())
        })
        .sum::<f64>()
        / data.test.len() as f64;
    let (zero_model, _) = load_checkpoint(&s.cfg.out_dir.join("checkpoints").join("milk_0_1.ckpt")).unwrap();
    let expected = evaluate(&zero_model, &data.test, 0.0).unwrap().expected_dal;
    let zero = s.find("milk", 0.0);
    let weighted = s.find("milk", 0.2);
    let reduction = 1.0 - weighted.dal / zero.dal;
    let drop = 100.0 * (zero.quality - weighted.quality);
    let near_ceiling = (expected - ceiling).abs() <= 0.1 * ceiling;
    let pass = s.cfg.model.preserve_mass && !zero.is_failed() && near_ceiling && reduction >= 0.25 && drop <= 5.0;
    outcome(
        pass,
        format!(
            "ceiling DAL {ceiling:.3}, λ=0 expected DAL {expected:.3}; DAL λ=0 {:.3} -> λ=0.2 {:.3} ({:.1}% lower), accuracy {:.3} -> {:.3} (drop {drop:.1} points)",
            zero.dal,
            weighted.dal,
            100.0 * reduction,
            zero.quality,
            weighted.quality
        ),
    )
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

fn adaptivity(s: &Sweep) -> Outcome {
    let milk = s.find("milk", 0.2);
    let Some(wait) = s
        .rows("wait_k")
        .into_iter()
        .filter(|r| !r.is_failed() && (r.dal - milk.dal).abs() <= 1.0)
        .min_by(|a, b| (a.dal - milk.dal).abs().total_cmp(&(b.dal - milk.dal).abs()))
    else {
        return outcome(false, format!("no wait-k point within 1 token of MILk DAL {:.3}", milk.dal));
    };
    let vm = variance(&s.initial_delays("milk", 0.2));
    let vw = variance(&s.initial_delays("wait_k", wait.param));
    let gain = 100.0 * (milk.quality - wait.quality);
    outcome(
        vm > vw && gain >= 5.0,
        format!(
            "MILk λ=0.2 DAL {:.3} vs wait-{} DAL {:.3}: initial-delay variance {vm:.3} vs {vw:.3}, accuracy {:.3} vs {:.3} ({gain:+.1} points)",
            milk.dal, wait.param, wait.dal, milk.quality, wait.quality
        ),
    )
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            ranks[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    ranks
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum::<f64>().sqrt();
    let sy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum::<f64>().sqrt();
    cov / (sx * sy)
}

/// Slack for DAL monotonicity, in tokens.
const DAL_SLACK: f64 = 0.1;
/// Slack for wait-k quality monotonicity, as a fraction of sentences.
const QUALITY_SLACK: f64 = 0.02;

fn curve_monotonicity(s: &Sweep) -> Outcome {
    let mut milk: Vec<&ExperimentRecord> = s.rows("milk");
    milk.sort_by(|a, b| a.param.total_cmp(&b.param));
    let lambdas: Vec<f64> = milk.iter().map(|r| r.param).collect();
    let dals: Vec<f64> = milk.iter().map(|r| r.dal).collect();
    let rho = spearman(&lambdas, &dals);
    let dal_monotone = dals.windows(2).all(|w| w[1] <= w[0] + DAL_SLACK);
    let mut wait: Vec<&ExperimentRecord> = s.rows("wait_k");
    wait.sort_by(|a, b| a.param.total_cmp(&b.param));
    let plateau = wait.last().map_or(f64::NAN, |r| r.quality);
    let mut quality_monotone = true;
    for w in wait.windows(2) {
        if w[0].quality >= plateau - QUALITY_SLACK {
            break;
        }
        quality_monotone &= w[1].quality >= w[0].quality - QUALITY_SLACK;
    }
    let fmt = |v: &[&ExperimentRecord], f: fn(&ExperimentRecord) -> f64| {
        v.iter().map(|r| format!("{}:{:.3}", r.param, f(r))).collect::<Vec<_>>().join(" ")
    };
    outcome(
        rho <= -0.9 && dal_monotone && quality_monotone,
        format!(
            "Spearman(λ, DAL) {rho:.3}, DAL by λ [{}], wait-k quality by k [{}]",
            fmt(&milk, |r| r.dal),
            fmt(&wait, |r| r.quality)
        ),
    )
}

fn files_equal(a: &Path, b: &Path) -> Result<(), String> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    if read(a)? == read(b)? {
        Ok(())
    } else {
        Err(format!("{} differs", a.file_name().unwrap().to_string_lossy()))
    }
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let config = |dir: &Path| {
        let mut c = RunConfig::default();
        c.train_size = 300;
        c.valid_size = 20;
        c.test_size = 40;
        c.warm_start_steps = 20;
        c.train.steps = 20;
        c.train.batch_size = 8;
        c.train.eval_interval = 10;
        c.sweep.methods = vec!["milk".into(), "wait_k".into(), "mocha".into()];
        c.sweep.lambdas = vec![0.0, 0.3];
        c.sweep.ks = vec![2];
        c.sweep.chunk_sizes = vec![2];
        c.sweep.seeds = vec![1, 2];
        c.out_dir = dir.to_path_buf();
        c
    };
    let mut compared = 0;
    let mut check = || -> Result<(), String> {
        for d in &dirs {
            harness::cmd_sweep(&config(d.path()), |_| {}).map_err(|e| e.to_string())?;
            let mut t = config(&d.path().join("train"));
            t.train.lambda = 0.2;
            harness::cmd_train(&t, |_, _| {}).map_err(|e| e.to_string())?;
        }
        let (a, b) = (dirs[0].path(), dirs[1].path());
        files_equal(&a.join("curves.csv"), &b.join("curves.csv"))?;
        files_equal(&a.join("train/model.ckpt"), &b.join("train/model.ckpt"))?;
        compared += 2;
        for sub in ["checkpoints", "traces"] {
            let mut names: Vec<_> = std::fs::read_dir(a.join(sub))
                .map_err(|e| e.to_string())?
                .map(|e| e.unwrap().file_name())
                .collect();
            names.sort();
            for name in names {
                files_equal(&a.join(sub).join(&name), &b.join(sub).join(&name))?;
                compared += 1;
            }
        }
        Ok(())
    };
    match check() {
        Ok(()) => outcome(true, format!("{compared} files byte-identical across two runs")),
        Err(e) => outcome(false, e),
    }
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, budget: Duration, elapsed: Duration, o: Outcome| {
        let in_budget = elapsed <= budget;
        let pass = o.pass && in_budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {n} ({name}): {} in {:.1} s (budget {} s): {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            o.detail
        );
    };
    let timed = |f: fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        (start.elapsed(), o)
    };
    let secs = Duration::from_secs;

    let (t, o) = timed(metric_identities);
    report(1, "metric identities", secs(1), t, o);
    let (t, o) = timed(wait_k_law);
    report(2, "wait-k law", secs(1), t, o);
    let (t, o) = timed(oracle_equivalence);
    report(3, "oracle equivalence", secs(30), t, o);
    let (t, o) = timed(reductions);
    report(4, "reductions", secs(10), t, o);
    let (t, o) = timed(gradient_integrity);
    report(5, "gradient integrity", secs(120), t, o);

    let dir = tempfile::tempdir().unwrap();
    let sweep = run_sweep(dir.path());
    let (t, o) = (sweep.elapsed, mass_preservation(&sweep));
    report(6, "mass preservation effect", secs(1800), t, o);
    report(7, "adaptivity", secs(1800), t, adaptivity(&sweep));
    report(8, "curve monotonicity", secs(1800), t, curve_monotonicity(&sweep));

    let (t, o) = timed(determinism);
    report(9, "determinism", secs(300), t, o);

    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
