use milkstream::attention::{AttentionConfig, AttentionKind, WaitKSchedule};
use milkstream::data::{generate_split, make_batches, TaskKind, TaskSpec, EOS};
use milkstream::model::{greedy_simultaneous_decode, train_step, ModelConfig, Seq2Seq};
use milkstream::numerics::{check_gradient, finite_difference_gradient, SeededRng};
use proptest::prelude::*;

const SYMBOLS: u32 = 6;
const FIRST_SYMBOL: u32 = 4;

fn small_model(kind: AttentionKind, seed: u64, noise: f64) -> Seq2Seq {
    let attention = AttentionConfig {
        kind,
        noise,
        energy_offset: 0.0,
        ..AttentionConfig::default()
    };
    let mut c = ModelConfig::new(FIRST_SYMBOL as usize + SYMBOLS as usize, attention);
    c.embed_dim = 4;
    c.hidden_dim = 6;
    c.attention_dim = 4;
    Seq2Seq::new(c, seed).unwrap()
}

fn streaming_kind() -> impl Strategy<Value = AttentionKind> {
    prop_oneof![
        Just(AttentionKind::Milk),
        Just(AttentionKind::Monotonic),
        (1usize..4).prop_map(|chunk_size| AttentionKind::Mocha { chunk_size }),
        (1usize..4).prop_map(|k| AttentionKind::WaitK(WaitKSchedule::new(k, 1.0).unwrap())),
    ]
}

fn source() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(FIRST_SYMBOL..FIRST_SYMBOL + SYMBOLS, 2..9).prop_map(|mut s| {
        s.push(EOS);
        s
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Rewriting every unread source token leaves each write unchanged.
    #[test]
    fn writes_depend_only_on_what_was_read(
        kind in streaming_kind(),
        seed in 0u64..1000,
        x in source(),
        other in prop::collection::vec(FIRST_SYMBOL..FIRST_SYMBOL + SYMBOLS, 9),
    ) {
        let model = small_model(kind, seed, 0.0);
        let full = greedy_simultaneous_decode(&model, &x, Some(12)).unwrap();
        full.trace.validate().unwrap();
        prop_assert!(full.heads.windows(2).all(|w| w[0] <= w[1]));
        for (i, &read) in full.heads.iter().enumerate() {
            if read == x.len() {
                break;
            }
            let mut altered = x.clone();
            for j in read..x.len() {
                altered[j] = if other[j] == x[j] { EOS } else { other[j] };
            }
            let partial = greedy_simultaneous_decode(&model, &altered, Some(i + 1)).unwrap();
            prop_assert_eq!(&partial.tokens[..], &full.tokens[..=i]);
            prop_assert_eq!(&partial.heads[..], &full.heads[..partial.heads.len()]);
        }
    }

    #[test]
    fn hard_delays_are_read_counts(kind in streaming_kind(), seed in 0u64..1000, x in source()) {
        let model = small_model(kind, seed, 0.0);
        let out = greedy_simultaneous_decode(&model, &x, None).unwrap();
        let d = out.delays().unwrap();
        let heads: Vec<f64> = out.heads.iter().map(|&h| h as f64).collect();
        prop_assert_eq!(d.g(), &heads[..]);
        for (row, &h) in out.attention.iter().zip(&out.heads) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(row[h..].iter().all(|&w| w == 0.0));
        }
    }
}

fn gradient_matches(kind: AttentionKind, lambda: f64) {
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
        kind,
        noise: 0.0,
        ..AttentionConfig::default()
    };
    let mut c = ModelConfig::new(spec.vocabulary().len(), attention);
    c.embed_dim = 2;
    c.hidden_dim = 3;
    c.attention_dim = 2;
    c.label_smoothing = 0.0;
    let model = Seq2Seq::new(c, 11).unwrap();
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
    if let Err(worst) = check_gradient(&analytic, &numeric, 1e-4, 1e-7) {
        panic!("{}: {worst:?}", kind.name());
    }
}

#[test]
fn soft_gradient_matches_finite_differences() {
    gradient_matches(AttentionKind::Soft, 0.0);
}

#[test]
fn monotonic_gradient_matches_finite_differences() {
    gradient_matches(AttentionKind::Monotonic, 0.5);
}

#[test]
fn mocha_gradient_matches_finite_differences() {
    gradient_matches(AttentionKind::Mocha { chunk_size: 2 }, 0.5);
}

#[test]
fn milk_gradient_matches_finite_differences() {
    gradient_matches(AttentionKind::Milk, 1.0);
}

#[test]
fn wait_k_gradient_matches_finite_differences() {
    gradient_matches(AttentionKind::WaitK(WaitKSchedule::new(2, 1.0).unwrap()), 0.0);
}

#[test]
fn noisy_steps_repeat_bit_for_bit() {
    let spec = TaskSpec::default();
    let pairs = generate_split(&spec, 0, 16).unwrap();
    let batch = make_batches(&pairs, 16, 0).unwrap().remove(0);
    let model = small_model(AttentionKind::Milk, 3, 1.0);
    let mut c = *model.config();
    c.vocab_size = spec.vocabulary().len();
    let model = Seq2Seq::new(c, 3).unwrap();
    let run = || {
        let mut rng = SeededRng::new(9);
        (0..10)
            .map(|_| train_step(&model, &batch, 0.2, &mut rng).unwrap().loss.to_bits())
            .collect::<Vec<_>>()
    };
    let first = run();
    assert_eq!(first, run());
    assert!(first.windows(2).any(|w| w[0] != w[1]));
}
