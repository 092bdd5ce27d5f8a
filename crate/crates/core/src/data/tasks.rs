use std::fmt;
use std::str::FromStr;

use super::vocab::{Vocabulary, EOS};
use super::SentencePair;
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Marker opening an "early" sentence: target copies the rest.
pub const EARLY_MARKER: &str = "E";
/// Marker opening a "late" sentence: target starts with the final token.
pub const LATE_MARKER: &str = "L";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Copy,
    Rotate,
    MarkerLookahead,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Copy => "copy",
            TaskKind::Rotate => "rotate",
            TaskKind::MarkerLookahead => "marker_lookahead",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "copy" => Ok(TaskKind::Copy),
            "rotate" => Ok(TaskKind::Rotate),
            "marker_lookahead" | "lookahead" => Ok(TaskKind::MarkerLookahead),
            other => Err(Error::invalid(format!("unknown task '{other}'"))),
        }
    }
}

/// Synthetic transduction task.
///
/// Lengths count source tokens before EOS, including the marker of
/// `marker_lookahead`. `vocab_size` is the number of content symbols.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub lookahead_fraction: f64,
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            kind: TaskKind::MarkerLookahead,
            vocab_size: 32,
            min_len: 6,
            max_len: 12,
            lookahead_fraction: 0.5,
            seed: 1,
        }
    }
}

/// Content symbol names: `a`..`z`, then `x26`, `x27`, ...
pub fn symbol(i: usize) -> String {
    if i < 26 {
        char::from(b'a' + i as u8).to_string()
    } else {
        format!("x{i}")
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 {
            return Err(Error::invalid("task: vocab_size must be >= 1"));
        }
        let floor = if self.kind == TaskKind::MarkerLookahead { 2 } else { 1 };
        if self.min_len < floor || self.min_len > self.max_len {
            return Err(Error::invalid(format!(
                "task {}: length range [{}, {}] invalid (minimum {floor})",
                self.kind, self.min_len, self.max_len
            )));
        }
        if !(0.0..=1.0).contains(&self.lookahead_fraction) {
            return Err(Error::invalid(format!(
                "task: lookahead_fraction {} outside [0, 1]",
                self.lookahead_fraction
            )));
        }
        Ok(())
    }

    pub fn vocabulary(&self) -> Vocabulary {
        let mut tokens: Vec<String> = (0..self.vocab_size).map(symbol).collect();
        if self.kind == TaskKind::MarkerLookahead {
            tokens.push(EARLY_MARKER.into());
            tokens.push(LATE_MARKER.into());
        }
        Vocabulary::new(tokens).expect("task symbols are distinct")
    }
}

/// Deterministic pair number `index` of the task.
pub fn generate_pair(spec: &TaskSpec, index: u64) -> Result<SentencePair> {
    spec.validate()?;
    let vocab = spec.vocabulary();
    let mut rng = SeededRng::for_stream(spec.seed, index);
    let span = (spec.max_len - spec.min_len + 1) as u64;
    let len = spec.min_len + rng.below(span) as usize;
    let mut draw = |n: usize| -> Vec<u32> {
        (0..n)
            .map(|_| vocab.id(&symbol(rng.below(spec.vocab_size as u64) as usize)))
            .collect()
    };
    let (mut source, mut target) = match spec.kind {
        TaskKind::Copy => {
            let s = draw(len);
            (s.clone(), s)
        }
        TaskKind::Rotate => {
            let s = draw(len);
            let mut t = s.clone();
            t.rotate_left(1);
            (s, t)
        }
        TaskKind::MarkerLookahead => {
            let body = draw(len - 1);
            let late = rng.uniform() < spec.lookahead_fraction;
            let marker = vocab.id(if late { LATE_MARKER } else { EARLY_MARKER });
            let mut t = body.clone();
            if late {
                t.rotate_right(1);
            }
            let mut s = vec![marker];
            s.extend(body);
            (s, t)
        }
    };
    source.push(EOS);
    target.push(EOS);
    Ok(SentencePair { source, target })
}

/// Pairs `start..start + count`.
pub fn generate_split(spec: &TaskSpec, start: u64, count: usize) -> Result<Vec<SentencePair>> {
    (start..start + count as u64).map(|i| generate_pair(spec, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(v: &Vocabulary, ids: &[u32]) -> String {
        let mut s = v.decode_line(ids);
        if ids.last() == Some(&EOS) {
            s.push_str(" EOS");
        }
        s
    }

    fn spec(kind: TaskKind) -> TaskSpec {
        TaskSpec {
            kind,
            vocab_size: 5,
            min_len: 3,
            max_len: 7,
            lookahead_fraction: 0.5,
            seed: 42,
        }
    }

    #[test]
    fn copy_and_rotate() {
        let s = spec(TaskKind::Copy);
        for i in 0..20 {
            let p = generate_pair(&s, i).unwrap();
            assert_eq!(p.source, p.target);
            assert!((4..=8).contains(&p.source.len()));
        }
        let s = spec(TaskKind::Rotate);
        for i in 0..20 {
            let p = generate_pair(&s, i).unwrap();
            let n = p.source.len();
            let mut rotated = p.source[..n - 1].to_vec();
            rotated.rotate_left(1);
            assert_eq!(&p.target[..n - 1], rotated.as_slice());
            assert_eq!(p.target[n - 1], EOS);
        }
    }

    #[test]
    fn marker_lookahead_shapes() {
        let s = spec(TaskKind::MarkerLookahead);
        let v = s.vocabulary();
        let (mut early, mut late) = (0, 0);
        for i in 0..200 {
            let p = generate_pair(&s, i).unwrap();
            let n = p.source.len();
            let body = &p.source[1..n - 1];
            let marker = v.token(p.source[0]).unwrap();
            let expect: Vec<u32> = if marker == LATE_MARKER {
                late += 1;
                let mut t = vec![body[body.len() - 1]];
                t.extend_from_slice(&body[..body.len() - 1]);
                t
            } else {
                assert_eq!(marker, EARLY_MARKER);
                early += 1;
                body.to_vec()
            };
            assert_eq!(&p.target[..p.target.len() - 1], expect.as_slice(), "{}", words(&v, &p.source));
        }
        assert!(early > 60 && late > 60, "{early} {late}");
    }

    #[test]
    fn generation_is_reproducible() {
        let s = spec(TaskKind::MarkerLookahead);
        assert_eq!(generate_pair(&s, 17).unwrap(), generate_pair(&s, 17).unwrap());
        assert_ne!(generate_split(&s, 0, 5).unwrap(), generate_split(&s, 5, 5).unwrap());
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec(TaskKind::MarkerLookahead);
        s.min_len = 1;
        assert!(generate_pair(&s, 0).is_err());
        s.min_len = 8;
        assert!(generate_pair(&s, 0).is_err());
    }
}
