use crate::error::{Error, Result};

/// Position of the monotonic head after an output step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HardHead {
    /// 1-indexed source position `t_i`.
    pub position: usize,
    /// Set once the head reaches the final (EOS) source position.
    pub halted: bool,
}

impl HardHead {
    /// Head before the first output step: at position 1, nothing decided.
    pub fn start() -> Self {
        HardHead {
            position: 1,
            halted: false,
        }
    }
}

impl Default for HardHead {
    fn default() -> Self {
        HardHead::start()
    }
}

/// A source that is consumed one token at a time while decoding.
pub trait StreamingSource {
    /// Number of source tokens read so far.
    fn read_len(&self) -> usize;

    /// Reads one more source token.
    fn read_next(&mut self) -> Result<()>;

    /// Monotonic energy at 1-indexed `position`, which must already be read.
    fn monotonic_energy(&mut self, position: usize) -> Result<f64>;
}

/// Advances the head from its current position to the first position with
/// positive energy, reading tokens as it goes. The final position always
/// stops the head. Returns the new head and the attended prefix length.
pub fn hard_decode_step<S: StreamingSource + ?Sized>(
    source: &mut S,
    head: HardHead,
    source_len: usize,
) -> Result<(HardHead, usize)> {
    if source_len == 0 {
        return Err(Error::invalid("hard_decode_step: empty source"));
    }
    if head.position == 0 || head.position > source_len {
        return Err(Error::ContractViolation(format!(
            "head at {} outside 1..={source_len}",
            head.position
        )));
    }
    let mut j = head.position;
    loop {
        while source.read_len() < j {
            source.read_next()?;
        }
        if j == source_len {
            break;
        }
        if source.monotonic_energy(j)? > 0.0 {
            break;
        }
        j += 1;
    }
    let next = HardHead {
        position: j,
        halted: j == source_len,
    };
    Ok((next, j))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scripted {
        energies: Vec<f64>,
        read: usize,
        queried: Vec<usize>,
    }

    impl Scripted {
        fn new(energies: &[f64], read: usize) -> Self {
            Scripted {
                energies: energies.to_vec(),
                read,
                queried: Vec::new(),
            }
        }
    }

    impl StreamingSource for Scripted {
        fn read_len(&self) -> usize {
            self.read
        }

        fn read_next(&mut self) -> Result<()> {
            self.read += 1;
            Ok(())
        }

        fn monotonic_energy(&mut self, position: usize) -> Result<f64> {
            if position > self.read {
                return Err(Error::ContractViolation(format!("peeked at {position}")));
            }
            self.queried.push(position);
            Ok(self.energies[position - 1])
        }
    }

    #[test]
    fn positive_energy_stops_immediately() {
        let mut s = Scripted::new(&[1.0; 5], 2);
        let head = HardHead { position: 2, halted: false };
        let (next, t) = hard_decode_step(&mut s, head, 5).unwrap();
        assert_eq!((next.position, t, s.read), (2, 2, 2));
    }

    #[test]
    fn non_positive_energies_run_to_the_end() {
        let mut s = Scripted::new(&[0.0, -1.0, -2.0, -0.5], 1);
        let (next, t) = hard_decode_step(&mut s, HardHead::start(), 4).unwrap();
        assert_eq!((next, t, s.read), (HardHead { position: 4, halted: true }, 4, 4));
    }

    #[test]
    fn stops_at_first_positive_energy() {
        let mut s = Scripted::new(&[-1.0, -1.0, 2.0, 5.0], 1);
        let (next, _) = hard_decode_step(&mut s, HardHead::start(), 4).unwrap();
        assert_eq!(next.position, 3);
        assert_eq!(s.read - 1, 2);
        assert_eq!(s.queried, vec![1, 2, 3]);
    }

    #[test]
    fn head_outside_source_is_a_contract_violation() {
        let mut s = Scripted::new(&[1.0; 3], 3);
        let head = HardHead { position: 4, halted: false };
        assert!(matches!(
            hard_decode_step(&mut s, head, 3),
            Err(Error::ContractViolation(_))
        ));
    }
}
