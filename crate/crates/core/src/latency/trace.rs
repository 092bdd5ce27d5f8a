use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One step of a streaming decode. Positions are 1-indexed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Read { token: u32, position: usize },
    Write { token: u32, position: usize },
}

impl Action {
    pub fn is_read(&self) -> bool {
        matches!(self, Action::Read { .. })
    }
}

/// Interleaving of reads and writes produced by a streaming decoder.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub source_len: usize,
    pub actions: Vec<Action>,
    /// Whether the decoder emitted EOS (as opposed to hitting `max_len`).
    pub terminated: bool,
}

impl DecodeTrace {
    pub fn new(source_len: usize) -> Self {
        DecodeTrace {
            source_len,
            actions: Vec::new(),
            terminated: false,
        }
    }

    pub fn reads(&self) -> usize {
        self.actions.iter().filter(|a| a.is_read()).count()
    }

    pub fn writes(&self) -> usize {
        self.actions.len() - self.reads()
    }

    pub fn push_read(&mut self, token: u32) {
        let position = self.reads() + 1;
        self.actions.push(Action::Read { token, position });
    }

    pub fn push_write(&mut self, token: u32) {
        let position = self.writes() + 1;
        self.actions.push(Action::Write { token, position });
    }

    /// Reads preceding the first write.
    pub fn initial_delay(&self) -> Option<usize> {
        let first = self.actions.iter().position(|a| !a.is_read())?;
        Some(first)
    }

    /// Checks that read and write positions count up from 1 and that no
    /// more than `source_len` tokens are read.
    pub fn validate(&self) -> Result<()> {
        let (mut reads, mut writes) = (0, 0);
        for (k, action) in self.actions.iter().enumerate() {
            match *action {
                Action::Read { position, .. } => {
                    reads += 1;
                    if position != reads {
                        return Err(Error::invalid(format!(
                            "trace action {k}: read position {position}, expected {reads}"
                        )));
                    }
                }
                Action::Write { position, .. } => {
                    writes += 1;
                    if position != writes {
                        return Err(Error::invalid(format!(
                            "trace action {k}: write position {position}, expected {writes}"
                        )));
                    }
                }
            }
        }
        if reads > self.source_len {
            return Err(Error::invalid(format!(
                "trace reads {reads} tokens from a source of length {}",
                self.source_len
            )));
        }
        Ok(())
    }
}
