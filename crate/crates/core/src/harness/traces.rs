//! JSONL trace files.
//!
//! Each action is one line `{"a":"r"|"w","tok":..,"pos":..}`; a sentence
//! ends with a summary line `{"a":"s","src_len":..,"terminated":..,"AP":..,
//! "AL":..,"DAL":..}`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Vocabulary, UNK};
use crate::error::{Error, Result};
use crate::latency::{delays_from_trace, Action, DecodeTrace, LatencyReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "a")]
enum Record {
    #[serde(rename = "r")]
    Read { tok: String, pos: usize },
    #[serde(rename = "w")]
    Write { tok: String, pos: usize },
    #[serde(rename = "s")]
    Summary {
        src_len: usize,
        terminated: bool,
        #[serde(rename = "AP")]
        ap: f64,
        #[serde(rename = "AL")]
        al: f64,
        #[serde(rename = "DAL")]
        dal: f64,
    },
}

/// Appends one sentence to `out`.
pub fn write_trace(out: &mut String, trace: &DecodeTrace, vocab: &Vocabulary) -> Result<LatencyReport> {
    let report = LatencyReport::of(&delays_from_trace(trace)?);
    let name = |t: u32| vocab.token(t).unwrap_or("<unk>").to_string();
    for a in &trace.actions {
        let rec = match *a {
            Action::Read { token, position } => Record::Read {
                tok: name(token),
                pos: position,
            },
            Action::Write { token, position } => Record::Write {
                tok: name(token),
                pos: position,
            },
        };
        let _ = writeln!(out, "{}", serde_json::to_string(&rec).expect("plain record"));
    }
    let summary = Record::Summary {
        src_len: trace.source_len,
        terminated: trace.terminated,
        ap: report.ap,
        al: report.al,
        dal: report.dal,
    };
    let _ = writeln!(out, "{}", serde_json::to_string(&summary).expect("plain record"));
    Ok(report)
}

/// A trace read back from disk with the metrics recorded next to it.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredTrace {
    pub trace: DecodeTrace,
    pub recorded: LatencyReport,
}

/// Parses a trace file. Token strings are mapped through `vocab` when one
/// is given and to UNK otherwise; delays only depend on the action order.
pub fn read_traces(path: &Path, vocab: Option<&Vocabulary>) -> Result<Vec<StoredTrace>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = |t: &str| vocab.map_or(UNK, |v| v.id(t));
    let mut out = Vec::new();
    let mut actions = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| Error::format(path, n + 1, e.to_string()))?;
        match rec {
            Record::Read { tok, pos } => actions.push(Action::Read {
                token: id(&tok),
                position: pos,
            }),
            Record::Write { tok, pos } => actions.push(Action::Write {
                token: id(&tok),
                position: pos,
            }),
            Record::Summary {
                src_len,
                terminated,
                ap,
                al,
                dal,
            } => {
                let trace = DecodeTrace {
                    source_len: src_len,
                    actions: std::mem::take(&mut actions),
                    terminated,
                };
                trace.validate().map_err(|e| Error::format(path, n + 1, e.to_string()))?;
                out.push(StoredTrace {
                    trace,
                    recorded: LatencyReport { ap, al, dal },
                });
            }
        }
    }
    if !actions.is_empty() {
        return Err(Error::format(
            path,
            text.lines().count(),
            "trace ends without a summary record",
        ));
    }
    Ok(out)
}
