use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Token ↔ id map. Ids 0–3 are reserved; file entries start at 4.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut ids: HashMap<String, u32> = all.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        for tok in tokens {
            let tok = tok.into();
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("vocabulary: bad token {tok:?}")));
            }
            if ids.contains_key(&tok) {
                return Err(Error::invalid(format!("vocabulary: duplicate token {tok:?}")));
            }
            ids.insert(tok.clone(), all.len() as u32);
            all.push(tok);
        }
        Ok(Vocabulary { tokens: all, ids })
    }

    /// One token per line; line `n` (from 0) gets id `n + 4`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let tok = line.trim();
            if tok.is_empty() || tok.contains(char::is_whitespace) {
                return Err(Error::format(path, n + 1, format!("expected one token, got {line:?}")));
            }
            tokens.push(tok.to_string());
        }
        Vocabulary::new(tokens).map_err(|e| Error::format(path, 0, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// File form: non-reserved tokens, one per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens[RESERVED.len()..] {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Ids of whitespace-separated `line`, with EOS appended.
    pub fn encode_line(&self, line: &str) -> Vec<u32> {
        let mut ids: Vec<u32> = line.split_whitespace().map(|t| self.id(t)).collect();
        ids.push(EOS);
        ids
    }

    /// Tokens up to (not including) the first EOS, joined by spaces.
    pub fn decode_line(&self, ids: &[u32]) -> String {
        ids.iter()
            .take_while(|&&id| id != EOS)
            .map(|&id| self.token(id).unwrap_or(RESERVED[UNK as usize]))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
