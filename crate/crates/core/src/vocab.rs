//! Tokenization and the token→id vocabulary.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

/// Lowercases and splits on every non-alphanumeric boundary, dropping the
/// punctuation itself. Deterministic; empty text gives an empty list.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(|s| s.to_string())
        .collect()
}

/// Dense token→id map with reserved ids 0 (padding) and 1 (unknown).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
    pub min_frequency: usize,
}

impl Vocabulary {
    /// Builds from an iterator of texts. A token enters the vocabulary when
    /// its total occurrence count reaches the minimum frequency; qualifying
    /// tokens get ids in lexicographic order so the mapping is independent
    /// of input order.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(texts: I, min_frequency: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for tok in tokenize(text) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<String> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_frequency)
            .map(|(t, _)| t)
            .collect();
        kept.sort_unstable();
        let mut v = Self { tokens: kept, index: HashMap::new(), min_frequency };
        v.rebuild_index();
        v
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32 + 2))
            .collect();
    }

    /// Total id space including the two reserved ids.
    pub fn size(&self) -> usize {
        self.tokens.len() + 2
    }

    pub fn id_of(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token_of(&self, id: u32) -> Option<&str> {
        if id < 2 {
            return None;
        }
        self.tokens.get(id as usize - 2).map(|s| s.as_str())
    }

    /// Token ids of a text, padded with [`PAD_ID`] or truncated to `max_len`.
    /// Returns the ids and the pre-padding length.
    pub fn encode(&self, text: &str, max_len: usize) -> (Vec<u32>, usize) {
        let toks = tokenize(text);
        let len = toks.len().min(max_len);
        let mut ids: Vec<u32> = toks.iter().take(max_len).map(|t| self.id_of(t)).collect();
        ids.resize(max_len, PAD_ID);
        (ids, len)
    }
}
