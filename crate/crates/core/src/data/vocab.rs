use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::error::{bail, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;

pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Word-level vocabulary. Ids 0..4 are reserved for PAD, BOS, EOS and UNK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Builds a vocabulary from a stream of words. Ordering is by frequency
    /// (descending) and then lexicographic, so the result only depends on the
    /// multiset of words.
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for w in words {
            let w = w.as_ref();
            if RESERVED.contains(&w) {
                bail!(Data, "reserved symbol {w:?} found in corpus text");
            }
            *counts.entry(w.to_string()).or_default() += 1;
        }
        if counts.is_empty() {
            bail!(Data, "cannot build a vocabulary from an empty training split");
        }
        let mut by_freq: Vec<(String, usize)> = counts.into_iter().collect();
        by_freq.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(by_freq.into_iter().map(|(w, _)| w))
            .collect();
        Self::from_tokens(tokens)
    }

    /// Rebuilds a vocabulary from its full token list (reserved symbols first),
    /// as stored in corpus headers.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() + 1 {
            bail!(Data, "vocabulary needs at least 5 entries, got {}", tokens.len());
        }
        for (i, r) in RESERVED.iter().enumerate() {
            if tokens[i] != *r {
                bail!(Data, "vocabulary slot {i} must be {r:?}, found {:?}", tokens[i]);
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                bail!(Data, "invalid vocabulary token {t:?}");
            }
            if index.insert(t.clone(), i as u32).is_some() {
                bail!(Data, "duplicate vocabulary token {t:?}");
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Encodes whitespace-separated words; unknown words map to UNK. No EOS is appended.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.split_whitespace().map(|w| self.id(w)).collect()
    }

    /// Decodes content tokens, stopping at the first EOS.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .take_while(|&&id| id != EOS)
            .map(|&id| self.token(id).unwrap_or(RESERVED[UNK as usize]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Short content hash used to bind checkpoints to the vocabulary they were trained with.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(&h.finalize()[..8])
    }
}
