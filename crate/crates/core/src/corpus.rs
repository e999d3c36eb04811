//! Tokenization, vocabulary management, and dataset handling.
//!
//! Tokenization is lowercase whitespace splitting with punctuation detached
//! as separate tokens. Sentences are framed as
//! `[<s>, w_1, ..., w_n, </s>, <pad>, ...]` up to a fixed maximum length;
//! over-length sentences are truncated rather than rejected so the pipeline
//! stays total.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

/// Token string for start-of-sequence.
pub const SOS_TOKEN: &str = "<s>";
/// Token string for end-of-sequence.
pub const EOS_TOKEN: &str = "</s>";
/// Token string for padding.
pub const PAD_TOKEN: &str = "<pad>";
/// Token string for out-of-vocabulary words.
pub const UNK_TOKEN: &str = "<unk>";

/// Errors from corpus handling.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary size {0} is too small (need at least 4 for the special tokens)")]
    VocabTooSmall(usize),
    #[error("token index {index} out of range for vocabulary of size {size}")]
    TokenIndexOutOfRange { index: usize, size: usize },
    #[error("split ratios sum to {0}, expected 1")]
    BadSplitRatios(f64),
    #[error("max sequence length {0} is too small (need at least 3)")]
    MaxLenTooSmall(usize),
    #[error("unsupported vocabulary file version {0}")]
    UnsupportedVersion(u32),
    #[error("vocabulary file is inconsistent: {0}")]
    CorruptVocabFile(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Indices of the four special tokens within a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub sos: usize,
    pub eos: usize,
    pub pad: usize,
    pub unk: usize,
}

/// An immutable token vocabulary with the four special tokens at the front.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    special: SpecialTokens,
}

impl Vocabulary {
    /// Builds a vocabulary from the `max_size - 4` most frequent tokens of
    /// `sentences`, plus the four specials. Ties are broken by first
    /// occurrence order.
    pub fn build(sentences: &[String], max_size: usize) -> Result<Self, CorpusError> {
        if sentences.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        if max_size < 4 {
            return Err(CorpusError::VocabTooSmall(max_size));
        }
        let mut counts: HashMap<String, (usize, usize)> = HashMap::new(); // word -> (count, first_seen)
        let mut order = 0usize;
        for s in sentences {
            for w in split_words(s) {
                let e = counts.entry(w).or_insert((0, order));
                e.0 += 1;
                order += 1;
            }
        }
        let mut by_freq: Vec<(String, (usize, usize))> = counts.into_iter().collect();
        by_freq.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
        by_freq.truncate(max_size - 4);

        let mut tokens = vec![
            SOS_TOKEN.to_string(),
            EOS_TOKEN.to_string(),
            PAD_TOKEN.to_string(),
            UNK_TOKEN.to_string(),
        ];
        tokens.extend(by_freq.into_iter().map(|(w, _)| w));
        Ok(Self::from_tokens(tokens))
    }

    /// Rebuilds a vocabulary from a stored token list. The first four tokens
    /// must be the specials in their fixed order.
    pub fn from_token_list(tokens: Vec<String>) -> Result<Self, CorpusError> {
        if tokens.len() < 4 {
            return Err(CorpusError::VocabTooSmall(tokens.len()));
        }
        let expected = [SOS_TOKEN, EOS_TOKEN, PAD_TOKEN, UNK_TOKEN];
        for (i, want) in expected.iter().enumerate() {
            if tokens[i] != *want {
                return Err(CorpusError::CorruptVocabFile(format!(
                    "token {i} is {:?}, expected {want:?}",
                    tokens[i]
                )));
            }
        }
        Ok(Self::from_tokens(tokens))
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens,
            index,
            special: SpecialTokens {
                sos: 0,
                eos: 1,
                pad: 2,
                unk: 3,
            },
        }
    }

    /// Number of tokens including the specials.
    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn special(&self) -> SpecialTokens {
        self.special
    }

    /// Index of a token string, or the unknown index when absent.
    pub fn lookup(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(self.special.unk)
    }

    /// Token string at `index`.
    pub fn token(&self, index: usize) -> Result<&str, CorpusError> {
        self.tokens
            .get(index)
            .map(String::as_str)
            .ok_or(CorpusError::TokenIndexOutOfRange {
                index,
                size: self.tokens.len(),
            })
    }

    pub fn is_special(&self, index: usize) -> bool {
        index == self.special.sos
            || index == self.special.eos
            || index == self.special.pad
            || index == self.special.unk
    }

    /// Writes the vocabulary as versioned JSON.
    pub fn save_json(&self, path: &Path) -> Result<(), CorpusError> {
        let file = VocabFile {
            version: VOCAB_FILE_VERSION,
            tokens: self.tokens.clone(),
            specials: self.special,
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    /// Loads a vocabulary previously written by [`Vocabulary::save_json`].
    pub fn load_json(path: &Path) -> Result<Self, CorpusError> {
        let file: VocabFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.version != VOCAB_FILE_VERSION {
            return Err(CorpusError::UnsupportedVersion(file.version));
        }
        let v = Self::from_tokens(file.tokens);
        if v.special != file.specials {
            return Err(CorpusError::CorruptVocabFile(
                "special token indices do not match the fixed layout".into(),
            ));
        }
        if v.size() < 4 {
            return Err(CorpusError::CorruptVocabFile("fewer than 4 tokens".into()));
        }
        Ok(v)
    }
}

const VOCAB_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    tokens: Vec<String>,
    specials: SpecialTokens,
}

/// Lowercase whitespace split with punctuation detached as separate tokens.
/// Alphanumeric runs (plus apostrophes) form words; every other non-space
/// character becomes its own token.
pub fn split_words(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in s.to_lowercase().chars() {
        if c.is_alphanumeric() || c == '\'' {
            cur.push(c);
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// A sentence as framed token indices: `<s>`, words, `</s>`, then optional
/// padding up to the configured maximum length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedSentence {
    pub ids: Vec<usize>,
}

impl TokenizedSentence {
    /// Token ids strictly between `<s>` and `</s>`.
    pub fn content_ids(&self, vocab: &Vocabulary) -> Vec<usize> {
        let sp = vocab.special();
        self.ids
            .iter()
            .copied()
            .skip(1)
            .take_while(|&id| id != sp.eos)
            .filter(|&id| id != sp.pad && id != sp.sos)
            .collect()
    }

    /// Number of ids up to and including `</s>` (excludes padding).
    pub fn framed_len(&self, vocab: &Vocabulary) -> usize {
        let eos = vocab.special().eos;
        self.ids
            .iter()
            .position(|&id| id == eos)
            .map(|p| p + 1)
            .unwrap_or(self.ids.len())
    }
}

/// Tokenizes a sentence: lowercase split, OOV words to `<unk>`, truncation to
/// `max_len - 2` words, framing, right padding to `max_len`. Total on any
/// input string.
pub fn tokenize(s: &str, vocab: &Vocabulary, max_len: usize) -> TokenizedSentence {
    debug_assert!(max_len >= 3);
    let sp = vocab.special();
    let mut ids = Vec::with_capacity(max_len);
    ids.push(sp.sos);
    for w in split_words(s).into_iter().take(max_len - 2) {
        ids.push(vocab.lookup(&w));
    }
    ids.push(sp.eos);
    while ids.len() < max_len {
        ids.push(sp.pad);
    }
    TokenizedSentence { ids }
}

/// Inverse of [`tokenize`] for in-vocabulary, in-length sentences: strips the
/// specials and joins tokens with single spaces.
pub fn detokenize(t: &TokenizedSentence, vocab: &Vocabulary) -> Result<String, CorpusError> {
    let mut words = Vec::new();
    for &id in &t.ids {
        let tok = vocab.token(id)?;
        if !vocab.is_special(id) {
            words.push(tok);
        }
    }
    Ok(words.join(" "))
}

/// Split ratios shared by training and the experiment harness, so test
/// sentences stay unseen as long as the same split seed is used.
pub const DEFAULT_SPLIT_RATIOS: (f64, f64, f64) = (0.8, 0.1, 0.1);

/// Disjoint train/validation/test sentence lists.
#[derive(Debug, Clone)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub ratios: (f64, f64, f64),
}

/// Splits sentences into train/validation/test by the given ratios.
///
/// Validation and test sizes are floored; the remainder goes to train.
/// Deterministic for a fixed seed.
pub fn split_corpus(
    sentences: &[String],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<CorpusSplit, CorpusError> {
    let sum = ratios.0 + ratios.1 + ratios.2;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadSplitRatios(sum));
    }
    if sentences.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let n = sentences.len();
    let n_val = (ratios.1 * n as f64).floor() as usize;
    let n_test = (ratios.2 * n as f64).floor() as usize;
    let n_train = n - n_val - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::seeded(seed, "corpus-split");
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);

    let pick = |idx: &[usize]| idx.iter().map(|&i| sentences[i].clone()).collect();
    Ok(CorpusSplit {
        train: pick(&order[..n_train]),
        validation: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
        ratios,
    })
}

/// Loads a corpus file: UTF-8, one sentence per line, blank lines skipped.
pub fn load_corpus_file(path: &Path) -> Result<Vec<String>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    let sentences: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if sentences.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(sentences)
}

/// The bundled toy corpus, filtered to the 5..=50 word range.
pub fn bundled_corpus() -> Vec<String> {
    include_str!("../data/corpus.txt")
        .lines()
        .map(str::trim)
        .filter(|l| {
            let n = l.split_whitespace().count();
            (5..=50).contains(&n)
        })
        .map(str::to_string)
        .collect()
}

impl fmt::Display for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Vocabulary({} tokens)", self.size())
    }
}
