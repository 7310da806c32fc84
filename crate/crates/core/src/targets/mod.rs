//! Supervision vectors over a fixed vocabulary.
//!
//! A [`Vocabulary`] fixes the output dimension `W`. Oracle training uses the
//! multi-hot [`BowTarget`] of a transcription; grounded training uses a
//! [`VisionTarget`] of independent per-word probabilities, either read from
//! a tagger's output file or produced by the [`channel`] simulator.

pub mod channel;
mod file;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

pub use channel::{simulate_vision_channel, ConfusionEntry, VisionChannelConfig};
pub use file::{load_vision_targets, parse_vision_targets, write_vision_targets, VisionTargetFile};

use crate::error::{Error, Result};
use crate::util::fingerprint;

const DEFAULT_STOP_WORDS: &str = include_str!("../../data/stopwords.txt");

/// Lowercased whitespace tokenization. No stemming.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopList {
    words: HashSet<String>,
}

impl StopList {
    /// The shipped English list.
    pub fn english() -> Self {
        Self::parse(DEFAULT_STOP_WORDS)
    }

    pub fn empty() -> Self {
        StopList {
            words: HashSet::new(),
        }
    }

    pub fn parse(text: &str) -> Self {
        StopList {
            words: text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        }
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I) -> Self {
        StopList {
            words: words.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Words in lexicographic order, one per line.
    pub fn to_text(&self) -> String {
        let mut words: Vec<_> = self.words.iter().map(String::as_str).collect();
        words.sort_unstable();
        words.iter().map(|w| format!("{w}\n")).collect()
    }
}

/// Ordered word list defining the model's output dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_words<I: IntoIterator<Item = S>, S: Into<String>>(words: I) -> Result<Self> {
        let words: Vec<String> = words.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() || w.chars().any(char::is_whitespace) || w.contains(':') {
                return Err(Error::InvalidInput(format!("invalid vocabulary word {w:?}")));
            }
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate vocabulary word {w:?}")));
            }
        }
        if words.is_empty() {
            return Err(Error::InvalidInput("vocabulary is empty".into()));
        }
        Ok(Vocabulary { words, index })
    }

    /// Top-`size` non-stop word types by descending frequency, ties broken
    /// lexicographically. Keeps every type when fewer than `size` remain.
    pub fn build<'a, I, T>(transcriptions: I, stop: &StopList, size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a T>,
        T: AsRef<[String]> + 'a + ?Sized,
    {
        if size == 0 {
            return Err(Error::Config("vocabulary size must be at least 1".into()));
        }
        let counts = count_tokens(transcriptions, stop);
        if counts.is_empty() {
            return Err(Error::InvalidInput(
                "corpus has no tokens outside the stop list".into(),
            ));
        }
        let mut ranked: Vec<(&String, &usize)> = counts.iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        if ranked.len() < size {
            log::warn!(
                "only {} word types available for a vocabulary of {size}",
                ranked.len()
            );
        }
        Self::from_words(ranked.into_iter().take(size).map(|(w, _)| w.clone()))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// Canonical file contents: one word per line.
    pub fn to_file_bytes(&self) -> Vec<u8> {
        self.words.iter().flat_map(|w| format!("{w}\n").into_bytes()).collect()
    }

    /// FNV-1a digest of the canonical vocabulary file.
    pub fn fingerprint(&self) -> u64 {
        fingerprint(&self.to_file_bytes())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_words(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from))
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                detail: e.to_string(),
            })
    }
}

/// Token counts after lowercasing and stop-word removal.
pub fn count_tokens<'a, I, T>(transcriptions: I, stop: &StopList) -> BTreeMap<String, usize>
where
    I: IntoIterator<Item = &'a T>,
    T: AsRef<[String]> + 'a + ?Sized,
{
    let mut counts = BTreeMap::new();
    for tokens in transcriptions {
        for tok in tokens.as_ref() {
            let tok = tok.to_lowercase();
            if !stop.contains(&tok) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Binary word-presence vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BowTarget(Vec<f32>);

impl BowTarget {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput(format!("bag-of-words entry {v} is not binary")));
        }
        Ok(BowTarget(values))
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn is_present(&self, i: usize) -> bool {
        self.0[i] == 1.0
    }
}

/// Independent per-word presence probabilities; need not sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct VisionTarget(Vec<f32>);

impl VisionTarget {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidInput(format!("probability {v} outside [0, 1]")));
        }
        Ok(VisionTarget(values))
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f32> {
        self.0
    }
}

impl From<BowTarget> for VisionTarget {
    fn from(b: BowTarget) -> Self {
        VisionTarget(b.0)
    }
}

/// Multi-hot vector of the in-vocabulary word types in `tokens`; order,
/// multiplicity and out-of-vocabulary tokens are discarded.
pub fn oracle_bow<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> BowTarget {
    let mut v = vec![0.0; vocab.len()];
    for tok in tokens {
        if let Some(i) = vocab.index_of(&tok.as_ref().to_lowercase()) {
            v[i] = 1.0;
        }
    }
    BowTarget(v)
}
