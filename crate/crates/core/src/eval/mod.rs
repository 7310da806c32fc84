//! Spoken bag-of-words prediction, exact and semantic keyword spotting, and
//! the unigram baseline.

mod bow;
mod kws;
mod table;

use std::collections::{BTreeMap, BTreeSet};

pub use bow::{
    average_precision, bow_metrics, bow_predict, confusion_report, confusion_to_csv, unigram_baseline,
    BowMetrics, ConfusionRow,
};
pub use kws::{
    keyword_spot, precision_at, select_keywords, equal_error_rate, KeywordResult, KwsReport, SemanticMap,
    TieBreak,
};
pub use table::ScoreTable;

use crate::error::{Error, Result};
use crate::targets::StopList;

/// Reference word-type sets per utterance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReference {
    sets: BTreeMap<String, BTreeSet<String>>,
}

impl EvalReference {
    /// Lowercased word types of each transcription with stop words removed;
    /// out-of-vocabulary words are kept.
    pub fn from_transcriptions<'a, I, S>(items: I, stop: &StopList) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a [S])>,
        S: AsRef<str> + 'a,
    {
        let mut sets = BTreeMap::new();
        for (id, tokens) in items {
            let set: BTreeSet<String> = tokens
                .iter()
                .map(|t| t.as_ref().to_lowercase())
                .filter(|t| !stop.contains(t))
                .collect();
            if sets.insert(id.to_string(), set).is_some() {
                return Err(Error::InvalidInput(format!("duplicate utterance id {id}")));
            }
        }
        Ok(EvalReference { sets })
    }

    pub fn from_sets(sets: BTreeMap<String, BTreeSet<String>>) -> Self {
        EvalReference {
            sets: sets
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().map(|w| w.to_lowercase()).collect()))
                .collect(),
        }
    }

    pub fn get(&self, id: &str) -> Result<&BTreeSet<String>> {
        self.sets
            .get(id)
            .ok_or_else(|| Error::InvalidInput(format!("utterance {id} has no reference transcription")))
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.sets.iter().map(|(k, v)| (k.as_str(), v))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("threshold alpha must lie in [0,1], got {alpha}")));
    }
    Ok(())
}
