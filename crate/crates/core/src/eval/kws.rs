use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use serde::Serialize;

use super::{EvalReference, ScoreTable};
use crate::error::{Error, Result};
use crate::targets::Vocabulary;
use crate::util::rng_for;

/// Order among equal scores when ranking utterances for a keyword.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TieBreak {
    UtteranceId,
    /// A seeded random order, drawn independently per keyword.
    Shuffled(u64),
}

/// Words that count as a match for each keyword. A keyword always matches
/// itself.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SemanticMap {
    map: BTreeMap<String, BTreeSet<String>>,
}

impl SemanticMap {
    pub fn new(map: BTreeMap<String, BTreeSet<String>>) -> Self {
        let map = map
            .into_iter()
            .map(|(k, mut v)| {
                v.insert(k.clone());
                (k, v)
            })
            .collect();
        SemanticMap { map }
    }

    pub fn acceptable(&self, keyword: &str) -> BTreeSet<String> {
        self.map
            .get(keyword)
            .cloned()
            .unwrap_or_else(|| BTreeSet::from([keyword.to_string()]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// One `keyword<TAB>match,match,...` line per keyword.
    pub fn to_text(&self) -> String {
        self.map
            .iter()
            .map(|(k, v)| format!("{k}\t{}\n", v.iter().cloned().collect::<Vec<_>>().join(",")))
            .collect()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |detail: String| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                detail,
            };
            let (k, v) = line.split_once('\t').unwrap_or((line, ""));
            if k.is_empty() {
                return Err(err("missing keyword".into()));
            }
            let set: BTreeSet<String> = v.split(',').filter(|s| !s.is_empty()).map(|s| s.to_lowercase()).collect();
            if map.insert(k.to_lowercase(), set).is_some() {
                return Err(err(format!("keyword {k} listed twice")));
            }
        }
        Ok(SemanticMap::new(map))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// `count` keywords drawn without replacement from the vocabulary words
/// occurring in at least `min_occurrences` reference utterances, returned
/// in vocabulary order.
pub fn select_keywords(
    reference: &EvalReference,
    vocab: &Vocabulary,
    count: usize,
    min_occurrences: usize,
    seed: u64,
) -> Result<Vec<String>> {
    let eligible: Vec<&String> = vocab
        .words()
        .iter()
        .filter(|w| reference.iter().filter(|(_, s)| s.contains(*w)).count() >= min_occurrences)
        .collect();
    if eligible.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no vocabulary word occurs in {min_occurrences} or more utterances"
        )));
    }
    if eligible.len() < count {
        log::warn!("only {} words are eligible as keywords, {count} requested", eligible.len());
    }
    let mut rng = rng_for(seed, "keywords");
    let mut chosen: Vec<&String> = eligible.choose_multiple(&mut rng, count).copied().collect();
    chosen.sort_by_key(|w| vocab.index_of(w));
    Ok(chosen.into_iter().cloned().collect())
}

/// Hits among the first `k` ranks, divided by `k`.
pub fn precision_at(ranked_hits: &[bool], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    ranked_hits.iter().take(k).filter(|&&h| h).count() as f64 / k as f64
}

/// Equal error rate of accepting each prefix of a ranked list, linearly
/// interpolated where false acceptance overtakes false rejection. `None`
/// without positives; 0 when every item is positive.
pub fn equal_error_rate(ranked_hits: &[bool]) -> Option<f64> {
    let pos = ranked_hits.iter().filter(|&&h| h).count();
    let neg = ranked_hits.len() - pos;
    if pos == 0 {
        return None;
    }
    if neg == 0 {
        return Some(0.0);
    }
    let (pos, neg) = (pos as f64, neg as f64);
    let (mut fa_hits, mut tp) = (0usize, 0usize);
    let mut prev = (0.0, 1.0);
    for &h in ranked_hits {
        if h {
            tp += 1;
        } else {
            fa_hits += 1;
        }
        let fa = fa_hits as f64 / neg;
        let fr = 1.0 - tp as f64 / pos;
        if fa >= fr {
            let (d0, d1) = (prev.0 - prev.1, fa - fr);
            if d1 == 0.0 {
                return Some(fa);
            }
            let t = -d0 / (d1 - d0);
            return Some(prev.0 + t * (fa - prev.0));
        }
        prev = (fa, fr);
    }
    unreachable!("false acceptance reaches 1 while false rejection reaches 0")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeywordResult {
    pub keyword: String,
    /// Utterances counted as correct retrievals (N).
    pub occurrences: usize,
    pub p_at_10: f64,
    pub p_at_n: f64,
    pub eer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KwsReport {
    pub per_keyword: Vec<KeywordResult>,
    /// Keywords without any correct retrieval, left out of the averages.
    pub excluded: Vec<String>,
    pub mean_p_at_10: f64,
    pub mean_p_at_n: f64,
    pub mean_eer: f64,
}

/// Ranks utterances by each keyword's score. With a semantic map, an
/// utterance is correct when its reference meets the keyword's acceptable
/// set; otherwise it must contain the keyword itself.
pub fn keyword_spot(
    table: &ScoreTable,
    keywords: &[String],
    reference: &EvalReference,
    semantic: Option<&SemanticMap>,
    tie: TieBreak,
) -> Result<KwsReport> {
    let refs = table
        .ids()
        .iter()
        .map(|id| reference.get(id))
        .collect::<Result<Vec<_>>>()?;
    let mut by_id: Vec<usize> = (0..table.len()).collect();
    by_id.sort_by(|&a, &b| table.ids()[a].cmp(&table.ids()[b]));
    let mut per_keyword = Vec::new();
    let mut excluded = Vec::new();
    for kw in keywords {
        let w = table
            .vocab()
            .index_of(kw)
            .ok_or_else(|| Error::InvalidInput(format!("keyword {kw} is not in the vocabulary")))?;
        let accept = match semantic {
            Some(m) => m.acceptable(kw),
            None => BTreeSet::from([kw.clone()]),
        };
        let mut order = by_id.clone();
        if let TieBreak::Shuffled(seed) = tie {
            order.shuffle(&mut rng_for(seed, kw));
        }
        order.sort_by(|&a, &b| table.score(b, w).total_cmp(&table.score(a, w)));
        let hits: Vec<bool> = order.iter().map(|&i| !refs[i].is_disjoint(&accept)).collect();
        let n = hits.iter().filter(|&&h| h).count();
        let Some(eer) = equal_error_rate(&hits) else {
            log::debug!("keyword {kw} has no true occurrences and is excluded");
            excluded.push(kw.clone());
            continue;
        };
        per_keyword.push(KeywordResult {
            keyword: kw.clone(),
            occurrences: n,
            p_at_10: precision_at(&hits, 10),
            p_at_n: precision_at(&hits, n),
            eer,
        });
    }
    if per_keyword.is_empty() {
        return Err(Error::InvalidInput("no keyword has a true occurrence".into()));
    }
    let mean = |f: fn(&KeywordResult) -> f64| per_keyword.iter().map(f).sum::<f64>() / per_keyword.len() as f64;
    Ok(KwsReport {
        mean_p_at_10: mean(|r| r.p_at_10),
        mean_p_at_n: mean(|r| r.p_at_n),
        mean_eer: mean(|r| r.eer),
        per_keyword,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_example() {
        // Ranked: 0.9+, 0.6-, 0.4+, 0.1-.
        assert_eq!(equal_error_rate(&[true, false, true, false]), Some(0.5));
        assert_eq!(equal_error_rate(&[true, true, false]), Some(0.0));
        assert_eq!(equal_error_rate(&[false, false, true]), Some(1.0));
        assert_eq!(equal_error_rate(&[false, false]), None);
    }

    #[test]
    fn interpolated_crossing() {
        // 1 positive, 2 negatives: neg, pos, neg. FA/FR pairs (0,1) (.5,1)
        // (.5,0) (1,0); the crossing segment is (.5,1)→(.5,0), so EER = .5.
        assert_eq!(equal_error_rate(&[false, true, false]), Some(0.5));
        // 2 positives, 1 negative: pos, neg, pos. (0,.5)→(1,.5) crosses at .5.
        assert_eq!(equal_error_rate(&[true, false, true]), Some(0.5));
    }

    #[test]
    fn precision_prefixes() {
        let h = [true, false, true, true];
        assert_eq!(precision_at(&h, 2), 0.5);
        assert_eq!(precision_at(&h, 10), 0.3);
    }

    #[test]
    fn semantic_map_text() {
        let m = SemanticMap::parse("girl\tyoung,child\n# note\nsnow\n", Path::new("m")).unwrap();
        assert!(m.acceptable("girl").contains("girl"));
        assert!(m.acceptable("girl").contains("young"));
        assert_eq!(m.acceptable("snow").len(), 1);
        assert_eq!(m.acceptable("dog"), BTreeSet::from(["dog".to_string()]));
        let back = SemanticMap::parse(&m.to_text(), Path::new("m")).unwrap();
        assert_eq!(back, m);
    }
}
