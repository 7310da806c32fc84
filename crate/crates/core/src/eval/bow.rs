use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{check_alpha, EvalReference, ScoreTable};
use crate::error::{Error, Result};
use crate::targets::Vocabulary;

/// Words scoring strictly above `alpha`, per utterance.
pub fn bow_predict(table: &ScoreTable, alpha: f64) -> Result<Vec<(String, BTreeSet<String>)>> {
    check_alpha(alpha)?;
    Ok(table
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let set = table
                .row(i)
                .iter()
                .enumerate()
                .filter(|(_, &s)| f64::from(s) > alpha)
                .map(|(w, _)| table.vocab().word(w).to_string())
                .collect();
            (id.clone(), set)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BowMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub true_positives: usize,
    pub predicted: usize,
    pub relevant: usize,
    /// Set when nothing was predicted, so precision is reported as 0.
    pub precision_undefined: bool,
    /// Set when the reference is empty, so recall is reported as 0.
    pub recall_undefined: bool,
}

/// Corpus-level (micro-averaged) precision, recall and F-score.
pub fn bow_metrics(predictions: &[(String, BTreeSet<String>)], reference: &EvalReference) -> Result<BowMetrics> {
    if predictions.is_empty() {
        return Err(Error::InvalidInput("no utterances to evaluate".into()));
    }
    let (mut tp, mut predicted, mut relevant) = (0, 0, 0);
    for (id, pred) in predictions {
        let r = reference.get(id)?;
        tp += pred.intersection(r).count();
        predicted += pred.len();
        relevant += r.len();
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (precision, recall) = (ratio(tp, predicted), ratio(tp, relevant));
    let f_score = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(BowMetrics {
        precision,
        recall,
        f_score,
        true_positives: tp,
        predicted,
        relevant,
        precision_undefined: predicted == 0,
        recall_undefined: relevant == 0,
    })
}

/// Area under the precision-recall curve of all pooled (utterance, word)
/// decisions. Ties rank by utterance id, then word index.
pub fn average_precision(table: &ScoreTable, reference: &EvalReference) -> Result<f64> {
    let mut pairs = Vec::with_capacity(table.len() * table.width());
    for (i, id) in table.ids().iter().enumerate() {
        let r = reference.get(id)?;
        for w in 0..table.width() {
            pairs.push((table.score(i, w), id.as_str(), w, r.contains(table.vocab().word(w))));
        }
    }
    let positives = pairs.iter().filter(|p| p.3).count();
    if positives == 0 {
        return Err(Error::InvalidInput(
            "average precision needs at least one in-vocabulary reference word".into(),
        ));
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)).then(a.2.cmp(&b.2)));
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (rank, p) in pairs.iter().enumerate() {
        if p.3 {
            hits += 1;
            ap += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(ap / positives as f64)
}

/// Every utterance scored with the training-corpus unigram probability of
/// each vocabulary word (count over all tokens).
pub fn unigram_baseline<'a, I, T>(training: I, vocab: &Vocabulary, ids: &[String]) -> Result<ScoreTable>
where
    I: IntoIterator<Item = &'a T>,
    T: AsRef<[String]> + 'a + ?Sized,
{
    let mut counts = vec![0usize; vocab.len()];
    let mut total = 0usize;
    for tokens in training {
        for t in tokens.as_ref() {
            total += 1;
            if let Some(i) = vocab.index_of(&t.to_lowercase()) {
                counts[i] += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::InvalidInput("unigram baseline needs training tokens".into()));
    }
    let row: Vec<f32> = counts.iter().map(|&c| (c as f64 / total as f64) as f32).collect();
    ScoreTable::new(ids.to_vec(), vocab.clone(), vec![row; ids.len()])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionRow {
    pub word: String,
    pub false_alarms: usize,
    /// Reference words of the false-alarm utterances, most frequent first.
    pub cooccurrents: Vec<(String, usize)>,
}

/// For each word predicted above `alpha` where the reference lacks it, the
/// reference words it co-occurred with.
pub fn confusion_report(table: &ScoreTable, reference: &EvalReference, alpha: f64) -> Result<Vec<ConfusionRow>> {
    let mut rows: BTreeMap<String, (usize, BTreeMap<String, usize>)> = BTreeMap::new();
    for (id, pred) in bow_predict(table, alpha)? {
        let r = reference.get(&id)?;
        for w in pred.difference(r) {
            let entry = rows.entry(w.clone()).or_default();
            entry.0 += 1;
            for c in r {
                *entry.1.entry(c.clone()).or_insert(0) += 1;
            }
        }
    }
    let mut out: Vec<ConfusionRow> = rows
        .into_iter()
        .map(|(word, (false_alarms, co))| {
            let mut cooccurrents: Vec<(String, usize)> = co.into_iter().collect();
            cooccurrents.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            ConfusionRow {
                word,
                false_alarms,
                cooccurrents,
            }
        })
        .collect();
    out.sort_by(|a, b| b.false_alarms.cmp(&a.false_alarms).then_with(|| a.word.cmp(&b.word)));
    Ok(out)
}

/// CSV with one line per (false alarm, co-occurring word) pair.
pub fn confusion_to_csv(rows: &[ConfusionRow]) -> String {
    let mut out = String::from("predicted,false_alarms,cooccurring,count\n");
    for r in rows {
        for (c, n) in &r.cooccurrents {
            out.push_str(&format!("{},{},{c},{n}\n", r.word, r.false_alarms));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(words: &[&str], rows: Vec<Vec<f32>>) -> ScoreTable {
        let ids = (0..rows.len()).map(|i| format!("u{i}")).collect();
        ScoreTable::new(ids, Vocabulary::from_words(words.iter().copied()).unwrap(), rows).unwrap()
    }

    fn reference(sets: &[&[&str]]) -> EvalReference {
        EvalReference::from_sets(
            sets.iter()
                .enumerate()
                .map(|(i, s)| (format!("u{i}"), s.iter().map(|w| w.to_string()).collect()))
                .collect(),
        )
    }

    #[test]
    fn thresholds() {
        let t = table(&["a", "b", "c"], vec![vec![0.8, 0.3, 0.71]]);
        let p = bow_predict(&t, 0.7).unwrap();
        assert_eq!(p[0].1, ["a", "c"].iter().map(|s| s.to_string()).collect());
        assert!(bow_predict(&t, 1.0).unwrap()[0].1.is_empty());
        assert_eq!(bow_predict(&t, 0.0).unwrap()[0].1.len(), 3);
        assert!(bow_predict(&t, 1.5).is_err());
    }

    #[test]
    fn half_overlap() {
        let pred = vec![("u0".to_string(), ["a", "b"].iter().map(|s| s.to_string()).collect())];
        let m = bow_metrics(&pred, &reference(&[&["b", "c"]])).unwrap();
        assert_eq!((m.precision, m.recall, m.f_score), (0.5, 0.5, 0.5));
    }

    #[test]
    fn degenerate_metrics_are_flagged() {
        let pred = vec![("u0".to_string(), BTreeSet::new())];
        let m = bow_metrics(&pred, &reference(&[&["b"]])).unwrap();
        assert!(m.precision_undefined && !m.recall_undefined);
        assert_eq!(m.f_score, 0.0);
        assert!(bow_metrics(&[], &reference(&[])).is_err());
    }

    #[test]
    fn hand_enumerated_ap() {
        let t = table(&["a", "b", "c"], vec![vec![0.9, 0.8, 0.7]]);
        let ap = average_precision(&t, &reference(&[&["a", "c"]])).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
        assert!(average_precision(&t, &reference(&[&["zzz"]])).is_err());
    }

    #[test]
    fn unigram_rows() {
        let corpus = vec![vec!["dog".to_string(), "dog".into(), "cat".into()]];
        let vocab = Vocabulary::from_words(["dog", "cat"]).unwrap();
        let t = unigram_baseline(&corpus, &vocab, &["x".into(), "y".into()]).unwrap();
        for i in 0..2 {
            assert_eq!(t.row(i), &[(2.0f64 / 3.0) as f32, (1.0f64 / 3.0) as f32]);
        }
    }

    #[test]
    fn confusion_rows() {
        let t = table(&["snow", "hill"], vec![vec![0.9, 0.1]]);
        let r = confusion_report(&t, &reference(&[&["snowy", "hill"]]), 0.5).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].word, "snow");
        assert_eq!(r[0].cooccurrents, vec![("hill".into(), 1), ("snowy".into(), 1)]);
        let csv = confusion_to_csv(&r);
        assert_eq!(csv.lines().count(), 3);
        let none = confusion_report(&t, &reference(&[&["snow"]]), 0.5).unwrap();
        assert!(none.is_empty());
    }
}
