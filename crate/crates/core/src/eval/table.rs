use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::targets::Vocabulary;

/// Per-utterance word scores in `[0,1]`.
///
/// File form: a header `utt_id<TAB>w0,w1,...` and one `id<TAB>s0,s1,...`
/// row per utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    ids: Vec<String>,
    vocab: Vocabulary,
    scores: Vec<f32>,
}

impl ScoreTable {
    pub fn new(ids: Vec<String>, vocab: Vocabulary, rows: Vec<Vec<f32>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::InvalidInput(format!("{} ids for {} score rows", ids.len(), rows.len())));
        }
        let mut seen = std::collections::BTreeSet::new();
        let w = vocab.len();
        let mut scores = Vec::with_capacity(ids.len() * w);
        for (id, row) in ids.iter().zip(&rows) {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate utterance id {id}")));
            }
            if id.is_empty() || id.contains(['\t', '\n']) {
                return Err(Error::InvalidInput(format!("unusable utterance id {id:?}")));
            }
            if row.len() != w {
                return Err(Error::InvalidInput(format!("{id} has {} scores for {w} words", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidInput(format!("{id} has score {v} outside [0,1]")));
            }
            scores.extend_from_slice(row);
        }
        Ok(ScoreTable { ids, vocab, scores })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn fingerprint(&self) -> u64 {
        self.vocab.fingerprint()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn width(&self) -> usize {
        self.vocab.len()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.width();
        &self.scores[i * w..(i + 1) * w]
    }

    pub fn score(&self, utt: usize, word: usize) -> f32 {
        self.scores[utt * self.width() + word]
    }

    pub fn column(&self, word: usize) -> Vec<f32> {
        (0..self.len()).map(|i| self.score(i, word)).collect()
    }

    pub fn map_scores(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        let rows = (0..self.len()).map(|i| self.row(i).iter().map(|&v| f(v)).collect()).collect();
        ScoreTable::new(self.ids.clone(), self.vocab.clone(), rows)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("utt_id\t{}\n", self.vocab.words().join(","));
        for (i, id) in self.ids.iter().enumerate() {
            let row: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("{id}\t{}\n", row.join(",")));
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, detail: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            detail,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
        let words = header
            .strip_prefix("utt_id\t")
            .ok_or_else(|| err(1, "header must start with utt_id and a tab".into()))?;
        let vocab = Vocabulary::from_words(words.split(',')).map_err(|e| err(1, e.to_string()))?;
        let (mut ids, mut rows) = (Vec::new(), Vec::new());
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (id, vals) = line
                .split_once('\t')
                .ok_or_else(|| err(n + 1, "expected id, a tab, then scores".into()))?;
            let row = vals
                .split(',')
                .map(|v| v.parse::<f32>().map_err(|e| err(n + 1, format!("bad score {v:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != vocab.len() {
                return Err(err(n + 1, format!("{} scores for {} words", row.len(), vocab.len())));
            }
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(err(n + 1, format!("score {v} outside [0,1]")));
            }
            ids.push(id.to_string());
            rows.push(row);
        }
        ScoreTable::new(ids, vocab, rows).map_err(|e| err(0, e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::from_words(["dog", "cat"]).unwrap()
    }

    #[test]
    fn text_round_trip() {
        let t = ScoreTable::new(
            vec!["u1".into(), "u2".into()],
            vocab(),
            vec![vec![0.25, 1.0], vec![0.1, 0.0]],
        )
        .unwrap();
        let text = t.to_text();
        assert_eq!(text, "utt_id\tdog,cat\nu1\t0.25,1\nu2\t0.1,0\n");
        assert_eq!(ScoreTable::parse(&text, Path::new("x")).unwrap(), t);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(ScoreTable::new(vec!["a".into()], vocab(), vec![vec![1.5, 0.0]]).is_err());
        assert!(ScoreTable::new(vec!["a".into(), "a".into()], vocab(), vec![vec![0.0; 2]; 2]).is_err());
        let e = ScoreTable::parse("utt_id\tdog,cat\nu\t0.1\n", Path::new("s.tsv")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        assert!(ScoreTable::parse("id,dog\n", Path::new("s")).is_err());
    }
}
