//! Vision-target files: one UTF-8 line per utterance,
//! `utt_id<TAB>word:prob word:prob ...`. Unlisted vocabulary words have
//! probability zero.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{VisionTarget, Vocabulary};
use crate::error::{Error, Result};

/// Parsed targets keyed by utterance id.
pub type VisionTargetFile = BTreeMap<String, VisionTarget>;

/// Writes rows in the given order, omitting zero probabilities.
pub fn write_vision_targets<'a, I>(path: impl AsRef<Path>, rows: I, vocab: &Vocabulary) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a VisionTarget)>,
{
    let path = path.as_ref();
    let mut out = String::new();
    for (id, target) in rows {
        out.push_str(id);
        out.push('\t');
        let mut first = true;
        for (i, &p) in target.values().iter().enumerate() {
            if p > 0.0 {
                if !first {
                    out.push(' ');
                }
                first = false;
                write!(out, "{}:{}", vocab.word(i), p).expect("string write");
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_vision_targets(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<VisionTargetFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vision_targets(&text, vocab, path)
}

pub fn parse_vision_targets(text: &str, vocab: &Vocabulary, path: &Path) -> Result<VisionTargetFile> {
    let err = |line: usize, detail: String| Error::Parse {
        path: PathBuf::from(path),
        line,
        detail,
    };
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| err(line_no, "missing tab after utterance id".into()))?;
        if id.is_empty() {
            return Err(err(line_no, "empty utterance id".into()));
        }
        let mut values = vec![0.0f32; vocab.len()];
        for pair in rest.split_whitespace() {
            let (word, prob) = pair
                .rsplit_once(':')
                .ok_or_else(|| err(line_no, format!("expected word:prob, found {pair:?}")))?;
            let idx = vocab
                .index_of(word)
                .ok_or_else(|| err(line_no, format!("unknown word {word:?}")))?;
            let p: f32 = prob
                .parse()
                .map_err(|_| err(line_no, format!("unparsable probability {prob:?}")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(err(line_no, format!("probability {p} for {word:?} outside [0, 1]")));
            }
            values[idx] = p;
        }
        let target = VisionTarget::new(values).map_err(|e| err(line_no, e.to_string()))?;
        if out.insert(id.to_string(), target).is_some() {
            return Err(err(line_no, format!("duplicate utterance id {id:?}")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{oracle_bow, tokenize};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vocab() -> Vocabulary {
        Vocabulary::from_words(["dog", "man", "snow", "girl"]).unwrap()
    }

    #[test]
    fn binary_file_equals_oracle() {
        let v = vocab();
        let text = "u1\tdog:1 girl:1\nu2\tman:0 snow:1\nu3\t\n";
        let t = parse_vision_targets(text, &v, Path::new("t")).unwrap();
        assert_eq!(t["u1"].values(), oracle_bow(&tokenize("a dog and a girl"), &v).values());
        assert_eq!(t["u2"].values(), oracle_bow(&tokenize("snow"), &v).values());
        assert_eq!(t["u3"].values(), &[0.0; 4]);
    }

    #[test]
    fn out_of_range_names_line() {
        let v = vocab();
        let mut text = String::new();
        for i in 1..=6 {
            text.push_str(&format!("u{i}\tdog:0.5\n"));
        }
        text.push_str("u7\tman:1.3\n");
        let err = parse_vision_targets(&text, &v, Path::new("t")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 7, .. }), "{err}");
    }

    #[test]
    fn unknown_word_is_named() {
        let err = parse_vision_targets("u1\tzebra:0.2\n", &vocab(), Path::new("t")).unwrap_err();
        assert!(err.to_string().contains("zebra"));
    }

    #[test]
    fn random_round_trip() {
        let v = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<(String, VisionTarget)> = (0..50)
            .map(|i| {
                let vals = (0..4).map(|_| rng.random_range(0.0f32..=1.0)).collect();
                (format!("utt{i:03}"), VisionTarget::new(vals).unwrap())
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vision.tsv");
        write_vision_targets(&path, rows.iter().map(|(i, t)| (i.as_str(), t)), &v).unwrap();
        let back = load_vision_targets(&path, &v).unwrap();
        for (id, t) in &rows {
            for (a, b) in t.values().iter().zip(back[id].values()) {
                assert!((a - b).abs() <= 1e-6);
            }
        }
    }
}
