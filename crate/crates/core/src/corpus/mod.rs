//! Seeded synthetic grounded corpora generated directly in feature space.
//!
//! Each word type owns a fixed random `frames×39` prototype. An utterance
//! draws its words from a Zipf distribution (stop words take the top
//! ranks), lays their prototypes end to end with per-token and per-frame
//! Gaussian noise, and pads with silence up to a minimum length. Vision
//! targets come from the simulated tagger applied to the oracle bag of
//! words.

mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use manifest::{Manifest, ManifestRecord, Split};

use crate::error::{Error, Result};
use crate::eval::SemanticMap;
use crate::features::{write_features, FeatureMatrix, FEATURE_DIM};
use crate::targets::{
    oracle_bow, simulate_vision_channel, write_vision_targets, ConfusionEntry, StopList, VisionChannelConfig,
    Vocabulary,
};
use crate::util::rng_for;

/// Stop words in Zipf-rank order; all belong to the English stop list.
pub const STOP_WORDS: [&str; 16] = [
    "a", "the", "in", "on", "is", "with", "of", "and", "at", "to", "an", "are", "his", "her", "while", "through",
];

/// Content words in Zipf-rank order.
pub const CONTENT_WORDS: [&str; 20] = [
    "man", "dog", "girl", "person", "young", "water", "snowy", "snow", "ball", "grass", "boy", "bike", "bicycle",
    "playing", "play", "red", "beach", "shirt", "field", "street",
];

/// Rare words outside the vocabulary.
pub const OOV_WORDS: [&str; 8] = ["rock", "wall", "crowd", "jacket", "car", "tree", "hat", "pool"];

/// Tagger confusions between related vocabulary words.
pub fn default_confusion() -> BTreeMap<String, Vec<ConfusionEntry>> {
    [
        ("girl", "young"),
        ("man", "person"),
        ("snowy", "snow"),
        ("bicycle", "bike"),
        ("playing", "play"),
    ]
    .into_iter()
    .map(|(a, b)| {
        (
            a.to_string(),
            vec![ConfusionEntry {
                word: b.to_string(),
                leak: 0.7,
            }],
        )
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Number of in-vocabulary content word types.
    pub vocab_size: usize,
    pub stop_words: usize,
    pub oov_words: usize,
    /// Inclusive token-count range per utterance.
    pub words_per_utterance: [usize; 2],
    /// Inclusive frame-count range of a word prototype.
    pub prototype_frames: [usize; 2],
    /// Standard deviation of the per-token offset added to a prototype.
    pub prototype_noise: f64,
    /// Standard deviation of the per-frame additive noise.
    pub frame_noise: f64,
    /// Utterances shorter than this are padded with silence frames.
    pub min_frames: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub zipf_exponent: f64,
    pub seed: u64,
    pub channel: VisionChannelConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_size: 20,
            stop_words: 10,
            oov_words: 5,
            words_per_utterance: [3, 7],
            prototype_frames: [40, 70],
            prototype_noise: 0.05,
            frame_noise: 0.05,
            min_frames: 200,
            train: 2000,
            dev: 200,
            test: 200,
            zipf_exponent: 1.0,
            seed: 17,
            channel: VisionChannelConfig {
                confusion: default_confusion(),
                ..Default::default()
            },
        }
    }
}

fn content_word(i: usize) -> String {
    CONTENT_WORDS.get(i).map(|s| s.to_string()).unwrap_or_else(|| format!("word{i:03}"))
}

fn oov_word(i: usize) -> String {
    OOV_WORDS.get(i).map(|s| s.to_string()).unwrap_or_else(|| format!("rare{i:03}"))
}

impl SynthConfig {
    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Vocabulary::from_words((0..self.vocab_size).map(content_word))
    }

    /// All word types in Zipf-rank order.
    pub fn word_types(&self) -> Vec<String> {
        STOP_WORDS[..self.stop_words.min(STOP_WORDS.len())]
            .iter()
            .map(|s| s.to_string())
            .chain((0..self.vocab_size).map(content_word))
            .chain((0..self.oov_words).map(oov_word))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, detail: String| Err(Error::Config(format!("synth.{field}: {detail}")));
        for (name, v) in [("vocab_size", self.vocab_size), ("train", self.train), ("dev", self.dev), ("test", self.test)] {
            if v == 0 {
                return bad(name, "must be at least 1".into());
            }
        }
        if self.stop_words > STOP_WORDS.len() {
            return bad("stop_words", format!("at most {} are available", STOP_WORDS.len()));
        }
        for (name, [lo, hi]) in [
            ("words_per_utterance", self.words_per_utterance),
            ("prototype_frames", self.prototype_frames),
        ] {
            if lo == 0 || lo > hi {
                return bad(name, format!("range [{lo}, {hi}] must satisfy 1 <= min <= max"));
            }
        }
        for (name, v) in [("prototype_noise", self.prototype_noise), ("frame_noise", self.frame_noise)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name, format!("must be a finite non-negative deviation, got {v}"));
            }
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return bad("zipf_exponent", format!("must be finite and non-negative, got {}", self.zipf_exponent));
        }
        self.channel.validate(&self.vocabulary()?)
    }

    /// Match sets for semantic keyword spotting: every confusion pair in
    /// both directions.
    pub fn semantic_map(&self) -> SemanticMap {
        let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (a, entries) in &self.channel.confusion {
            for e in entries {
                map.entry(a.clone()).or_default().insert(e.word.clone());
                map.entry(e.word.clone()).or_default().insert(a.clone());
            }
        }
        SemanticMap::new(map)
    }
}

/// Files written by [`generate_corpus`].
#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
    pub vocab: Vocabulary,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const STOPLIST_FILE: &str = "stopwords.txt";
pub const VISION_FILE: &str = "vision_targets.txt";
pub const SEMANTIC_FILE: &str = "semantic_map.tsv";

struct Prototypes {
    frames: Vec<Vec<f32>>, // per type, rows·39
    silence: Vec<f32>,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f32 {
    let v: f64 = StandardNormal.sample(rng);
    v as f32
}

fn prototypes(config: &SynthConfig, types: usize) -> Prototypes {
    let mut rng = rng_for(config.seed, "prototypes");
    let [lo, hi] = config.prototype_frames;
    let frames = (0..types)
        .map(|_| {
            let len = rng.random_range(lo..=hi);
            (0..len * FEATURE_DIM).map(|_| gaussian(&mut rng)).collect()
        })
        .collect();
    let silence = (0..FEATURE_DIM).map(|_| 0.1 * gaussian(&mut rng)).collect();
    Prototypes { frames, silence }
}

/// Features of one utterance made of the given word types.
fn render(
    words: &[usize],
    protos: &Prototypes,
    config: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Result<FeatureMatrix> {
    let token_noise = Normal::new(0.0, config.prototype_noise).expect("validated deviation");
    let frame_noise = Normal::new(0.0, config.frame_noise).expect("validated deviation");
    let mut data = Vec::new();
    for &w in words {
        let offset: Vec<f32> = (0..FEATURE_DIM).map(|_| token_noise.sample(rng) as f32).collect();
        for row in protos.frames[w].chunks_exact(FEATURE_DIM) {
            for d in 0..FEATURE_DIM {
                data.push(row[d] + offset[d] + frame_noise.sample(rng) as f32);
            }
        }
    }
    while data.len() < config.min_frames * FEATURE_DIM {
        for d in 0..FEATURE_DIM {
            data.push(protos.silence[d] + frame_noise.sample(rng) as f32);
        }
    }
    FeatureMatrix::new(data.len() / FEATURE_DIM, FEATURE_DIM, data)
}

/// Writes a corpus into `out_dir` and returns its manifest.
pub fn generate_corpus(config: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<GeneratedCorpus> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir.join("features")).map_err(|e| Error::io(out_dir, e))?;
    let vocab = config.vocabulary()?;
    let types = config.word_types();
    let protos = prototypes(config, types.len());
    let weights: Vec<f64> = (1..=types.len())
        .map(|r| (r as f64).powf(-config.zipf_exponent))
        .collect();
    let zipf = WeightedIndex::new(&weights).map_err(|e| Error::Config(format!("word distribution: {e}")))?;

    let mut plan = Vec::new();
    for (split, n) in [(Split::Train, config.train), (Split::Dev, config.dev), (Split::Test, config.test)] {
        for i in 0..n {
            plan.push((split, format!("{split}_{i:05}")));
        }
    }

    let [lo, hi] = config.words_per_utterance;
    let utterances = plan
        .par_iter()
        .map(|(split, id)| {
            let mut rng = rng_for(config.seed, &format!("utterance/{id}"));
            let n = rng.random_range(lo..=hi);
            let words: Vec<usize> = (0..n).map(|_| zipf.sample(&mut rng)).collect();
            let features = render(&words, &protos, config, &mut rng)?;
            let transcription: Vec<String> = words.iter().map(|&w| types[w].clone()).collect();
            let truth = oracle_bow(&transcription, &vocab);
            let mut vrng = rng_for(config.seed, &format!("vision/{}/{id}", config.channel.seed));
            let vision = simulate_vision_channel(&truth, &vocab, &config.channel, &mut vrng);
            let rel = format!("features/{id}.gkwf");
            write_features(out_dir.join(&rel), &features)?;
            Ok((
                ManifestRecord {
                    id: id.clone(),
                    split: *split,
                    features: rel,
                    transcription,
                    vision_targets: Some(VISION_FILE.to_string()),
                },
                vision,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    write_vision_targets(
        out_dir.join(VISION_FILE),
        utterances.iter().map(|(r, v)| (r.id.as_str(), v)),
        &vocab,
    )?;
    vocab.write(out_dir.join(VOCAB_FILE))?;
    let stop = out_dir.join(STOPLIST_FILE);
    fs::write(&stop, StopList::english().to_text()).map_err(|e| Error::io(&stop, e))?;
    config.semantic_map().write(out_dir.join(SEMANTIC_FILE))?;
    let manifest = Manifest::new(out_dir, utterances.into_iter().map(|(r, _)| r).collect())?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    manifest.write(&manifest_path)?;
    Ok(GeneratedCorpus {
        manifest_path,
        manifest,
        vocab,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub utterances: usize,
    pub splits: BTreeMap<String, usize>,
    pub tokens: usize,
    pub type_counts: BTreeMap<String, usize>,
    /// Tokens per utterance → utterance count.
    pub words_histogram: BTreeMap<usize, usize>,
    /// Frame count rounded down to a multiple of 10 → utterance count.
    pub frames_histogram: BTreeMap<usize, usize>,
    /// Negated slope of the least-squares line through
    /// (log rank, log frequency) over all observed types.
    pub zipf_exponent: Option<f64>,
}

/// Least-squares Zipf exponent of a set of type counts.
pub fn fit_zipf(counts: impl IntoIterator<Item = usize>) -> Option<f64> {
    let mut c: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
    if c.len() < 2 {
        return None;
    }
    c.sort_unstable_by(|a, b| b.cmp(a));
    let pts: Vec<(f64, f64)> = c
        .iter()
        .enumerate()
        .map(|(i, &n)| (((i + 1) as f64).ln(), (n as f64).ln()))
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(-sxy / sxx)
}

pub fn corpus_stats(manifest: &Manifest) -> Result<CorpusStats> {
    if manifest.is_empty() {
        return Err(Error::InvalidInput("manifest lists no utterances".into()));
    }
    let mut splits = BTreeMap::new();
    let mut type_counts = BTreeMap::new();
    let mut words_histogram = BTreeMap::new();
    let mut frames_histogram = BTreeMap::new();
    let mut tokens = 0;
    for r in manifest.records() {
        *splits.entry(r.split.to_string()).or_insert(0) += 1;
        for t in &r.transcription {
            *type_counts.entry(t.to_lowercase()).or_insert(0) += 1;
        }
        tokens += r.transcription.len();
        *words_histogram.entry(r.transcription.len()).or_insert(0) += 1;
        let rows = manifest.load_features(r)?.rows();
        *frames_histogram.entry(rows / 10 * 10).or_insert(0) += 1;
    }
    Ok(CorpusStats {
        utterances: manifest.len(),
        splits,
        tokens,
        zipf_exponent: fit_zipf(type_counts.values().copied()),
        type_counts,
        words_histogram,
        frames_histogram,
    })
}
