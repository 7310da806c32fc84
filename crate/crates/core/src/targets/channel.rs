//! Simulated image tagger.
//!
//! Turns a transcription-derived multi-hot vector into soft targets the way
//! an imperfect visual classifier would: present words usually get a high
//! probability but are sometimes missed, absent words occasionally get a
//! moderate false-alarm probability, and words the tagger confuses with a
//! present word (`girl` → `young`) receive leaked probability.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::{BowTarget, VisionTarget, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfusionEntry {
    pub word: String,
    pub leak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisionChannelConfig {
    pub miss_rate: f64,
    pub false_alarm_rate: f64,
    /// Present word → words that receive leaked probability when it appears.
    pub confusion: BTreeMap<String, Vec<ConfusionEntry>>,
    /// Beta concentration `a + b` of every emitted probability. `None`
    /// makes the channel deterministic: each draw returns its mean.
    pub concentration: Option<f64>,
    pub high_mean: f64,
    pub moderate_mean: f64,
    pub low_mean: f64,
    pub seed: u64,
}

impl Default for VisionChannelConfig {
    fn default() -> Self {
        VisionChannelConfig {
            miss_rate: 0.1,
            false_alarm_rate: 0.05,
            confusion: BTreeMap::new(),
            concentration: Some(20.0),
            high_mean: 0.85,
            moderate_mean: 0.5,
            low_mean: 0.03,
            seed: 0,
        }
    }
}

impl VisionChannelConfig {
    /// Emits the truth unchanged.
    pub fn noiseless() -> Self {
        VisionChannelConfig {
            miss_rate: 0.0,
            false_alarm_rate: 0.0,
            confusion: BTreeMap::new(),
            concentration: None,
            high_mean: 1.0,
            moderate_mean: 0.5,
            low_mean: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be in [0, 1], got {v}")))
            }
        };
        unit("miss_rate", self.miss_rate)?;
        unit("false_alarm_rate", self.false_alarm_rate)?;
        unit("high_mean", self.high_mean)?;
        unit("moderate_mean", self.moderate_mean)?;
        unit("low_mean", self.low_mean)?;
        if let Some(c) = self.concentration {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("concentration must be positive, got {c}")));
            }
        }
        for (src, entries) in &self.confusion {
            if !vocab.contains(src) {
                return Err(Error::Config(format!("confusion source {src:?} is not in the vocabulary")));
            }
            for e in entries {
                if !vocab.contains(&e.word) {
                    return Err(Error::Config(format!(
                        "confusion target {:?} of {src:?} is not in the vocabulary",
                        e.word
                    )));
                }
                unit("confusion leak", e.leak)?;
            }
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> f32 {
        match self.concentration {
            Some(c) if mean > 0.0 && mean < 1.0 => {
                let beta = Beta::new(c * mean, c * (1.0 - mean)).expect("validated parameters");
                beta.sample(rng) as f32
            }
            _ => mean as f32,
        }
    }
}

/// One noisy tagger output for an utterance whose true bag of words is
/// `truth`.
pub fn simulate_vision_channel<R: Rng + ?Sized>(
    truth: &BowTarget,
    vocab: &Vocabulary,
    config: &VisionChannelConfig,
    rng: &mut R,
) -> VisionTarget {
    let mut out: Vec<f32> = truth
        .values()
        .iter()
        .map(|&t| {
            let u: f64 = rng.random();
            let mean = if t == 1.0 {
                if u < config.miss_rate {
                    config.low_mean
                } else {
                    config.high_mean
                }
            } else if u < config.false_alarm_rate {
                config.moderate_mean
            } else {
                config.low_mean
            };
            config.draw(mean, rng)
        })
        .collect();

    for (src, entries) in &config.confusion {
        let Some(si) = vocab.index_of(src) else {
            continue;
        };
        if !truth.is_present(si) {
            continue;
        }
        for e in entries {
            let Some(ti) = vocab.index_of(&e.word) else {
                continue;
            };
            if truth.is_present(ti) {
                continue;
            }
            if rng.random::<f64>() < e.leak {
                out[ti] = out[ti].max(config.draw(config.high_mean, rng));
            }
        }
    }
    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    VisionTarget::new(out).expect("clamped to the unit interval")
}
