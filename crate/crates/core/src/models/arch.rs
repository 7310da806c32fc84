use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Convolution and max-pooling stack, global max pool, dense head.
    CnnPool,
    /// Convolutions only; the last one has one linear filter per word and
    /// is aggregated by logsumexp pooling.
    Psc,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::CnnPool => "cnn-pool",
            Variant::Psc => "psc",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv {
        filters: usize,
        width: usize,
        activation: Activation,
    },
    MaxPool {
        size: usize,
    },
    GlobalMaxPool,
    Dense {
        units: usize,
        activation: Activation,
    },
    LogSumExpPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub variant: Variant,
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
    pub output_dim: usize,
    /// Logsumexp pooling sharpness; unused by `cnn-pool`.
    pub r: f64,
}

fn conv(filters: usize, width: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Conv {
        filters,
        width,
        activation,
    }
}

fn dense(units: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Dense { units, activation }
}

impl ArchitectureSpec {
    /// The full convolution/max-pool network over 39-dimensional frames.
    pub fn cnn_pool(output_dim: usize) -> Self {
        use Activation::*;
        ArchitectureSpec {
            variant: Variant::CnnPool,
            input_dim: crate::features::FEATURE_DIM,
            layers: vec![
                conv(64, 9, Relu),
                LayerSpec::MaxPool { size: 3 },
                conv(256, 10, Relu),
                LayerSpec::MaxPool { size: 3 },
                conv(1024, 11, Relu),
                LayerSpec::GlobalMaxPool,
                dense(4096, Relu),
                dense(output_dim, Sigmoid),
            ],
            output_dim,
            r: 1.0,
        }
    }

    /// The full word-filter network with logsumexp pooling at `r = 1`.
    pub fn psc(output_dim: usize) -> Self {
        use Activation::*;
        let mut layers = vec![conv(96, 9, Relu)];
        layers.extend((0..4).map(|_| conv(96, 10, Relu)));
        layers.push(conv(output_dim, 10, Linear));
        layers.push(LayerSpec::LogSumExpPool);
        ArchitectureSpec {
            variant: Variant::Psc,
            input_dim: crate::features::FEATURE_DIM,
            layers,
            output_dim,
            r: 1.0,
        }
    }

    /// Same layer pattern as [`cnn_pool`](Self::cnn_pool) at a few units
    /// per layer, for gradient checks and quick tests.
    pub fn toy_cnn(input_dim: usize, output_dim: usize) -> Self {
        use Activation::*;
        ArchitectureSpec {
            variant: Variant::CnnPool,
            input_dim,
            layers: vec![
                conv(4, 3, Relu),
                LayerSpec::MaxPool { size: 2 },
                conv(5, 3, Relu),
                LayerSpec::MaxPool { size: 2 },
                conv(6, 2, Relu),
                LayerSpec::GlobalMaxPool,
                dense(8, Relu),
                dense(output_dim, Sigmoid),
            ],
            output_dim,
            r: 1.0,
        }
    }

    pub fn toy_psc(input_dim: usize, output_dim: usize) -> Self {
        use Activation::*;
        ArchitectureSpec {
            variant: Variant::Psc,
            input_dim,
            layers: vec![
                conv(5, 3, Relu),
                conv(5, 3, Relu),
                conv(5, 3, Relu),
                conv(output_dim, 3, Linear),
                LayerSpec::LogSumExpPool,
            ],
            output_dim,
            r: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("{} architecture: {msg}", self.variant)));
        if self.input_dim == 0 || self.output_dim == 0 {
            return bad("input and output dimensions must be positive".into());
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad(format!("pooling sharpness r must be positive, got {}", self.r));
        }
        for l in &self.layers {
            let ok = match l {
                LayerSpec::Conv { filters, width, .. } => *filters > 0 && *width > 0,
                LayerSpec::MaxPool { size } => *size > 0,
                LayerSpec::Dense { units, .. } => *units > 0,
                LayerSpec::GlobalMaxPool | LayerSpec::LogSumExpPool => true,
            };
            if !ok {
                return bad(format!("layer {l:?} has a zero size"));
            }
        }
        match self.variant {
            Variant::CnnPool => {
                let Some(g) = self.layers.iter().position(|l| *l == LayerSpec::GlobalMaxPool) else {
                    return bad("needs a global max pool".into());
                };
                let (seq, head) = (&self.layers[..g], &self.layers[g + 1..]);
                if !matches!(seq.first(), Some(LayerSpec::Conv { .. }))
                    || !seq.iter().all(|l| matches!(l, LayerSpec::Conv { .. } | LayerSpec::MaxPool { .. }))
                {
                    return bad("layers before the global pool must be convolutions and max pools, starting with a convolution".into());
                }
                if head.is_empty() || !head.iter().all(|l| matches!(l, LayerSpec::Dense { .. })) {
                    return bad("layers after the global pool must be dense".into());
                }
                match head.last() {
                    Some(LayerSpec::Dense {
                        units,
                        activation: Activation::Sigmoid,
                    }) if *units == self.output_dim => Ok(()),
                    _ => bad(format!("final layer must be a {}-unit sigmoid dense layer", self.output_dim)),
                }
            }
            Variant::Psc => {
                let n = self.layers.len();
                if n < 2 || self.layers[n - 1] != LayerSpec::LogSumExpPool {
                    return bad("must end with logsumexp pooling".into());
                }
                if !self.layers[..n - 1].iter().all(|l| matches!(l, LayerSpec::Conv { .. })) {
                    return bad("all layers before pooling must be convolutions".into());
                }
                match &self.layers[n - 2] {
                    LayerSpec::Conv {
                        filters,
                        activation: Activation::Linear,
                        ..
                    } if *filters == self.output_dim => Ok(()),
                    _ => bad(format!(
                        "final convolution must be linear with exactly {} filters",
                        self.output_dim
                    )),
                }
            }
        }
    }

    /// Time extent after each convolution or max-pool layer for a `frames`
    /// long input.
    pub fn time_extents(&self, frames: usize) -> Result<Vec<usize>> {
        let mut t = frames;
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                LayerSpec::Conv { width, .. } => {
                    if t < *width {
                        return Err(Error::InvalidInput(format!(
                            "{frames} frames reduce to {t} before a width-{width} convolution"
                        )));
                    }
                    t = t - width + 1;
                    out.push(t);
                }
                LayerSpec::MaxPool { size } => {
                    t = t.div_ceil(*size);
                    out.push(t);
                }
                _ => break,
            }
        }
        Ok(out)
    }

    /// Shortest input every valid convolution accepts.
    pub fn min_frames(&self) -> usize {
        // Extents are monotone in the input length, so the first success is
        // the minimum.
        (1..)
            .find(|&t| self.time_extents(t).is_ok())
            .expect("some length is always long enough")
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("architecture serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_cnn_extents_for_800_frames() {
        let spec = ArchitectureSpec::cnn_pool(1000);
        spec.validate().unwrap();
        assert_eq!(spec.time_extents(800).unwrap(), vec![792, 264, 255, 85, 75]);
    }

    #[test]
    fn full_psc_extents_for_800_frames() {
        let spec = ArchitectureSpec::psc(1000);
        spec.validate().unwrap();
        assert_eq!(spec.time_extents(800).unwrap(), vec![792, 783, 774, 765, 756, 747]);
    }

    #[test]
    fn minimum_lengths() {
        // conv9 → pool3 → conv10 → pool3 → conv11 needs 11 pooled frames,
        // hence 31 → 40 → 118 → 126 input frames.
        assert_eq!(ArchitectureSpec::cnn_pool(20).min_frames(), 126);
        assert_eq!(ArchitectureSpec::psc(20).min_frames(), 54);
        assert!(ArchitectureSpec::cnn_pool(20).time_extents(125).is_err());
    }

    #[test]
    fn validation_catches_wrong_heads() {
        let mut s = ArchitectureSpec::psc(10);
        s.output_dim = 11;
        assert!(s.validate().is_err());
        let mut s = ArchitectureSpec::cnn_pool(10);
        s.layers.pop();
        assert!(s.validate().is_err());
        let mut s = ArchitectureSpec::psc(10);
        s.r = 0.0;
        assert!(s.validate().is_err());
        ArchitectureSpec::toy_cnn(39, 3).validate().unwrap();
        ArchitectureSpec::toy_psc(39, 3).validate().unwrap();
    }

    #[test]
    fn spec_serializes_canonically() {
        let s = ArchitectureSpec::psc(7);
        let json = s.to_canonical_json();
        let back: ArchitectureSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_canonical_json(), json);
    }
}
