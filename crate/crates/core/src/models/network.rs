use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::layers::Activation;
use crate::tensor::{Real, Tensor};

use super::arch::{ArchitectureSpec, LayerSpec};

/// Sequences padded to the longest member, with valid lengths.
#[derive(Debug, Clone)]
pub struct Batch<F> {
    pub(crate) values: Tensor<F>,
    pub(crate) lengths: Vec<usize>,
}

impl<F: Real> Batch<F> {
    pub fn from_features(items: &[&FeatureMatrix]) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let dim = items[0].cols();
        if let Some(m) = items.iter().find(|m| m.cols() != dim) {
            return Err(Error::InvalidInput(format!(
                "batch mixes {dim}- and {}-dimensional frames",
                m.cols()
            )));
        }
        let t_max = items.iter().map(|m| m.rows()).max().unwrap_or(0);
        let mut data = vec![F::zero(); items.len() * t_max * dim];
        for (b, m) in items.iter().enumerate() {
            let dst = &mut data[b * t_max * dim..b * t_max * dim + m.rows() * dim];
            for (d, &s) in dst.iter_mut().zip(m.data()) {
                *d = F::from_f32(s).expect("f32 converts");
            }
        }
        Ok(Batch {
            values: Tensor::from_vec(&[items.len(), t_max, dim], data)?,
            lengths: items.iter().map(|m| m.rows()).collect(),
        })
    }

    /// Builds a batch from an already padded `B×T×D` tensor.
    pub fn padded(values: Tensor<F>, lengths: Vec<usize>) -> Result<Self> {
        if values.rank() != 3
            || lengths.len() != values.shape()[0]
            || lengths.iter().any(|&l| l == 0 || l > values.shape()[1])
        {
            return Err(Error::ShapeMismatch {
                op: "batch",
                left: values.shape().to_vec(),
                right: lengths,
            });
        }
        Ok(Batch { values, lengths })
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn values(&self) -> &Tensor<F> {
        &self.values
    }
}

#[derive(Debug, Clone)]
struct LayerParams {
    weight: ParamId,
    bias: ParamId,
}

/// An architecture together with its parameters.
#[derive(Debug, Clone)]
pub struct Model<F> {
    spec: ArchitectureSpec,
    params: ParamStore<F>,
    layer_params: Vec<Option<LayerParams>>,
}

/// Per-item outputs of a forward pass.
#[derive(Debug, Clone)]
pub struct Prediction<F> {
    /// `B` rows of `W` probabilities.
    pub probabilities: Vec<Vec<F>>,
    /// For `psc`, the valid `T'×W` word score map of each item.
    pub localization: Option<Vec<Tensor<F>>>,
    /// Valid lengths after each convolution and max-pool layer, one row per
    /// layer with one entry per item.
    pub time_extents: Vec<Vec<usize>>,
}

pub(crate) struct Built {
    pub logits: NodeId,
    pub localization: Option<NodeId>,
    pub sequence_nodes: Vec<NodeId>,
}

fn param_shapes(spec: &ArchitectureSpec) -> Vec<Option<([usize; 3], usize, usize, Activation)>> {
    // (weight shape padded to rank 3, fan_in, fan_out, activation)
    let mut chans = spec.input_dim;
    spec.layers
        .iter()
        .map(|l| match *l {
            LayerSpec::Conv {
                filters,
                width,
                activation,
            } => {
                let s = ([filters, width, chans], width * chans, width * filters, activation);
                chans = filters;
                Some(s)
            }
            LayerSpec::Dense { units, activation } => {
                let s = ([units, chans, 0], chans, units, activation);
                chans = units;
                Some(s)
            }
            _ => None,
        })
        .collect()
}

/// Parameter names in declaration order.
pub(crate) fn param_names(spec: &ArchitectureSpec) -> Vec<String> {
    spec.layers
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, LayerSpec::Conv { .. } | LayerSpec::Dense { .. }))
        .flat_map(|(i, _)| [format!("layer{i}.weight"), format!("layer{i}.bias")])
        .collect()
}

impl<F: Real> Model<F> {
    /// He-uniform weights for ReLU layers, Glorot-uniform otherwise, zero
    /// biases.
    pub fn init(spec: &ArchitectureSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamStore::new();
        let mut layer_params = Vec::new();
        for (i, shape) in param_shapes(spec).into_iter().enumerate() {
            let Some((s, fan_in, fan_out, act)) = shape else {
                layer_params.push(None);
                continue;
            };
            let limit = match act {
                Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            };
            let wshape: Vec<usize> = s.iter().copied().filter(|&d| d > 0).collect();
            let n = wshape.iter().product();
            let data = (0..n)
                .map(|_| F::from_f64_lossy(rng.random_range(-limit..limit)))
                .collect();
            let weight = params.push(format!("layer{i}.weight"), Tensor::from_vec(&wshape, data)?);
            let bias = params.push(format!("layer{i}.bias"), Tensor::zeros(&[s[0]]));
            layer_params.push(Some(LayerParams { weight, bias }));
        }
        Ok(Model {
            spec: spec.clone(),
            params,
            layer_params,
        })
    }

    /// Wraps existing parameters, checking them against the spec.
    pub fn from_params(spec: &ArchitectureSpec, params: ParamStore<F>) -> Result<Self> {
        spec.validate()?;
        let expected: Vec<Vec<usize>> = param_shapes(spec)
            .into_iter()
            .flatten()
            .flat_map(|(s, ..)| [s.iter().copied().filter(|&d| d > 0).collect(), vec![s[0]]])
            .collect();
        let found: Vec<Vec<usize>> = params.tensors().iter().map(|t| t.shape().to_vec()).collect();
        if expected != found {
            return Err(Error::InvalidInput(format!(
                "parameter shapes {found:?} do not match the {} architecture {expected:?}",
                spec.variant
            )));
        }
        let mut next = 0;
        let layer_params = spec
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::Conv { .. } | LayerSpec::Dense { .. } => {
                    next += 2;
                    Some(LayerParams {
                        weight: ParamId(next - 2),
                        bias: ParamId(next - 1),
                    })
                }
                _ => None,
            })
            .collect();
        Ok(Model {
            spec: spec.clone(),
            params,
            layer_params,
        })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<F> {
        self.params
    }

    pub fn cast<G: Real>(&self) -> Model<G> {
        Model {
            spec: self.spec.clone(),
            params: self.params.cast(),
            layer_params: self.layer_params.clone(),
        }
    }

    /// Records the network on `g` and returns the pre-sigmoid word scores.
    pub(crate) fn build(&self, g: &mut Graph<'_, F>, batch: &Batch<F>) -> Result<Built> {
        if batch.values.shape()[2] != self.spec.input_dim {
            return Err(Error::InvalidInput(format!(
                "model expects {}-dimensional frames, got {}",
                self.spec.input_dim,
                batch.values.shape()[2]
            )));
        }
        if let Some((b, &len)) = batch
            .lengths
            .iter()
            .enumerate()
            .find(|(_, &l)| self.spec.time_extents(l).is_err())
        {
            return Err(Error::InvalidInput(format!(
                "utterance {b} has {len} frames; the {} model needs at least {}",
                self.spec.variant,
                self.spec.min_frames()
            )));
        }
        let mut x = g.sequence(batch.values.clone(), batch.lengths.clone())?;
        let mut localization = None;
        let mut sequence_nodes = Vec::new();
        let last = self.spec.layers.len() - 1;
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let activation = match *layer {
                LayerSpec::Conv { activation, .. } | LayerSpec::Dense { activation, .. } => {
                    let p = self.layer_params[i].as_ref().expect("parametric layer");
                    let (w, b) = (g.param(p.weight), g.param(p.bias));
                    x = if matches!(layer, LayerSpec::Conv { .. }) {
                        g.conv1d(x, w, b)?
                    } else {
                        g.dense(x, w, b)?
                    };
                    Some(activation)
                }
                LayerSpec::MaxPool { size } => {
                    x = g.max_pool1d(x, size)?;
                    None
                }
                LayerSpec::GlobalMaxPool => {
                    x = g.global_max_pool(x)?;
                    None
                }
                LayerSpec::LogSumExpPool => {
                    localization = Some(x);
                    x = g.logsumexp_pool(x, F::from_f64_lossy(self.spec.r))?;
                    None
                }
            };
            if matches!(layer, LayerSpec::Conv { .. } | LayerSpec::MaxPool { .. }) {
                sequence_nodes.push(x);
            }
            // The output sigmoid is folded into the loss.
            if i == last {
                break;
            }
            x = match activation {
                Some(Activation::Relu) => g.relu(x)?,
                Some(Activation::Sigmoid) => g.sigmoid(x)?,
                _ => x,
            };
        }
        Ok(Built {
            logits: x,
            localization,
            sequence_nodes,
        })
    }

    pub fn forward(&self, batch: &Batch<F>) -> Result<Prediction<F>> {
        let mut g = Graph::new(&self.params);
        let built = self.build(&mut g, batch)?;
        let probs = g.sigmoid(built.logits)?;
        let w = self.spec.output_dim;
        let probabilities = g.value(probs).data().chunks_exact(w).map(|r| r.to_vec()).collect();
        let localization = match built.localization {
            Some(h) => {
                let lens = g.lengths(h).expect("sequence node").to_vec();
                let t = g.value(h).shape()[1];
                let data = g.value(h).data();
                let maps = lens
                    .iter()
                    .enumerate()
                    .map(|(b, &len)| {
                        let start = b * t * w;
                        Tensor::from_vec(&[len, w], data[start..start + len * w].to_vec())
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(maps)
            }
            None => None,
        };
        let time_extents = built
            .sequence_nodes
            .iter()
            .map(|&n| g.lengths(n).expect("sequence node").to_vec())
            .collect();
        Ok(Prediction {
            probabilities,
            localization,
            time_extents,
        })
    }

    /// Word probabilities for a single utterance.
    pub fn predict(&self, features: &FeatureMatrix) -> Result<Vec<F>> {
        let batch = Batch::from_features(&[features])?;
        Ok(self.forward(&batch)?.probabilities.remove(0))
    }

    /// Word probabilities and, for `psc`, the `T'×W` score map.
    pub fn predict_with_localization(
        &self,
        features: &FeatureMatrix,
    ) -> Result<(Vec<F>, Option<Tensor<F>>)> {
        let batch = Batch::from_features(&[features])?;
        let mut p = self.forward(&batch)?;
        let probs = p.probabilities.remove(0);
        Ok((probs, p.localization.map(|mut l| l.remove(0))))
    }

    /// Mean batch loss against `targets` (`B×W`) and, optionally, its
    /// parameter gradients.
    pub fn loss(
        &self,
        batch: &Batch<F>,
        targets: &Tensor<F>,
        with_grad: bool,
    ) -> Result<(F, Option<crate::autodiff::Gradients<F>>)> {
        let mut g = Graph::new(&self.params);
        let built = self.build(&mut g, batch)?;
        let loss = g.sigmoid_bce(built.logits, targets, F::from_f64_lossy(super::loss::CLAMP))?;
        let value = g.value(loss).data()[0];
        let grads = if with_grad {
            Some(g.backward(loss, F::one())?)
        } else {
            None
        };
        Ok((value, grads))
    }
}
