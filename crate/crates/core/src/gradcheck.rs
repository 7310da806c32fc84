//! Central finite-difference checks of the analytic gradients.

use serde::Serialize;

use crate::autodiff::{Graph, NodeId, ParamStore};
use crate::error::{Error, Result};
use crate::models::{ArchitectureSpec, Batch, Model};
use crate::tensor::Tensor;
use crate::util::rng_for;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradcheckOptions {
    pub step: f64,
    /// Magnitudes below this count as this much in the relative-error
    /// denominator.
    pub floor: f64,
    /// Negative control: scales one analytic gradient entry by 1.01.
    pub corrupt: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            step: 1e-5,
            floor: 1e-3,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamError {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub per_param: Vec<ParamError>,
    pub max_rel_err: f64,
    pub worst_param: String,
    pub evaluations: usize,
}

impl GradcheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err <= tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the gradient of the scalar built by `loss` against central
/// differences in `f64`. `analytic` supplies the gradients to test, which
/// may come from a lower-precision copy of `params`.
pub fn check_with<A>(
    params: &ParamStore<f64>,
    loss: impl Fn(&mut Graph<'_, f64>) -> Result<NodeId>,
    analytic: A,
    options: &GradcheckOptions,
) -> Result<GradcheckReport>
where
    A: FnOnce(&ParamStore<f64>) -> Result<Vec<Tensor<f64>>>,
{
    let eval = |p: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new(p);
        let l = loss(&mut g)?;
        Ok(g.value(l).data()[0])
    };
    let mut grads = analytic(params)?;
    if options.corrupt {
        if let Some(v) = grads.iter_mut().find_map(|t| t.data_mut().first_mut()) {
            *v = *v * 1.01 + 1e-3;
        }
    }
    let mut work = params.clone();
    let mut per_param = Vec::new();
    let mut evaluations = 0;
    for (i, grad) in grads.iter().enumerate() {
        let mut worst = (0.0f64, 0usize);
        for j in 0..grad.numel() {
            let orig = work.tensors()[i].data()[j];
            work.tensors_mut()[i].data_mut()[j] = orig + options.step;
            let up = eval(&work)?;
            work.tensors_mut()[i].data_mut()[j] = orig - options.step;
            let down = eval(&work)?;
            work.tensors_mut()[i].data_mut()[j] = orig;
            evaluations += 2;
            let numeric = (up - down) / (2.0 * options.step);
            let e = relative_error(grad.data()[j], numeric, options.floor);
            if e > worst.0 || !e.is_finite() {
                worst = (e, j);
            }
        }
        per_param.push(ParamError {
            name: params.names()[i].clone(),
            max_rel_err: worst.0,
            worst_index: worst.1,
        });
    }
    let worst = per_param
        .iter()
        .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
        .ok_or_else(|| Error::InvalidInput("no parameters to check".into()))?;
    Ok(GradcheckReport {
        max_rel_err: worst.max_rel_err,
        worst_param: worst.name.clone(),
        per_param: per_param.clone(),
        evaluations,
    })
}

/// [`check_with`] using the `f64` backward pass itself.
pub fn check(
    params: &ParamStore<f64>,
    loss: impl Fn(&mut Graph<'_, f64>) -> Result<NodeId>,
    options: &GradcheckOptions,
) -> Result<GradcheckReport> {
    check_with(
        params,
        &loss,
        |p| {
            let mut g = Graph::new(p);
            let l = loss(&mut g)?;
            Ok(g.backward(l, 1.0)?.as_slice().to_vec())
        },
        options,
    )
}

/// A random model of `spec` with a random padded batch and soft targets.
pub struct Instance {
    pub model: Model<f64>,
    pub batch: Batch<f64>,
    pub targets: Tensor<f64>,
}

impl Instance {
    pub fn random(spec: &ArchitectureSpec, lengths: &[usize], seed: u64) -> Result<Self> {
        let model = Model::init(spec, &mut rng_for(seed, "gradcheck-init"))?;
        let mut rng = rng_for(seed, "gradcheck-data");
        let t = lengths.iter().copied().max().unwrap_or(0);
        let d = spec.input_dim;
        let mut x = vec![0.0; lengths.len() * t * d];
        for (b, &len) in lengths.iter().enumerate() {
            for v in &mut x[b * t * d..(b * t + len) * d] {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        let batch = Batch::padded(Tensor::from_vec(&[lengths.len(), t, d], x)?, lengths.to_vec())?;
        let y = (0..lengths.len() * spec.output_dim).map(|_| rng.random_range(0.0..1.0)).collect();
        let targets = Tensor::from_vec(&[lengths.len(), spec.output_dim], y)?;
        Ok(Instance {
            model,
            batch,
            targets,
        })
    }

    fn loss_fn<'a>(&'a self) -> impl Fn(&mut Graph<'_, f64>) -> Result<NodeId> + 'a {
        move |g| {
            let built = self.model.build(g, &self.batch)?;
            g.sigmoid_bce(built.logits, &self.targets, crate::models::loss::CLAMP)
        }
    }

    /// Checks the `f64` backward pass of the whole model loss.
    pub fn check(&self, options: &GradcheckOptions) -> Result<GradcheckReport> {
        check(self.model.params(), self.loss_fn(), options)
    }

    /// Checks the `f32` backward pass against `f64` differences.
    pub fn check_f32(&self, options: &GradcheckOptions) -> Result<GradcheckReport> {
        let model32: Model<f32> = self.model.cast();
        let batch32 = Batch::padded(self.batch.values().cast(), self.batch.lengths().to_vec())?;
        let targets32 = self.targets.cast::<f32>();
        check_with(
            self.model.params(),
            self.loss_fn(),
            |_| {
                let (_, g) = model32.loss(&batch32, &targets32, true)?;
                Ok(g.expect("requested").as_slice().iter().map(|t| t.cast()).collect())
            },
            options,
        )
    }
}

/// Checks a toy instance of `spec` on a two-utterance padded batch.
pub fn check_architecture(spec: &ArchitectureSpec, seed: u64, options: &GradcheckOptions) -> Result<GradcheckReport> {
    let min = spec.min_frames();
    Instance::random(spec, &[min + 7, min + 2], seed)?.check(options)
}

