use crate::error::{Error, Result};
use crate::tensor::Real;

/// Predictions are clamped to `[CLAMP, 1 − CLAMP]` before logarithms.
pub const CLAMP: f64 = 1e-7;

fn check<F>(prediction: &[F], target: &[F]) -> Result<()> {
    if prediction.len() != target.len() {
        return Err(Error::ShapeMismatch {
            op: "bow_loss",
            left: vec![prediction.len()],
            right: vec![target.len()],
        });
    }
    Ok(())
}

fn clamp<F: Real>(f: F) -> F {
    let eps = F::from_f64_lossy(CLAMP);
    f.max(eps).min(F::one() - eps)
}

/// Summed binary cross-entropy `−Σ_w [y log f + (1−y) log(1−f)]`.
pub fn bow_loss<F: Real>(prediction: &[F], target: &[F]) -> Result<F> {
    check(prediction, target)?;
    Ok(prediction
        .iter()
        .zip(target)
        .map(|(&f, &y)| {
            let f = clamp(f);
            -(y * f.ln() + (F::one() - y) * (F::one() - f).ln())
        })
        .sum())
}

/// `∂L/∂f_w = (f − y) / (f (1 − f))` at the clamped prediction.
pub fn bow_loss_grad<F: Real>(prediction: &[F], target: &[F]) -> Result<Vec<F>> {
    check(prediction, target)?;
    Ok(prediction
        .iter()
        .zip(target)
        .map(|(&f, &y)| {
            let f = clamp(f);
            (f - y) / (f * (F::one() - f))
        })
        .collect())
}

/// `Σ_w H(y_w)`, the minimum of [`bow_loss`] over predictions.
pub fn binary_entropy<F: Real>(target: &[F]) -> F {
    target
        .iter()
        .map(|&y| {
            let term = |p: F| if p > F::zero() { -p * p.ln() } else { F::zero() };
            term(y) + term(F::one() - y)
        })
        .sum()
}

/// Mean over utterances of [`bow_loss`].
pub fn batch_bow_loss<F: Real>(predictions: &[Vec<F>], targets: &[Vec<F>]) -> Result<F> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "batch_bow_loss",
            left: vec![predictions.len()],
            right: vec![targets.len()],
        });
    }
    let mut total = F::zero();
    for (p, t) in predictions.iter().zip(targets) {
        total += bow_loss(p, t)?;
    }
    Ok(total / F::from_usize(predictions.len()).expect("count fits"))
}
