//! Discounted forecasting loss and masked binary cross-entropy.

use ndarray::Array2;

use super::nn::sigmoid;
use crate::error::{Error, Result};
use crate::label::{Label, VerbLabels, NUM_VERBS};

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("discount must be in (0, 1], got {gamma}")))
    }
}

/// `Σ_j γ^(j−1) · mean_f (target_j − pred_j)²` over the `k` rows of one
/// forecast.
pub fn discounted_mse(pred: &Array2<f64>, target: &Array2<f64>, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if pred.dim() != target.dim() {
        return Err(Error::invalid(format!(
            "prediction shape {:?} does not match target shape {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let width = pred.ncols().max(1) as f64;
    let mut w = 1.0;
    let mut total = 0.0;
    for (p, t) in pred.rows().into_iter().zip(target.rows()) {
        let sq: f64 = p.iter().zip(t).map(|(a, b)| (b - a) * (b - a)).sum();
        total += w * sq / width;
        w *= gamma;
    }
    Ok(total)
}

/// Batch version over per-step `batch × 10` arrays: mean over the batch of
/// [`discounted_mse`], together with its gradient w.r.t. each prediction.
pub fn discounted_mse_batch(
    preds: &[Array2<f64>],
    targets: &[Array2<f64>],
    gamma: f64,
) -> Result<(f64, Vec<Array2<f64>>)> {
    check_gamma(gamma)?;
    if preds.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} predicted steps but {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(preds.len());
    let mut w = 1.0;
    for (p, t) in preds.iter().zip(targets) {
        if p.dim() != t.dim() {
            return Err(Error::invalid("prediction and target batch shapes differ"));
        }
        let denom = (p.len().max(1)) as f64;
        let diff = p - t;
        loss += w * diff.iter().map(|d| d * d).sum::<f64>() / denom;
        grads.push(diff * (2.0 * w / denom));
        w *= gamma;
    }
    Ok((loss, grads))
}

/// Binary cross-entropy on logits over unmasked entries, averaged over the
/// number of unmasked entries. Masked slots contribute nothing and are
/// never read beyond their mask bit. Returns `(loss, dloss/dlogits)`.
pub fn masked_bce(logits: &Array2<f64>, labels: &[VerbLabels]) -> Result<(f64, Array2<f64>)> {
    if logits.nrows() != labels.len() || logits.ncols() != NUM_VERBS {
        return Err(Error::invalid(format!(
            "logits {:?} do not match {} label rows",
            logits.dim(),
            labels.len()
        )));
    }
    let count = labels
        .iter()
        .map(|l| l.0.iter().filter(|x| !x.is_masked()).count())
        .sum::<usize>();
    let mut grad = Array2::zeros(logits.dim());
    if count == 0 {
        return Ok((0.0, grad));
    }
    let norm = 1.0 / count as f64;
    let mut loss = 0.0;
    for (b, l) in labels.iter().enumerate() {
        for (v, &label) in l.0.iter().enumerate() {
            let y = match label {
                Label::Masked => continue,
                Label::Yes => 1.0,
                Label::No => 0.0,
            };
            let z = logits[[b, v]];
            loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
            grad[[b, v]] = (sigmoid(z) - y) * norm;
        }
    }
    Ok((loss * norm, grad))
}
