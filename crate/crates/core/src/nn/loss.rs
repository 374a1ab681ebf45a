use ndarray::{Array2, ArrayView2};

use crate::error::{shape_err, Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before any log.
pub const PROB_CLAMP: f64 = 1e-7;

/// Mean loss over a batch of scalar predictions, with the gradient of that
/// mean with respect to each prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

impl LossGrad {
    /// Gradient laid out as an `n x 1` column, the shape a single-output
    /// network's `backward` expects.
    pub fn grad_column(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.grad.len(), 1), self.grad.clone()).expect("n x 1")
    }
}

#[inline]
fn clamp_prob(p: f64) -> (f64, bool) {
    if p < PROB_CLAMP {
        (PROB_CLAMP, false)
    } else if p > 1.0 - PROB_CLAMP {
        (1.0 - PROB_CLAMP, false)
    } else {
        (p, true)
    }
}

/// Binary cross-entropy `-y ln p - (1-y) ln(1-p)`, averaged over the batch.
///
/// Outside the clamp range the loss is flat, so its gradient is zero there.
pub fn bce_loss(predictions: &[f64], targets: &[f64]) -> Result<LossGrad> {
    if predictions.is_empty() {
        return Err(Error::Empty("bce_loss predictions"));
    }
    if predictions.len() != targets.len() {
        return shape_err(format!(
            "{} predictions but {} targets",
            predictions.len(),
            targets.len()
        ));
    }
    let n = predictions.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(predictions.len());
    for (&p, &y) in predictions.iter().zip(targets) {
        let (pc, inside) = clamp_prob(p);
        loss += -y * pc.ln() - (1.0 - y) * (1.0 - pc).ln();
        grad.push(if inside { (-y / pc + (1.0 - y) / (1.0 - pc)) / n } else { 0.0 });
    }
    Ok(LossGrad { loss: loss / n, grad })
}

/// Non-saturating generator loss `-ln D(G(z))`, averaged over the batch.
pub fn generator_loss(disc_outputs_on_fake: &[f64]) -> Result<LossGrad> {
    if disc_outputs_on_fake.is_empty() {
        return Err(Error::Empty("generator_loss predictions"));
    }
    let n = disc_outputs_on_fake.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(disc_outputs_on_fake.len());
    for &p in disc_outputs_on_fake {
        let (pc, inside) = clamp_prob(p);
        loss -= pc.ln();
        grad.push(if inside { -1.0 / (pc * n) } else { 0.0 });
    }
    Ok(LossGrad { loss: loss / n, grad })
}

/// Sum of squared errors per row, averaged over rows.
pub fn squared_error(predictions: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if predictions.nrows() == 0 {
        return Err(Error::Empty("squared_error predictions"));
    }
    if predictions.dim() != targets.dim() {
        return shape_err(format!(
            "predictions {:?} vs targets {:?}",
            predictions.dim(),
            targets.dim()
        ));
    }
    let n = predictions.nrows() as f64;
    let diff = &predictions - &targets;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff * (2.0 / n)))
}
