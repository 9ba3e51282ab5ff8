use super::{Matrix, NnError, Result};

fn check_same_shape(pred: &Matrix, target: &Matrix) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(NnError::Dimension(format!(
            "prediction is {}x{}, target is {}x{}",
            pred.rows(),
            pred.cols(),
            target.rows(),
            target.cols()
        )));
    }
    Ok(())
}

/// Mean squared error over all entries and its gradient w.r.t. `pred`.
pub fn mse(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    check_same_shape(pred, target)?;
    let n = pred.data().len().max(1) as f64;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut loss = 0.0;
    for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let e = p - t;
        loss += e * e;
        *g = 2.0 * e / n;
    }
    Ok((loss / n, grad))
}

/// Huber value and derivative for a single error.
#[inline]
pub fn huber_elem(err: f64, kappa: f64) -> (f64, f64) {
    let a = err.abs();
    if a <= kappa {
        (0.5 * err * err, err)
    } else {
        (kappa * (a - 0.5 * kappa), kappa * err.signum())
    }
}

/// Mean Huber loss over all entries and its gradient w.r.t. `pred`.
pub fn huber(pred: &Matrix, target: &Matrix, kappa: f64) -> Result<(f64, Matrix)> {
    if !(kappa > 0.0) {
        return Err(NnError::Parameter(format!("huber kappa must be > 0, got {kappa}")));
    }
    check_same_shape(pred, target)?;
    let n = pred.data().len().max(1) as f64;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut loss = 0.0;
    for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let (v, d) = huber_elem(p - t, kappa);
        loss += v;
        *g = d / n;
    }
    Ok((loss / n, grad))
}

/// Numerically stable softmax of each row slice.
pub fn softmax_rows(logits: &[f64], width: usize) -> Vec<f64> {
    let mut out = logits.to_vec();
    for chunk in out.chunks_mut(width) {
        let max = chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in chunk.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in chunk.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Log-softmax of each `width`-long slice.
pub fn log_softmax_rows(logits: &[f64], width: usize) -> Vec<f64> {
    let mut out = logits.to_vec();
    for chunk in out.chunks_mut(width) {
        let max = chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + chunk.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in chunk.iter_mut() {
            *v -= lse;
        }
    }
    out
}
