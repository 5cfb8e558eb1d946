use crate::dense::Matrix;
use crate::error::{GreadError, Result};

/// Mean negative log-likelihood over masked nodes and its gradient.
///
/// The gradient is `(softmax(logits) - onehot) / |mask|` on masked rows and
/// zero elsewhere.
pub fn cross_entropy(logits: &Matrix, labels: &[usize], mask: &[bool]) -> Result<(f64, Matrix)> {
    if labels.len() != logits.rows() || mask.len() != logits.rows() {
        return Err(GreadError::shape(format!(
            "{} logit rows, {} labels, {} mask entries",
            logits.rows(),
            labels.len(),
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(GreadError::data("cross-entropy over an empty mask"));
    }
    let inv = 1.0 / count as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for i in (0..logits.rows()).filter(|&i| mask[i]) {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + z.ln();
        loss += log_z - row[labels[i]];
        let g = grad.row_mut(i);
        for (gc, &v) in g.iter_mut().zip(row) {
            *gc = (v - log_z).exp() * inv;
        }
        g[labels[i]] -= inv;
    }
    Ok((loss * inv, grad))
}

/// Fraction of masked nodes whose prediction equals the label; NaN for an empty mask.
pub fn accuracy(pred: &[usize], labels: &[usize], mask: &[bool]) -> f64 {
    let mut hit = 0usize;
    let mut total = 0usize;
    for ((&p, &l), &m) in pred.iter().zip(labels).zip(mask) {
        if m {
            total += 1;
            hit += usize::from(p == l);
        }
    }
    if total == 0 {
        f64::NAN
    } else {
        hit as f64 / total as f64
    }
}
