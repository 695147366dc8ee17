use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Softmax of one row, computed from the max-shifted logits.
pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut p = logits.mapv(|v| (v - max).exp());
    p /= p.sum();
    p
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean negative log-likelihood over the batch and its gradient
/// `(softmax - onehot) / B` with respect to the logits.
pub fn softmax_cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (batch, classes) = logits.dim();
    if labels.len() != batch {
        return Err(Error::Shape(format!("{batch} logit rows but {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidInput(format!("label {bad} >= {classes} classes")));
    }
    let mut grad = Array2::zeros((batch, classes));
    let mut loss = 0.0;
    for (b, &label) in labels.iter().enumerate() {
        let row = logits.row(b);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        let mut g = grad.row_mut(b);
        for (gc, &z) in g.iter_mut().zip(row) {
            *gc = (z - lse).exp();
        }
        g[label] -= 1.0;
    }
    grad /= batch as f64;
    Ok((loss / batch as f64, grad))
}
