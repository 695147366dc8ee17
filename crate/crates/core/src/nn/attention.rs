//! Additive attention pooling: `score_t = v^T tanh(W h_t)`, weights are the
//! softmax of the scores over the real steps, and the output is the weighted
//! sum of hidden states.

use ndarray::{s, Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AttentionTrace {
    /// `len x a`, `tanh(h_t W)`.
    pub projected: Array2<f64>,
    /// `len` weights summing to one.
    pub weights: Array1<f64>,
    pub pooled: Array1<f64>,
}

fn check(hidden: ArrayView2<f64>, len: usize, wa: ArrayView2<f64>, v: ArrayView2<f64>) -> Result<()> {
    if len == 0 || len > hidden.nrows() {
        return Err(Error::InvalidInput(format!(
            "attention over {len} of {} steps",
            hidden.nrows()
        )));
    }
    if wa.nrows() != hidden.ncols() || v.dim() != (wa.ncols(), 1) {
        return Err(Error::Shape(format!(
            "attention weights {:?} / {:?} for hidden width {}",
            wa.dim(),
            v.dim(),
            hidden.ncols()
        )));
    }
    Ok(())
}

/// Pools rows `0..len` of `hidden`; rows at or beyond `len` are not read.
pub fn attention_forward(
    hidden: ArrayView2<f64>,
    len: usize,
    wa: ArrayView2<f64>,
    v: ArrayView2<f64>,
) -> Result<AttentionTrace> {
    check(hidden, len, wa, v)?;
    let h = hidden.slice(s![..len, ..]);
    let projected = h.dot(&wa).mapv(f64::tanh);
    let scores = projected.dot(&v.column(0));
    let max = scores.fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    let mut weights = scores.mapv(|s| (s - max).exp());
    weights /= weights.sum();
    let pooled = weights.dot(&h);
    Ok(AttentionTrace {
        projected,
        weights,
        pooled,
    })
}

/// Pooled vector plus weights over all `hidden.nrows()` steps, zero on the
/// padded ones.
pub fn attention_pool(
    hidden: ArrayView2<f64>,
    len: usize,
    wa: ArrayView2<f64>,
    v: ArrayView2<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let trace = attention_forward(hidden, len, wa, v)?;
    let mut alpha = Array1::zeros(hidden.nrows());
    alpha.slice_mut(s![..len]).assign(&trace.weights);
    Ok((trace.pooled, alpha))
}

pub struct AttentionGrads {
    /// `len x w`.
    pub hidden: Array2<f64>,
    pub wa: Array2<f64>,
    pub v: Array2<f64>,
}

pub fn attention_backward(
    hidden: ArrayView2<f64>,
    wa: ArrayView2<f64>,
    v: ArrayView2<f64>,
    trace: &AttentionTrace,
    d_pooled: ndarray::ArrayView1<f64>,
) -> AttentionGrads {
    let len = trace.weights.len();
    let h = hidden.slice(s![..len, ..]);
    let alpha = &trace.weights;

    // pooled = sum_t alpha_t h_t
    let d_alpha = h.dot(&d_pooled);
    let mean = alpha.dot(&d_alpha);
    let d_scores = alpha * &(d_alpha - mean);

    let mut d_hidden = Array2::zeros((len, h.ncols()));
    for (t, mut row) in d_hidden.rows_mut().into_iter().enumerate() {
        row.scaled_add(alpha[t], &d_pooled);
    }
    // scores = tanh(h W) v
    let v_col = v.column(0);
    let mut d_proj = Array2::zeros(trace.projected.raw_dim());
    for t in 0..len {
        for (k, dp) in d_proj.row_mut(t).iter_mut().enumerate() {
            let u = trace.projected[[t, k]];
            *dp = d_scores[t] * v_col[k] * (1.0 - u * u);
        }
    }
    d_hidden += &d_proj.dot(&wa.t());
    AttentionGrads {
        hidden: d_hidden,
        wa: h.t().dot(&d_proj),
        v: trace.projected.t().dot(&d_scores).insert_axis(ndarray::Axis(1)),
    }
}
