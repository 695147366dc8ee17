//! Single-layer LSTM over one utterance, with backpropagation through time.
//!
//! Gate pre-activations are laid out as `[input | forget | cell | output]`
//! blocks of `width` columns in `wx` (`d x 4w`), `wh` (`w x 4w`) and
//! `b` (`1 x 4w`).

use ndarray::{s, Array2, Array3, ArrayView2, Axis};

use super::layers::sigmoid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a> {
    pub wx: ArrayView2<'a, f64>,
    pub wh: ArrayView2<'a, f64>,
    pub b: ArrayView2<'a, f64>,
}

impl LstmWeights<'_> {
    pub fn width(&self) -> usize {
        self.wh.nrows()
    }

    fn check(&self, input_dim: usize) -> Result<()> {
        let w = self.width();
        if self.wx.dim() != (input_dim, 4 * w)
            || self.wh.dim() != (w, 4 * w)
            || self.b.dim() != (1, 4 * w)
        {
            return Err(Error::Shape(format!(
                "LSTM weights wx {:?}, wh {:?}, b {:?} for input width {input_dim}",
                self.wx.dim(),
                self.wh.dim(),
                self.b.dim()
            )));
        }
        Ok(())
    }
}

/// Activations kept from the forward pass for the first `len` steps.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    /// `len x 4w`, post-activation gate values.
    pub gates: Array2<f64>,
    /// `len x w`.
    pub cells: Array2<f64>,
    /// `len x w`.
    pub hidden: Array2<f64>,
}

impl LstmTrace {
    pub fn len(&self) -> usize {
        self.hidden.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.nrows() == 0
    }

    /// Hidden state at the last real step.
    pub fn final_hidden(&self) -> ndarray::ArrayView1<'_, f64> {
        self.hidden.row(self.len() - 1)
    }
}

/// Runs the recurrence over rows `0..len` of `x`, from zero initial state.
/// Rows at or beyond `len` are never read.
pub fn lstm_forward(x: ArrayView2<f64>, len: usize, p: LstmWeights<'_>) -> Result<LstmTrace> {
    if len == 0 {
        return Err(Error::InvalidInput("LSTM input has true length 0".into()));
    }
    if len > x.nrows() {
        return Err(Error::Shape(format!(
            "true length {len} exceeds {} input rows",
            x.nrows()
        )));
    }
    p.check(x.ncols())?;
    let w = p.width();
    let mut gates = x.slice(s![..len, ..]).dot(&p.wx);
    gates += &p.b;
    let mut cells = Array2::zeros((len, w));
    let mut hidden = Array2::zeros((len, w));
    for t in 0..len {
        if t > 0 {
            let rec = hidden.row(t - 1).dot(&p.wh);
            gates.row_mut(t).zip_mut_with(&rec, |g, r| *g += r);
        }
        let mut g = gates.row_mut(t);
        for k in 0..w {
            let i = sigmoid(g[k]);
            let f = sigmoid(g[w + k]);
            let c_hat = g[2 * w + k].tanh();
            let o = sigmoid(g[3 * w + k]);
            g[k] = i;
            g[w + k] = f;
            g[2 * w + k] = c_hat;
            g[3 * w + k] = o;
            let c_prev = if t > 0 { cells[[t - 1, k]] } else { 0.0 };
            let c = f * c_prev + i * c_hat;
            cells[[t, k]] = c;
            hidden[[t, k]] = o * c.tanh();
        }
    }
    Ok(LstmTrace {
        gates,
        cells,
        hidden,
    })
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub wx: Array2<f64>,
    pub wh: Array2<f64>,
    pub b: Array2<f64>,
    /// `len x d`, only when requested.
    pub input: Option<Array2<f64>>,
}

/// Backpropagation through time. `d_hidden` (`len x w`) is the gradient of
/// the loss with respect to each hidden state as seen from downstream.
pub fn lstm_backward(
    x: ArrayView2<f64>,
    p: LstmWeights<'_>,
    trace: &LstmTrace,
    d_hidden: ArrayView2<f64>,
    want_input_grad: bool,
) -> LstmGrads {
    let len = trace.len();
    let w = p.width();
    let mut d_gates = Array2::<f64>::zeros((len, 4 * w));
    let mut dh_next = ndarray::Array1::<f64>::zeros(w);
    let mut dc_next = ndarray::Array1::<f64>::zeros(w);
    for t in (0..len).rev() {
        let g = trace.gates.row(t);
        let mut da = d_gates.row_mut(t);
        for k in 0..w {
            let (i, f, c_hat, o) = (g[k], g[w + k], g[2 * w + k], g[3 * w + k]);
            let tc = trace.cells[[t, k]].tanh();
            let c_prev = if t > 0 { trace.cells[[t - 1, k]] } else { 0.0 };
            let dh = d_hidden[[t, k]] + dh_next[k];
            let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
            da[k] = dc * c_hat * i * (1.0 - i);
            da[w + k] = dc * c_prev * f * (1.0 - f);
            da[2 * w + k] = dc * i * (1.0 - c_hat * c_hat);
            da[3 * w + k] = dh * tc * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        dh_next = d_gates.row(t).dot(&p.wh.t());
    }

    let xs = x.slice(s![..len, ..]);
    let mut h_prev = Array2::zeros((len, w));
    if len > 1 {
        h_prev
            .slice_mut(s![1.., ..])
            .assign(&trace.hidden.slice(s![..len - 1, ..]));
    }
    LstmGrads {
        wx: xs.t().dot(&d_gates),
        wh: h_prev.t().dot(&d_gates),
        b: d_gates.sum_axis(Axis(0)).insert_axis(Axis(0)),
        input: want_input_grad.then(|| d_gates.dot(&p.wx.t())),
    }
}

/// Hidden states for a padded batch, `B x padded_len x w`. Steps at or past
/// each sample's true length are left at zero.
pub fn lstm_forward_batch(
    inputs: &[ArrayView2<f64>],
    true_lengths: &[usize],
    padded_len: usize,
    p: LstmWeights<'_>,
) -> Result<Array3<f64>> {
    if inputs.len() != true_lengths.len() {
        return Err(Error::Shape(format!(
            "{} inputs but {} lengths",
            inputs.len(),
            true_lengths.len()
        )));
    }
    let mut out = Array3::zeros((inputs.len(), padded_len, p.width()));
    for (b, (x, &len)) in inputs.iter().zip(true_lengths).enumerate() {
        if len > padded_len {
            return Err(Error::Shape(format!(
                "true length {len} exceeds padded length {padded_len}"
            )));
        }
        let trace = lstm_forward(*x, len, p)?;
        out.slice_mut(s![b, ..len, ..]).assign(&trace.hidden);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::max_rel_error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng, scale: f64) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..scale))
    }

    fn weights(t: &[Array2<f64>]) -> LstmWeights<'_> {
        LstmWeights {
            wx: t[0].view(),
            wh: t[1].view(),
            b: t[2].view(),
        }
    }

    #[test]
    fn zero_parameters_give_zero_states() {
        let (d, w) = (5, 4);
        let t = [Array2::zeros((d, 4 * w)), Array2::zeros((w, 4 * w)), Array2::zeros((1, 4 * w))];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random(6, d, &mut rng, 1.0);
        let trace = lstm_forward(x.view(), 6, weights(&t)).unwrap();
        assert!(trace.hidden.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn hidden_states_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (d, w) = (7, 5);
        let t = [random(d, 4 * w, &mut rng, 3.0), random(w, 4 * w, &mut rng, 3.0), random(1, 4 * w, &mut rng, 3.0)];
        let x = random(30, d, &mut rng, 5.0);
        let trace = lstm_forward(x.view(), 30, weights(&t)).unwrap();
        assert!(trace.hidden.iter().all(|&h| h > -1.0 && h < 1.0));
    }

    #[test]
    fn errors() {
        let (d, w) = (3, 2);
        let t = [Array2::zeros((d, 4 * w)), Array2::zeros((w, 4 * w)), Array2::zeros((1, 4 * w))];
        let x = Array2::zeros((4, d));
        assert!(matches!(lstm_forward(x.view(), 0, weights(&t)), Err(Error::InvalidInput(_))));
        assert!(lstm_forward(x.view(), 5, weights(&t)).is_err());
        let bad = Array2::zeros((4, d + 1));
        assert!(matches!(lstm_forward(bad.view(), 2, weights(&t)), Err(Error::Shape(_))));
    }

    #[test]
    fn padded_rows_are_never_read() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (d, w) = (4, 3);
        let t = [random(d, 4 * w, &mut rng, 1.0), random(w, 4 * w, &mut rng, 1.0), random(1, 4 * w, &mut rng, 1.0)];
        let mut x = random(10, d, &mut rng, 1.0);
        let a = lstm_forward(x.view(), 6, weights(&t)).unwrap();
        x.slice_mut(s![6.., ..]).fill(1e6);
        let b = lstm_forward(x.view(), 6, weights(&t)).unwrap();
        assert_eq!(a.hidden, b.hidden);

        let batch = lstm_forward_batch(&[x.view()], &[6], 10, weights(&t)).unwrap();
        assert_eq!(batch.slice(s![0, ..6, ..]), a.hidden);
        assert!(batch.slice(s![0, 6.., ..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let (d, w, len) = if trial == 0 { (5, 4, 3) } else {
                (rng.random_range(1..6), rng.random_range(1..5), rng.random_range(1..6))
            };
            let proj = random(len, w, &mut rng, 1.0);
            let mut tensors = vec![
                random(d, 4 * w, &mut rng, 0.8),
                random(w, 4 * w, &mut rng, 0.8),
                random(1, 4 * w, &mut rng, 0.8),
                random(len, d, &mut rng, 1.0),
            ];
            let loss = |t: &[Array2<f64>]| {
                let tr = lstm_forward(t[3].view(), len, weights(t)).unwrap();
                (&tr.hidden * &proj).sum()
            };
            let trace = lstm_forward(tensors[3].view(), len, weights(&tensors)).unwrap();
            let g = lstm_backward(tensors[3].view(), weights(&tensors), &trace, proj.view(), true);
            let analytic = [g.wx, g.wh, g.b, g.input.unwrap()];
            let err = max_rel_error(&mut tensors, &analytic, loss);
            assert!(err < 1e-4, "trial {trial}: {err}");
        }
    }
}
