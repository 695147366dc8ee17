//! Activations, fully connected layers and inverted dropout.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use super::spec::Activation;
use crate::error::{Error, Result};

/// Logistic function without overflow for large `|z|`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `a`.
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

fn check_dense(x: ArrayView2<f64>, w: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<()> {
    if x.ncols() != w.nrows() || b.dim() != (1, w.ncols()) {
        return Err(Error::Shape(format!(
            "dense layer: input {:?}, weights {:?}, bias {:?}",
            x.dim(),
            w.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// `activation(x W + b)` for a batch of row vectors.
pub fn dense_forward(
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    b: ArrayView2<f64>,
    activation: Activation,
) -> Result<Array2<f64>> {
    check_dense(x, w, b)?;
    let mut z = x.dot(&w);
    z += &b;
    z.mapv_inplace(|v| activation.apply(v));
    Ok(z)
}

pub struct DenseGrads {
    pub input: Array2<f64>,
    pub weights: Array2<f64>,
    pub bias: Array2<f64>,
}

/// Backward pass of [`dense_forward`] given its input, output and the
/// gradient of the loss with respect to the output.
pub fn dense_backward(
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    output: ArrayView2<f64>,
    activation: Activation,
    d_output: ArrayView2<f64>,
) -> DenseGrads {
    let mut dz = d_output.to_owned();
    if activation != Activation::Identity {
        dz.zip_mut_with(&output, |g, &a| *g *= activation.derivative_from_output(a));
    }
    DenseGrads {
        input: dz.dot(&w.t()),
        weights: x.t().dot(&dz),
        bias: dz.sum_axis(Axis(0)).insert_axis(Axis(0)),
    }
}

/// Inverted dropout: in training each unit is zeroed with probability `rate`
/// and survivors are scaled by `1 / (1 - rate)`. Returns the output and the
/// scale mask applied (all ones at inference).
pub fn dropout<R: Rng + ?Sized>(
    x: &Array2<f64>,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> (Array2<f64>, Array2<f64>) {
    if !training || rate == 0.0 {
        return (x.clone(), Array2::ones(x.raw_dim()));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask = Array2::from_shape_simple_fn(x.raw_dim(), || {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    });
    (x * &mask, mask)
}
