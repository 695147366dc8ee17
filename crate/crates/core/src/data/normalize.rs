use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::cepstra::ContextRepresentation;
use crate::error::{Error, Result};

/// Lower bound for per-dimension standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension standardization fitted on real (unpadded) training frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Population mean and standard deviation over the first `true_length`
    /// rows of every representation.
    pub fn fit<'a, I>(reps: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a ContextRepresentation> + Clone,
    {
        let mut count = 0usize;
        let mut sum: Option<Array1<f64>> = None;
        for rep in reps.clone() {
            let real = rep.frames.slice(s![..rep.true_length, ..]);
            count += real.nrows();
            let part = real.sum_axis(Axis(0));
            match &mut sum {
                Some(acc) => {
                    if acc.len() != part.len() {
                        return Err(Error::Shape(format!(
                            "representation width {} differs from {}",
                            part.len(),
                            acc.len()
                        )));
                    }
                    *acc += &part;
                }
                None => sum = Some(part),
            }
        }
        if count < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 frames to fit a normalizer, got {count}"
            )));
        }
        let mean = sum.expect("count > 0") / count as f64;
        let mut sq = Array1::<f64>::zeros(mean.len());
        for rep in reps {
            for row in rep.frames.slice(s![..rep.true_length, ..]).rows() {
                sq.zip_mut_with(&(&row - &mean), |acc, d| *acc += d * d);
            }
        }
        let std = sq.mapv(|v| (v / count as f64).sqrt().max(STD_FLOOR));
        Ok(Self {
            mean: mean.to_vec(),
            std: std.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_in_place(&self, frames: &mut Array2<f64>) -> Result<()> {
        if frames.ncols() != self.dim() {
            return Err(Error::Shape(format!(
                "normalizer of width {} applied to width {}",
                self.dim(),
                frames.ncols()
            )));
        }
        for mut row in frames.rows_mut() {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s;
            }
        }
        Ok(())
    }

    pub fn apply(&self, rep: &ContextRepresentation) -> Result<ContextRepresentation> {
        let mut out = rep.clone();
        self.apply_in_place(&mut out.frames)?;
        Ok(out)
    }
}
