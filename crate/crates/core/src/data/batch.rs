use ndarray::{s, Array2, Array3, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cepstra::ContextRepresentation;
use crate::error::{Error, Result};

/// Sequence length every utterance is padded (or truncated) to.
pub const PAD_FRAMES: usize = 820;

/// Zero-pads or truncates to exactly `target` rows; returns the number of
/// real rows kept.
pub fn pad_or_truncate(rep: &ContextRepresentation, target: usize) -> (Array2<f64>, usize) {
    let keep = rep.true_length.min(rep.num_frames()).min(target);
    let mut out = Array2::zeros((target, rep.frames.ncols()));
    out.slice_mut(s![..keep, ..])
        .assign(&rep.frames.slice(s![..keep, ..]));
    (out, keep)
}

/// Index batches for one epoch. With `shuffle` the order is a permutation
/// keyed by `(seed, epoch)`; otherwise it is `0..n`.
pub fn batch_indices(
    n: usize,
    batch_size: usize,
    seed: u64,
    epoch: usize,
    shuffle: bool,
) -> Vec<Vec<usize>> {
    assert!(batch_size > 0, "batch size must be positive");
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
    }
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Labeled utterances held at their true length (at most [`PAD_FRAMES`]
/// rows each). Padding is implicit: rows past `true_length` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSet {
    pub sequences: Vec<Array2<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub padded_len: usize,
}

impl SequenceSet {
    pub fn new(
        reps: Vec<ContextRepresentation>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if reps.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} representations but {} labels",
                reps.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidInput(format!(
                "label {l} outside 0..{num_classes}"
            )));
        }
        let sequences = reps
            .into_iter()
            .map(|r| {
                let keep = r.true_length.min(PAD_FRAMES);
                if keep == r.frames.nrows() {
                    r.frames
                } else {
                    r.frames.slice(s![..keep, ..]).to_owned()
                }
            })
            .collect();
        Ok(Self {
            sequences,
            labels,
            num_classes,
            padded_len: PAD_FRAMES,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.sequences.first().map_or(0, |s| s.ncols())
    }

    pub fn true_length(&self, i: usize) -> usize {
        self.sequences[i].nrows()
    }

    pub fn total_frames(&self) -> usize {
        self.sequences.iter().map(|s| s.nrows()).sum()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            sequences: idx.iter().map(|&i| self.sequences[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            padded_len: self.padded_len,
        }
    }

    pub fn batch(&self, idx: &[usize]) -> PaddedBatch<'_> {
        PaddedBatch {
            sequences: idx.iter().map(|&i| self.sequences[i].view()).collect(),
            true_lengths: idx.iter().map(|&i| self.true_length(i)).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            padded_len: self.padded_len,
        }
    }

    pub fn batches(
        &self,
        batch_size: usize,
        seed: u64,
        epoch: usize,
        shuffle: bool,
    ) -> Vec<PaddedBatch<'_>> {
        batch_indices(self.len(), batch_size, seed, epoch, shuffle)
            .iter()
            .map(|idx| self.batch(idx))
            .collect()
    }
}

/// A batch of utterances viewed at their true lengths. The zero-padded
/// `B x padded_len x d` tensor is materialized only on request.
#[derive(Debug, Clone)]
pub struct PaddedBatch<'a> {
    pub sequences: Vec<ArrayView2<'a, f64>>,
    pub true_lengths: Vec<usize>,
    pub labels: Vec<usize>,
    pub padded_len: usize,
}

impl PaddedBatch<'_> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `padded_len x d` input for sample `i`.
    pub fn padded_input(&self, i: usize) -> Array2<f64> {
        let seq = &self.sequences[i];
        let mut out = Array2::zeros((self.padded_len, seq.ncols()));
        out.slice_mut(s![..seq.nrows(), ..]).assign(seq);
        out
    }

    /// `B x padded_len x d`.
    pub fn to_tensor(&self) -> Array3<f64> {
        let d = self.sequences.first().map_or(0, |s| s.ncols());
        let mut out = Array3::zeros((self.len(), self.padded_len, d));
        for (i, seq) in self.sequences.iter().enumerate() {
            out.slice_mut(s![i, ..seq.nrows(), ..]).assign(seq);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cepstra::{FeatureKind, CONTEXT_DIM};
    use std::collections::HashSet;

    fn rep(t: usize) -> ContextRepresentation {
        ContextRepresentation {
            frames: Array2::from_shape_fn((t, CONTEXT_DIM), |(i, j)| (i * 7 + j) as f64 + 1.0),
            kind: FeatureKind::Gfcc,
            true_length: t,
        }
    }

    #[test]
    fn pad_truncate_cases() {
        let (m, n) = pad_or_truncate(&rep(820), PAD_FRAMES);
        assert_eq!(n, 820);
        assert_eq!(m, rep(820).frames);

        let (m, n) = pad_or_truncate(&rep(100), PAD_FRAMES);
        assert_eq!(m.dim(), (820, 741));
        assert_eq!(n, 100);
        assert!(m.slice(s![100.., ..]).iter().all(|&v| v == 0.0));
        assert_eq!(m.slice(s![..100, ..]), rep(100).frames);

        let r = rep(900);
        let (m, n) = pad_or_truncate(&r, PAD_FRAMES);
        assert_eq!(n, 820);
        assert_eq!(m, r.frames.slice(s![..820, ..]));
    }

    #[test]
    fn batch_counts_and_coverage() {
        let b = batch_indices(1080, 60, 42, 0, true);
        assert_eq!(b.len(), 18);
        let b = batch_indices(1085, 60, 42, 0, true);
        assert_eq!(b.len(), 19);
        assert_eq!(b.last().unwrap().len(), 5);
        let seen: HashSet<usize> = b.iter().flatten().copied().collect();
        assert_eq!(seen.len(), 1085);
    }

    #[test]
    fn ordering_rules() {
        let plain = batch_indices(10, 3, 1, 0, false);
        assert_eq!(plain.concat(), (0..10).collect::<Vec<_>>());

        let e0 = batch_indices(100, 60, 9, 0, true);
        let e1 = batch_indices(100, 60, 9, 1, true);
        assert_ne!(e0, e1);
        assert_eq!(e0, batch_indices(100, 60, 9, 0, true));
        assert_eq!(e1, batch_indices(100, 60, 9, 1, true));
    }

    #[test]
    fn sequence_set_truncates_and_pads() {
        let set = SequenceSet::new(vec![rep(5), rep(900)], vec![0, 3], 8).unwrap();
        assert_eq!(set.true_length(1), 820);
        let batch = set.batch(&[0, 1]);
        assert_eq!(batch.true_lengths, vec![5, 820]);
        let t = batch.to_tensor();
        assert_eq!(t.dim(), (2, 820, 741));
        assert!(t.slice(s![0, 5.., ..]).iter().all(|&v| v == 0.0));
        assert_eq!(batch.padded_input(0), t.slice(s![0, .., ..]));
        assert!(SequenceSet::new(vec![rep(5)], vec![8], 8).is_err());
        assert!(SequenceSet::new(vec![rep(5)], vec![], 8).is_err());
    }
}
