use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::{AdamConfig, AdamState};
use super::early_stop::{EarlyStopping, Progress};
use super::loss::argmax;
use super::model::Model;
use super::spec::ModelSpec;
use super::mix_seed;
use crate::data::{batch_indices, SequenceSet};
use crate::error::{Error, Result};

/// Which accuracy drives early stopping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Monitor {
    /// Utterance-level accuracy on the training set itself.
    TrainAccuracy,
    /// Accuracy on a held-out share of the training set, which is then not
    /// trained on.
    HeldOut { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub patience: usize,
    pub min_delta: f64,
    /// Hard cap in case the monitored metric keeps creeping upward.
    pub max_epochs: usize,
    pub adam: AdamConfig,
    pub monitor: Monitor,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 60,
            patience: 15,
            min_delta: 0.0005,
            max_epochs: 300,
            adam: AdamConfig::default(),
            monitor: Monitor::TrainAccuracy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training cross-entropy over the epoch's updates.
    pub loss: f64,
    /// Monitored accuracy after the epoch.
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    /// Parameters from the epoch with the highest monitored accuracy.
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub epochs_trained: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// Mean cross-entropy of the utterance posteriors.
    pub loss: f64,
    /// Utterance-level accuracy.
    pub accuracy: f64,
    /// Per-frame accuracy, dense nets only.
    pub frame_accuracy: Option<f64>,
}

/// Utterance-level evaluation with dropout off.
pub fn evaluate(model: &Model, set: &SequenceSet) -> Result<Evaluation> {
    if set.is_empty() {
        return Err(Error::InvalidInput("evaluation set is empty".into()));
    }
    let dense = !model.spec.arch.is_recurrent();
    let per_utt = (0..set.len())
        .into_par_iter()
        .map(|i| {
            let x = set.sequences[i].view();
            let label = set.labels[i];
            if dense {
                let frames = model.frame_posteriors(x)?;
                let hits = frames.rows().into_iter().filter(|r| argmax(r.view()) == label).count();
                let p = frames.mean_axis(ndarray::Axis(0)).expect("non-empty");
                Ok((p, hits))
            } else {
                Ok((model.predict_proba(x, x.nrows())?, 0))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let n = set.len() as f64;
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut frame_hits = 0usize;
    for (i, (p, hits)) in per_utt.iter().enumerate() {
        let label = set.labels[i];
        loss -= p[label].max(f64::MIN_POSITIVE).ln();
        correct += usize::from(argmax(p.view()) == label);
        frame_hits += hits;
    }
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
        frame_accuracy: dense.then(|| frame_hits as f64 / set.total_frames() as f64),
    })
}

fn check_inputs(spec: &ModelSpec, set: &SequenceSet, cfg: &TrainConfig) -> Result<()> {
    spec.validate()?;
    if set.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if set.input_dim() != spec.input_dim || set.num_classes != spec.num_classes {
        return Err(Error::Shape(format!(
            "training data has width {} and {} classes, model expects {} and {}",
            set.input_dim(),
            set.num_classes,
            spec.input_dim,
            spec.num_classes
        )));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(Error::Config("batch size and epoch cap must be positive".into()));
    }
    Ok(())
}

/// Runs one epoch of Adam updates and returns the mean batch loss.
#[allow(clippy::too_many_arguments)]
fn run_epoch(
    model: &mut Model,
    adam: &mut AdamState,
    set: &SequenceSet,
    frame_index: &[(usize, usize)],
    batch_size: usize,
    shuffle_seed: u64,
    epoch: usize,
    dropout_rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut weighted = 0.0;
    let mut count = 0usize;
    if model.spec.arch.is_recurrent() {
        for batch in set.batches(batch_size, shuffle_seed, epoch, true) {
            let (loss, grads) =
                model.sequence_loss_grad(&batch.sequences, &batch.true_lengths, &batch.labels)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            adam.step(&mut model.params, &grads)?;
            weighted += loss * batch.len() as f64;
            count += batch.len();
        }
    } else {
        let d = set.input_dim();
        for idx in batch_indices(frame_index.len(), batch_size, shuffle_seed, epoch, true) {
            let mut x = Array2::zeros((idx.len(), d));
            let mut labels = Vec::with_capacity(idx.len());
            for (row, &k) in idx.iter().enumerate() {
                let (u, t) = frame_index[k];
                x.row_mut(row).assign(&set.sequences[u].row(t));
                labels.push(set.labels[u]);
            }
            let (loss, grads) = model.dense_loss_grad(x.view(), &labels, Some(dropout_rng))?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            adam.step(&mut model.params, &grads)?;
            weighted += loss * idx.len() as f64;
            count += idx.len();
        }
    }
    Ok(weighted / count as f64)
}

/// Trains with the configured monitor.
pub fn train(spec: ModelSpec, set: &SequenceSet, cfg: &TrainConfig, seed: u64) -> Result<TrainedModel> {
    match cfg.monitor {
        Monitor::TrainAccuracy => {
            train_with_monitor(spec, set, cfg, seed, |model, _| Ok(evaluate(model, set)?.accuracy))
        }
        Monitor::HeldOut { fraction } => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::Config(format!("held-out fraction must lie in (0, 1), got {fraction}")));
            }
            let mut order: Vec<usize> = (0..set.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, 3)));
            let n_held = ((set.len() as f64 * fraction).round() as usize).clamp(1, set.len() - 1);
            let (held, fit) = order.split_at(n_held);
            let (mut held, mut fit) = (held.to_vec(), fit.to_vec());
            held.sort_unstable();
            fit.sort_unstable();
            let held_set = set.subset(&held);
            train_with_monitor(spec, &set.subset(&fit), cfg, seed, |model, _| {
                Ok(evaluate(model, &held_set)?.accuracy)
            })
        }
    }
}

/// Training loop with a caller-supplied monitored metric, evaluated after
/// every epoch as `metric(model, epoch)`.
///
/// Dense nets are trained on individual frames, each carrying its
/// utterance's label; recurrent nets on whole utterances. Every random
/// stream (initialization, shuffling, dropout) is derived from `seed`.
pub fn train_with_monitor<F>(
    spec: ModelSpec,
    set: &SequenceSet,
    cfg: &TrainConfig,
    seed: u64,
    mut metric: F,
) -> Result<TrainedModel>
where
    F: FnMut(&Model, usize) -> Result<f64>,
{
    check_inputs(&spec, set, cfg)?;
    let mut model = Model::new(spec, mix_seed(seed, 0))?;
    let mut adam = AdamState::new(cfg.adam, &model.params);
    let mut stopper = EarlyStopping::new(cfg.min_delta, cfg.patience);
    let shuffle_seed = mix_seed(seed, 1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 2));
    let frame_index: Vec<(usize, usize)> = if model.spec.arch.is_recurrent() {
        Vec::new()
    } else {
        (0..set.len())
            .flat_map(|u| (0..set.true_length(u)).map(move |t| (u, t)))
            .collect()
    };

    let mut log = Vec::new();
    let mut best = model.params.clone();
    for epoch in 0..cfg.max_epochs {
        let loss = run_epoch(
            &mut model,
            &mut adam,
            set,
            &frame_index,
            cfg.batch_size,
            shuffle_seed,
            epoch,
            &mut dropout_rng,
        )?;
        let accuracy = metric(&model, epoch)?;
        log::debug!("{} epoch {epoch}: loss {loss:.4}, accuracy {accuracy:.4}", model.spec.arch);
        log.push(EpochLog { epoch, loss, accuracy });
        let progress = stopper.observe(epoch, accuracy);
        if stopper.best_epoch() == Some(epoch) {
            best = model.params.clone();
        }
        if progress == Progress::Stop {
            break;
        }
    }
    model.params = best;
    Ok(TrainedModel {
        model,
        epochs_trained: log.len(),
        best_epoch: stopper.best_epoch().unwrap_or(0),
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cepstra::{ContextRepresentation, FeatureKind};
    use rand::Rng;

    /// Two classes whose frames differ in the sign of the first feature.
    fn separable(n: usize, d: usize, seed: u64) -> SequenceSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut reps = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = i % 2;
            let t = rng.random_range(3..9);
            let sign = if label == 0 { -1.0 } else { 1.0 };
            let frames = Array2::from_shape_fn((t, d), |(_, j)| {
                if j == 0 {
                    sign * rng.random_range(0.5..1.5)
                } else {
                    rng.random_range(-1.0..1.0)
                }
            });
            reps.push(ContextRepresentation { true_length: t, frames, kind: FeatureKind::Mfcc });
            labels.push(label);
        }
        SequenceSet::new(reps, labels, 2).unwrap()
    }

    #[test]
    fn dense_learns_separable_set() {
        let set = separable(40, 6, 0);
        let spec = ModelSpec::new("F(200)".parse().unwrap(), 2, 6);
        let trained = train(spec, &set, &TrainConfig::default(), 1).unwrap();
        assert!(trained.log.iter().any(|l| l.accuracy == 1.0));
        assert_eq!(evaluate(&trained.model, &set).unwrap().accuracy, 1.0);
        assert!(trained.epochs_trained <= trained.best_epoch + 1 + 15);
    }

    #[test]
    fn attention_lstm_learns_separable_set() {
        let set = separable(40, 6, 2);
        let spec = ModelSpec::new("L(8)/A".parse().unwrap(), 2, 6);
        let cfg = TrainConfig { batch_size: 10, adam: AdamConfig { lr: 1e-2, ..AdamConfig::default() }, ..TrainConfig::default() };
        let trained = train(spec, &set, &cfg, 3).unwrap();
        assert_eq!(evaluate(&trained.model, &set).unwrap().accuracy, 1.0);
    }

    #[test]
    fn scripted_metric_stops_after_patience() {
        let set = separable(4, 3, 4);
        let spec = ModelSpec::new("F(4)".parse().unwrap(), 2, 3);
        let trained = train_with_monitor(spec, &set, &TrainConfig::default(), 0, |_, e| Ok(0.3 + 0.0004 * e as f64)).unwrap();
        assert_eq!(trained.epochs_trained, 16);
        assert_eq!(trained.best_epoch, 15);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let set = separable(12, 4, 5);
        for arch in ["F(6)", "L(4)/A"] {
            let spec = ModelSpec::new(arch.parse().unwrap(), 2, 4);
            let cfg = TrainConfig { max_epochs: 3, ..TrainConfig::default() };
            let a = train(spec.clone(), &set, &cfg, 7).unwrap();
            let b = train(spec, &set, &cfg, 7).unwrap();
            assert_eq!(a.model, b.model);
            assert_eq!(a.log, b.log);
        }
    }

    #[test]
    fn evaluation_rules() {
        let set = separable(16, 3, 6);
        let mut model = Model::new(ModelSpec::new("F(4)".parse().unwrap(), 2, 3), 0).unwrap();
        for v in model.params.values_mut() {
            v.fill(0.0);
        }
        // uniform posteriors: ties go to class 0, which is half the labels
        let e = evaluate(&model, &set).unwrap();
        assert_eq!(e.accuracy, 0.5);
        assert!((e.loss - 2f64.ln()).abs() < 1e-12);
        assert_eq!(e.frame_accuracy, Some(set.sequences.iter().step_by(2).map(|s| s.nrows()).sum::<usize>() as f64 / set.total_frames() as f64));
        assert_eq!(evaluate(&model, &set).unwrap(), e);
    }

    #[test]
    fn held_out_monitor_runs() {
        let set = separable(20, 3, 8);
        let spec = ModelSpec::new("F(8)".parse().unwrap(), 2, 3);
        let cfg = TrainConfig { max_epochs: 4, monitor: Monitor::HeldOut { fraction: 0.25 }, ..TrainConfig::default() };
        assert_eq!(train(spec.clone(), &set, &cfg, 0).unwrap().epochs_trained, 4);
        let bad = TrainConfig { monitor: Monitor::HeldOut { fraction: 1.0 }, ..cfg };
        assert!(matches!(train(spec, &set, &bad, 0), Err(Error::Config(_))));
    }
}
