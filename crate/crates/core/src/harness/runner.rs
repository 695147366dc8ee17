use std::fs;
use std::path::PathBuf;
use std::sync::Mutex;

use rayon::prelude::*;

use super::config::{experiment_seed, ExperimentConfig};
use super::features::load_features;
use super::report::{append_result, emit_report, read_results, ExperimentResult};
use crate::cepstra::FeatureKind;
use crate::data::{load_manifest, split_train_test, CorpusEntry, Normalizer, SequenceSet, Task};
use crate::error::{Error, Result, StageExt};
use crate::nn::{evaluate, train, Arch, Checkpoint, ModelSpec};

/// Normalized train and test sets of one representation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub kind: FeatureKind,
    pub task: Task,
    pub train: SequenceSet,
    pub test: SequenceSet,
    pub normalizer: Normalizer,
    pub config_hash: String,
}

/// Entries that carry a label for the configured task, split into train and
/// test.
fn split_corpus(cfg: &ExperimentConfig) -> Result<(Vec<CorpusEntry>, Vec<CorpusEntry>)> {
    let entries: Vec<CorpusEntry> = load_manifest(&cfg.manifest)
        .stage("manifest")?
        .into_iter()
        .filter(|e| cfg.task.label(e).is_some())
        .collect();
    split_train_test(&entries, cfg.split_ratio, cfg.split_seed, cfg.split_mode).stage("split")
}

fn sequence_set(
    entries: &[CorpusEntry],
    reps: Vec<crate::cepstra::ContextRepresentation>,
    normalizer: &Normalizer,
    task: Task,
) -> Result<SequenceSet> {
    let reps = reps
        .into_iter()
        .map(|mut r| {
            normalizer.apply_in_place(&mut r.frames)?;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = entries
        .iter()
        .map(|e| task.label(e).expect("entries are filtered by task"))
        .collect();
    SequenceSet::new(reps, labels, task.num_classes())
}

/// Extracts (or loads cached) features for both sides of the split and
/// standardizes them with statistics fitted on the training side only.
pub fn prepare(
    cfg: &ExperimentConfig,
    kind: FeatureKind,
    train_entries: &[CorpusEntry],
    test_entries: &[CorpusEntry],
) -> Result<Prepared> {
    let pipeline = cfg.pipeline();
    let cache = cfg.cache_dir();
    let train_reps = load_features(train_entries, &pipeline, kind, Some(&cache)).stage("features")?;
    let test_reps = load_features(test_entries, &pipeline, kind, Some(&cache)).stage("features")?;
    let normalizer = Normalizer::fit(&train_reps).stage("normalization")?;
    Ok(Prepared {
        kind,
        task: cfg.task,
        train: sequence_set(train_entries, train_reps, &normalizer, cfg.task).stage("normalization")?,
        test: sequence_set(test_entries, test_reps, &normalizer, cfg.task).stage("normalization")?,
        normalizer,
        config_hash: pipeline.config_hash(),
    })
}

fn model_file_name(task: Task, kind: FeatureKind, arch: &Arch) -> String {
    let name: String = arch
        .to_string()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("{task}-{kind}-{name}.json")
}

fn run_cell(cfg: &ExperimentConfig, data: &Prepared, arch: &Arch) -> Result<ExperimentResult> {
    let seed = experiment_seed(cfg.seed, arch, data.kind, data.task);
    let spec = ModelSpec::new(arch.clone(), data.task.num_classes(), data.train.input_dim());
    log::info!("training {arch} on {} ({}), seed {seed}", data.kind, data.task);
    let trained = train(spec, &data.train, &cfg.train_config(), seed).stage("training")?;
    let eval = evaluate(&trained.model, &data.test).stage("evaluation")?;
    if cfg.save_models {
        let dir = cfg.out_dir.join("models");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Checkpoint {
            model: trained.model.clone(),
            representation: data.kind,
            config_hash: data.config_hash.clone(),
            normalizer: Some(data.normalizer.clone()),
            epochs_trained: trained.epochs_trained,
        }
        .save(&dir.join(model_file_name(data.task, data.kind, arch)))?;
    }
    log::info!(
        "{arch} {}: test accuracy {:.3} after {} epochs",
        data.kind,
        eval.accuracy,
        trained.epochs_trained
    );
    Ok(ExperimentResult {
        task: data.task,
        model: arch.clone(),
        representation: data.kind,
        loss: eval.loss,
        accuracy: eval.accuracy,
        epochs: trained.epochs_trained,
        seed,
        frame_accuracy: eval.frame_accuracy,
        error: None,
    })
}

/// One grid cell from scratch: features, split, normalization, training and
/// test evaluation.
pub fn run_experiment(cfg: &ExperimentConfig, arch: &Arch, kind: FeatureKind) -> Result<ExperimentResult> {
    cfg.validate()?;
    let (train_entries, test_entries) = split_corpus(cfg)?;
    let data = prepare(cfg, kind, &train_entries, &test_entries)?;
    run_cell(cfg, &data, arch)
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    /// Rows in grid order: architecture, then representation.
    pub results: Vec<ExperimentResult>,
    pub csv: PathBuf,
    pub report: PathBuf,
}

/// Runs every (architecture, representation) cell of the configured task.
///
/// Rows are appended to `<out_dir>/results.csv` as cells finish, so an
/// interrupted grid resumes where it stopped: successful rows already in the
/// file for this task are kept and not re-run. A failing cell becomes a row
/// with an `error` entry and does not stop the grid. At the end the CSV is
/// rewritten in grid order and `report.md` is rendered.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<GridOutcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let csv_path = cfg.out_dir.join("results.csv");
    let mut done: Vec<ExperimentResult> = if csv_path.exists() {
        read_results(&csv_path)?.into_iter().filter(|r| r.is_ok()).collect()
    } else {
        Vec::new()
    };
    // keep only successful rows on disk before appending new ones
    if !done.is_empty() {
        super::report::write_results(&csv_path, &done)?;
    } else if csv_path.exists() {
        fs::remove_file(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    }
    let is_done = |done: &[ExperimentResult], arch: &Arch, kind: FeatureKind| {
        done.iter()
            .any(|r| r.task == cfg.task && &r.model == arch && r.representation == kind)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let (train_entries, test_entries) = split_corpus(cfg)?;
    let writer = Mutex::new(());

    for kind in cfg.representation.kinds() {
        let pending: Vec<Arch> = cfg
            .architectures
            .iter()
            .filter(|a| !is_done(&done, a, kind))
            .cloned()
            .collect();
        if pending.is_empty() {
            continue;
        }
        let record = |r: &ExperimentResult| -> Result<()> {
            let _guard = writer.lock().expect("result writer poisoned");
            append_result(&csv_path, r)
        };
        let fresh: Vec<ExperimentResult> = match pool.install(|| prepare(cfg, kind, &train_entries, &test_entries)) {
            Ok(data) => pool.install(|| {
                pending
                    .par_iter()
                    .map(|arch| {
                        let r = run_cell(cfg, &data, arch).unwrap_or_else(|e| {
                            log::error!("{arch} {kind}: {e}");
                            let seed = experiment_seed(cfg.seed, arch, kind, cfg.task);
                            ExperimentResult::failed(cfg.task, arch.clone(), kind, seed, &e)
                        });
                        record(&r).map(|()| r)
                    })
                    .collect::<Result<Vec<_>>>()
            })?,
            Err(e) => {
                log::error!("{kind} features: {e}");
                pending
                    .iter()
                    .map(|arch| {
                        let seed = experiment_seed(cfg.seed, arch, kind, cfg.task);
                        let r = ExperimentResult::failed(cfg.task, arch.clone(), kind, seed, &e);
                        record(&r).map(|()| r)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        done.extend(fresh);
    }

    let position = |r: &ExperimentResult| {
        let task = usize::from(r.task != cfg.task);
        let arch = cfg
            .architectures
            .iter()
            .position(|a| a == &r.model)
            .unwrap_or(usize::MAX);
        (task, r.task.as_str(), arch, r.model.to_string(), r.representation)
    };
    done.sort_by_key(|r| position(r));
    let (csv, report) = emit_report(&done, &cfg.out_dir)?;
    let results = done
        .into_iter()
        .filter(|r| r.task == cfg.task && cfg.architectures.contains(&r.model) && cfg.representation.kinds().contains(&r.representation))
        .collect();
    Ok(GridOutcome { results, csv, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{write_corpus, SynthConfig};

    fn small_config(dir: &std::path::Path) -> ExperimentConfig {
        let manifest = write_corpus(&dir.join("corpus"), &SynthConfig { per_class: 8, ..SynthConfig::default() }).unwrap();
        ExperimentConfig {
            manifest,
            architectures: vec!["F(16)".parse().unwrap(), "L(8)/A".parse().unwrap()],
            max_epochs: 2,
            out_dir: dir.join("out"),
            workers: 2,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn class_counts_follow_task() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let (tr, te) = split_corpus(&cfg).unwrap();
        assert_eq!(tr.len() + te.len(), 64);
        let data = prepare(&cfg, FeatureKind::Mfcc, &tr, &te).unwrap();
        assert_eq!(data.train.num_classes, 8);
        assert_eq!(data.train.input_dim(), 741);

        let cfg = ExperimentConfig { task: Task::Intensity, ..cfg };
        let (tr, te) = split_corpus(&cfg).unwrap();
        assert_eq!(tr.len() + te.len(), 56);
        let data = prepare(&cfg, FeatureKind::Mfcc, &tr, &te).unwrap();
        assert_eq!(data.train.num_classes, 2);
    }

    #[test]
    fn grid_writes_every_cell_and_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let first = run_grid(&cfg).unwrap();
        assert_eq!(first.results.len(), 4);
        assert!(first.results.iter().all(|r| r.is_ok() && (0.0..=1.0).contains(&r.accuracy)));
        assert_eq!(
            first.results.iter().map(|r| format!("{} {}", r.model, r.representation)).collect::<Vec<_>>(),
            ["F(16) mfcc", "F(16) gfcc", "L(8)/A mfcc", "L(8)/A gfcc"]
        );
        let report = fs::read_to_string(&first.report).unwrap();
        assert!(report.contains("| L(8)/A | Tanh | 0 |"));

        // a rerun finds every cell done and reproduces the same file
        let before = fs::read_to_string(&first.csv).unwrap();
        let second = run_grid(&cfg).unwrap();
        assert_eq!(fs::read_to_string(&second.csv).unwrap(), before);

        // a single experiment matches its grid row
        let arch: Arch = "F(16)".parse().unwrap();
        let single = run_experiment(&cfg, &arch, FeatureKind::Gfcc).unwrap();
        assert_eq!(single.record(), first.results[1].record());
    }

    #[test]
    fn failures_become_rows() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            representation: crate::harness::Representation::Mfcc,
            fmin: 1e6,
            ..small_config(dir.path())
        };
        let out = run_grid(&cfg).unwrap();
        assert_eq!(out.results.len(), 2);
        assert!(out.results.iter().all(|r| r.error.as_deref().is_some_and(|e| e.contains("features"))));
        assert!(matches!(run_experiment(&cfg, &cfg.architectures[0], FeatureKind::Mfcc), Err(Error::Stage { stage: "features", .. })));
    }
}
