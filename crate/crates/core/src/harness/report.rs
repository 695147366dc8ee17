use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use crate::cepstra::FeatureKind;
use crate::data::Task;
use crate::error::{Error, Result};
use crate::nn::{Arch, ModelSpec};

pub const CSV_HEADER: [&str; 9] = [
    "task",
    "model",
    "representation",
    "loss",
    "accuracy",
    "epochs",
    "seed",
    "frame_accuracy",
    "error",
];

/// One grid cell. Failed cells carry `error`, with NaN loss and accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub task: Task,
    pub model: Arch,
    pub representation: FeatureKind,
    pub loss: f64,
    pub accuracy: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Frame-level accuracy, fully connected models only.
    pub frame_accuracy: Option<f64>,
    pub error: Option<String>,
}

impl ExperimentResult {
    pub fn failed(task: Task, model: Arch, representation: FeatureKind, seed: u64, error: &Error) -> Self {
        Self {
            task,
            model,
            representation,
            loss: f64::NAN,
            accuracy: f64::NAN,
            epochs: 0,
            seed,
            frame_accuracy: None,
            error: Some(error.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    /// Full-precision CSV fields in [`CSV_HEADER`] order.
    pub fn record(&self) -> [String; 9] {
        [
            self.task.to_string(),
            self.model.to_string(),
            self.representation.to_string(),
            self.loss.to_string(),
            self.accuracy.to_string(),
            self.epochs.to_string(),
            self.seed.to_string(),
            self.frame_accuracy.map(|f| f.to_string()).unwrap_or_default(),
            self.error.clone().unwrap_or_default(),
        ]
    }

    fn from_record(rec: &csv::StringRecord, path: &Path, line: usize) -> Result<Self> {
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if rec.len() != CSV_HEADER.len() {
            return Err(bad(format!("expected {} fields, found {}", CSV_HEADER.len(), rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| bad(format!("bad {} `{}`", CSV_HEADER[i], &rec[i])))
        };
        let int = |i: usize| -> Result<u64> {
            rec[i].parse().map_err(|_| bad(format!("bad {} `{}`", CSV_HEADER[i], &rec[i])))
        };
        Ok(Self {
            task: rec[0].parse().map_err(|e: Error| bad(e.to_string()))?,
            model: rec[1].parse().map_err(|e: Error| bad(e.to_string()))?,
            representation: rec[2].parse().map_err(|e: Error| bad(e.to_string()))?,
            loss: num(3)?,
            accuracy: num(4)?,
            epochs: int(5)? as usize,
            seed: int(6)?,
            frame_accuracy: if rec[7].is_empty() { None } else { Some(num(7)?) },
            error: (!rec[8].is_empty()).then(|| rec[8].to_string()),
        })
    }
}

/// Writes all results, header first, replacing any existing file.
pub fn write_results(path: &Path, results: &[ExperimentResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in results {
        w.write_record(r.record())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Appends one row, writing the header first when the file is new or empty.
pub(crate) fn append_result(path: &Path, result: &ExperimentResult) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(CSV_HEADER)?;
    }
    w.write_record(result.record())?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_results(path: &Path) -> Result<Vec<ExperimentResult>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| ExperimentResult::from_record(&rec?, path, i + 2))
        .collect()
}

fn cell<'a>(results: &'a [ExperimentResult], task: Task, arch: &Arch, kind: FeatureKind) -> Option<&'a ExperimentResult> {
    results
        .iter()
        .find(|r| r.task == task && &r.model == arch && r.representation == kind)
}

fn archs_for(results: &[ExperimentResult], task: Task) -> Vec<Arch> {
    let mut out: Vec<Arch> = Vec::new();
    for r in results.iter().filter(|r| r.task == task) {
        if !out.contains(&r.model) {
            out.push(r.model.clone());
        }
    }
    out
}

fn accuracy_delta(results: &[ExperimentResult], task: Task, arch: &Arch) -> Option<f64> {
    let m = cell(results, task, arch, FeatureKind::Mfcc).filter(|r| r.is_ok())?;
    let g = cell(results, task, arch, FeatureKind::Gfcc).filter(|r| r.is_ok())?;
    Some(g.accuracy - m.accuracy)
}

/// Mean of the per-architecture `GFCC accuracy - MFCC accuracy` over
/// architectures where both cells succeeded.
pub fn mean_delta(results: &[ExperimentResult], task: Task) -> Option<f64> {
    let deltas: Vec<f64> = archs_for(results, task)
        .iter()
        .filter_map(|a| accuracy_delta(results, task, a))
        .collect();
    (!deltas.is_empty()).then(|| deltas.iter().sum::<f64>() / deltas.len() as f64)
}

/// Mean of the per-architecture relative gain
/// `(GFCC accuracy - MFCC accuracy) / MFCC accuracy`, same architectures as
/// [`mean_delta`].
pub fn mean_relative_delta(results: &[ExperimentResult], task: Task) -> Option<f64> {
    let gains: Vec<f64> = archs_for(results, task)
        .iter()
        .filter_map(|a| {
            let m = cell(results, task, a, FeatureKind::Mfcc)?.accuracy;
            accuracy_delta(results, task, a).filter(|_| m > 0.0).map(|d| d / m)
        })
        .collect();
    (!gains.is_empty()).then(|| gains.iter().sum::<f64>() / gains.len() as f64)
}

fn fmt3(r: Option<&ExperimentResult>, value: impl Fn(&ExperimentResult) -> f64) -> String {
    match r {
        Some(r) if r.is_ok() => format!("{:.3}", value(r)),
        Some(_) => "failed".into(),
        None => "".into(),
    }
}

/// Markdown tables, one per task: per architecture the MFCC and GFCC loss
/// and accuracy, their accuracy difference, and the mean difference. All
/// numbers are rounded to three decimals.
pub fn render_markdown(results: &[ExperimentResult]) -> String {
    let mut out = String::new();
    for task in [Task::Emotion, Task::Intensity] {
        let archs = archs_for(results, task);
        if archs.is_empty() {
            continue;
        }
        let _ = writeln!(out, "## {} classification\n", capitalize(task.as_str()));
        out.push_str("| Model | Activation | Dropout | MFCC loss | MFCC accuracy | GFCC loss | GFCC accuracy | Accuracy delta |\n");
        out.push_str("|---|---|---|---|---|---|---|---|\n");
        for arch in &archs {
            let spec = ModelSpec::new(arch.clone(), task.num_classes(), 1);
            let m = cell(results, task, arch, FeatureKind::Mfcc);
            let g = cell(results, task, arch, FeatureKind::Gfcc);
            let delta = accuracy_delta(results, task, arch).map_or(String::new(), |d| format!("{d:+.3}"));
            let _ = writeln!(
                out,
                "| {arch} | {} | {} | {} | {} | {} | {} | {delta} |",
                capitalize(&format!("{:?}", spec.activation)),
                spec.dropout,
                fmt3(m, |r| r.loss),
                fmt3(m, |r| r.accuracy),
                fmt3(g, |r| r.loss),
                fmt3(g, |r| r.accuracy),
            );
        }
        match mean_delta(results, task) {
            Some(d) => {
                let n = archs.iter().filter(|a| accuracy_delta(results, task, a).is_some()).count();
                let _ = writeln!(out, "\nMean accuracy delta (GFCC - MFCC) over {n} architectures: {d:+.3}");
                if let Some(r) = mean_relative_delta(results, task) {
                    let _ = writeln!(out, "\nMean relative accuracy change (GFCC vs MFCC): {:+.1}%", 100.0 * r);
                }
            }
            None => out.push_str("\nMean accuracy delta (GFCC - MFCC): not available\n"),
        }

        let dense: Vec<&Arch> = archs.iter().filter(|a| !a.is_recurrent()).collect();
        if !dense.is_empty() {
            out.push_str("\nFrame-level accuracy of the fully connected models:\n\n");
            out.push_str("| Model | MFCC | GFCC |\n|---|---|---|\n");
            for arch in dense {
                let f = |kind| {
                    cell(results, task, arch, kind)
                        .and_then(|r| r.frame_accuracy)
                        .map_or(String::new(), |v| format!("{v:.3}"))
                };
                let _ = writeln!(out, "| {arch} | {} | {} |", f(FeatureKind::Mfcc), f(FeatureKind::Gfcc));
            }
        }

        let failures: Vec<&ExperimentResult> = results.iter().filter(|r| r.task == task && !r.is_ok()).collect();
        if !failures.is_empty() {
            out.push_str("\nFailed cells:\n\n");
            for r in failures {
                let _ = writeln!(
                    out,
                    "- {} {}: {}",
                    r.model,
                    r.representation,
                    r.error.as_deref().unwrap_or_default().replace('\n', " ")
                );
            }
        }
        out.push('\n');
    }
    out
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

/// Writes `results.csv` and `report.md` into `dir`.
pub fn emit_report(results: &[ExperimentResult], dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if results.is_empty() {
        return Err(Error::InvalidInput("no results to report".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("results.csv");
    write_results(&csv_path, results)?;
    let md_path = dir.join("report.md");
    let text = format!("# Results\n\n{}", render_markdown(results));
    fs::write(&md_path, text).map_err(|e| Error::io(&md_path, e))?;
    Ok((csv_path, md_path))
}
