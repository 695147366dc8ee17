//! Command-line front end: feature extraction, single experiments, the full
//! representation × architecture grid, report rendering and the synthetic
//! corpus.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use emoceps::data::{load_manifest, ravdess_manifest, write_manifest, Task};
use emoceps::harness::{
    emit_report, load_features, read_results, run_experiment, run_grid, ExperimentConfig,
    Representation,
};
use emoceps::nn::Arch;
use emoceps::synth::{write_corpus, SynthConfig};
use emoceps::FeatureKind;

#[derive(Parser)]
#[command(name = "emoceps", version, about = "Mel and gammatone cepstral features for emotion classification")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract context-window features for every manifest entry into the cache.
    Extract(Common),
    /// Train and evaluate one architecture on one representation.
    Train {
        #[command(flatten)]
        common: Common,
        /// Also write the trained model checkpoint.
        #[arg(long)]
        save_model: bool,
    },
    /// Run every configured architecture on every configured representation.
    Grid(Common),
    /// Re-render report.md from a results CSV.
    Report {
        /// Results CSV written by `grid` or `train`.
        #[arg(long)]
        results: PathBuf,
        /// Output directory (defaults to the CSV's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the synthetic tone corpus with its manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Utterances per emotion class.
        #[arg(long, default_value_t = SynthConfig::default().per_class)]
        per_class: usize,
        #[arg(long, default_value_t = SynthConfig::default().seed)]
        seed: u64,
    },
    /// Build a manifest from a RAVDESS speech directory tree.
    RavdessManifest {
        /// Directory holding the Actor_NN folders.
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Settings shared by `extract`, `train` and `grid`. Flags override the
/// config file.
#[derive(Args)]
struct Common {
    /// Flat TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// emotion or intensity.
    #[arg(long)]
    task: Option<Task>,
    /// mfcc, gfcc or both.
    #[arg(long)]
    representation: Option<Representation>,
    /// Architecture such as F(800), F(400)/F(400), L(200) or L(100)/A;
    /// repeatable.
    #[arg(long = "arch")]
    arch: Vec<Arch>,
    /// Base seed for training.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent experiments (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_toml_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(m) = &self.manifest {
            cfg.manifest = m.clone();
        }
        if let Some(t) = self.task {
            cfg.task = t;
        }
        if let Some(r) = self.representation {
            cfg.representation = r;
        }
        if !self.arch.is_empty() {
            cfg.architectures = self.arch.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn extract(cfg: &ExperimentConfig) -> Result<()> {
    let entries = load_manifest(&cfg.manifest)?;
    let pipeline = cfg.pipeline();
    let cache = cfg.cache_dir();
    for kind in cfg.representation.kinds() {
        let reps = load_features(&entries, &pipeline, kind, Some(&cache))?;
        let frames: usize = reps.iter().map(|r| r.true_length).sum();
        println!(
            "{kind}: {} utterances, {frames} frames, cached under {}",
            reps.len(),
            cache.join(pipeline.config_hash()).join(kind.as_str()).display()
        );
    }
    Ok(())
}

fn train_one(mut cfg: ExperimentConfig, save_model: bool) -> Result<()> {
    let [arch] = cfg.architectures.as_slice() else {
        bail!("`train` takes exactly one --arch");
    };
    let arch = arch.clone();
    let kind = match cfg.representation {
        Representation::Mfcc => FeatureKind::Mfcc,
        Representation::Gfcc => FeatureKind::Gfcc,
        Representation::Both => bail!("`train` needs --representation mfcc or gfcc"),
    };
    cfg.save_models |= save_model;
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let result = run_experiment(&cfg, &arch, kind)?;
    let (csv, _) = emit_report(std::slice::from_ref(&result), &cfg.out_dir)?;
    println!(
        "{} {} {}: loss {:.3}, accuracy {:.3}, {} epochs (seed {})",
        result.task, result.model, result.representation, result.loss, result.accuracy, result.epochs, result.seed
    );
    println!("wrote {}", csv.display());
    Ok(())
}

fn report(results: &Path, out: Option<PathBuf>) -> Result<()> {
    let rows = read_results(results)?;
    let dir = out.unwrap_or_else(|| results.parent().map(Path::to_path_buf).unwrap_or_default());
    let md = dir.join("report.md");
    let text = format!("# Results\n\n{}", emoceps::harness::render_markdown(&rows));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(&md, text).with_context(|| format!("writing {}", md.display()))?;
    println!("wrote {}", md.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match cli.command {
        Command::Extract(common) => extract(&common.config()?),
        Command::Train { common, save_model } => train_one(common.config()?, save_model),
        Command::Grid(common) => {
            let cfg = common.config()?;
            let outcome = run_grid(&cfg)?;
            let failed = outcome.results.iter().filter(|r| !r.is_ok()).count();
            println!(
                "{} cells ({failed} failed); wrote {} and {}",
                outcome.results.len(),
                outcome.csv.display(),
                outcome.report.display()
            );
            if let Some(d) = emoceps::harness::mean_delta(&outcome.results, cfg.task) {
                println!("mean accuracy delta (GFCC - MFCC): {d:+.3}");
            }
            Ok(())
        }
        Command::Report { results, out } => report(&results, out),
        Command::Synth { out, per_class, seed } => {
            let cfg = SynthConfig { per_class, seed, ..SynthConfig::default() };
            let manifest = write_corpus(&out, &cfg)?;
            println!("wrote {} utterances and {}", 8 * per_class, manifest.display());
            Ok(())
        }
        Command::RavdessManifest { root, out } => {
            let root = root.canonicalize().with_context(|| format!("reading {}", root.display()))?;
            let entries = ravdess_manifest(&root)?;
            if entries.is_empty() {
                bail!("no RAVDESS speech files found under {}", root.display());
            }
            let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let base = parent.canonicalize().with_context(|| format!("reading {}", parent.display()))?;
            write_manifest(&out, &entries, &base)?;
            println!("wrote {} entries to {}", entries.len(), out.display());
            Ok(())
        }
    }
}
