//! Synthetic labeled corpus of amplitude- and frequency-modulated tones.
//!
//! Each emotion class owns a carrier frequency (log-spaced from 220 Hz) with
//! two harmonics, a class-specific amplitude-modulation rate and a slow
//! vibrato. Strong-intensity utterances are louder and more deeply
//! modulated. Per utterance the carrier is jittered by up to 3%, the
//! duration is drawn from a range, and low-level noise is added, so the
//! classes are separable but not trivially identical within a class.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{write_manifest, write_wav_pcm16, CorpusEntry, Emotion, Intensity};
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::nn::mix_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Utterances per emotion class.
    pub per_class: usize,
    pub sample_rate: u32,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            per_class: 40,
            sample_rate: 16_000,
            min_duration_s: 0.5,
            max_duration_s: 0.8,
            seed: 20_240_601,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.per_class < 2 || self.sample_rate < 8_000 {
            return Err(Error::Config(format!(
                "synthetic corpus needs >= 2 utterances per class and >= 8 kHz, got {} and {} Hz",
                self.per_class, self.sample_rate
            )));
        }
        if !(self.min_duration_s > 0.0 && self.min_duration_s <= self.max_duration_s) {
            return Err(Error::Config(format!(
                "invalid duration range {}..{} s",
                self.min_duration_s, self.max_duration_s
            )));
        }
        Ok(())
    }
}

/// Carrier frequency of an emotion class in Hz.
pub fn class_carrier(emotion: Emotion) -> f64 {
    220.0 * 1.45f64.powi(emotion.index() as i32)
}

/// One utterance of the given class, drawn from `rng`.
pub fn synth_utterance<R: Rng>(emotion: Emotion, intensity: Intensity, cfg: &SynthConfig, rng: &mut R) -> Result<Waveform> {
    let sr = f64::from(cfg.sample_rate);
    let duration = rng.random_range(cfg.min_duration_s..=cfg.max_duration_s);
    let n = (duration * sr).round() as usize;
    let k = emotion.index() as f64;
    let carrier = class_carrier(emotion) * rng.random_range(0.97..1.03);
    let am_rate = 2.0 + k + rng.random_range(-0.3..0.3);
    let (gain, am_depth) = match intensity {
        Intensity::Normal => (0.25, 0.3),
        Intensity::Strong => (0.6, 0.6),
    };
    let vibrato_rate = rng.random_range(4.0..6.0);
    let vibrato_depth = 0.02 * carrier;
    let phase0 = rng.random_range(0.0..TAU);
    let am_phase = rng.random_range(0.0..TAU);

    let mut phase = phase0;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / sr;
        let inst = carrier + vibrato_depth * (TAU * vibrato_rate * t).sin();
        phase += TAU * inst / sr;
        let mut tone = 0.0;
        for (h, amp) in [(1.0, 1.0), (2.0, 0.5), (3.0, 0.25)] {
            if h * inst < sr / 2.0 {
                tone += amp * (h * phase).sin();
            }
        }
        let envelope = 1.0 - am_depth * (0.5 + 0.5 * (TAU * am_rate * t + am_phase).sin());
        let noise = rng.random_range(-0.005..0.005);
        samples.push(gain * envelope * tone / 1.75 + noise);
    }
    Waveform::new(samples, cfg.sample_rate)
}

/// Labels of the synthetic corpus in generation order: `per_class` entries
/// per emotion, alternating normal and strong (neutral is always normal),
/// spread over four pseudo-speakers.
fn labels(cfg: &SynthConfig) -> Vec<(Emotion, Intensity, String)> {
    let mut out = Vec::with_capacity(8 * cfg.per_class);
    for emotion in Emotion::ALL {
        for i in 0..cfg.per_class {
            let intensity = if emotion == Emotion::Neutral || i % 2 == 0 {
                Intensity::Normal
            } else {
                Intensity::Strong
            };
            out.push((emotion, intensity, format!("synth{:02}", (i / 2) % 4 + 1)));
        }
    }
    out
}

/// Generates the corpus in memory. Entry paths are bare file names.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<(CorpusEntry, Waveform)>> {
    cfg.validate()?;
    labels(cfg)
        .into_iter()
        .enumerate()
        .map(|(i, (emotion, intensity, speaker))| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, i as u64));
            let wave = synth_utterance(emotion, intensity, cfg, &mut rng)?;
            let entry = CorpusEntry {
                path: PathBuf::from(format!("{}-{}-{i:04}.wav", emotion, intensity)),
                emotion,
                intensity,
                speaker,
            };
            Ok((entry, wave))
        })
        .collect()
}

/// Writes 16-bit WAV files and `manifest.csv` into `dir`; returns the
/// manifest path.
pub fn write_corpus(dir: &Path, cfg: &SynthConfig) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for (mut entry, wave) in generate(cfg)? {
        entry.path = dir.join(&entry.path);
        write_wav_pcm16(&entry.path, &wave)?;
        entries.push(entry);
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &entries, dir)?;
    Ok(manifest)
}
