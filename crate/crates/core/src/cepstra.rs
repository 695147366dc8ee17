//! Log compression, DCT, deltas and the 19-frame context representation.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::{self, Waveform};
use crate::error::{Error, Result, StageExt};
use crate::filterbank::{apply_filterbank, FilterBank, FilterKind};

/// Cepstral coefficients kept per frame.
pub const NUM_COEFFS: usize = 13;
/// Statics, deltas and double deltas.
pub const FRAME_DIM: usize = 3 * NUM_COEFFS;
/// Frames on each side of the center frame in a context window.
pub const CONTEXT: usize = 9;
/// Width of one context vector: 19 frames of 39 values.
pub const CONTEXT_DIM: usize = (2 * CONTEXT + 1) * FRAME_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Mfcc,
    Gfcc,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 2] = [FeatureKind::Mfcc, FeatureKind::Gfcc];

    pub fn filter_kind(self) -> FilterKind {
        match self {
            FeatureKind::Mfcc => FilterKind::Mel,
            FeatureKind::Gfcc => FilterKind::Gammatone,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::Gfcc => "gfcc",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mfcc" => Ok(FeatureKind::Mfcc),
            "gfcc" => Ok(FeatureKind::Gfcc),
            other => Err(Error::InvalidInput(format!(
                "unknown representation `{other}` (expected mfcc or gfcc)"
            ))),
        }
    }
}

/// Front-end parameters shared by both representations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub pre_emphasis: f64,
    pub frame_len_s: f64,
    pub hop_s: f64,
    /// `None` picks the smallest power of two holding one frame.
    pub fft_size: Option<usize>,
    pub mel_filters: usize,
    pub gammatone_filters: usize,
    pub fmin: f64,
    /// `None` means the Nyquist frequency.
    pub fmax: Option<f64>,
    pub log_floor: f64,
    pub delta_window: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            pre_emphasis: 0.97,
            frame_len_s: 0.025,
            hop_s: 0.010,
            fft_size: None,
            mel_filters: 26,
            gammatone_filters: 64,
            fmin: 50.0,
            fmax: None,
            log_floor: 1e-10,
            delta_window: 2,
        }
    }
}

impl PipelineConfig {
    pub fn num_filters(&self, kind: FeatureKind) -> usize {
        match kind {
            FeatureKind::Mfcc => self.mel_filters,
            FeatureKind::Gfcc => self.gammatone_filters,
        }
    }

    /// Stable 64-bit digest of the parameters, as 16 hex characters.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        hex::encode(&digest[..8])
    }
}

/// Per-frame context vectors for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextRepresentation {
    /// `T x 741`.
    pub frames: Array2<f64>,
    pub kind: FeatureKind,
    /// Number of real (unpadded) frames.
    pub true_length: usize,
}

impl ContextRepresentation {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }
}

/// `ln(max(x, floor))` elementwise.
pub fn log_compress(energies: &Array2<f64>, floor: f64) -> Result<Array2<f64>> {
    if !(floor > 0.0 && floor.is_finite()) {
        return Err(Error::Config(format!("log floor must be positive, got {floor}")));
    }
    Ok(energies.mapv(|e| e.max(floor).ln()))
}

/// Orthonormal DCT-II basis, `rows x size`, row `k` being
/// `s_k cos(pi k (2m + 1) / (2 size))`.
pub fn dct_basis(rows: usize, size: usize) -> Array2<f64> {
    let n = size as f64;
    Array2::from_shape_fn((rows, size), |(k, m)| {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        scale * (std::f64::consts::PI * k as f64 * (2 * m + 1) as f64 / (2.0 * n)).cos()
    })
}

/// DCT-II over the filter channels of each row, keeping the first `n_coeffs`.
pub fn dct2_reduce(log_energies: &Array2<f64>, n_coeffs: usize) -> Result<Array2<f64>> {
    let channels = log_energies.ncols();
    if channels < n_coeffs {
        return Err(Error::Config(format!(
            "{channels} filter channels cannot yield {n_coeffs} cepstral coefficients"
        )));
    }
    let basis = dct_basis(n_coeffs, channels);
    Ok(log_energies.dot(&basis.t()))
}

/// Regression deltas over `+-window` frames with edge frames replicated.
pub fn compute_deltas(coeffs: ArrayView2<f64>, window: usize) -> Result<Array2<f64>> {
    if window == 0 {
        return Err(Error::Config("delta window must be at least 1".into()));
    }
    let t_len = coeffs.nrows();
    let last = t_len.saturating_sub(1) as isize;
    let denom = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = Array2::zeros(coeffs.raw_dim());
    for t in 0..t_len {
        let mut row = out.row_mut(t);
        for n in 1..=window {
            let ahead = (t as isize + n as isize).min(last) as usize;
            let behind = (t as isize - n as isize).max(0) as usize;
            let w = n as f64 / denom;
            for (d, (a, b)) in row
                .iter_mut()
                .zip(coeffs.row(ahead).iter().zip(coeffs.row(behind).iter()))
            {
                *d += w * (a - b);
            }
        }
    }
    Ok(out)
}

/// `[statics | deltas | double deltas]` per frame.
pub fn stack_with_deltas(coeffs: ArrayView2<f64>, window: usize) -> Result<Array2<f64>> {
    let d1 = compute_deltas(coeffs, window)?;
    let d2 = compute_deltas(d1.view(), window)?;
    Ok(ndarray::concatenate![ndarray::Axis(1), coeffs, d1, d2])
}

/// Row `t` is the concatenation of `features[clamp(t + j)]` for
/// `j = -context..=context`, indices clamped to the utterance.
pub fn assemble_context(features: ArrayView2<f64>, context: usize) -> Result<Array2<f64>> {
    let t_len = features.nrows();
    if t_len == 0 {
        return Err(Error::InvalidInput("no frames to assemble".into()));
    }
    let dim = features.ncols();
    let span = 2 * context + 1;
    let mut out = Array2::zeros((t_len, span * dim));
    let last = (t_len - 1) as isize;
    for t in 0..t_len {
        for j in 0..span {
            let src = (t as isize + j as isize - context as isize).clamp(0, last) as usize;
            out.slice_mut(s![t, j * dim..(j + 1) * dim])
                .assign(&features.row(src));
        }
    }
    Ok(out)
}

/// A front end bound to one representation and sample rate, with its filter
/// bank built once.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    kind: FeatureKind,
    fft_size: usize,
    bank: FilterBank,
}

impl Pipeline {
    pub fn new(config: &PipelineConfig, kind: FeatureKind, sample_rate: u32) -> Result<Self> {
        let frame_len = dsp::seconds_to_samples(config.frame_len_s, sample_rate);
        let fft_size = config.fft_size.unwrap_or_else(|| dsp::fft_size_for(frame_len));
        let fmax = config.fmax.unwrap_or(sample_rate as f64 / 2.0);
        let bank = FilterBank::build(
            kind.filter_kind(),
            config.num_filters(kind),
            fft_size,
            sample_rate,
            config.fmin,
            fmax,
        )
        .stage("filter bank")?;
        if bank.num_filters() < NUM_COEFFS {
            return Err(Error::Config(format!(
                "{} filters cannot yield {NUM_COEFFS} coefficients",
                bank.num_filters()
            ))
            .in_stage("dct"));
        }
        Ok(Self {
            config: config.clone(),
            kind,
            fft_size,
            bank,
        })
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn sample_rate(&self) -> u32 {
        self.bank.sample_rate
    }

    pub fn filter_bank(&self) -> &FilterBank {
        &self.bank
    }

    /// `T x 13` cepstral coefficients.
    pub fn cepstra(&self, wave: &Waveform) -> Result<Array2<f64>> {
        if wave.sample_rate() != self.sample_rate() {
            return Err(Error::InvalidInput(format!(
                "pipeline built for {} Hz received {} Hz audio",
                self.sample_rate(),
                wave.sample_rate()
            )));
        }
        let cfg = &self.config;
        let emphasized = dsp::pre_emphasize(wave, cfg.pre_emphasis).stage("pre-emphasis")?;
        let frames = dsp::frame_signal(&emphasized, cfg.frame_len_s, cfg.hop_s).stage("framing")?;
        let windowed = dsp::apply_hamming(frames);
        let power = dsp::power_spectrum(&windowed, self.fft_size).stage("dft")?;
        let energies = apply_filterbank(&power, &self.bank).stage("filter bank")?;
        let logs = log_compress(&energies, cfg.log_floor).stage("log compression")?;
        dct2_reduce(&logs, NUM_COEFFS).stage("dct")
    }

    /// `T x 39` frame features.
    pub fn frame_features(&self, wave: &Waveform) -> Result<Array2<f64>> {
        let c = self.cepstra(wave)?;
        stack_with_deltas(c.view(), self.config.delta_window).stage("deltas")
    }

    pub fn extract(&self, wave: &Waveform) -> Result<ContextRepresentation> {
        let feats = self.frame_features(wave)?;
        let frames = assemble_context(feats.view(), CONTEXT).stage("context")?;
        Ok(ContextRepresentation {
            true_length: frames.nrows(),
            frames,
            kind: self.kind,
        })
    }
}

/// One-shot extraction: builds the pipeline for the wave's sample rate.
pub fn extract_features(
    wave: &Waveform,
    config: &PipelineConfig,
    kind: FeatureKind,
) -> Result<ContextRepresentation> {
    Pipeline::new(config, kind, wave.sample_rate())?.extract(wave)
}

const CACHE_MAGIC: &[u8; 4] = b"EMCF";
const CACHE_VERSION: u32 = 1;

/// Writes a representation in the feature-cache layout (all integers and
/// floats little-endian):
///
/// | bytes | content |
/// |---|---|
/// | 4 | magic `EMCF` |
/// | 4 | version, u32 = 1 |
/// | 1 | kind: 0 = mfcc, 1 = gfcc |
/// | 3 | zero |
/// | 16 | pipeline config hash, ASCII hex |
/// | 8 | true_length, u64 |
/// | 8 | rows T, u64 |
/// | 8 | width, u64 = 741 |
/// | 8·T·width | f64 values, row-major |
pub fn write_cache(path: &Path, rep: &ContextRepresentation, config_hash: &str) -> Result<()> {
    let hash = config_hash.as_bytes();
    if hash.len() != 16 {
        return Err(Error::InvalidInput(format!(
            "config hash must be 16 characters, got `{config_hash}`"
        )));
    }
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        let kind = match rep.kind {
            FeatureKind::Mfcc => 0u8,
            FeatureKind::Gfcc => 1u8,
        };
        w.write_all(&[kind, 0, 0, 0])?;
        w.write_all(hash)?;
        w.write_all(&(rep.true_length as u64).to_le_bytes())?;
        w.write_all(&(rep.frames.nrows() as u64).to_le_bytes())?;
        w.write_all(&(rep.frames.ncols() as u64).to_le_bytes())?;
        for v in rep.frames.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Reads a cache file, returning `None` when it was written for a different
/// config hash or representation.
pub fn read_cache(
    path: &Path,
    expected_hash: &str,
    kind: FeatureKind,
) -> Result<Option<ContextRepresentation>> {
    let corrupt = |message: &str| Error::CorruptFile {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; 52];
    r.read_exact(&mut header)
        .map_err(|_| corrupt("truncated feature-cache header"))?;
    if &header[0..4] != CACHE_MAGIC {
        return Err(corrupt("not a feature-cache file"));
    }
    let u64_at = |i: usize| u64::from_le_bytes(header[i..i + 8].try_into().unwrap()) as usize;
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(corrupt(&format!("unsupported cache version {version}")));
    }
    let stored_kind = match header[8] {
        0 => FeatureKind::Mfcc,
        1 => FeatureKind::Gfcc,
        k => return Err(corrupt(&format!("unknown kind byte {k}"))),
    };
    if &header[12..28] != expected_hash.as_bytes() || stored_kind != kind {
        return Ok(None);
    }
    let (true_length, rows, width) = (u64_at(28), u64_at(36), u64_at(44));
    if width != CONTEXT_DIM || true_length != rows || rows == 0 {
        return Err(corrupt("inconsistent feature-cache dimensions"));
    }
    let mut bytes = vec![0u8; rows * width * 8];
    r.read_exact(&mut bytes)
        .map_err(|_| corrupt("truncated feature-cache body"))?;
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let frames = Array2::from_shape_vec((rows, width), values)
        .map_err(|e| corrupt(&e.to_string()))?;
    Ok(Some(ContextRepresentation {
        frames,
        kind,
        true_length,
    }))
}
