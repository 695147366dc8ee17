//! Pre-emphasis, framing, Hamming windowing and the power spectrum.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Mono audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("waveform has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sample {i} is not finite ({})",
                samples[i]
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// `y[0] = x[0]`, `y[n] = x[n] - alpha * x[n-1]`.
pub fn pre_emphasize(wave: &Waveform, alpha: f64) -> Result<Waveform> {
    if !alpha.is_finite() || !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!(
            "pre-emphasis coefficient must lie in [0, 1), got {alpha}"
        )));
    }
    let x = wave.samples();
    let mut y = Vec::with_capacity(x.len());
    y.push(x[0]);
    y.extend(x.windows(2).map(|w| w[1] - alpha * w[0]));
    Waveform::new(y, wave.sample_rate())
}

/// Overlapping frames of equal length, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub frames: Array2<f64>,
    pub frame_len_s: f64,
    pub hop_s: f64,
    pub sample_rate: u32,
}

impl FrameMatrix {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn frame_len(&self) -> usize {
        self.frames.ncols()
    }
}

/// Converts a duration to a whole number of samples.
pub fn seconds_to_samples(seconds: f64, sample_rate: u32) -> usize {
    (seconds * sample_rate as f64).round() as usize
}

/// Number of frames for `len` samples, frame length `frame` and hop `hop`.
pub fn frame_count(len: usize, frame: usize, hop: usize) -> usize {
    1 + len.saturating_sub(frame) / hop
}

/// Splits `wave` into frames of `frame_len_s` seconds every `hop_s` seconds.
///
/// Produces `1 + floor(max(0, L - N) / H)` frames. A signal shorter than one
/// frame yields a single zero-padded frame.
pub fn frame_signal(wave: &Waveform, frame_len_s: f64, hop_s: f64) -> Result<FrameMatrix> {
    if !(hop_s > 0.0 && frame_len_s >= hop_s && frame_len_s.is_finite()) {
        return Err(Error::Config(format!(
            "need frame length >= hop > 0, got frame {frame_len_s} s, hop {hop_s} s"
        )));
    }
    let sr = wave.sample_rate();
    let n = seconds_to_samples(frame_len_s, sr);
    let h = seconds_to_samples(hop_s, sr);
    if n == 0 || h == 0 {
        return Err(Error::Config(format!(
            "frame ({frame_len_s} s) or hop ({hop_s} s) rounds to zero samples at {sr} Hz"
        )));
    }
    let x = wave.samples();
    let t = frame_count(x.len(), n, h);
    let mut frames = Array2::zeros((t, n));
    for (i, mut row) in frames.rows_mut().into_iter().enumerate() {
        let start = i * h;
        let end = (start + n).min(x.len());
        for (dst, src) in row.iter_mut().zip(&x[start..end]) {
            *dst = *src;
        }
    }
    Ok(FrameMatrix {
        frames,
        frame_len_s,
        hop_s,
        sample_rate: sr,
    })
}

/// Symmetric Hamming window `0.54 - 0.46 cos(2 pi n / (N - 1))`.
///
/// A length-1 window is `[1.0]`.
pub fn hamming_window(len: usize) -> Vec<f64> {
    match len {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => {
            let denom = (len - 1) as f64;
            (0..len)
                .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / denom).cos())
                .collect()
        }
    }
}

pub fn apply_hamming(mut frames: FrameMatrix) -> FrameMatrix {
    let w = ndarray::Array1::from(hamming_window(frames.frame_len()));
    for mut row in frames.frames.rows_mut() {
        row *= &w;
    }
    frames
}

/// Power spectrum `|DFT_K(frame)|^2` for bins `0..=K/2`, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrogram {
    pub bins: Array2<f64>,
    pub fft_size: usize,
    pub sample_rate: u32,
}

impl PowerSpectrogram {
    pub fn num_bins(&self) -> usize {
        self.bins.ncols()
    }

    /// Frequency of bin `b` in Hz.
    pub fn bin_frequency(&self, b: usize) -> f64 {
        b as f64 * self.sample_rate as f64 / self.fft_size as f64
    }
}

/// Smallest power of two that holds a frame of `frame_len` samples.
pub fn fft_size_for(frame_len: usize) -> usize {
    frame_len.max(1).next_power_of_two()
}

fn check_fft_size(fft_size: usize, frame_len: usize) -> Result<()> {
    if !fft_size.is_power_of_two() || fft_size < 2 {
        return Err(Error::Config(format!(
            "FFT size must be a power of two >= 2, got {fft_size}"
        )));
    }
    if fft_size < frame_len {
        return Err(Error::Config(format!(
            "FFT size {fft_size} is smaller than the frame length {frame_len}"
        )));
    }
    Ok(())
}

/// Full complex K-point DFT of a frame, zero-padded to `fft_size`.
pub fn complex_spectrum(frame: ArrayView1<f64>, fft_size: usize) -> Result<Vec<Complex64>> {
    check_fft_size(fft_size, frame.len())?;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    for (dst, &x) in buf.iter_mut().zip(frame.iter()) {
        dst.re = x;
    }
    fft.process(&mut buf);
    Ok(buf)
}

pub fn power_spectrum(frames: &FrameMatrix, fft_size: usize) -> Result<PowerSpectrogram> {
    check_fft_size(fft_size, frames.frame_len())?;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let half = fft_size / 2 + 1;
    let mut bins = Array2::zeros((frames.num_frames(), half));
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for (frame, mut out) in frames.frames.rows().into_iter().zip(bins.rows_mut()) {
        buf.fill(Complex64::new(0.0, 0.0));
        for (dst, &x) in buf.iter_mut().zip(frame.iter()) {
            dst.re = x;
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (dst, c) in out.iter_mut().zip(&buf[..half]) {
            *dst = c.norm_sqr();
        }
    }
    Ok(PowerSpectrogram {
        bins,
        fft_size,
        sample_rate: frames.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wave(samples: Vec<f64>) -> Waveform {
        Waveform::new(samples, 16_000).unwrap()
    }

    /// O(K^2) reference DFT.
    fn naive_dft(x: &[f64], k: usize) -> Vec<Complex64> {
        (0..k)
            .map(|b| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (n, &xn) in x.iter().enumerate() {
                    let ang = -2.0 * PI * (b * n) as f64 / k as f64;
                    acc += Complex64::new(ang.cos(), ang.sin()) * xn;
                }
                acc
            })
            .collect()
    }

    #[test]
    fn waveform_validation() {
        assert!(Waveform::new(vec![], 16_000).is_err());
        assert!(Waveform::new(vec![0.0], 0).is_err());
        assert!(matches!(
            Waveform::new(vec![0.0, f64::NAN], 8_000),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn pre_emphasis_cases() {
        let w = wave(vec![0.3, -0.2, 0.9, 0.1]);
        assert_eq!(pre_emphasize(&w, 0.0).unwrap(), w);

        let ones = wave(vec![1.0; 8]);
        let y = pre_emphasize(&ones, 0.97).unwrap();
        assert_eq!(y.samples()[0], 1.0);
        for &v in &y.samples()[1..] {
            assert!((v - 0.03).abs() < 1e-12);
        }

        let alt = wave((0..8).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect());
        let y = pre_emphasize(&alt, 0.97).unwrap();
        for &v in &y.samples()[1..] {
            assert!((v.abs() - 1.97).abs() < 1e-12);
        }
        assert!(pre_emphasize(&w, 1.0).is_err());
        assert!(pre_emphasize(&w, f64::NAN).is_err());
    }

    #[test]
    fn frame_counts() {
        // 400 samples = 25 ms at 16 kHz, hop 160 = 10 ms
        let f = frame_signal(&wave(vec![0.1; 400]), 0.025, 0.010).unwrap();
        assert_eq!(f.num_frames(), 1);
        let f = frame_signal(&wave(vec![0.1; 1040]), 0.025, 0.010).unwrap();
        assert_eq!(f.num_frames(), 5);
        assert_eq!(f.frame_len(), 400);
    }

    #[test]
    fn short_signal_gives_one_padded_frame() {
        let f = frame_signal(&wave(vec![0.5; 10]), 0.025, 0.010).unwrap();
        assert_eq!(f.num_frames(), 1);
        assert!(f.frames.row(0).iter().skip(10).all(|&v| v == 0.0));
        assert!(f.frames.row(0).iter().take(10).all(|&v| v == 0.5));
    }

    #[test]
    fn frames_hold_offset_samples() {
        let x: Vec<f64> = (0..1040).map(|i| i as f64 / 1040.0).collect();
        let f = frame_signal(&wave(x.clone()), 0.025, 0.010).unwrap();
        for t in 0..f.num_frames() {
            assert_eq!(f.frames[[t, 0]], x[t * 160]);
            assert_eq!(f.frames[[t, 399]], x[t * 160 + 399]);
        }
    }

    #[test]
    fn bad_frame_geometry() {
        let w = wave(vec![0.0; 100]);
        assert!(frame_signal(&w, 0.01, 0.02).is_err());
        assert!(frame_signal(&w, 0.01, 0.0).is_err());
    }

    #[test]
    fn hamming_values() {
        let w = hamming_window(401);
        assert!((w[0] - 0.08).abs() < 1e-12);
        assert!((w[200] - 1.0).abs() < 1e-12);
        assert!((w[400] - 0.08).abs() < 1e-12);
        assert_eq!(hamming_window(1), vec![1.0]);
        for n in [2usize, 7, 400, 1200] {
            let w = hamming_window(n);
            for i in 0..n {
                assert!((w[i] - w[n - 1 - i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_frame_has_zero_power() {
        let frames = FrameMatrix {
            frames: Array2::zeros((2, 16)),
            frame_len_s: 0.001,
            hop_s: 0.001,
            sample_rate: 16_000,
        };
        let p = power_spectrum(&frames, 16).unwrap();
        assert!(p.bins.iter().all(|&v| v == 0.0));
        assert_eq!(p.num_bins(), 9);
    }

    #[test]
    fn cosine_at_exact_bin() {
        let k = 64;
        let b0 = 5;
        let x: Array1<f64> = (0..k)
            .map(|n| (2.0 * PI * (b0 * n) as f64 / k as f64).cos())
            .collect();
        let frames = FrameMatrix {
            frames: x.insert_axis(ndarray::Axis(0)),
            frame_len_s: 0.004,
            hop_s: 0.004,
            sample_rate: 16_000,
        };
        let p = power_spectrum(&frames, k).unwrap();
        let expected = (k as f64 / 2.0).powi(2);
        for b in 0..=k / 2 {
            if b == b0 {
                assert!((p.bins[[0, b]] - expected).abs() < 1e-8);
            } else {
                assert!(p.bins[[0, b]] < 1e-9);
            }
        }
    }

    #[test]
    fn fft_matches_naive_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in [2usize, 4, 8, 16, 32, 64] {
            for _ in 0..5 {
                let n = rng.random_range(1..=k);
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let fast = complex_spectrum(ArrayView1::from(&x), k).unwrap();
                let slow = naive_dft(&x, k);
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).norm() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let k = 256;
            let x: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
            let energy: f64 = x.iter().map(|v| v * v).sum();
            let full: f64 = complex_spectrum(ArrayView1::from(&x), k)
                .unwrap()
                .iter()
                .map(|c| c.norm_sqr())
                .sum();
            assert!((full - k as f64 * energy).abs() / (k as f64 * energy) < 1e-9);

            // the half spectrum carries the same energy once mirrored bins are doubled
            let frames = FrameMatrix {
                frames: Array2::from_shape_vec((1, 200), x).unwrap(),
                frame_len_s: 0.0125,
                hop_s: 0.0125,
                sample_rate: 16_000,
            };
            let p = power_spectrum(&frames, k).unwrap();
            let row = p.bins.row(0);
            let half: f64 = row[0] + row[k / 2] + 2.0 * row.slice(ndarray::s![1..k / 2]).sum();
            assert!((half - full).abs() / full < 1e-9);
        }
    }

    #[test]
    fn fft_size_errors() {
        let frames = FrameMatrix {
            frames: Array2::zeros((1, 400)),
            frame_len_s: 0.025,
            hop_s: 0.01,
            sample_rate: 16_000,
        };
        assert!(matches!(power_spectrum(&frames, 256), Err(Error::Config(_))));
        assert!(matches!(power_spectrum(&frames, 500), Err(Error::Config(_))));
        assert_eq!(fft_size_for(400), 512);
        assert_eq!(fft_size_for(1200), 2048);
    }

    proptest! {
        #[test]
        fn frame_count_formula(len in 1usize..5000, n in 1usize..600, h_frac in 0.05f64..1.0) {
            let h = ((n as f64 * h_frac).round() as usize).max(1);
            let sr = 10_000u32;
            let w = Waveform::new(vec![0.25; len], sr).unwrap();
            let f = frame_signal(&w, n as f64 / sr as f64, h as f64 / sr as f64).unwrap();
            let expected = 1 + (len.saturating_sub(n)) / h;
            prop_assert_eq!(f.num_frames(), expected);
            prop_assert_eq!(f.frame_len(), n);
        }

        #[test]
        fn zero_alpha_is_identity(xs in proptest::collection::vec(-1.0f64..1.0, 1..200)) {
            let w = Waveform::new(xs, 8_000).unwrap();
            prop_assert_eq!(pre_emphasize(&w, 0.0).unwrap(), w);
        }
    }
}
