//! Mel (triangular) and gammatone (ERB-spaced) filter banks over FFT bins.

use std::fmt;
use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dsp::PowerSpectrogram;
use crate::error::{Error, Result};

/// Order of the gammatone filters.
pub const GAMMATONE_ORDER: i32 = 4;
/// Bandwidth of a 4th-order gammatone filter relative to its ERB.
pub const GAMMATONE_BANDWIDTH_FACTOR: f64 = 1.019;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Mel,
    Gammatone,
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Mel => "mel",
            FilterKind::Gammatone => "gammatone",
        })
    }
}

fn check_frequency(f: f64) -> Result<()> {
    if !(f.is_finite() && f >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "frequency must be finite and non-negative, got {f}"
        )));
    }
    Ok(())
}

pub fn hz_to_mel(f: f64) -> Result<f64> {
    check_frequency(f)?;
    Ok(2595.0 * (1.0 + f / 700.0).log10())
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Glasberg–Moore equivalent rectangular bandwidth in Hz.
pub fn erb_bandwidth(f: f64) -> Result<f64> {
    check_frequency(f)?;
    Ok(24.7 * (4.37 * f / 1000.0 + 1.0))
}

/// Number of ERBs below `f` (the ERB-rate scale).
pub fn hz_to_erb_rate(f: f64) -> Result<f64> {
    check_frequency(f)?;
    Ok(21.4 * (1.0 + 0.00437 * f).log10())
}

pub fn erb_rate_to_hz(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) / 0.00437
}

/// Filter weights over the bins `0..=K/2` of a `K`-point FFT.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    /// `M x (K/2 + 1)`, one filter per row.
    pub weights: Array2<f64>,
    pub kind: FilterKind,
    pub center_freqs: Vec<f64>,
    pub fmin: f64,
    pub fmax: f64,
    pub fft_size: usize,
    pub sample_rate: u32,
}

fn validate_range(
    num_filters: usize,
    fft_size: usize,
    sample_rate: u32,
    fmin: f64,
    fmax: f64,
) -> Result<()> {
    if num_filters < 2 {
        return Err(Error::Config(format!(
            "a filter bank needs at least 2 filters, got {num_filters}"
        )));
    }
    if !fft_size.is_power_of_two() || fft_size < 2 {
        return Err(Error::Config(format!(
            "FFT size must be a power of two, got {fft_size}"
        )));
    }
    if sample_rate == 0 {
        return Err(Error::Config("sample rate must be positive".into()));
    }
    check_frequency(fmin)?;
    check_frequency(fmax)?;
    let nyquist = sample_rate as f64 / 2.0;
    if fmin.is_nan() || fmax.is_nan() || fmin >= fmax || fmax > nyquist {
        return Err(Error::Config(format!(
            "need fmin < fmax <= {nyquist} Hz, got fmin {fmin}, fmax {fmax}"
        )));
    }
    Ok(())
}

impl FilterBank {
    /// Builds either kind with the same argument list.
    pub fn build(
        kind: FilterKind,
        num_filters: usize,
        fft_size: usize,
        sample_rate: u32,
        fmin: f64,
        fmax: f64,
    ) -> Result<Self> {
        match kind {
            FilterKind::Mel => {
                build_mel_filterbank(num_filters, fft_size, sample_rate, fmin, fmax)
            }
            FilterKind::Gammatone => {
                build_gammatone_filterbank(num_filters, fft_size, sample_rate, fmin, fmax)
            }
        }
    }

    pub fn num_filters(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.weights.ncols()
    }

    /// Writes one CSV row per filter: the center frequency followed by its
    /// `K/2 + 1` bin weights.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (fc, row) in self.center_freqs.iter().zip(self.weights.rows()) {
            write!(out, "{fc}")?;
            for w in row {
                write!(out, ",{w}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    }
}

/// Triangular filters with peaks equally spaced on the mel scale.
///
/// The `M + 2` mel grid points are mapped to FFT bins (lower edge rounded
/// down, upper edge rounded up, peaks rounded to the nearest bin); each
/// triangle rises from its left neighbor's peak to 1.0 at its own peak and
/// falls to 0 at its right neighbor's peak.
pub fn build_mel_filterbank(
    num_filters: usize,
    fft_size: usize,
    sample_rate: u32,
    fmin: f64,
    fmax: f64,
) -> Result<FilterBank> {
    validate_range(num_filters, fft_size, sample_rate, fmin, fmax)?;
    let lo = hz_to_mel(fmin)?;
    let hi = hz_to_mel(fmax)?;
    let step = (hi - lo) / (num_filters + 1) as f64;
    let center_freqs: Vec<f64> = (1..=num_filters)
        .map(|i| mel_to_hz(lo + step * i as f64))
        .collect();

    let half = fft_size / 2;
    let to_bin = |f: f64| f * fft_size as f64 / sample_rate as f64;
    let mut points = Vec::with_capacity(num_filters + 2);
    points.push(to_bin(fmin).floor() as usize);
    points.extend(center_freqs.iter().map(|&f| (to_bin(f).round() as usize).min(half)));
    points.push((to_bin(fmax).ceil() as usize).min(half));

    for (i, pair) in points.windows(2).enumerate() {
        if pair[1] <= pair[0] {
            let m = i.min(num_filters - 1);
            return Err(Error::Config(format!(
                "mel filter {m} collapses: grid points {} and {} both map to FFT bin {} \
                 (too many filters for a {fft_size}-point FFT)",
                i,
                i + 1,
                pair[1]
            )));
        }
    }

    let mut weights = Array2::zeros((num_filters, half + 1));
    for (m, mut row) in weights.rows_mut().into_iter().enumerate() {
        let (l, c, r) = (points[m], points[m + 1], points[m + 2]);
        for b in l..=c {
            row[b] = (b - l) as f64 / (c - l) as f64;
        }
        for b in c..=r {
            row[b] = (r - b) as f64 / (r - c) as f64;
        }
    }

    Ok(FilterBank {
        weights,
        kind: FilterKind::Mel,
        center_freqs,
        fmin,
        fmax,
        fft_size,
        sample_rate,
    })
}

/// Magnitude response of a 4th-order gammatone filter centered at `fc` with
/// bandwidth parameter `b`.
pub fn gammatone_magnitude(f: f64, fc: f64, b: f64) -> f64 {
    let u = (f - fc) / b;
    (1.0 + u * u).powi(-GAMMATONE_ORDER / 2)
}

/// Frequency-sampled 4th-order gammatone filters with centers equally spaced
/// on the ERB-rate scale strictly between `fmin` and `fmax`.
///
/// Each row is normalized to 1.0 at the FFT bin nearest its center.
pub fn build_gammatone_filterbank(
    num_filters: usize,
    fft_size: usize,
    sample_rate: u32,
    fmin: f64,
    fmax: f64,
) -> Result<FilterBank> {
    validate_range(num_filters, fft_size, sample_rate, fmin, fmax)?;
    let lo = hz_to_erb_rate(fmin)?;
    let hi = hz_to_erb_rate(fmax)?;
    let step = (hi - lo) / (num_filters + 1) as f64;
    let center_freqs: Vec<f64> = (1..=num_filters)
        .map(|i| erb_rate_to_hz(lo + step * i as f64))
        .collect();
    for (m, pair) in center_freqs.windows(2).enumerate() {
        if pair[1] <= pair[0] {
            return Err(Error::Config(format!(
                "gammatone filter {} collapses onto filter {m}: center frequencies \
                 {} and {} are not distinct",
                m + 1,
                pair[0],
                pair[1]
            )));
        }
    }

    let half = fft_size / 2;
    let bin_hz = sample_rate as f64 / fft_size as f64;
    let mut weights = Array2::zeros((num_filters, half + 1));
    for (m, mut row) in weights.rows_mut().into_iter().enumerate() {
        let fc = center_freqs[m];
        let b = GAMMATONE_BANDWIDTH_FACTOR * erb_bandwidth(fc)?;
        let nearest = ((fc / bin_hz).round() as usize).min(half);
        let peak = gammatone_magnitude(nearest as f64 * bin_hz, fc, b);
        for (k, w) in row.iter_mut().enumerate() {
            *w = gammatone_magnitude(k as f64 * bin_hz, fc, b) / peak;
        }
    }
    for m in 1..num_filters {
        if weights.row(m) == weights.row(m - 1) {
            return Err(Error::Config(format!(
                "gammatone filter {m} has the same response as filter {} \
                 at FFT size {fft_size}",
                m - 1
            )));
        }
    }

    Ok(FilterBank {
        weights,
        kind: FilterKind::Gammatone,
        center_freqs,
        fmin,
        fmax,
        fft_size,
        sample_rate,
    })
}

/// `spec.bins x fb.weights^T`: one energy per frame and filter.
pub fn apply_filterbank(spec: &PowerSpectrogram, fb: &FilterBank) -> Result<Array2<f64>> {
    if spec.fft_size != fb.fft_size
        || spec.sample_rate != fb.sample_rate
        || spec.num_bins() != fb.num_bins()
    {
        return Err(Error::Config(format!(
            "filter bank built for K = {} at {} Hz ({} bins) applied to a spectrogram \
             with K = {} at {} Hz ({} bins)",
            fb.fft_size,
            fb.sample_rate,
            fb.num_bins(),
            spec.fft_size,
            spec.sample_rate,
            spec.num_bins()
        )));
    }
    Ok(spec.bins.dot(&fb.weights.t()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spectrogram(bins: Array2<f64>, fft_size: usize, sample_rate: u32) -> PowerSpectrogram {
        PowerSpectrogram {
            bins,
            fft_size,
            sample_rate,
        }
    }

    #[test]
    fn mel_scale_points() {
        assert_eq!(hz_to_mel(0.0).unwrap(), 0.0);
        assert!((hz_to_mel(700.0).unwrap() - 781.17).abs() < 0.01);
        assert!(hz_to_mel(-1.0).is_err());
    }

    #[test]
    fn erb_points() {
        assert!((erb_bandwidth(0.0).unwrap() - 24.7).abs() < 1e-12);
        assert!((erb_bandwidth(1000.0).unwrap() - 132.639).abs() < 1e-9);
        assert!(erb_bandwidth(-5.0).is_err());
        let mut prev = 0.0;
        for f in (0..100).map(|i| i as f64 * 200.0) {
            let e = erb_bandwidth(f).unwrap();
            assert!(e > prev);
            prev = e;
        }
    }

    #[test]
    fn mel_rows_peak_once_at_one() {
        let fb = build_mel_filterbank(26, 512, 16_000, 50.0, 8000.0).unwrap();
        for row in fb.weights.rows() {
            let max = row.iter().cloned().fold(f64::MIN, f64::max);
            assert_eq!(max, 1.0);
            assert_eq!(row.iter().filter(|&&w| w == 1.0).count(), 1);
        }
    }

    #[test]
    fn mel_triangle_support() {
        let fb = build_mel_filterbank(26, 512, 16_000, 50.0, 8000.0).unwrap();
        let peaks: Vec<usize> = fb
            .weights
            .rows()
            .into_iter()
            .map(|r| r.iter().position(|&w| w == 1.0).unwrap())
            .collect();
        for m in 0..fb.num_filters() {
            let row = fb.weights.row(m);
            // neighbors' peaks bound the support
            if m > 0 {
                assert!(row.iter().take(peaks[m - 1] + 1).all(|&w| w == 0.0));
            }
            if m + 1 < fb.num_filters() {
                assert!(row.iter().skip(peaks[m + 1]).all(|&w| w == 0.0));
            }
        }
    }

    #[test]
    fn mel_covers_interior_bins() {
        for (m, k, sr, fmin) in [(26, 512, 16_000, 50.0), (26, 2048, 48_000, 50.0), (40, 1024, 22_050, 0.0)] {
            let fb = build_mel_filterbank(m, k, sr, fmin, sr as f64 / 2.0).unwrap();
            let bin_hz = sr as f64 / k as f64;
            for b in 0..=k / 2 {
                let f = b as f64 * bin_hz;
                if f > fmin && f < fb.fmax {
                    assert!(fb.weights.column(b).iter().any(|&w| w > 0.0), "bin {b}");
                }
            }
        }
    }

    #[test]
    fn mel_centers_match_independent_grid() {
        let fb = build_mel_filterbank(26, 512, 48_000, 0.0, 24_000.0).unwrap();
        // 28-point uniform grid on 2595 log10(1 + f/700), interior points only
        let top = 2595.0 * (1.0f64 + 24_000.0 / 700.0).log10();
        for (i, &fc) in fb.center_freqs.iter().enumerate() {
            let mel = top * (i + 1) as f64 / 27.0;
            let hz = 700.0 * (10f64.powf(mel / 2595.0) - 1.0);
            assert!((fc - hz).abs() < 1e-6);
        }
        assert!(fb.center_freqs.windows(2).all(|w| w[0] < w[1]));
        assert!(fb.fmin < fb.center_freqs[0] && *fb.center_freqs.last().unwrap() < fb.fmax);
    }

    #[test]
    fn mel_collapse_names_filter() {
        let err = build_mel_filterbank(200, 64, 16_000, 0.0, 8000.0).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Config(_)));
        assert!(msg.contains("mel filter"), "{msg}");
    }

    #[test]
    fn bank_validation() {
        assert!(build_mel_filterbank(1, 512, 16_000, 0.0, 8000.0).is_err());
        assert!(build_mel_filterbank(26, 512, 16_000, 100.0, 9000.0).is_err());
        assert!(build_gammatone_filterbank(26, 512, 16_000, 500.0, 400.0).is_err());
        assert!(build_gammatone_filterbank(26, 500, 16_000, 50.0, 8000.0).is_err());
    }

    #[test]
    fn gammatone_peak_and_bandwidth() {
        let fb = build_gammatone_filterbank(64, 2048, 48_000, 50.0, 24_000.0).unwrap();
        let bin_hz = 48_000.0 / 2048.0;
        let mut checked = 0;
        for (m, row) in fb.weights.rows().into_iter().enumerate() {
            let fc = fb.center_freqs[m];
            let nearest = (fc / bin_hz).round() as usize;
            assert_eq!(row[nearest], 1.0);
            assert!(row.iter().all(|&w| (0.0..=1.0).contains(&w)));

            let b = 1.019 * 24.7 * (4.37 * fc / 1000.0 + 1.0);
            if b / bin_hz >= 4.0 {
                for f in [fc - b, fc + b] {
                    // linear interpolation between the bins around f
                    let pos = f / bin_hz;
                    let (i, frac) = (pos.floor() as usize, pos.fract());
                    if i + 1 >= row.len() {
                        continue;
                    }
                    let w = row[i] * (1.0 - frac) + row[i + 1] * frac;
                    assert!((w - 0.25).abs() < 0.02, "filter {m}: {w}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn gammatone_centers_match_independent_grid() {
        let fb = build_gammatone_filterbank(64, 512, 16_000, 50.0, 8000.0).unwrap();
        let erb = |f: f64| 21.4 * (1.0 + 0.00437 * f).log10();
        let (lo, hi) = (erb(50.0), erb(8000.0));
        for (i, &fc) in fb.center_freqs.iter().enumerate() {
            let e = lo + (hi - lo) * (i + 1) as f64 / 65.0;
            let hz = (10f64.powf(e / 21.4) - 1.0) / 0.00437;
            assert!((fc - hz).abs() < 1e-6);
        }
        assert!(fb.center_freqs.windows(2).all(|w| w[0] < w[1]));
        assert!(50.0 < fb.center_freqs[0] && fb.center_freqs[63] < 8000.0);
    }

    #[test]
    fn gammatone_rows_unimodal() {
        let fb = build_gammatone_filterbank(64, 512, 16_000, 50.0, 8000.0).unwrap();
        for row in fb.weights.rows() {
            let peak = row.iter().position(|&w| w == 1.0).unwrap();
            assert!(row.iter().take(peak + 1).collect::<Vec<_>>().windows(2).all(|w| w[0] <= w[1]));
            assert!(row.iter().skip(peak).collect::<Vec<_>>().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn gammatone_collapse() {
        let err = build_gammatone_filterbank(64, 512, 16_000, 1000.0, 1000.0 + 1e-12).unwrap_err();
        assert!(err.to_string().contains("gammatone filter"), "{err}");
    }

    #[test]
    fn construction_is_deterministic() {
        for kind in [FilterKind::Mel, FilterKind::Gammatone] {
            let a = FilterBank::build(kind, 26, 512, 16_000, 50.0, 8000.0).unwrap();
            let b = FilterBank::build(kind, 26, 512, 16_000, 50.0, 8000.0).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn apply_basis_and_zero() {
        let fb = build_mel_filterbank(26, 512, 16_000, 50.0, 8000.0).unwrap();
        let zero = spectrogram(Array2::zeros((3, 257)), 512, 16_000);
        assert!(apply_filterbank(&zero, &fb).unwrap().iter().all(|&v| v == 0.0));

        let mut unit = Array2::zeros((1, 257));
        unit[[0, 40]] = 1.0;
        let e = apply_filterbank(&spectrogram(unit, 512, 16_000), &fb).unwrap();
        assert_eq!(e.row(0), fb.weights.column(40));
    }

    #[test]
    fn apply_matches_loop_oracle() {
        let fb = build_gammatone_filterbank(64, 512, 16_000, 50.0, 8000.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bins = Array2::from_shape_fn((7, 257), |_| rng.random_range(0.0..10.0));
        let spec = spectrogram(bins.clone(), 512, 16_000);
        let e = apply_filterbank(&spec, &fb).unwrap();
        for t in 0..7 {
            for m in 0..64 {
                let mut acc = 0.0;
                for k in 0..257 {
                    acc += bins[[t, k]] * fb.weights[[m, k]];
                }
                assert!((e[[t, m]] - acc).abs() < 1e-10);
                assert!(e[[t, m]] >= 0.0);
            }
        }
    }

    #[test]
    fn apply_dimension_mismatch() {
        let fb = build_mel_filterbank(26, 512, 16_000, 50.0, 8000.0).unwrap();
        let spec = spectrogram(Array2::zeros((1, 129)), 256, 16_000);
        assert!(matches!(apply_filterbank(&spec, &fb), Err(Error::Config(_))));
        let spec = spectrogram(Array2::zeros((1, 257)), 512, 8_000);
        assert!(apply_filterbank(&spec, &fb).is_err());
    }

    #[test]
    fn csv_export_rows() {
        let fb = build_mel_filterbank(4, 64, 8_000, 0.0, 4000.0).unwrap();
        let mut buf = Vec::new();
        fb.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        for (line, fc) in lines.iter().zip(&fb.center_freqs) {
            let fields: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
            assert_eq!(fields.len(), 1 + 33);
            assert_eq!(fields[0], *fc);
        }
    }

    proptest! {
        #[test]
        fn mel_round_trip(f in 0.0f64..30_000.0) {
            let back = mel_to_hz(hz_to_mel(f).unwrap());
            prop_assert!((back - f).abs() <= 1e-9 * f.max(1.0));
        }

        #[test]
        fn apply_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
            let fb = build_gammatone_filterbank(20, 256, 8_000, 50.0, 4000.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((3, 129), |_| rng.random_range(0.0..1.0));
            let y = Array2::from_shape_fn((3, 129), |_| rng.random_range(0.0..1.0));
            let comb = &x * a + &y * b;
            let lhs = apply_filterbank(&spectrogram(comb, 256, 8_000), &fb).unwrap();
            let fx = apply_filterbank(&spectrogram(x, 256, 8_000), &fb).unwrap();
            let fy = apply_filterbank(&spectrogram(y, 256, 8_000), &fb).unwrap();
            let rhs = fx * a + fy * b;
            for (l, r) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((l - r).abs() < 1e-9);
            }
        }
    }
}
