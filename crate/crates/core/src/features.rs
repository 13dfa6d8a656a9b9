//! Per-window node features: five Welch band powers followed by the four
//! Hjorth-group descriptors, one row per channel.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::preprocess::WindowedRecording;

pub const N_FEATURES: usize = 9;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "Delta",
    "Theta",
    "Alpha",
    "Beta",
    "Gamma",
    "Hjorth Activity",
    "Hjorth Mobility",
    "Hjorth Complexity",
    "Mean Amplitude",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Band {
    Delta,
    Theta,
    Alpha,
    Beta,
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandDef {
    pub name: Band,
    pub low_hz: f64,
    pub high_hz: f64,
}

pub const BANDS: [BandDef; 5] = [
    BandDef { name: Band::Delta, low_hz: 0.5, high_hz: 4.0 },
    BandDef { name: Band::Theta, low_hz: 4.0, high_hz: 8.0 },
    BandDef { name: Band::Alpha, low_hz: 8.0, high_hz: 13.0 },
    BandDef { name: Band::Beta, low_hz: 13.0, high_hz: 30.0 },
    BandDef { name: Band::Gamma, low_hz: 30.0, high_hz: 45.0 },
];

/// `[n_channels × 9]` feature matrix for one window.
pub type NodeFeatures = Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WindowFn {
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchSpec {
    pub segment_len_samples: usize,
    pub overlap_fraction: f64,
    pub window_fn: WindowFn,
}

impl Default for WelchSpec {
    fn default() -> Self {
        Self {
            segment_len_samples: 250,
            overlap_fraction: 0.5,
            window_fn: WindowFn::Hann,
        }
    }
}

impl WelchSpec {
    pub fn from_seconds(segment_s: f64, overlap: f64, sample_rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::InvalidArgument(format!(
                "Welch overlap must be in [0, 1), got {overlap}"
            )));
        }
        let seg = (segment_s * sample_rate).round() as usize;
        if seg < 2 {
            return Err(Error::InvalidArgument("Welch segment shorter than 2 samples".into()));
        }
        Ok(Self {
            segment_len_samples: seg,
            overlap_fraction: overlap,
            window_fn: WindowFn::Hann,
        })
    }
}

/// Reusable Welch estimator for a fixed segment length.
pub struct Welch {
    spec: WelchSpec,
    window: Vec<f64>,
    window_power: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl Welch {
    pub fn new(spec: WelchSpec) -> Self {
        let n = spec.segment_len_samples;
        // Periodic Hann.
        let window: Vec<f64> = match spec.window_fn {
            WindowFn::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        };
        let window_power = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(n);
        Self {
            spec,
            window,
            window_power,
            fft,
        }
    }

    /// One-sided PSD density with per-segment mean removal.
    pub fn psd(&self, x: &[f64], rate: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.spec.segment_len_samples;
        if x.len() < n {
            return Err(Error::SegmentTooLong {
                segment: n,
                len: x.len(),
            });
        }
        let step = ((n as f64) * (1.0 - self.spec.overlap_fraction)).round().max(1.0) as usize;
        let n_bins = n / 2 + 1;
        let mut acc = vec![0.0; n_bins];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut segments = 0usize;
        let mut start = 0;
        while start + n <= x.len() {
            let seg = &x[start..start + n];
            let mean = seg.iter().sum::<f64>() / n as f64;
            for (b, (&v, &w)) in buf.iter_mut().zip(seg.iter().zip(&self.window)) {
                *b = Complex64::new((v - mean) * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm_sqr();
            }
            segments += 1;
            start += step;
        }
        let scale = 1.0 / (rate * self.window_power * segments as f64);
        let mut psd: Vec<f64> = acc.iter().map(|a| a * scale).collect();
        let last = n_bins - 1;
        for (k, p) in psd.iter_mut().enumerate() {
            let is_nyquist = n.is_multiple_of(2) && k == last;
            if k != 0 && !is_nyquist {
                *p *= 2.0;
            }
        }
        let freqs = (0..n_bins).map(|k| k as f64 * rate / n as f64).collect();
        Ok((freqs, psd))
    }
}

pub fn welch_psd(x: &[f64], rate: f64, spec: &WelchSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    Welch::new(*spec).psd(x, rate)
}

/// Trapezoidal integral of the piecewise-linear PSD over `[lo, hi]`.
pub fn integrate_psd(freqs: &[f64], psd: &[f64], lo: f64, hi: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..freqs.len().saturating_sub(1) {
        let (f0, f1) = (freqs[k], freqs[k + 1]);
        let a = f0.max(lo);
        let b = f1.min(hi);
        if b <= a {
            continue;
        }
        let interp = |f: f64| psd[k] + (psd[k + 1] - psd[k]) * (f - f0) / (f1 - f0);
        total += 0.5 * (interp(a) + interp(b)) * (b - a);
    }
    total
}

pub fn total_power(freqs: &[f64], psd: &[f64]) -> f64 {
    match (freqs.first(), freqs.last()) {
        (Some(&lo), Some(&hi)) => integrate_psd(freqs, psd, lo, hi),
        _ => 0.0,
    }
}

pub fn band_powers(freqs: &[f64], psd: &[f64], bands: &[BandDef]) -> Vec<f64> {
    bands
        .iter()
        .map(|b| integrate_psd(freqs, psd, b.low_hz, b.high_hz))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hjorth {
    pub activity: f64,
    pub mobility: f64,
    pub complexity: f64,
    pub mean_amplitude: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (mean, x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n)
}

fn diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Ratio of first-difference SD to signal SD; 0 for a flat signal.
fn mobility(x: &[f64]) -> f64 {
    let (_, var) = mean_var(x);
    if var.sqrt() < 1e-12 {
        return 0.0;
    }
    let (_, dvar) = mean_var(&diff(x));
    (dvar / var).sqrt()
}

/// Hjorth descriptors on first differences, population variances.
pub fn hjorth(x: &[f64]) -> Hjorth {
    let mean_amplitude = if x.is_empty() {
        0.0
    } else {
        x.iter().map(|v| v.abs()).sum::<f64>() / x.len() as f64
    };
    if x.len() < 3 {
        return Hjorth {
            activity: 0.0,
            mobility: 0.0,
            complexity: 0.0,
            mean_amplitude,
        };
    }
    let (_, activity) = mean_var(x);
    let mob = mobility(x);
    let complexity = if mob == 0.0 {
        0.0
    } else {
        mobility(&diff(x)) / mob
    };
    Hjorth {
        activity,
        mobility: mob,
        complexity,
        mean_amplitude,
    }
}

/// Feature matrix for one window `[samples × channels]`.
pub fn window_features(welch: &Welch, window: &Matrix, rate: f64) -> Result<NodeFeatures> {
    let mut out = Matrix::zeros(window.cols(), N_FEATURES);
    for ch in 0..window.cols() {
        let x = window.column(ch);
        let (freqs, psd) = welch.psd(&x, rate)?;
        let row = out.row_mut(ch);
        for (slot, p) in row.iter_mut().zip(band_powers(&freqs, &psd, &BANDS)) {
            *slot = p;
        }
        let h = hjorth(&x);
        row[5] = h.activity;
        row[6] = h.mobility;
        row[7] = h.complexity;
        row[8] = h.mean_amplitude;
    }
    Ok(out)
}

pub fn extract_node_features(w: &WindowedRecording, spec: &WelchSpec) -> Result<Vec<NodeFeatures>> {
    if w.windows.is_empty() {
        return Err(Error::InvalidArgument("no windows to featurise".into()));
    }
    let welch = Welch::new(*spec);
    w.windows
        .par_iter()
        .map(|win| window_features(&welch, win, w.sample_rate_hz))
        .collect()
}

/// Per-feature-column standardisation statistics pooled over channels and
/// windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub degenerate: Vec<usize>,
}

impl ScalerStats {
    pub fn identity(n_features: usize) -> Self {
        Self {
            mean: vec![0.0; n_features],
            sd: vec![1.0; n_features],
            degenerate: Vec::new(),
        }
    }

    pub fn all_degenerate(&self) -> bool {
        self.degenerate.len() == self.mean.len()
    }
}

pub fn fit_feature_scaler<'a>(train: impl IntoIterator<Item = &'a Matrix>) -> ScalerStats {
    let mut sums: Vec<f64> = Vec::new();
    let mut count = 0usize;
    let mats: Vec<&Matrix> = train.into_iter().collect();
    for m in &mats {
        if sums.is_empty() {
            sums = vec![0.0; m.cols()];
        }
        for r in 0..m.rows() {
            for (s, v) in sums.iter_mut().zip(m.row(r)) {
                *s += v;
            }
            count += 1;
        }
    }
    if count == 0 {
        return ScalerStats::identity(0);
    }
    let mean: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0; mean.len()];
    for m in &mats {
        for r in 0..m.rows() {
            for ((s, v), mu) in sq.iter_mut().zip(m.row(r)).zip(&mean) {
                *s += (v - mu).powi(2);
            }
        }
    }
    let mut degenerate = Vec::new();
    let sd: Vec<f64> = sq
        .iter()
        .enumerate()
        .map(|(c, s)| {
            let sd = (s / count as f64).sqrt();
            if sd < 1e-12 {
                log::warn!("degenerate feature column {c}: constant across training windows");
                degenerate.push(c);
            }
            sd
        })
        .collect();
    ScalerStats {
        mean,
        sd,
        degenerate,
    }
}

pub fn apply_scaler(features: &Matrix, stats: &ScalerStats) -> Matrix {
    Matrix::from_fn(features.rows(), features.cols(), |r, c| {
        if stats.degenerate.contains(&c) {
            0.0
        } else {
            (features.get(r, c) - stats.mean[c]) / stats.sd[c]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const FS: f64 = 250.0;

    fn sine(freq: f64, n: usize, amp: f64) -> Vec<f64> {
        (0..n)
            .map(|t| amp * (2.0 * PI * freq * t as f64 / FS).sin())
            .collect()
    }

    fn noise(n: usize, sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sd).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn welch_peak_at_tone() {
        let (f, p) = welch_psd(&sine(10.0, 500, 1.0), FS, &WelchSpec::default()).unwrap();
        let k = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let bin = f[1] - f[0];
        assert!((f[k] - 10.0).abs() <= bin);
    }

    #[test]
    fn welch_white_noise_parseval() {
        let x = noise(500 * 20, 1.0, 7);
        let (f, p) = welch_psd(&x, FS, &WelchSpec::default()).unwrap();
        let total = total_power(&f, &p);
        assert!((total - 1.0).abs() < 0.15, "total power {total}");
    }

    #[test]
    fn welch_zero_and_short_input() {
        let (_, p) = welch_psd(&[0.0; 500], FS, &WelchSpec::default()).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
        assert!(matches!(
            welch_psd(&[0.0; 100], FS, &WelchSpec::default()),
            Err(Error::SegmentTooLong { .. })
        ));
    }

    #[test]
    fn band_power_shares() {
        for (freq, band) in [(10.0, 2usize), (20.0, 3)] {
            let (f, p) = welch_psd(&sine(freq, 500, 1.0), FS, &WelchSpec::default()).unwrap();
            let bp = band_powers(&f, &p, &BANDS);
            let sum: f64 = bp.iter().sum();
            let argmax = bp
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, band);
            if freq == 10.0 {
                assert!(bp[2] / sum >= 0.9, "alpha share {}", bp[2] / sum);
            }
            assert!(sum <= total_power(&f, &p) + 1e-9);
        }
        let zeros = band_powers(&[0.0, 1.0, 2.0], &[0.0; 3], &BANDS);
        assert_eq!(zeros, vec![0.0; 5]);
    }

    #[test]
    fn hjorth_of_sinusoid() {
        let h = hjorth(&sine(10.0, 500, 1.0));
        assert!((h.activity - 0.5).abs() < 1e-3);
        let expected = 2.0 * PI * 10.0 / 250.0;
        assert!((h.mobility - expected).abs() / expected < 0.02, "{}", h.mobility);
        assert!((h.complexity - 1.0).abs() < 0.02, "{}", h.complexity);
    }

    #[test]
    fn hjorth_constant_and_noise() {
        let h = hjorth(&[-2.5; 40]);
        assert_eq!(
            (h.activity, h.mobility, h.complexity, h.mean_amplitude),
            (0.0, 0.0, 0.0, 2.5)
        );
        let h = hjorth(&noise(2000, 1.0, 3));
        assert!(h.complexity > 1.0);
    }

    #[test]
    fn scaler_uses_training_stats() {
        let a = Matrix::from_fn(4, 3, |r, c| (r * 3 + c) as f64);
        let b = Matrix::from_fn(4, 3, |r, c| (r + c) as f64 * 2.0);
        let stats = fit_feature_scaler([&a, &b]);
        let sa = apply_scaler(&a, &stats);
        let sb = apply_scaler(&b, &stats);
        for c in 0..3 {
            let m: f64 = (0..4).map(|r| sa.get(r, c) + sb.get(r, c)).sum::<f64>() / 8.0;
            assert!(m.abs() < 1e-9);
        }
        let test = Matrix::filled(2, 3, 100.0);
        let st = apply_scaler(&test, &stats);
        assert!((st.get(0, 0) - (100.0 - stats.mean[0]) / stats.sd[0]).abs() < 1e-12);
    }

    #[test]
    fn scaler_constant_column_zeroed() {
        let a = Matrix::from_fn(5, 2, |r, c| if c == 0 { 4.0 } else { r as f64 });
        let stats = fit_feature_scaler([&a]);
        assert_eq!(stats.degenerate, vec![0]);
        let s = apply_scaler(&a, &stats);
        assert!((0..5).all(|r| s.get(r, 0) == 0.0));
    }
}
