//! Signal chain: band-pass, notch, per-channel z-score, windowing.

mod iir;

pub use iir::{butterworth_bandpass, iir_notch, Biquad, Sos};

use serde::{Deserialize, Serialize};

use crate::dataset::{Recording, TaskId};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FilterSpec {
    BandpassButterworth { order: usize, low_hz: f64, high_hz: f64 },
    Notch { center_hz: f64, q_factor: f64 },
}

impl FilterSpec {
    pub fn default_bandpass() -> Self {
        FilterSpec::BandpassButterworth {
            order: 4,
            low_hz: 0.5,
            high_hz: 45.0,
        }
    }

    pub fn default_notch() -> Self {
        FilterSpec::Notch {
            center_hz: 50.0,
            q_factor: 30.0,
        }
    }

    pub fn design(&self, sample_rate: f64) -> Result<Sos> {
        match *self {
            FilterSpec::BandpassButterworth {
                order,
                low_hz,
                high_hz,
            } => butterworth_bandpass(order, low_hz, high_hz, sample_rate),
            FilterSpec::Notch {
                center_hz,
                q_factor,
            } => iir_notch(center_hz, q_factor, sample_rate),
        }
    }
}

/// Edge padding for forward-backward filtering.
pub fn default_pad(sos: &Sos) -> usize {
    3 * sos.order
}

/// Applies `sos` zero-phase to every channel.
pub fn apply_zero_phase(rec: &Recording, sos: &Sos, pad: usize) -> Recording {
    let columns: Vec<Vec<f64>> = rec
        .data
        .columns()
        .iter()
        .map(|col| sos.filtfilt(col, pad))
        .collect();
    rec.with_data(Matrix::from_columns(&columns))
}

pub fn bandpass(rec: &Recording, spec: &FilterSpec) -> Result<Recording> {
    if !matches!(spec, FilterSpec::BandpassButterworth { .. }) {
        return Err(Error::InvalidSpec("bandpass requires a Butterworth spec".into()));
    }
    let sos = spec.design(rec.sample_rate_hz)?;
    Ok(apply_zero_phase(rec, &sos, default_pad(&sos)))
}

pub fn notch(rec: &Recording, center_hz: f64) -> Result<Recording> {
    notch_with_q(rec, center_hz, 30.0)
}

pub fn notch_with_q(rec: &Recording, center_hz: f64, q: f64) -> Result<Recording> {
    let sos = iir_notch(center_hz, q, rec.sample_rate_hz)?;
    Ok(apply_zero_phase(rec, &sos, default_pad(&sos)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreStats {
    pub mu: Vec<f64>,
    /// Population standard deviation.
    pub sigma: Vec<f64>,
    /// Channels with `sigma < 1e-12`, output as zeros.
    pub degenerate: Vec<usize>,
}

impl ZScoreStats {
    /// Maps standardised data back to the original scale.
    pub fn invert(&self, z: &Matrix) -> Matrix {
        Matrix::from_fn(z.rows(), z.cols(), |r, c| {
            z.get(r, c) * self.sigma[c] + self.mu[c]
        })
    }
}

pub const DEGENERATE_SIGMA: f64 = 1e-12;

pub fn zscore(rec: &Recording) -> (Recording, ZScoreStats) {
    let n = rec.n_samples() as f64;
    let mut out = rec.data.clone();
    let mut stats = ZScoreStats {
        mu: Vec::new(),
        sigma: Vec::new(),
        degenerate: Vec::new(),
    };
    for c in 0..rec.n_channels() {
        let col = rec.data.column(c);
        let mu = col.iter().sum::<f64>() / n;
        let sigma = (col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
        let z: Vec<f64> = if sigma < DEGENERATE_SIGMA {
            log::warn!(
                "degenerate channel {} in {}/{}: sigma {sigma:e}, emitting zeros",
                rec.channel_names.get(c).map_or("?", String::as_str),
                rec.subject_id,
                rec.task
            );
            stats.degenerate.push(c);
            vec![0.0; col.len()]
        } else {
            col.iter().map(|v| (v - mu) / sigma).collect()
        };
        out.set_column(c, &z);
        stats.mu.push(mu);
        stats.sigma.push(sigma);
    }
    (rec.with_data(out), stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub window_len_samples: usize,
    pub stride_samples: usize,
    pub count: usize,
}

impl WindowPlan {
    pub fn span(&self) -> usize {
        (self.count - 1) * self.stride_samples + self.window_len_samples
    }

    pub fn offset(&self, i: usize) -> usize {
        i * self.stride_samples
    }
}

/// Fixed-count plan whose windows span the recording.
pub fn plan_windows(
    n_samples: usize,
    sample_rate: f64,
    target_count: usize,
    window_len_s: f64,
) -> Result<WindowPlan> {
    let window_len = (window_len_s * sample_rate).round() as usize;
    if target_count == 0 || window_len == 0 {
        return Err(Error::InvalidArgument(
            "window count and length must be positive".into(),
        ));
    }
    let too_long = || Error::WindowTooLong {
        window_len,
        count: target_count,
        n_samples,
    };
    if window_len > n_samples {
        return Err(too_long());
    }
    let stride = if target_count == 1 {
        window_len
    } else {
        (n_samples - window_len) / (target_count - 1)
    };
    if stride == 0 {
        return Err(too_long());
    }
    Ok(WindowPlan {
        window_len_samples: window_len,
        stride_samples: stride,
        count: target_count,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedRecording {
    /// Each `[window_len × n_channels]`.
    pub windows: Vec<Matrix>,
    pub plan: WindowPlan,
    pub subject_id: String,
    pub task: TaskId,
    pub sample_rate_hz: f64,
}

pub fn windowize(rec: &Recording, plan: &WindowPlan) -> Result<WindowedRecording> {
    if plan.count == 0 || plan.span() > rec.n_samples() {
        return Err(Error::PlanMismatch {
            needed: plan.span(),
            available: rec.n_samples(),
        });
    }
    let windows = (0..plan.count)
        .map(|i| rec.data.row_slice(plan.offset(i), plan.window_len_samples))
        .collect();
    Ok(WindowedRecording {
        windows,
        plan: *plan,
        subject_id: rec.subject_id.clone(),
        task: rec.task,
        sample_rate_hz: rec.sample_rate_hz,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub bandpass_low_hz: f64,
    pub bandpass_high_hz: f64,
    pub bandpass_order: usize,
    pub notch_center_hz: f64,
    pub notch_q: f64,
    pub window_count: usize,
    pub window_length_s: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            bandpass_low_hz: 0.5,
            bandpass_high_hz: 45.0,
            bandpass_order: 4,
            notch_center_hz: 50.0,
            notch_q: 30.0,
            window_count: 30,
            window_length_s: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreprocessOutput {
    pub windowed: WindowedRecording,
    pub zscore: ZScoreStats,
}

/// band-pass → notch → z-score on the continuous recording.
pub fn filter_and_normalise(rec: &Recording, cfg: &PreprocessConfig) -> Result<(Recording, ZScoreStats)> {
    let bp = bandpass(
        rec,
        &FilterSpec::BandpassButterworth {
            order: cfg.bandpass_order,
            low_hz: cfg.bandpass_low_hz,
            high_hz: cfg.bandpass_high_hz,
        },
    )?;
    let nt = notch_with_q(&bp, cfg.notch_center_hz, cfg.notch_q)?;
    Ok(zscore(&nt))
}

/// band-pass → notch → z-score → windowize.
pub fn preprocess_recording(rec: &Recording, cfg: &PreprocessConfig) -> Result<PreprocessOutput> {
    let (z, stats) = filter_and_normalise(rec, cfg)?;
    window_normalised(&z, stats, cfg)
}

/// Windowizes an already filtered and normalised recording.
pub fn window_normalised(z: &Recording, stats: ZScoreStats, cfg: &PreprocessConfig) -> Result<PreprocessOutput> {
    let plan = plan_windows(
        z.n_samples(),
        z.sample_rate_hz,
        cfg.window_count,
        cfg.window_length_s,
    )?;
    Ok(PreprocessOutput {
        windowed: windowize(z, &plan)?,
        zscore: stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_recording, SineComponent, SynthSpec};

    fn tone(freq: f64, duration_s: f64, n_channels: usize) -> Recording {
        synth_recording(&SynthSpec {
            n_channels,
            duration_s,
            components: vec![SineComponent::uniform(freq, 1.0, n_channels)],
            ..SynthSpec::default()
        })
        .unwrap()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn rms_ratio(input: &Recording, output: &Recording) -> f64 {
        rms(&output.data.column(0)) / rms(&input.data.column(0))
    }

    #[test]
    fn bandpass_keeps_alpha_tone() {
        let rec = tone(10.0, 60.0, 2);
        let out = bandpass(&rec, &FilterSpec::default_bandpass()).unwrap();
        let r = rms_ratio(&rec, &out);
        assert!((r - 1.0).abs() < 0.05, "ratio {r}");
    }

    #[test]
    fn bandpass_removes_slow_drift() {
        let rec = tone(0.05, 60.0, 2);
        let out = bandpass(&rec, &FilterSpec::default_bandpass()).unwrap();
        let db = 20.0 * rms_ratio(&rec, &out).log10();
        assert!(db <= -20.0, "drift attenuation {db} dB");
    }

    #[test]
    fn filters_map_zero_to_zero() {
        let rec = tone(10.0, 4.0, 2).with_data(Matrix::zeros(1000, 2));
        let bp = bandpass(&rec, &FilterSpec::default_bandpass()).unwrap();
        assert!(bp.data.as_slice().iter().all(|&v| v == 0.0));
        let nt = notch(&rec, 50.0).unwrap();
        assert!(nt.data.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn notch_removes_mains() {
        let rec = tone(50.0, 60.0, 2);
        let out = notch(&rec, 50.0).unwrap();
        let r = rms_ratio(&rec, &out);
        assert!(r <= 0.0316, "50 Hz ratio {r}");
    }

    #[test]
    fn notch_spares_other_tones() {
        let rec = tone(10.0, 60.0, 1);
        let r = rms_ratio(&rec, &notch(&rec, 50.0).unwrap());
        assert!((r - 1.0).abs() < 0.01, "10 Hz ratio {r}");
        for f in [45.0, 55.0] {
            let rec = tone(f, 60.0, 1);
            let db = 20.0 * rms_ratio(&rec, &notch(&rec, 50.0).unwrap()).log10();
            assert!(db > -3.0, "{f} Hz: {db} dB");
        }
    }

    #[test]
    fn notch_rejects_centre_above_nyquist() {
        let rec = tone(10.0, 1.0, 1);
        assert!(matches!(notch(&rec, 130.0), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn single_pass_tone_sweep_at_band_edges() {
        let sos = FilterSpec::default_bandpass().design(250.0).unwrap();
        for (f, dur, settle) in [(45.0, 20.0, 10.0), (0.5, 400.0, 200.0)] {
            let rec = tone(f, dur, 1);
            let x = rec.data.column(0);
            let y = sos.filter(&x);
            let skip = (settle * 250.0) as usize;
            // Whole number of cycles in the measured tail.
            let period = (250.0 / f).round() as usize;
            let len = ((x.len() - skip) / period) * period;
            let db = 20.0
                * (rms(&y[x.len() - len..]) / rms(&x[x.len() - len..])).log10();
            assert!((db + 3.0).abs() <= 1.0, "{f} Hz: {db} dB");
        }
    }

    #[test]
    fn zscore_hand_example() {
        let rec = tone(10.0, 1.0, 1).with_data(Matrix::from_vec(3, 1, vec![1.0, 2.0, 3.0]));
        let (z, stats) = zscore(&rec);
        let expected = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in z.data.column(0).iter().zip(expected) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((stats.sigma[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zscore_constant_channel_is_zero() {
        let rec = tone(10.0, 1.0, 1).with_data(Matrix::filled(50, 2, 7.0));
        let (z, stats) = zscore(&rec);
        assert!(z.data.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(stats.degenerate, vec![0, 1]);
    }

    #[test]
    fn zscore_is_idempotent_and_invertible() {
        let mut rec = tone(7.0, 2.0, 3);
        for (i, v) in rec.data.as_mut_slice().iter_mut().enumerate() {
            *v = *v * 12.0 + 3.0 + (i % 5) as f64;
        }
        let (z1, stats) = zscore(&rec);
        for c in 0..3 {
            let col = z1.data.column(c);
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
        }
        let (z2, _) = zscore(&z1);
        assert!(z1.data.max_abs_diff(&z2.data) < 1e-9);
        let back = stats.invert(&z1.data);
        for (a, b) in back.as_slice().iter().zip(rec.data.as_slice()) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn plan_examples() {
        let p = plan_windows(15000, 250.0, 30, 2.0).unwrap();
        assert_eq!((p.window_len_samples, p.stride_samples, p.count), (500, 500, 30));
        let p = plan_windows(30000, 250.0, 30, 2.0).unwrap();
        assert_eq!((p.window_len_samples, p.stride_samples), (500, 1017));
        assert!(p.span() <= 30000);
        let p = plan_windows(15000, 250.0, 1, 2.0).unwrap();
        assert_eq!((p.count, p.offset(0)), (1, 0));
        assert!(matches!(
            plan_windows(400, 250.0, 30, 2.0),
            Err(Error::WindowTooLong { .. })
        ));
    }

    #[test]
    fn windowize_non_overlapping_reproduces_signal() {
        let rec = tone(3.0, 60.0, 2);
        let plan = plan_windows(rec.n_samples(), 250.0, 30, 2.0).unwrap();
        let w = windowize(&rec, &plan).unwrap();
        assert_eq!(w.windows.len(), 30);
        let joined: Vec<f64> = w.windows.iter().flat_map(|m| m.as_slice().to_vec()).collect();
        assert_eq!(joined.as_slice(), &rec.data.as_slice()[..joined.len()]);
        assert_eq!(joined.len(), 15000 * 2);
    }

    #[test]
    fn windowize_rejects_oversized_plan() {
        let rec = tone(3.0, 4.0, 1);
        let plan = WindowPlan {
            window_len_samples: 500,
            stride_samples: 500,
            count: 3,
        };
        assert!(matches!(windowize(&rec, &plan), Err(Error::PlanMismatch { .. })));
    }

    #[test]
    fn filter_chain_is_linear() {
        let a = tone(7.0, 8.0, 1);
        let b = tone(23.0, 8.0, 1);
        let mix = a.with_data(Matrix::from_fn(a.n_samples(), 1, |r, c| {
            2.0 * a.data.get(r, c) - 0.5 * b.data.get(r, c)
        }));
        let chain = |r: &Recording| {
            let bp = bandpass(r, &FilterSpec::default_bandpass()).unwrap();
            notch(&bp, 50.0).unwrap().data.column(0)
        };
        let (fa, fb, fm) = (chain(&a), chain(&b), chain(&mix));
        let scale = fm.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..fm.len() {
            let lin = 2.0 * fa[i] - 0.5 * fb[i];
            assert!((fm[i] - lin).abs() <= 1e-8 * scale);
        }
    }
}
