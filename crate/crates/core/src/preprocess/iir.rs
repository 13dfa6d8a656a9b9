//! IIR design and second-order-section filtering.
//!
//! Butterworth band-pass filters are designed in zero/pole/gain form: analog
//! low-pass prototype, low-pass to band-pass transform at pre-warped edges,
//! then the bilinear transform. Sections use transposed direct form II.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

/// One biquad, normalised so `a0 == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        let num = self.b[0] + z_inv * self.b[1] + z2 * self.b[2];
        let den = self.a[0] + z_inv * self.a[1] + z2 * self.a[2];
        num / den
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    /// Steady-state TDF-II state for a unit step input.
    fn step_state(&self) -> [f64; 2] {
        let y = self.dc_gain();
        let z2 = self.b[2] - self.a[2] * y;
        let z1 = self.b[1] - self.a[1] * y + z2;
        [z1, z2]
    }
}

/// Cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
    /// Order of the overall transfer function.
    pub order: usize,
}

impl Sos {
    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, sample_rate: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / sample_rate;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude_db(&self, freq_hz: f64, sample_rate: f64) -> f64 {
        20.0 * self.response(freq_hz, sample_rate).norm().log10()
    }

    /// Largest pole magnitude across all sections.
    pub fn max_pole_radius(&self) -> f64 {
        self.sections
            .iter()
            .map(|s| {
                let (a1, a2) = (s.a[1], s.a[2]);
                let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
                let p1 = (-a1 + disc) / 2.0;
                let p2 = (-a1 - disc) / 2.0;
                p1.norm().max(p2.norm())
            })
            .fold(0.0, f64::max)
    }

    fn check_stable(self) -> Result<Self> {
        let r = self.max_pole_radius();
        if r >= 1.0 || !r.is_finite() {
            return Err(Error::UnstableFilter(r));
        }
        Ok(self)
    }

    /// Causal filtering with the given initial per-section states.
    fn run(&self, x: &mut [f64], mut states: Vec<[f64; 2]>) {
        for (s, z) in self.sections.iter().zip(states.iter_mut()) {
            let [b0, b1, b2] = s.b;
            let [_, a1, a2] = s.a;
            let (mut z1, mut z2) = (z[0], z[1]);
            for v in x.iter_mut() {
                let input = *v;
                let y = b0 * input + z1;
                z1 = b1 * input - a1 * y + z2;
                z2 = b2 * input - a2 * y;
                *v = y;
            }
            *z = [z1, z2];
        }
    }

    /// Single causal pass from rest.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.run(&mut out, vec![[0.0; 2]; self.sections.len()]);
        out
    }

    /// Initial states matching a constant input of `x0`.
    fn steady_states(&self, x0: f64) -> Vec<[f64; 2]> {
        let mut scale = x0;
        self.sections
            .iter()
            .map(|s| {
                let [z1, z2] = s.step_state();
                let st = [z1 * scale, z2 * scale];
                scale *= s.dc_gain();
                st
            })
            .collect()
    }

    /// Zero-phase forward-backward filtering with odd-extension padding of
    /// `pad` samples on each side and steady-state initial conditions.
    pub fn filtfilt(&self, x: &[f64], pad: usize) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = pad.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }
        let zi = self.steady_states(ext[0]);
        self.run(&mut ext, zi);
        ext.reverse();
        let zi = self.steady_states(ext[0]);
        self.run(&mut ext, zi);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

fn prewarp(freq_hz: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * freq_hz / fs).tan()
}

/// Butterworth band-pass of prototype order `order` (the digital filter has
/// order `2 * order`).
pub fn butterworth_bandpass(order: usize, low_hz: f64, high_hz: f64, fs: f64) -> Result<Sos> {
    let nyq = fs / 2.0;
    if order == 0 {
        return Err(Error::InvalidSpec("filter order must be positive".into()));
    }
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyq) {
        return Err(Error::InvalidSpec(format!(
            "band-pass edges must satisfy 0 < {low_hz} < {high_hz} < {nyq}"
        )));
    }
    // Analog prototype poles on the left half unit circle.
    let proto: Vec<Complex64> = (0..order)
        .map(|k| {
            let theta = PI * (2 * k + 1 + order) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect();

    let w1 = prewarp(low_hz, fs);
    let w2 = prewarp(high_hz, fs);
    let bw = w2 - w1;
    let w0 = (w1 * w2).sqrt();

    // Low-pass to band-pass: each prototype pole splits in two; `order`
    // zeros land at s = 0.
    let mut poles = Vec::with_capacity(2 * order);
    for p in &proto {
        let half = p * (bw / 2.0);
        let root = (half * half - w0 * w0).sqrt();
        poles.push(half + root);
        poles.push(half - root);
    }
    let mut gain = bw.powi(order as i32);

    // Bilinear transform. Analog zeros at 0 map to z = 1; the surplus
    // degree maps to z = -1.
    let fs2 = Complex64::new(2.0 * fs, 0.0);
    let mut num = Complex64::new(1.0, 0.0);
    let mut den = Complex64::new(1.0, 0.0);
    for _ in 0..order {
        num *= fs2; // (2fs - 0)
    }
    for p in &poles {
        den *= fs2 - p;
    }
    gain *= (num / den).re;
    let zpoles: Vec<Complex64> = poles.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();

    let sections = pair_poles(&zpoles)
        .into_iter()
        .map(|(a1, a2)| Biquad {
            b: [1.0, 0.0, -1.0],
            a: [1.0, a1, a2],
        })
        .collect::<Vec<_>>();
    if sections.len() != order {
        return Err(Error::InvalidSpec("band-pass poles do not pair into sections".into()));
    }
    let mut sos = Sos {
        sections,
        order: 2 * order,
    };
    // (z-1)(z+1) = z^2 - 1 per section; the overall zpk gain goes up front.
    sos.sections[0].b = [gain, 0.0, -gain];
    sos.check_stable()
}

/// Groups digital poles into `(a1, a2)` biquad denominators, conjugate pairs
/// first, then remaining real poles two at a time.
fn pair_poles(poles: &[Complex64]) -> Vec<(f64, f64)> {
    const EPS: f64 = 1e-12;
    let mut out = Vec::new();
    let mut reals: Vec<f64> = Vec::new();
    for p in poles {
        if p.im > EPS {
            out.push((-2.0 * p.re, p.norm_sqr()));
        } else if p.im.abs() <= EPS {
            reals.push(p.re);
        }
    }
    reals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for pair in reals.chunks(2) {
        match pair {
            [r1, r2] => out.push((-(r1 + r2), r1 * r2)),
            [r] => out.push((-r, 0.0)),
            _ => unreachable!(),
        }
    }
    out
}

/// Second-order IIR notch with quality factor `q`.
pub fn iir_notch(center_hz: f64, q: f64, fs: f64) -> Result<Sos> {
    let nyq = fs / 2.0;
    if !(center_hz > 0.0 && center_hz < nyq) {
        return Err(Error::InvalidSpec(format!(
            "notch centre {center_hz} Hz outside (0, {nyq}) Hz"
        )));
    }
    if !(q > 0.0) {
        return Err(Error::InvalidSpec(format!("notch Q must be positive, got {q}")));
    }
    let w0 = 2.0 * PI * center_hz / fs;
    let bw = w0 / q;
    let beta = (bw / 2.0).tan();
    let g = 1.0 / (1.0 + beta);
    let c = w0.cos();
    Sos {
        sections: vec![Biquad {
            b: [g, -2.0 * g * c, g],
            a: [1.0, -2.0 * g * c, 2.0 * g - 1.0],
        }],
        order: 2,
    }
    .check_stable()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 250.0;

    #[test]
    fn bandpass_edges_are_minus_3_db() {
        let sos = butterworth_bandpass(4, 0.5, 45.0, FS).unwrap();
        assert_eq!(sos.sections.len(), 4);
        assert_eq!(sos.order, 8);
        for f in [0.5, 45.0] {
            let db = sos.magnitude_db(f, FS);
            assert!((db + 3.0103).abs() < 1e-6, "{f} Hz -> {db} dB");
        }
        let centre = (0.5f64 * 45.0).sqrt();
        assert!(sos.magnitude_db(centre, FS).abs() < 1e-6);
        assert!(sos.max_pole_radius() < 1.0);
    }

    #[test]
    fn bandpass_rejects_bad_edges() {
        assert!(matches!(
            butterworth_bandpass(4, 45.0, 0.5, FS),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            butterworth_bandpass(4, 0.5, 130.0, FS),
            Err(Error::InvalidSpec(_))
        ));
        assert!(butterworth_bandpass(0, 0.5, 45.0, FS).is_err());
    }

    #[test]
    fn odd_order_bandpass_designs() {
        let sos = butterworth_bandpass(3, 1.0, 30.0, FS).unwrap();
        assert_eq!(sos.sections.len(), 3);
        assert!((sos.magnitude_db(1.0, FS) + 3.0103).abs() < 1e-6);
    }

    #[test]
    fn notch_response() {
        let sos = iir_notch(50.0, 30.0, FS).unwrap();
        assert!(sos.response(50.0, FS).norm() < 1e-9);
        assert!(sos.magnitude_db(45.0, FS) > -3.0);
        assert!(sos.magnitude_db(55.0, FS) > -3.0);
        assert!((sos.response(0.0, FS).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn steady_state_init_removes_dc_step_transient() {
        let sos = iir_notch(50.0, 30.0, FS).unwrap();
        let x = vec![3.0; 500];
        let y = sos.filtfilt(&x, 6);
        for v in y {
            assert!((v - 3.0).abs() < 1e-9);
        }
    }
}
