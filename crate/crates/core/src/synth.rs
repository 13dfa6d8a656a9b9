//! Planted-signal datasets for end-to-end checks without the real
//! recordings.
//!
//! Subjects follow the published 14-subject label table. Every recording
//! is white noise plus a shared 10 Hz rhythm on Cz and T7 and a 20 Hz
//! rhythm on Fz and Cz. In the Addicted class the Beta rhythm is stronger
//! and T7 lags Cz by a quarter cycle; in the other class the two channels
//! oscillate in phase, so their phase-lag index stays near zero.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{published_labels, synth_recording, Dataset, Label, SineComponent, SynthSpec, TaskId};
use crate::error::Result;
use crate::montage::{channel_index, N_CHANNELS, SAMPLE_RATE_HZ};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub seed: u64,
    pub tasks: Vec<TaskId>,
    /// Overrides the task duration when set.
    pub duration_s: Option<f64>,
    pub noise_sd: f64,
    pub beta_hz: f64,
    pub beta_amplitude_addicted: f64,
    pub beta_amplitude_control: f64,
    pub coupling_hz: f64,
    pub coupling_amplitude: f64,
    pub coupling_lag_rad: f64,
    /// Relative per-subject amplitude jitter (uniform ±).
    pub subject_jitter: f64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            tasks: vec![TaskId::ET],
            duration_s: None,
            noise_sd: 1.0,
            beta_hz: 20.0,
            beta_amplitude_addicted: 1.5,
            beta_amplitude_control: 0.3,
            coupling_hz: 10.0,
            coupling_amplitude: 1.0,
            coupling_lag_rad: PI / 2.0,
            subject_jitter: 0.2,
        }
    }
}

/// Channels carrying planted signal.
pub const PLANTED_CHANNELS: [&str; 3] = ["Fz", "Cz", "T7"];

pub fn planted_dataset(spec: &PlantedSpec) -> Result<Dataset> {
    let labels = published_labels();
    let fz = channel_index("Fz").expect("montage has Fz");
    let cz = channel_index("Cz").expect("montage has Cz");
    let t7 = channel_index("T7").expect("montage has T7");
    let mut recordings = BTreeMap::new();
    for (si, subject) in labels.iter().enumerate() {
        let addicted = subject.label == Label::Addicted;
        for (ti, &task) in spec.tasks.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ ((si as u64) << 32) ^ ((ti as u64) << 16));
            let mut jitter = |x: f64| x * (1.0 + spec.subject_jitter * rng.random_range(-1.0..1.0));

            let beta_amp = jitter(if addicted {
                spec.beta_amplitude_addicted
            } else {
                spec.beta_amplitude_control
            });
            let mut beta = SineComponent::uniform(spec.beta_hz, 0.0, N_CHANNELS);
            beta.amplitude[fz] = beta_amp;
            beta.amplitude[cz] = beta_amp;

            let mut coupling = SineComponent::uniform(spec.coupling_hz, 0.0, N_CHANNELS);
            let amp = jitter(spec.coupling_amplitude);
            coupling.amplitude[cz] = amp;
            coupling.amplitude[t7] = amp;
            coupling.phase[t7] = if addicted { -spec.coupling_lag_rad } else { 0.0 };

            let rec = synth_recording(&SynthSpec {
                subject_id: subject.subject_id.clone(),
                task,
                n_channels: N_CHANNELS,
                sample_rate_hz: SAMPLE_RATE_HZ,
                components: vec![beta, coupling],
                noise_sd: spec.noise_sd,
                duration_s: spec.duration_s.unwrap_or(task.duration_s()),
                seed: rng.random(),
            })?;
            recordings.insert((subject.subject_id.clone(), task), rec);
        }
    }
    Ok(Dataset { recordings, labels })
}
