//! The fixed 19-electrode 10-20 montage.

pub const N_CHANNELS: usize = 19;

pub const CHANNEL_NAMES: [&str; N_CHANNELS] = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T7", "C3", "Cz", "C4", "T8", "P7", "P3", "Pz",
    "P4", "P8", "O1", "O2",
];

/// Number of unordered channel pairs.
pub const N_PAIRS: usize = N_CHANNELS * (N_CHANNELS - 1) / 2;

pub const SAMPLE_RATE_HZ: f64 = 250.0;

pub fn channel_index(name: &str) -> Option<usize> {
    CHANNEL_NAMES
        .iter()
        .position(|c| c.eq_ignore_ascii_case(name.trim()))
}

pub fn channel_names() -> Vec<String> {
    CHANNEL_NAMES.iter().map(|s| s.to_string()).collect()
}
