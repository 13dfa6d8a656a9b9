//! Recording containers, the on-disk dataset layout, and the synthetic
//! recording generator used by tests and the `synth` subcommand.
//!
//! Layout: `<root>/S<k>/<TASK>.csv`, 19 comma-separated numeric columns, one
//! row per sample at 250 Hz, plus an optional `<root>/labels.csv`
//! (`subject_id,label[,gender]`). Without a labels file the published
//! participant table is used.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::montage::{self, N_CHANNELS, SAMPLE_RATE_HZ};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskId {
    EC,
    EO,
    H,
    C,
    S,
    F,
    M,
    ET,
    R,
}

impl TaskId {
    pub const ALL: [TaskId; 9] = [
        TaskId::EC,
        TaskId::EO,
        TaskId::H,
        TaskId::C,
        TaskId::S,
        TaskId::F,
        TaskId::M,
        TaskId::ET,
        TaskId::R,
    ];

    pub fn code(self) -> &'static str {
        match self {
            TaskId::EC => "EC",
            TaskId::EO => "EO",
            TaskId::H => "H",
            TaskId::C => "C",
            TaskId::S => "S",
            TaskId::F => "F",
            TaskId::M => "M",
            TaskId::ET => "ET",
            TaskId::R => "R",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            TaskId::EC => "Eyes Closed",
            TaskId::EO => "Eyes Open",
            TaskId::H => "Happy",
            TaskId::C => "Calm",
            TaskId::S => "Sad",
            TaskId::F => "Fear",
            TaskId::M => "Memorise 15 words",
            TaskId::ET => "Executive Tasks",
            TaskId::R => "Recall 15 words",
        }
    }

    pub fn duration_s(self) -> f64 {
        match self {
            TaskId::ET => 120.0,
            _ => 60.0,
        }
    }

    pub fn expected_samples(self) -> usize {
        (self.duration_s() * SAMPLE_RATE_HZ).round() as usize
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown task code {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Addicted,
    NotAddicted,
}

impl Label {
    /// 1.0 for the positive (Addicted) class.
    pub fn target(self) -> f64 {
        match self {
            Label::Addicted => 1.0,
            Label::NotAddicted => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Addicted => "Addicted",
            Label::NotAddicted => "Not Addicted",
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "addicted" | "1" => Ok(Label::Addicted),
            "notaddicted" | "healthy" | "0" => Ok(Label::NotAddicted),
            _ => Err(Error::LabelMismatch(format!("unrecognised label {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectLabel {
    pub subject_id: String,
    pub label: Label,
    /// Carried as metadata only.
    pub gender: Option<String>,
}

/// Participant table of the published dataset.
pub fn published_labels() -> Vec<SubjectLabel> {
    use Label::*;
    let rows = [
        ("S1", "Male", Addicted),
        ("S2", "Female", NotAddicted),
        ("S3", "Female", NotAddicted),
        ("S4", "Male", NotAddicted),
        ("S5", "Male", Addicted),
        ("S6", "Male", Addicted),
        ("S7", "Male", NotAddicted),
        ("S8", "Male", NotAddicted),
        ("S9", "Female", Addicted),
        ("S10", "Female", Addicted),
        ("S11", "Female", Addicted),
        ("S12", "Male", NotAddicted),
        ("S13", "Male", NotAddicted),
        ("S14", "Male", Addicted),
    ];
    rows.iter()
        .map(|&(id, g, label)| SubjectLabel {
            subject_id: id.to_string(),
            label,
            gender: Some(g.to_string()),
        })
        .collect()
}

/// Sort key that orders `S2` before `S10`.
pub fn subject_order_key(id: &str) -> (u64, String) {
    let digits: String = id.chars().filter(|c| c.is_ascii_digit()).collect();
    (digits.parse().unwrap_or(u64::MAX), id.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub subject_id: String,
    pub task: TaskId,
    pub sample_rate_hz: f64,
    /// `[n_samples × n_channels]`, microvolts.
    pub data: Matrix,
    pub channel_names: Vec<String>,
}

impl Recording {
    pub fn n_samples(&self) -> usize {
        self.data.rows()
    }

    pub fn n_channels(&self) -> usize {
        self.data.cols()
    }

    pub fn with_data(&self, data: Matrix) -> Recording {
        Recording {
            subject_id: self.subject_id.clone(),
            task: self.task,
            sample_rate_hz: self.sample_rate_hz,
            data,
            channel_names: self.channel_names.clone(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub recordings: BTreeMap<(String, TaskId), Recording>,
    pub labels: Vec<SubjectLabel>,
}

impl Dataset {
    /// Subject ids in numeric order.
    pub fn subjects(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.labels.iter().map(|l| l.subject_id.clone()).collect();
        ids.sort_by_key(|s| subject_order_key(s));
        ids
    }

    pub fn label_of(&self, subject: &str) -> Option<Label> {
        self.labels
            .iter()
            .find(|l| l.subject_id == subject)
            .map(|l| l.label)
    }

    pub fn tasks(&self) -> Vec<TaskId> {
        let mut tasks: Vec<TaskId> = self.recordings.keys().map(|(_, t)| *t).collect();
        tasks.sort();
        tasks.dedup();
        tasks
    }

    pub fn recording(&self, subject: &str, task: TaskId) -> Option<&Recording> {
        self.recordings.get(&(subject.to_string(), task))
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self
            .labels
            .iter()
            .filter(|l| l.label == Label::Addicted)
            .count();
        (pos, self.labels.len() - pos)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRow {
    pub subject_id: String,
    pub gender: Option<String>,
    pub label: Label,
}

pub fn subject_table(ds: &Dataset) -> Vec<SubjectRow> {
    let mut rows: Vec<SubjectRow> = ds
        .labels
        .iter()
        .map(|l| SubjectRow {
            subject_id: l.subject_id.clone(),
            gender: l.gender.clone(),
            label: l.label,
        })
        .collect();
    rows.sort_by_key(|r| subject_order_key(&r.subject_id));
    rows
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub tasks: Vec<TaskId>,
    /// Validate row counts against the task durations.
    pub strict_lengths: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            tasks: TaskId::ALL.to_vec(),
            strict_lengths: true,
        }
    }
}

pub fn load_dataset(root: &Path) -> Result<Dataset> {
    load_dataset_with(root, &LoadOptions::default())
}

pub fn load_dataset_with(root: &Path, opts: &LoadOptions) -> Result<Dataset> {
    if !root.is_dir() {
        return Err(Error::FileNotFound(root.to_path_buf()));
    }
    let dirs = subject_dirs(root)?;
    let labels_path = root.join("labels.csv");
    let labels = if labels_path.is_file() {
        read_labels(&labels_path)?
    } else {
        let published = published_labels();
        let mut labels = Vec::new();
        for d in &dirs {
            let l = published
                .iter()
                .find(|l| &l.subject_id == d)
                .ok_or_else(|| {
                    Error::LabelMismatch(format!("no label for subject directory {d}"))
                })?;
            labels.push(l.clone());
        }
        labels
    };

    for l in &labels {
        if !dirs.contains(&l.subject_id) {
            return Err(Error::LabelMismatch(format!(
                "labels list subject {} with no directory under {}",
                l.subject_id,
                root.display()
            )));
        }
    }
    for d in &dirs {
        if !labels.iter().any(|l| &l.subject_id == d) {
            return Err(Error::LabelMismatch(format!("subject directory {d} has no label")));
        }
    }

    let mut jobs = Vec::new();
    for l in &labels {
        for &task in &opts.tasks {
            let path = root.join(&l.subject_id).join(format!("{}.csv", task.code()));
            if !path.is_file() {
                return Err(Error::MissingFile {
                    subject: l.subject_id.clone(),
                    task: task.code().to_string(),
                });
            }
            jobs.push((l.subject_id.clone(), task, path));
        }
    }

    let parsed: Vec<Result<Recording>> = jobs
        .par_iter()
        .map(|(subject, task, path)| {
            let data = read_recording_csv(path)?;
            if opts.strict_lengths && data.rows() != task.expected_samples() {
                return Err(Error::ShapeMismatch {
                    context: format!("row count of {}", path.display()),
                    expected: task.expected_samples(),
                    got: data.rows(),
                });
            }
            Ok(Recording {
                subject_id: subject.clone(),
                task: *task,
                sample_rate_hz: SAMPLE_RATE_HZ,
                data,
                channel_names: montage::channel_names(),
            })
        })
        .collect();

    let mut recordings = BTreeMap::new();
    for rec in parsed {
        let rec = rec?;
        recordings.insert((rec.subject_id.clone(), rec.task), rec);
    }
    let mut labels = labels;
    labels.sort_by_key(|l| subject_order_key(&l.subject_id));
    Ok(Dataset { recordings, labels })
}

fn subject_dirs(root: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let name = entry.file_name().to_string_lossy().to_string();
        let is_subject = name.len() > 1
            && name.starts_with('S')
            && name[1..].chars().all(|c| c.is_ascii_digit());
        if is_subject && entry.path().is_dir() {
            out.push(name);
        }
    }
    out.sort_by_key(|s| subject_order_key(s));
    Ok(out)
}

fn read_labels(path: &Path) -> Result<Vec<SubjectLabel>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let id_col = col("subject_id")
        .ok_or_else(|| Error::LabelMismatch("labels.csv lacks a subject_id column".into()))?;
    let label_col = col("label")
        .ok_or_else(|| Error::LabelMismatch("labels.csv lacks a label column".into()))?;
    let gender_col = col("gender");
    let mut out: Vec<SubjectLabel> = Vec::new();
    for row in reader.records() {
        let row = row?;
        let id = row.get(id_col).unwrap_or("").to_string();
        if out.iter().any(|l| l.subject_id == id) {
            return Err(Error::LabelMismatch(format!("subject {id} labelled twice")));
        }
        out.push(SubjectLabel {
            label: row.get(label_col).unwrap_or("").parse()?,
            gender: gender_col
                .and_then(|c| row.get(c))
                .filter(|g| !g.is_empty())
                .map(str::to_string),
            subject_id: id,
        });
    }
    Ok(out)
}

/// Parses one task file: 19 numeric columns, optional header row.
pub fn read_recording_csv(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Csv(e),
        })?;
    let mut data = Vec::new();
    let mut n_rows = 0usize;
    let mut record = csv::StringRecord::new();
    let mut line = 0usize;
    while reader.read_record(&mut record)? {
        line += 1;
        if record.len() != N_CHANNELS {
            return Err(Error::ShapeMismatch {
                context: format!("column count of {} (row {line})", path.display()),
                expected: N_CHANNELS,
                got: record.len(),
            });
        }
        if line == 1 && record.iter().any(|c| c.parse::<f64>().is_err()) {
            check_header(path, &record);
            continue;
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                path: path.to_path_buf(),
                row: line,
                col: col + 1,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumericCell {
                    path: path.to_path_buf(),
                    row: line,
                    col: col + 1,
                    value: cell.to_string(),
                });
            }
            data.push(v);
        }
        n_rows += 1;
    }
    Ok(Matrix::from_vec(n_rows, N_CHANNELS, data))
}

fn check_header(path: &Path, header: &csv::StringRecord) {
    let mismatched: Vec<String> = header
        .iter()
        .zip(montage::CHANNEL_NAMES)
        .filter(|(h, expected)| !h.eq_ignore_ascii_case(expected))
        .map(|(h, expected)| format!("{h}!={expected}"))
        .collect();
    if !mismatched.is_empty() {
        log::warn!(
            "{}: header disagrees with the positional montage ({}); using column positions",
            path.display(),
            mismatched.join(", ")
        );
    }
}

/// Writes a recording as headerless CSV at round-trip precision.
pub fn write_recording_csv(path: &Path, data: &Matrix) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut line = String::new();
    for r in 0..data.rows() {
        line.clear();
        for (c, v) in data.row(r).iter().enumerate() {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `<root>/S<k>/<TASK>.csv` for every recording plus `labels.csv`.
pub fn write_dataset(root: &Path, ds: &Dataset) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for ((subject, task), rec) in &ds.recordings {
        let dir = root.join(subject);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_recording_csv(&dir.join(format!("{}.csv", task.code())), &rec.data)?;
    }
    let path = root.join("labels.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["subject_id", "label", "gender"])?;
    for l in &ds.labels {
        w.write_record([
            l.subject_id.as_str(),
            l.label.as_str(),
            l.gender.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

pub fn task_path(root: &Path, subject: &str, task: TaskId) -> PathBuf {
    root.join(subject).join(format!("{}.csv", task.code()))
}

/// One sinusoid present on every channel with per-channel amplitude and phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineComponent {
    pub freq_hz: f64,
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
}

impl SineComponent {
    pub fn uniform(freq_hz: f64, amplitude: f64, n_channels: usize) -> Self {
        Self {
            freq_hz,
            amplitude: vec![amplitude; n_channels],
            phase: vec![0.0; n_channels],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub subject_id: String,
    pub task: TaskId,
    pub n_channels: usize,
    pub sample_rate_hz: f64,
    pub components: Vec<SineComponent>,
    pub noise_sd: f64,
    pub duration_s: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            subject_id: "S1".into(),
            task: TaskId::EC,
            n_channels: N_CHANNELS,
            sample_rate_hz: SAMPLE_RATE_HZ,
            components: Vec::new(),
            noise_sd: 0.0,
            duration_s: 60.0,
            seed: 0,
        }
    }
}

/// Sum of sinusoids plus independent Gaussian noise per channel.
pub fn synth_recording(spec: &SynthSpec) -> Result<Recording> {
    let nyquist = spec.sample_rate_hz / 2.0;
    for c in &spec.components {
        if !(c.freq_hz > 0.0 && c.freq_hz < nyquist) {
            return Err(Error::FrequencyOutOfRange {
                freq_hz: c.freq_hz,
                nyquist_hz: nyquist,
            });
        }
        if c.amplitude.len() != spec.n_channels || c.phase.len() != spec.n_channels {
            return Err(Error::ShapeMismatch {
                context: "synthetic component channel count".into(),
                expected: spec.n_channels,
                got: c.amplitude.len().min(c.phase.len()),
            });
        }
    }
    let n = (spec.duration_s * spec.sample_rate_hz).round() as usize;
    let mut data = Matrix::zeros(n, spec.n_channels);
    let two_pi = 2.0 * std::f64::consts::PI;
    for c in &spec.components {
        let w = two_pi * c.freq_hz / spec.sample_rate_hz;
        for ch in 0..spec.n_channels {
            let (a, p) = (c.amplitude[ch], c.phase[ch]);
            if a == 0.0 {
                continue;
            }
            for t in 0..n {
                let v = data.get(t, ch) + a * (w * t as f64 + p).sin();
                data.set(t, ch, v);
            }
        }
    }
    if spec.noise_sd > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_sd)
            .map_err(|e| Error::InvalidArgument(format!("noise_sd: {e}")))?;
        for v in data.as_mut_slice() {
            *v += normal.sample(&mut rng);
        }
    }
    let channel_names = if spec.n_channels == N_CHANNELS {
        montage::channel_names()
    } else {
        (0..spec.n_channels).map(|i| format!("ch{i}")).collect()
    };
    Ok(Recording {
        subject_id: spec.subject_id.clone(),
        task: spec.task,
        sample_rate_hz: spec.sample_rate_hz,
        data,
        channel_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone_spec(freq: f64, amp: f64) -> SynthSpec {
        SynthSpec {
            components: vec![SineComponent::uniform(freq, amp, N_CHANNELS)],
            ..SynthSpec::default()
        }
    }

    fn population_variance(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
    }

    #[test]
    fn sinusoid_variance_is_half_amplitude_squared() {
        let rec = synth_recording(&tone_spec(10.0, 3.0)).unwrap();
        assert_eq!(rec.data.shape(), (15000, 19));
        let var = population_variance(&rec.data.column(4));
        assert!((var - 4.5).abs() / 4.5 < 1e-6, "variance {var}");
    }

    #[test]
    fn synth_is_deterministic_per_seed() {
        let mut spec = tone_spec(10.0, 1.0);
        spec.noise_sd = 2.0;
        spec.seed = 99;
        let a = synth_recording(&spec).unwrap();
        let b = synth_recording(&spec).unwrap();
        assert_eq!(a.data.as_slice(), b.data.as_slice());
        spec.seed = 100;
        let c = synth_recording(&spec).unwrap();
        assert_ne!(a.data.as_slice(), c.data.as_slice());
    }

    #[test]
    fn synth_rejects_frequency_above_nyquist() {
        let err = synth_recording(&tone_spec(200.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::FrequencyOutOfRange { .. }));
    }

    #[test]
    fn published_labels_are_balanced() {
        let labels = published_labels();
        assert_eq!(labels.len(), 14);
        let pos = labels.iter().filter(|l| l.label == Label::Addicted).count();
        assert_eq!(pos, 7);
        assert_eq!(labels[0].subject_id, "S1");
        assert_eq!(labels[0].label, Label::Addicted);
    }

    #[test]
    fn task_durations() {
        assert_eq!(TaskId::ET.expected_samples(), 30000);
        for t in TaskId::ALL.iter().filter(|t| **t != TaskId::ET) {
            assert_eq!(t.expected_samples(), 15000);
        }
    }

    #[test]
    fn label_parsing_accepts_published_spelling() {
        assert_eq!("Not Addicted".parse::<Label>().unwrap(), Label::NotAddicted);
        assert_eq!("Addicted".parse::<Label>().unwrap(), Label::Addicted);
        assert!("maybe".parse::<Label>().is_err());
    }

    #[test]
    fn subject_order_is_numeric() {
        let mut ids = vec!["S10", "S2", "S1"];
        ids.sort_by_key(|s| subject_order_key(s));
        assert_eq!(ids, ["S1", "S2", "S10"]);
    }
}
