//! Phase-based functional connectivity and thresholded graphs.
//!
//! Instantaneous phase comes from the FFT analytic signal. Phase
//! differences are wrapped to `(-pi, pi]` before taking signs or magnitudes.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::NodeFeatures;
use crate::matrix::Matrix;
use crate::preprocess::WindowedRecording;

/// `[n_samples × n_channels]` instantaneous phase in `(-pi, pi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSeries(pub Matrix);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Pli,
    Wpli,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pli" => Ok(Metric::Pli),
            "wpli" => Ok(Metric::Wpli),
            _ => Err(Error::InvalidArgument(format!("unknown metric {s:?}"))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Pli => "pli",
            Metric::Wpli => "wpli",
        })
    }
}

/// Symmetric, zero-diagonal matrix with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityMatrix {
    pub values: Matrix,
    pub metric: Metric,
}

impl ConnectivityMatrix {
    pub fn n_nodes(&self) -> usize {
        self.values.rows()
    }
}

pub fn wrap_phase(x: f64) -> f64 {
    let mut w = x % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Analytic signal of a real sequence (one-sided spectrum doubling).
pub fn analytic_signal(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let h = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
            1.0
        } else if k < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        *v *= h;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|v| v * scale).collect()
}

pub fn analytic_phase(window: &Matrix) -> Result<PhaseSeries> {
    if window.rows() < 16 {
        return Err(Error::InvalidArgument(format!(
            "phase extraction needs at least 16 samples, got {}",
            window.rows()
        )));
    }
    let cols: Vec<Vec<f64>> = window
        .columns()
        .iter()
        .map(|c| analytic_signal(c).iter().map(|z| z.arg()).collect())
        .collect();
    Ok(PhaseSeries(Matrix::from_columns(&cols)))
}

/// `|<sign(dphi)>|` on a raw phase-difference series.
pub fn pli_from_diff(dphi: &[f64]) -> f64 {
    if dphi.is_empty() {
        return 0.0;
    }
    let s: f64 = dphi.iter().map(|&d| sign(wrap_phase(d))).sum();
    (s / dphi.len() as f64).abs()
}

/// `|<|dphi| sign(dphi)>| / <|dphi|>`; `None` when the denominator is zero.
pub fn wpli_from_diff(dphi: &[f64]) -> Option<f64> {
    if dphi.is_empty() {
        return None;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &d in dphi {
        let w = wrap_phase(d);
        num += w.abs() * sign(w);
        den += w.abs();
    }
    let n = dphi.len() as f64;
    if den / n <= 0.0 {
        return None;
    }
    Some(((num / n).abs() / (den / n)).min(1.0))
}

fn pairwise(phases: &PhaseSeries, metric: Metric) -> ConnectivityMatrix {
    let p = &phases.0;
    let n = p.cols();
    let cols = p.columns();
    let mut values = Matrix::zeros(n, n);
    let mut diff = vec![0.0; p.rows()];
    for i in 0..n {
        for j in i + 1..n {
            for (d, (a, b)) in diff.iter_mut().zip(cols[i].iter().zip(&cols[j])) {
                *d = a - b;
            }
            let v = match metric {
                Metric::Pli => pli_from_diff(&diff),
                Metric::Wpli => wpli_from_diff(&diff).unwrap_or_else(|| {
                    log::warn!("wPLI zero denominator for pair ({i}, {j}); entry set to 0");
                    0.0
                }),
            };
            values.set(i, j, v);
            values.set(j, i, v);
        }
    }
    ConnectivityMatrix { values, metric }
}

pub fn pli(phases: &PhaseSeries) -> ConnectivityMatrix {
    pairwise(phases, Metric::Pli)
}

pub fn wpli(phases: &PhaseSeries) -> ConnectivityMatrix {
    pairwise(phases, Metric::Wpli)
}

pub fn connectivity(phases: &PhaseSeries, metric: Metric) -> ConnectivityMatrix {
    pairwise(phases, metric)
}

/// Undirected weighted graph; edges stored once with `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphTopology {
    pub n_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub weights: Vec<f64>,
    pub threshold_value: f64,
}

impl GraphTopology {
    pub fn complete(n_nodes: usize, weights: Option<&Matrix>) -> Self {
        let mut edges = Vec::new();
        let mut w = Vec::new();
        for i in 0..n_nodes {
            for j in i + 1..n_nodes {
                edges.push((i, j));
                w.push(weights.map_or(1.0, |m| m.get(i, j)));
            }
        }
        Self {
            n_nodes,
            edges,
            weights: w,
            threshold_value: 0.0,
        }
    }

    pub fn empty(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            edges: Vec::new(),
            weights: Vec::new(),
            threshold_value: 0.0,
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let key = (i.min(j), i.max(j));
        self.edges.contains(&key)
    }

    /// Sorted neighbour lists including each node itself.
    pub fn neighbors_with_self_loops(&self) -> Vec<Vec<usize>> {
        let mut nb: Vec<Vec<usize>> = (0..self.n_nodes).map(|i| vec![i]).collect();
        for &(i, j) in &self.edges {
            nb[i].push(j);
            nb[j].push(i);
        }
        for list in &mut nb {
            list.sort_unstable();
            list.dedup();
        }
        nb
    }

    /// Dense weight matrix with unit diagonal.
    pub fn weight_matrix_with_self_loops(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n_nodes, self.n_nodes);
        for i in 0..self.n_nodes {
            m.set(i, i, 1.0);
        }
        for (&(i, j), &w) in self.edges.iter().zip(&self.weights) {
            m.set(i, j, w);
            m.set(j, i, w);
        }
        m
    }

    /// Applies a node relabelling `perm[old] = new`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        let mut pairs: Vec<((usize, usize), f64)> = self
            .edges
            .iter()
            .zip(&self.weights)
            .map(|(&(i, j), &w)| {
                let (a, b) = (perm[i], perm[j]);
                ((a.min(b), a.max(b)), w)
            })
            .collect();
        pairs.sort_by_key(|a| a.0);
        Self {
            n_nodes: self.n_nodes,
            edges: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
            threshold_value: self.threshold_value,
        }
    }
}

/// Linear-interpolation percentile (`q` in `[0, 100]`).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Keeps upper-triangle edges strictly above `threshold`.
pub fn threshold_absolute(c: &ConnectivityMatrix, threshold: f64) -> GraphTopology {
    let n = c.n_nodes();
    let mut edges = Vec::new();
    let mut weights = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let w = c.values.get(i, j);
            if w > threshold {
                edges.push((i, j));
                weights.push(w);
            }
        }
    }
    if edges.is_empty() {
        log::warn!("degenerate graph: no edge exceeds threshold {threshold}");
    }
    GraphTopology {
        n_nodes: n,
        edges,
        weights,
        threshold_value: threshold,
    }
}

/// Percentile threshold over the upper-triangle values. Percentile 0 keeps
/// every positive-weight edge.
pub fn threshold_graph(c: &ConnectivityMatrix, pct: f64) -> Result<GraphTopology> {
    if !(0.0..100.0).contains(&pct) {
        return Err(Error::InvalidArgument(format!(
            "threshold percentile must be in [0, 100), got {pct}"
        )));
    }
    let t = if pct == 0.0 {
        0.0
    } else {
        percentile(&c.values.upper_triangle(), pct)
    };
    Ok(threshold_absolute(c, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Thresholding {
    Percentile(f64),
    Absolute(f64),
    /// Complete graph carrying every pair's weight.
    None,
}

pub fn apply_thresholding(c: &ConnectivityMatrix, rule: Thresholding) -> Result<GraphTopology> {
    match rule {
        Thresholding::Percentile(p) => threshold_graph(c, p),
        Thresholding::Absolute(t) => Ok(threshold_absolute(c, t)),
        Thresholding::None => Ok(GraphTopology::complete(c.n_nodes(), Some(&c.values))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFrame {
    pub topology: GraphTopology,
    pub features: NodeFeatures,
}

/// Time-ordered graph frames of one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicGraphSequence {
    pub subject_id: String,
    pub frames: Vec<GraphFrame>,
}

impl DynamicGraphSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Per-window connectivity matrices.
pub fn window_connectivity(rec: &WindowedRecording, metric: Metric) -> Result<Vec<ConnectivityMatrix>> {
    use rayon::prelude::*;
    rec.windows
        .par_iter()
        .map(|w| Ok(connectivity(&analytic_phase(w)?, metric)))
        .collect()
}

pub fn build_graph_sequence(
    rec: &WindowedRecording,
    feats: &[NodeFeatures],
    metric: Metric,
    rule: Thresholding,
) -> Result<DynamicGraphSequence> {
    if feats.len() != rec.windows.len() {
        return Err(Error::LengthMismatch(format!(
            "{} feature matrices for {} windows",
            feats.len(),
            rec.windows.len()
        )));
    }
    let mats = window_connectivity(rec, metric)?;
    let frames = mats
        .iter()
        .zip(feats)
        .map(|(c, f)| {
            Ok(GraphFrame {
                topology: apply_thresholding(c, rule)?,
                features: f.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DynamicGraphSequence {
        subject_id: rec.subject_id.clone(),
        frames,
    })
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va <= 0.0 || vb <= 0.0 {
        if va == vb && a == b {
            return 1.0;
        }
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub pearson_r: f64,
    pub mean_pli: f64,
    pub mean_wpli: f64,
}

/// Pearson r of upper triangles and the wPLI/PLI mean ratio.
pub fn compare_matrices(pli_m: &Matrix, wpli_m: &Matrix) -> PairComparison {
    let a = pli_m.upper_triangle();
    let b = wpli_m.upper_triangle();
    let n = a.len().max(1) as f64;
    PairComparison {
        pearson_r: pearson(&a, &b),
        mean_pli: a.iter().sum::<f64>() / n,
        mean_wpli: b.iter().sum::<f64>() / n,
    }
}

/// Mean matrix over windows.
pub fn mean_matrix(mats: &[ConnectivityMatrix]) -> Matrix {
    let n = mats.first().map_or(0, |m| m.n_nodes());
    let mut out = Matrix::zeros(n, n);
    for m in mats {
        for (o, v) in out.as_mut_slice().iter_mut().zip(m.values.as_slice()) {
            *o += v / mats.len() as f64;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_channel(f: impl Fn(f64) -> (f64, f64), n: usize) -> Matrix {
        Matrix::from_fn(n, 2, |t, c| {
            let (a, b) = f(t as f64 / 250.0);
            if c == 0 {
                a
            } else {
                b
            }
        })
    }

    #[test]
    fn wrap_convention() {
        assert!((wrap_phase(PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn analytic_phase_instantaneous_frequency() {
        let n = 500;
        let x = two_channel(|t| ((2.0 * PI * 10.0 * t).cos(), 0.0), n);
        let phase = analytic_phase(&x).unwrap().0.column(0);
        let lo = n / 10;
        let hi = n - n / 10;
        for t in lo..hi {
            let d = wrap_phase(phase[t + 1] - phase[t]);
            let f = d * 250.0 / (2.0 * PI);
            assert!((f - 10.0).abs() < 0.1, "t={t}: {f} Hz");
        }
    }

    #[test]
    fn sin_cos_quadrature() {
        let n = 500;
        let x = two_channel(
            |t| ((2.0 * PI * 10.0 * t).cos(), (2.0 * PI * 10.0 * t).sin()),
            n,
        );
        let ph = analytic_phase(&x).unwrap().0;
        for t in n / 10..n - n / 10 {
            let d = wrap_phase(ph.get(t, 0) - ph.get(t, 1));
            assert!((d - PI / 2.0).abs() < 0.01);
        }
        let c = pli(&PhaseSeries(ph.clone()));
        assert_eq!(c.values.get(0, 1), 1.0);
        assert_eq!(wpli(&PhaseSeries(ph)).values.get(0, 1), 1.0);
    }

    #[test]
    fn identical_channels_have_zero_difference() {
        let x = two_channel(|t| ((2.0 * PI * 7.0 * t).sin(), (2.0 * PI * 7.0 * t).sin()), 256);
        let ph = analytic_phase(&x).unwrap().0;
        for t in 0..256 {
            assert_eq!(ph.get(t, 0), ph.get(t, 1));
        }
        assert_eq!(pli(&PhaseSeries(ph)).values.get(0, 1), 0.0);
    }

    #[test]
    fn pli_hand_cases() {
        assert_eq!(pli_from_diff(&[0.3; 10]), 1.0);
        assert_eq!(pli_from_diff(&[0.1, -0.1, 0.1, -0.1]), 0.0);
        assert!((pli_from_diff(&[0.4, 0.4, -0.1, 0.2]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn wpli_hand_cases() {
        assert_eq!(wpli_from_diff(&[0.3; 10]), Some(1.0));
        assert!((wpli_from_diff(&[0.4, -0.1]).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(wpli_from_diff(&[0.2, -0.2]), Some(0.0));
        assert_eq!(wpli_from_diff(&[0.0, 0.0]), None);
    }

    #[test]
    fn pli_is_amplitude_invariant() {
        let x = two_channel(
            |t| ((2.0 * PI * 9.0 * t).sin() + 0.3 * (2.0 * PI * 21.0 * t).cos(), (2.0 * PI * 9.0 * t + 0.7).sin()),
            500,
        );
        let scaled = Matrix::from_fn(500, 2, |r, c| if c == 0 { 3.0 * x.get(r, c) } else { x.get(r, c) });
        let a = pli(&analytic_phase(&x).unwrap());
        let b = pli(&analytic_phase(&scaled).unwrap());
        assert_eq!(a.values.get(0, 1), b.values.get(0, 1));
    }

    #[test]
    fn threshold_median_of_distinct_values() {
        let n = 19;
        let mut m = Matrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                k += 1;
                let v = k as f64 / 200.0;
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        let c = ConnectivityMatrix { values: m, metric: Metric::Pli };
        let g = threshold_graph(&c, 50.0).unwrap();
        assert_eq!(g.edge_count(), 85);
        assert!(g.weights.iter().all(|&w| w >= g.threshold_value));
        assert!(g.edges.iter().all(|&(i, j)| i != j));
        let g0 = threshold_graph(&c, 0.0).unwrap();
        assert_eq!(g0.edge_count(), 171);
    }

    #[test]
    fn threshold_all_equal_is_edgeless() {
        let mut m = Matrix::filled(19, 19, 0.4);
        for i in 0..19 {
            m.set(i, i, 0.0);
        }
        let c = ConnectivityMatrix { values: m, metric: Metric::Wpli };
        assert_eq!(threshold_graph(&c, 50.0).unwrap().edge_count(), 0);
        assert!(threshold_graph(&c, 100.0).is_err());
    }

    #[test]
    fn comparison_of_identical_and_anticorrelated() {
        let m = Matrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { ((i + j) as f64) / 10.0 });
        let cmp = compare_matrices(&m, &m);
        assert!((cmp.pearson_r - 1.0).abs() < 1e-12);
        assert!((cmp.mean_wpli / cmp.mean_pli - 1.0).abs() < 1e-12);
        let anti = Matrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 - m.get(i, j) });
        assert!(compare_matrices(&m, &anti).pearson_r < 0.0);
    }

    #[test]
    fn relabel_preserves_edge_set_size() {
        let g = GraphTopology {
            n_nodes: 3,
            edges: vec![(0, 1), (1, 2)],
            weights: vec![0.5, 0.7],
            threshold_value: 0.1,
        };
        let r = g.relabel(&[2, 0, 1]);
        assert_eq!(r.edges, vec![(0, 1), (0, 2)]);
        assert_eq!(r.weights, vec![0.7, 0.5]);
    }
}
