//! Attributions for a trained model: Integrated Gradients over node
//! features and gradient-based edge importance from multiplicative masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{trace, Mode, ModelParams, PreparedSequence, Probes};

pub const DEFAULT_STEPS: usize = 128;

/// Signed per-window attributions, `windows × (channels × features)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    pub values: Vec<Matrix>,
    pub baseline: String,
    pub steps: usize,
    pub logit: f64,
    pub baseline_logit: f64,
}

impl AttributionMap {
    pub fn total(&self) -> f64 {
        self.values.iter().flat_map(|m| m.as_slice()).sum()
    }

    /// `|Σ IG − (F(x) − F(b))| / |F(x) − F(b)|`, or `None` when the gap is
    /// below 1e-3.
    pub fn completeness_error(&self) -> Option<f64> {
        let gap = self.logit - self.baseline_logit;
        (gap.abs() > 1e-3).then(|| (self.total() - gap).abs() / gap.abs())
    }

    /// Concatenates the windows of several maps.
    pub fn pooled(maps: &[AttributionMap]) -> Option<AttributionMap> {
        let first = maps.first()?;
        Some(AttributionMap {
            values: maps.iter().flat_map(|m| m.values.iter().cloned()).collect(),
            baseline: first.baseline.clone(),
            steps: first.steps,
            logit: maps.iter().map(|m| m.logit).sum(),
            baseline_logit: maps.iter().map(|m| m.baseline_logit).sum(),
        })
    }
}

/// Zero features on the sample's own topology.
pub fn zero_baseline(seq: &PreparedSequence) -> Vec<Matrix> {
    seq.frames.iter().map(|f| Matrix::zeros(f.features.rows(), f.features.cols())).collect()
}

/// Path integral of `grad` from `b` to `x` with the midpoint rule:
/// `(x − b) · mean_k ∇F(b + (k − ½)/steps · (x − b))`.
pub fn integrate_path(
    x: &[Matrix],
    b: &[Matrix],
    steps: usize,
    mut grad: impl FnMut(&[Matrix]) -> Result<Vec<Matrix>>,
) -> Result<Vec<Matrix>> {
    if x.len() != b.len() {
        return Err(Error::ShapeMismatch {
            context: "baseline windows".into(),
            expected: x.len(),
            got: b.len(),
        });
    }
    for (xi, bi) in x.iter().zip(b) {
        if xi.shape() != bi.shape() {
            return Err(Error::ShapeMismatch {
                context: "baseline feature values".into(),
                expected: xi.as_slice().len(),
                got: bi.as_slice().len(),
            });
        }
    }
    let steps = steps.max(1);
    let mut acc: Vec<Matrix> = x.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect();
    for k in 0..steps {
        let t = (k as f64 + 0.5) / steps as f64;
        let point: Vec<Matrix> = x
            .iter()
            .zip(b)
            .map(|(xi, bi)| Matrix::from_fn(xi.rows(), xi.cols(), |r, c| bi.get(r, c) + t * (xi.get(r, c) - bi.get(r, c))))
            .collect();
        for (a, g) in acc.iter_mut().zip(grad(&point)?) {
            for (av, gv) in a.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *av += gv;
            }
        }
    }
    Ok(acc
        .iter()
        .zip(x.iter().zip(b))
        .map(|(a, (xi, bi))| Matrix::from_fn(a.rows(), a.cols(), |r, c| (xi.get(r, c) - bi.get(r, c)) * a.get(r, c) / steps as f64))
        .collect())
}

fn logit_and_feature_grads(params: &ModelParams, seq: &PreparedSequence) -> Result<(f64, Vec<Matrix>)> {
    let tr = trace(params, seq, Mode::Eval, Probes { features: true, edge_masks: false })?;
    let g = tr.tape.backward(tr.logit, &[1.0]);
    let grads = tr
        .feature_nodes
        .iter()
        .zip(&seq.frames)
        .map(|(&id, f)| {
            let (r, c) = f.features.shape();
            g.get(id).map_or_else(|| Matrix::zeros(r, c), |v| Matrix::from_vec(r, c, v.to_vec()))
        })
        .collect();
    Ok((tr.logit_value(), grads))
}

/// Integrated Gradients of the eval-mode logit with respect to the node
/// features of `seq`, against `baseline` features on the same topology.
pub fn integrated_gradients(params: &ModelParams, seq: &PreparedSequence, baseline: &[Matrix], steps: usize) -> Result<AttributionMap> {
    let x: Vec<Matrix> = seq.frames.iter().map(|f| f.features.clone()).collect();
    let values = integrate_path(&x, baseline, steps, |point| Ok(logit_and_feature_grads(params, &seq.with_features(point))?.1))?;
    let logit = trace(params, seq, Mode::Eval, Probes::default())?.logit_value();
    let baseline_logit = trace(params, &seq.with_features(baseline), Mode::Eval, Probes::default())?.logit_value();
    let zero = baseline.iter().all(|m| m.as_slice().iter().all(|&v| v == 0.0));
    Ok(AttributionMap {
        values,
        baseline: if zero { "zero".into() } else { "custom".into() },
        steps: steps.max(1),
        logit,
        baseline_logit,
    })
}

/// Symmetric, zero-diagonal edge importances normalised to a maximum of 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeImportance {
    pub values: Matrix,
}

/// Mean `|∂logit/∂m_ij|` over samples and windows for a multiplicative
/// edge mask `m` held at 1.
pub fn edge_importance(params: &ModelParams, samples: &[PreparedSequence]) -> Result<EdgeImportance> {
    let n = samples.first().and_then(|s| s.frames.first()).map_or(0, |f| f.features.rows());
    let mut acc = Matrix::zeros(n, n);
    let mut count = 0usize;
    for seq in samples {
        let tr = trace(params, seq, Mode::Eval, Probes { features: false, edge_masks: true })?;
        let g = tr.tape.backward(tr.logit, &[1.0]);
        for &id in &tr.mask_nodes {
            if let Some(v) = g.get(id) {
                if v.len() != n * n {
                    return Err(Error::ShapeMismatch {
                        context: "edge mask".into(),
                        expected: n * n,
                        got: v.len(),
                    });
                }
                for (a, d) in acc.as_mut_slice().iter_mut().zip(v) {
                    *a += d.abs();
                }
            }
            count += 1;
        }
    }
    let scale = if count > 0 { 1.0 / count as f64 } else { 0.0 };
    let mut values = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 0.5 * (acc.get(i, j) + acc.get(j, i)) * scale });
    let max = values.as_slice().iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        values = values.map(|v| v / max);
    }
    Ok(EdgeImportance { values })
}

fn normalise(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
    v
}

/// Mean `|attribution|` per channel over windows and features, summing to 1.
pub fn channel_importance(attr: &AttributionMap) -> Vec<f64> {
    let n = attr.values.first().map_or(0, |m| m.rows());
    let mut out = vec![0.0; n];
    for m in &attr.values {
        for (r, o) in out.iter_mut().enumerate() {
            *o += m.row(r).iter().map(|v| v.abs()).sum::<f64>();
        }
    }
    normalise(out)
}

/// Mean `|attribution|` per feature over windows and channels, summing to 1.
pub fn feature_importance(attr: &AttributionMap) -> Vec<f64> {
    let f = attr.values.first().map_or(0, |m| m.cols());
    let mut out = vec![0.0; f];
    for m in &attr.values {
        for r in 0..m.rows() {
            for (o, v) in out.iter_mut().zip(m.row(r)) {
                *o += v.abs();
            }
        }
    }
    normalise(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEdge {
    pub rank: usize,
    pub channel_a: String,
    pub channel_b: String,
    pub importance: f64,
}

/// The `k` most important edges; each pair is labelled in name order and
/// ties fall back to lexicographic order of the labels.
pub fn top_connections(e: &EdgeImportance, names: &[String], k: usize) -> Vec<RankedEdge> {
    let n = e.values.rows().min(names.len());
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = if names[i] <= names[j] { (i, j) } else { (j, i) };
            edges.push((e.values.get(i, j), &names[a], &names[b]));
        }
    }
    edges.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.cmp(y.1)).then_with(|| x.2.cmp(y.2)));
    edges
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(r, (v, a, b))| RankedEdge {
            rank: r + 1,
            channel_a: a.clone(),
            channel_b: b.clone(),
            importance: v,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::GraphTopology;
    use crate::nn::gradcheck::{toy_config, toy_sequence};
    use crate::nn::{ModelConfig, PreparedFrame, Temporal};

    fn map_of(values: Vec<Matrix>) -> AttributionMap {
        AttributionMap {
            values,
            baseline: "zero".into(),
            steps: 1,
            logit: 0.0,
            baseline_logit: 0.0,
        }
    }

    #[test]
    fn linear_surrogate_is_exact() {
        let w = Matrix::from_fn(3, 2, |r, c| r as f64 - 2.0 * c as f64 + 0.5);
        let x = vec![Matrix::from_fn(3, 2, |r, c| 1.0 + r as f64 * c as f64)];
        let b = vec![Matrix::zeros(3, 2)];
        let ig = integrate_path(&x, &b, 7, |_| Ok(vec![w.clone()])).unwrap();
        for r in 0..3 {
            for c in 0..2 {
                assert!((ig[0].get(r, c) - w.get(r, c) * x[0].get(r, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadratic_midpoint_is_exact() {
        // F = x², ∇F = 2x; the midpoint rule integrates linear gradients exactly.
        let x = vec![Matrix::from_vec(1, 1, vec![3.0])];
        let b = vec![Matrix::from_vec(1, 1, vec![1.0])];
        let ig = integrate_path(&x, &b, 3, |p| Ok(vec![p[0].map(|v| 2.0 * v)])).unwrap();
        assert!((ig[0].get(0, 0) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn sample_equal_to_baseline_gives_zero() {
        let params = ModelParams::init(&toy_config(4), 3);
        let seq = toy_sequence(5, 4, 2, 9);
        let base: Vec<Matrix> = seq.frames.iter().map(|f| f.features.clone()).collect();
        let attr = integrated_gradients(&params, &seq, &base, 8).unwrap();
        assert!(attr.values.iter().all(|m| m.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn completeness_and_convergence_on_model() {
        let params = ModelParams::init(&toy_config(4), 5);
        let seq = toy_sequence(6, 4, 3, 11);
        let base = zero_baseline(&seq);
        let a = integrated_gradients(&params, &seq, &base, 128).unwrap();
        let err = a.completeness_error().expect("non-degenerate gap");
        assert!(err < 0.01, "completeness error {err}");
        let b = integrated_gradients(&params, &seq, &base, 256).unwrap();
        assert!((a.total() - b.total()).abs() / b.total().abs() < 0.005);
    }

    #[test]
    fn baseline_shape_is_checked() {
        let params = ModelParams::init(&toy_config(4), 3);
        let seq = toy_sequence(5, 4, 2, 9);
        let bad = vec![Matrix::zeros(5, 4)];
        assert!(matches!(integrated_gradients(&params, &seq, &bad, 4), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn uniform_and_one_hot_importances() {
        let uniform = map_of(vec![Matrix::filled(19, 9, -2.0); 3]);
        assert!(channel_importance(&uniform).iter().all(|v| (v - 1.0 / 19.0).abs() < 1e-12));
        assert!(feature_importance(&uniform).iter().all(|v| (v - 1.0 / 9.0).abs() < 1e-12));

        let mut m = Matrix::zeros(19, 9);
        m.set(8, 3, 0.7);
        let one = map_of(vec![m, Matrix::zeros(19, 9)]);
        let ch = channel_importance(&one);
        let fe = feature_importance(&one);
        assert_eq!(ch[8], 1.0);
        assert_eq!(ch.iter().sum::<f64>(), 1.0);
        assert_eq!(fe[3], 1.0);
        assert_eq!(fe.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn importances_follow_channel_permutation() {
        let m = Matrix::from_fn(5, 3, |r, c| (r * 3 + c) as f64 - 6.0);
        let perm = [3usize, 0, 4, 1, 2];
        let pm = Matrix::from_fn(5, 3, |r, c| m.get(perm[r], c));
        let a = channel_importance(&map_of(vec![m.clone()]));
        let b = channel_importance(&map_of(vec![pm]));
        for r in 0..5 {
            assert!((b[r] - a[perm[r]]).abs() < 1e-15);
        }
        assert_eq!(feature_importance(&map_of(vec![m.clone()])), feature_importance(&map_of(vec![Matrix::from_fn(5, 3, |r, c| m.get(perm[r], c))])));
    }

    fn frame(features: Matrix, edges: &[(usize, usize)]) -> PreparedFrame {
        let mut topo = GraphTopology::empty(features.rows());
        for &e in edges {
            topo.edges.push(e);
            topo.weights.push(1.0);
        }
        PreparedFrame::new(features, &topo)
    }

    #[test]
    fn edge_importance_contract() {
        let params = ModelParams::init(&toy_config(4), 2);
        let samples = vec![toy_sequence(6, 4, 3, 1), toy_sequence(6, 4, 2, 2)];
        let e = edge_importance(&params, &samples).unwrap();
        let v = &e.values;
        let max = v.as_slice().iter().cloned().fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-12);
        for i in 0..6 {
            assert_eq!(v.get(i, i), 0.0);
            for j in 0..6 {
                assert_eq!(v.get(i, j), v.get(j, i));
                assert!((0.0..=1.0).contains(&v.get(i, j)));
            }
        }
    }

    #[test]
    fn absent_edge_has_zero_importance() {
        let params = ModelParams::init(&toy_config(2), 4);
        let x = Matrix::from_fn(4, 2, |r, c| 1.0 + r as f64 - c as f64);
        let seq = PreparedSequence { frames: vec![frame(x.clone(), &[(0, 1), (1, 2)]), frame(x, &[(0, 1), (2, 3)])] };
        let e = edge_importance(&params, &[seq]).unwrap();
        assert_eq!(e.values.get(0, 3), 0.0);
        assert_eq!(e.values.get(1, 3), 0.0);
        assert!(e.values.get(0, 1) > 0.0);
    }

    #[test]
    fn toy_edge_carrying_signal_dominates() {
        // One layer, nodes 0 and 2 silent: every message through (0,2) is
        // zero while node 1 still sends to node 0.
        let cfg = ModelConfig {
            gat_layers: 1,
            temporal: Temporal::Mean,
            ..toy_config(2)
        };
        let x = Matrix::from_vec(3, 2, vec![0.0, 0.0, -1.5, 2.5, 0.0, 0.0]);
        let seq = PreparedSequence { frames: vec![frame(x, &[(0, 1), (0, 2)])] };
        for seed in 0..5 {
            let params = ModelParams::init(&cfg, seed);
            let e = edge_importance(&params, std::slice::from_ref(&seq)).unwrap();
            assert!(e.values.get(0, 1) > e.values.get(0, 2), "seed {seed}: {:?}", e.values);
            assert_eq!(e.values.get(0, 2), 0.0);
        }
    }

    #[test]
    fn top_connections_order() {
        let names: Vec<String> = ["Fz", "Cz", "T7"].iter().map(|s| s.to_string()).collect();
        let flat = EdgeImportance { values: Matrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 }) };
        assert!(top_connections(&flat, &names, 0).is_empty());
        let all = top_connections(&flat, &names, 3);
        let labels: Vec<(String, String)> = all.iter().map(|e| (e.channel_a.clone(), e.channel_b.clone())).collect();
        assert_eq!(
            labels,
            vec![("Cz".into(), "Fz".into()), ("Cz".into(), "T7".into()), ("Fz".into(), "T7".into())]
        );
        let mut v = flat.values.clone();
        v.set(0, 2, 0.2);
        v.set(2, 0, 0.2);
        let ranked = top_connections(&EdgeImportance { values: v }, &names, 3);
        assert_eq!((ranked[2].channel_a.as_str(), ranked[2].channel_b.as_str()), ("Fz", "T7"));
        assert_eq!(ranked[0].rank, 1);
    }
}
