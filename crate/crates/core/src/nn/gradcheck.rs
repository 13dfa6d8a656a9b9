//! Central finite-difference checks of the tape's gradients.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{bce_with_logits, sigmoid, trace, Mode, ModelConfig, ModelParams, PreparedFrame, PreparedSequence, Probes};
use super::tape::{NodeId, ParamStore, Tape};
use crate::connectivity::GraphTopology;
use crate::matrix::Matrix;

/// Differences below this magnitude are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Location of the worst entry, `tensor[index]`.
    pub worst: String,
    pub checked: usize,
}

impl GradCheck {
    fn new() -> Self {
        Self {
            max_rel_error: 0.0,
            worst: String::new(),
            checked: 0,
        }
    }

    fn record(&mut self, label: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        if err > self.max_rel_error || self.checked == 0 {
            self.max_rel_error = err;
            self.worst = label();
        }
        self.checked += 1;
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Checks every input of the graph built by `build` against central
/// differences of `sum(out ⊙ R)` for a fixed random `R`.
pub fn check_op(inputs: &[Matrix], eps: f64, seed: u64, build: impl Fn(&mut Tape, &[NodeId]) -> NodeId) -> GradCheck {
    let mut store = ParamStore::default();
    for (i, m) in inputs.iter().enumerate() {
        store.push(format!("x{i}"), m.clone());
    }
    let eval = |store: &ParamStore, proj: Option<&[f64]>| -> (f64, Vec<f64>, Vec<Matrix>) {
        let mut tape = Tape::new(store);
        let ids: Vec<NodeId> = (0..store.len()).map(|i| tape.param(i)).collect();
        let out = build(&mut tape, &ids);
        let val = tape.value(out).to_vec();
        let mut grads = store.zeros_like();
        let f = match proj {
            Some(r) => {
                let g = tape.backward(out, r);
                tape.param_grads(&g, &mut grads);
                val.iter().zip(r).map(|(a, b)| a * b).sum()
            }
            None => 0.0,
        };
        (f, val, grads)
    };
    let (_, out0, _) = eval(&store, None);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proj: Vec<f64> = (0..out0.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, _, analytic) = eval(&store, Some(&proj));

    let mut report = GradCheck::new();
    for t in 0..store.len() {
        for k in 0..store.tensors[t].as_slice().len() {
            let orig = store.tensors[t].as_slice()[k];
            store.tensors[t].as_mut_slice()[k] = orig + eps;
            let (fp, _, _) = eval(&store, Some(&proj));
            store.tensors[t].as_mut_slice()[k] = orig - eps;
            let (fm, _, _) = eval(&store, Some(&proj));
            store.tensors[t].as_mut_slice()[k] = orig;
            let numeric = (fp - fm) / (2.0 * eps);
            report.record(|| format!("x{t}[{k}]"), analytic[t].as_slice()[k], numeric);
        }
    }
    report
}

fn ring_neighbors(n: usize) -> Rc<Vec<Vec<usize>>> {
    let mut topo = GraphTopology::empty(n);
    for i in 0..n {
        let j = (i + 1) % n;
        if i != j {
            topo.edges.push((i.min(j), i.max(j)));
            topo.weights.push(1.0);
        }
    }
    topo.edges.sort_unstable();
    topo.edges.dedup();
    topo.weights.truncate(topo.edges.len());
    Rc::new(topo.neighbors_with_self_loops())
}

/// Gradient checks for every operator and composed layer the model uses,
/// on random instances with at most 5 nodes and 4 feature dimensions.
pub fn layer_checks(eps: f64, seed: u64) -> Vec<(&'static str, GradCheck)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = |rows, cols| random_matrix(&mut rng, rows, cols, 1.0);
    let mut out = Vec::new();

    let a = r(3, 4);
    let b = r(4, 2);
    out.push(("matmul", check_op(&[a.clone(), b], eps, seed, |t, x| t.matmul(x[0], x[1]))));
    let bias = r(1, 4);
    out.push(("add_row", check_op(&[a.clone(), bias], eps, seed, |t, x| t.add_row(x[0], x[1]))));
    let a2 = r(3, 4);
    out.push(("add", check_op(&[a.clone(), a2.clone()], eps, seed, |t, x| t.add(x[0], x[1]))));
    out.push(("mul", check_op(&[a.clone(), a2.clone()], eps, seed, |t, x| t.mul(x[0], x[1]))));
    out.push(("affine", check_op(std::slice::from_ref(&a), eps, seed, |t, x| t.affine(x[0], -1.0, 1.0))));
    out.push(("sigmoid", check_op(std::slice::from_ref(&a), eps, seed, |t, x| t.sigmoid(x[0]))));
    out.push(("tanh", check_op(std::slice::from_ref(&a), eps, seed, |t, x| t.tanh(x[0]))));
    out.push(("elu", check_op(std::slice::from_ref(&a), eps, seed, |t, x| t.elu(x[0]))));
    out.push(("leaky_relu", check_op(std::slice::from_ref(&a), eps, seed, |t, x| t.leaky_relu(x[0], 0.2))));
    let c = r(3, 2);
    out.push(("concat_cols", check_op(&[a.clone(), c], eps, seed, |t, x| t.concat_cols(&[x[0], x[1]]))));
    out.push(("slice_rows", check_op(&[r(4, 1)], eps, seed, |t, x| t.slice_rows(x[0], 1, 2))));
    out.push(("mean_rows", check_op(std::slice::from_ref(&a), eps, seed, |t, x| t.mean_rows(x[0]))));
    out.push(("mean_of", check_op(&[a.clone(), a2], eps, seed, |t, x| t.mean_of(&[x[0], x[1]]))));

    let n = 5;
    let nb = ring_neighbors(n);
    let (s, d, v) = (r(n, 1), r(n, 1), r(n, 3));
    let nb1 = nb.clone();
    out.push((
        "attention",
        check_op(&[s.clone(), d.clone(), v.clone()], eps, seed, move |t, x| {
            t.attention(x[0], x[1], x[2], None, nb1.clone(), 0.2)
        }),
    ));
    let mask = Matrix::from_fn(n, n, |i, j| 1.0 + 0.1 * (i + 2 * j) as f64);
    let nb2 = nb.clone();
    out.push((
        "attention_masked",
        check_op(&[s, d, v, mask], eps, seed, move |t, x| {
            t.attention(x[0], x[1], x[2], Some(x[3]), nb2.clone(), 0.2)
        }),
    ));

    // One GAT head with ELU, as composed in the model.
    let nb3 = nb.clone();
    out.push((
        "gat_layer",
        check_op(&[r(n, 4), r(4, 3), r(6, 1)], eps, seed, move |t, x| {
            let wh = t.matmul(x[0], x[1]);
            let a_src = t.slice_rows(x[2], 0, 3);
            let a_dst = t.slice_rows(x[2], 3, 3);
            let s = t.matmul(wh, a_src);
            let d = t.matmul(wh, a_dst);
            let agg = t.attention(s, d, wh, None, nb3.clone(), 0.2);
            t.elu(agg)
        }),
    ));

    // GRU step over [h, x] with hidden 3, input 2.
    out.push((
        "gru_step",
        check_op(
            &[r(1, 2), r(1, 3), r(5, 3), r(1, 3), r(5, 3), r(1, 3), r(5, 3), r(1, 3)],
            eps,
            seed,
            |t, x| {
                let (xt, h) = (x[0], x[1]);
                let hx = t.concat_cols(&[h, xt]);
                let z = t.matmul(hx, x[2]);
                let z = t.add_row(z, x[3]);
                let z = t.sigmoid(z);
                let rr = t.matmul(hx, x[4]);
                let rr = t.add_row(rr, x[5]);
                let rr = t.sigmoid(rr);
                let rh = t.mul(rr, h);
                let rhx = t.concat_cols(&[rh, xt]);
                let c = t.matmul(rhx, x[6]);
                let c = t.add_row(c, x[7]);
                let c = t.tanh(c);
                let keep = t.affine(z, -1.0, 1.0);
                let old = t.mul(keep, h);
                let new = t.mul(z, c);
                t.add(old, new)
            },
        ),
    ));

    out.push((
        "mlp_head",
        check_op(&[r(1, 4), r(4, 3), r(1, 3), r(3, 1), r(1, 1)], eps, seed, |t, x| {
            let h = t.matmul(x[0], x[1]);
            let h = t.add_row(h, x[2]);
            let h = t.elu(h);
            let o = t.matmul(h, x[3]);
            t.add_row(o, x[4])
        }),
    ));
    out
}

/// Small config used for whole-model checks.
pub fn toy_config(n_features: usize) -> ModelConfig {
    ModelConfig {
        n_features,
        gat_hidden: 3,
        gru_hidden: 3,
        mlp_hidden: 4,
        ..ModelConfig::default()
    }
}

/// Random `windows`-frame sequence on `n_nodes` nodes with random
/// topologies.
pub fn toy_sequence(n_nodes: usize, n_features: usize, windows: usize, seed: u64) -> PreparedSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = (0..windows)
        .map(|_| {
            let features = random_matrix(&mut rng, n_nodes, n_features, 1.5);
            let mut topo = GraphTopology::empty(n_nodes);
            for i in 0..n_nodes {
                for j in i + 1..n_nodes {
                    if rng.random::<f64>() < 0.6 {
                        topo.edges.push((i, j));
                        topo.weights.push(rng.random_range(0.2..1.0));
                    }
                }
            }
            PreparedFrame::new(features, &topo)
        })
        .collect();
    PreparedSequence { frames }
}

/// Compares loss gradients of every parameter, input feature and edge mask
/// against central differences (eval mode).
pub fn check_model(params: &ModelParams, seq: &PreparedSequence, target: f64, eps: f64) -> GradCheck {
    let probes = Probes {
        features: true,
        edge_masks: true,
    };
    let loss_of = |p: &ModelParams, s: &PreparedSequence| -> f64 {
        let tr = trace(p, s, Mode::Eval, Probes::default()).expect("forward");
        bce_with_logits(tr.logit_value(), target)
    };

    let tr = trace(params, seq, Mode::Eval, probes).expect("forward");
    let z = tr.logit_value();
    let g = tr.tape.backward(tr.logit, &[sigmoid(z) - target]);
    let mut analytic = params.store.zeros_like();
    tr.tape.param_grads(&g, &mut analytic);

    let mut report = GradCheck::new();
    let mut p = params.clone();
    for t in 0..p.store.len() {
        for k in 0..p.store.tensors[t].as_slice().len() {
            let orig = p.store.tensors[t].as_slice()[k];
            p.store.tensors[t].as_mut_slice()[k] = orig + eps;
            let fp = loss_of(&p, seq);
            p.store.tensors[t].as_mut_slice()[k] = orig - eps;
            let fm = loss_of(&p, seq);
            p.store.tensors[t].as_mut_slice()[k] = orig;
            let name = &p.store.names[t];
            report.record(|| format!("{name}[{k}]"), analytic[t].as_slice()[k], (fp - fm) / (2.0 * eps));
        }
    }

    for (w, &id) in tr.feature_nodes.iter().enumerate() {
        let ga = g.get(id).map(|v| v.to_vec()).unwrap_or_default();
        let x = &seq.frames[w].features;
        for k in 0..x.as_slice().len() {
            let shifted = |delta: f64| {
                let mut feats: Vec<Matrix> = seq.frames.iter().map(|f| f.features.clone()).collect();
                feats[w].as_mut_slice()[k] += delta;
                loss_of(params, &seq.with_features(&feats))
            };
            let numeric = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
            let a = ga.get(k).copied().unwrap_or(0.0);
            report.record(|| format!("features{w}[{k}]"), a, numeric);
        }
    }

    // Edge masks enter the model as all-ones inputs; perturb them through
    // the edge-weighted path with an explicit weight matrix.
    for (w, &id) in tr.mask_nodes.iter().enumerate() {
        let ga = g.get(id).map(|v| v.to_vec()).unwrap_or_default();
        let n = seq.frames[w].features.rows();
        for i in 0..n {
            for j in 0..n {
                let shifted = |delta: f64| {
                    let mut cfg_p = params.clone();
                    cfg_p.config.edge_weighted_attention = true;
                    let mut s = seq.clone();
                    for (fw, f) in s.frames.iter_mut().enumerate() {
                        f.weights = Matrix::filled(n, n, 1.0);
                        if fw == w {
                            let v = f.weights.get(i, j) + delta;
                            f.weights.set(i, j, v);
                        }
                    }
                    loss_of(&cfg_p, &s)
                };
                let numeric = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
                report.record(|| format!("mask{w}[{i},{j}]"), ga[i * n + j], numeric);
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_type_passes() {
        for (name, r) in layer_checks(1e-5, 11) {
            assert!(r.checked > 0, "{name}");
            assert!(r.max_rel_error < 1e-4, "{name}: {} at {}", r.max_rel_error, r.worst);
        }
    }

    #[test]
    fn full_model_passes() {
        let cfg = toy_config(4);
        let params = ModelParams::init(&cfg, 5);
        let seq = toy_sequence(5, 4, 2, 9);
        for target in [0.0, 1.0] {
            let r = check_model(&params, &seq, target, 1e-5);
            assert!(r.max_rel_error < 1e-4, "{} at {}", r.max_rel_error, r.worst);
        }
    }
}
