//! GAT spatial encoder, BiGRU temporal encoder and MLP head.

use std::rc::Rc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use super::tape::sigmoid;
use super::tape::{NodeId, ParamStore, Tape};
use crate::connectivity::{DynamicGraphSequence, GraphTopology};
use crate::error::{Error, Result};
use crate::features::{apply_scaler, ScalerStats, N_FEATURES};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temporal {
    /// Two-direction GRU stack over the window embeddings.
    BiGru,
    /// Mean of the window embeddings; no recurrent parameters.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_features: usize,
    pub gat_layers: usize,
    pub gat_heads: usize,
    pub gat_hidden: usize,
    pub gru_layers: usize,
    pub gru_hidden: usize,
    pub mlp_hidden: usize,
    pub dropout_backbone: f64,
    pub dropout_head: f64,
    pub leaky_slope: f64,
    pub temporal: Temporal,
    /// Scale attention messages by the connectivity edge weight.
    pub edge_weighted_attention: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_features: N_FEATURES,
            gat_layers: 2,
            gat_heads: 2,
            gat_hidden: 64,
            gru_layers: 2,
            gru_hidden: 128,
            mlp_hidden: 64,
            dropout_backbone: 0.182,
            dropout_head: 0.5,
            leaky_slope: 0.2,
            temporal: Temporal::BiGru,
            edge_weighted_attention: false,
        }
    }
}

impl ModelConfig {
    pub fn embedding_dim(&self) -> usize {
        self.gat_heads * self.gat_hidden
    }

    pub fn head_input_dim(&self) -> usize {
        match self.temporal {
            Temporal::BiGru => 2 * self.gru_hidden,
            Temporal::Mean => self.embedding_dim(),
        }
    }
}

/// One attention head: projection `w` (`in × out`) and attention vector
/// `a` (`2·out × 1`, source half first).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatHead {
    pub w: usize,
    pub a: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatLayerParams {
    pub in_dim: usize,
    pub out_dim: usize,
    pub heads: Vec<GatHead>,
}

/// Gate weights act on the concatenation `[h_{t-1}, x_t]`, hidden rows first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GruCellParams {
    pub input_dim: usize,
    pub hidden: usize,
    pub w_z: usize,
    pub b_z: usize,
    pub w_r: usize,
    pub b_r: usize,
    pub w_h: usize,
    pub b_h: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GruLayerParams {
    pub fwd: GruCellParams,
    pub bwd: GruCellParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Model parameters: a named tensor store plus the indices that give each
/// tensor its role.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub gat: Vec<GatLayerParams>,
    pub gru: Vec<GruLayerParams>,
    pub mlp: MlpParams,
}

struct Decl {
    name: String,
    rows: usize,
    cols: usize,
    bias: bool,
}

fn declare(cfg: &ModelConfig) -> (Vec<Decl>, Vec<GatLayerParams>, Vec<GruLayerParams>, MlpParams) {
    let mut decls: Vec<Decl> = Vec::new();
    let mut add = |name: String, rows: usize, cols: usize, bias: bool| {
        decls.push(Decl { name, rows, cols, bias });
        decls.len() - 1
    };

    let mut gat = Vec::new();
    let mut in_dim = cfg.n_features;
    for l in 0..cfg.gat_layers {
        let heads = (0..cfg.gat_heads)
            .map(|h| GatHead {
                w: add(format!("gat{l}.head{h}.W"), in_dim, cfg.gat_hidden, false),
                a: add(format!("gat{l}.head{h}.a"), 2 * cfg.gat_hidden, 1, false),
            })
            .collect();
        gat.push(GatLayerParams {
            in_dim,
            out_dim: cfg.gat_hidden,
            heads,
        });
        in_dim = cfg.embedding_dim();
    }

    let mut gru = Vec::new();
    if cfg.temporal == Temporal::BiGru {
        let mut input_dim = cfg.embedding_dim();
        let hid = cfg.gru_hidden;
        for l in 0..cfg.gru_layers {
            let mut cell = |dir: &str| GruCellParams {
                input_dim,
                hidden: hid,
                w_z: add(format!("gru{l}.{dir}.W_z"), hid + input_dim, hid, false),
                b_z: add(format!("gru{l}.{dir}.b_z"), 1, hid, true),
                w_r: add(format!("gru{l}.{dir}.W_r"), hid + input_dim, hid, false),
                b_r: add(format!("gru{l}.{dir}.b_r"), 1, hid, true),
                w_h: add(format!("gru{l}.{dir}.W"), hid + input_dim, hid, false),
                b_h: add(format!("gru{l}.{dir}.b"), 1, hid, true),
            };
            let fwd = cell("fwd");
            let bwd = cell("bwd");
            gru.push(GruLayerParams { fwd, bwd });
            input_dim = 2 * hid;
        }
    }

    let head_in = cfg.head_input_dim();
    let mlp = MlpParams {
        w1: add("mlp.W1".into(), head_in, cfg.mlp_hidden, false),
        b1: add("mlp.b1".into(), 1, cfg.mlp_hidden, true),
        w2: add("mlp.W2".into(), cfg.mlp_hidden, 1, false),
        b2: add("mlp.b2".into(), 1, 1, true),
    };
    (decls, gat, gru, mlp)
}

impl ModelParams {
    /// Glorot-uniform weights and zero biases from `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let (decls, gat, gru, mlp) = declare(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        for d in decls {
            let m = if d.bias {
                Matrix::zeros(d.rows, d.cols)
            } else {
                let limit = (6.0 / (d.rows + d.cols) as f64).sqrt();
                Matrix::from_fn(d.rows, d.cols, |_, _| rng.random_range(-limit..=limit))
            };
            store.push(d.name, m);
        }
        Self {
            config: config.clone(),
            store,
            gat,
            gru,
            mlp,
        }
    }

    /// Rebuilds parameters from stored tensors, checking names and shapes.
    pub fn from_store(config: &ModelConfig, store: ParamStore) -> Result<Self> {
        let (decls, gat, gru, mlp) = declare(config);
        if decls.len() != store.len() {
            return Err(Error::InvalidCheckpoint(format!(
                "expected {} tensors, found {}",
                decls.len(),
                store.len()
            )));
        }
        for (d, (name, t)) in decls.iter().zip(store.names.iter().zip(&store.tensors)) {
            if &d.name != name || t.shape() != (d.rows, d.cols) {
                return Err(Error::InvalidCheckpoint(format!(
                    "tensor {name} {:?} does not match {} {:?}",
                    t.shape(),
                    d.name,
                    (d.rows, d.cols)
                )));
            }
        }
        Ok(Self {
            config: config.clone(),
            store,
            gat,
            gru,
            mlp,
        })
    }

    pub fn count(&self) -> usize {
        self.store.scalar_count()
    }

    pub fn names(&self) -> &[String] {
        &self.store.names
    }
}

/// Scalar count for a config without allocating the tensors.
pub fn parameter_count(config: &ModelConfig) -> usize {
    declare(config).0.iter().map(|d| d.rows * d.cols).sum()
}

/// One window as the model consumes it.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    pub features: Matrix,
    pub neighbors: Rc<Vec<Vec<usize>>>,
    /// Dense edge weights with unit diagonal.
    pub weights: Matrix,
}

#[derive(Debug, Clone)]
pub struct PreparedSequence {
    pub frames: Vec<PreparedFrame>,
}

impl PreparedSequence {
    pub fn new(seq: &DynamicGraphSequence, scaler: Option<&ScalerStats>) -> Self {
        let frames = seq
            .frames
            .iter()
            .map(|f| {
                let features = match scaler {
                    Some(s) => apply_scaler(&f.features, s),
                    None => f.features.clone(),
                };
                PreparedFrame::new(features, &f.topology)
            })
            .collect();
        Self { frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Same topology, features replaced.
    pub fn with_features(&self, features: &[Matrix]) -> Self {
        Self {
            frames: self
                .frames
                .iter()
                .zip(features)
                .map(|(f, x)| PreparedFrame {
                    features: x.clone(),
                    neighbors: f.neighbors.clone(),
                    weights: f.weights.clone(),
                })
                .collect(),
        }
    }
}

impl PreparedFrame {
    pub fn new(features: Matrix, topology: &GraphTopology) -> Self {
        Self {
            features,
            neighbors: Rc::new(topology.neighbors_with_self_loops()),
            weights: topology.weight_matrix_with_self_loops(),
        }
    }
}

pub enum Mode<'r> {
    Eval,
    Train(&'r mut ChaCha8Rng),
}

/// What to expose for differentiation beyond the parameters.
#[derive(Debug, Clone, Copy, Default)]
pub struct Probes {
    /// Record node features as differentiable inputs.
    pub features: bool,
    /// Insert a differentiable all-ones edge mask per window.
    pub edge_masks: bool,
}

/// A recorded forward pass.
pub struct Trace<'p> {
    pub tape: Tape<'p>,
    pub logit: NodeId,
    /// Per window, when [`Probes::features`] is set.
    pub feature_nodes: Vec<NodeId>,
    /// Per window, when [`Probes::edge_masks`] is set.
    pub mask_nodes: Vec<NodeId>,
    /// Per window, every attention node (layer-major, then head).
    pub attention_nodes: Vec<Vec<NodeId>>,
}

impl Trace<'_> {
    pub fn logit_value(&self) -> f64 {
        self.tape.scalar(self.logit)
    }
}

/// Inverted-dropout keep mask scaled by `1 / (1 - rate)`.
pub fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let keep = 1.0 - rate;
    Matrix::from_fn(rows, cols, |_, _| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
}

fn dropout(tape: &mut Tape, x: NodeId, rate: f64, mode: &mut Mode) -> NodeId {
    match mode {
        Mode::Train(rng) if rate > 0.0 => {
            let (r, c) = tape.shape(x);
            let m = tape.constant(dropout_mask(r, c, rate, rng));
            tape.mul(x, m)
        }
        _ => x,
    }
}

struct GruNodes {
    w_z: NodeId,
    b_z: NodeId,
    w_r: NodeId,
    b_r: NodeId,
    w_h: NodeId,
    b_h: NodeId,
}

impl GruNodes {
    fn new(tape: &mut Tape, p: &GruCellParams) -> Self {
        Self {
            w_z: tape.param(p.w_z),
            b_z: tape.param(p.b_z),
            w_r: tape.param(p.w_r),
            b_r: tape.param(p.b_r),
            w_h: tape.param(p.w_h),
            b_h: tape.param(p.b_h),
        }
    }

    /// z = σ(W_z[h,x]+b_z), r = σ(W_r[h,x]+b_r),
    /// h̃ = tanh(W[r⊙h,x]+b), h = (1−z)⊙h + z⊙h̃.
    fn step(&self, tape: &mut Tape, x: NodeId, h: NodeId) -> NodeId {
        let hx = tape.concat_cols(&[h, x]);
        let z = tape.matmul(hx, self.w_z);
        let z = tape.add_row(z, self.b_z);
        let z = tape.sigmoid(z);
        let r = tape.matmul(hx, self.w_r);
        let r = tape.add_row(r, self.b_r);
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h);
        let rhx = tape.concat_cols(&[rh, x]);
        let cand = tape.matmul(rhx, self.w_h);
        let cand = tape.add_row(cand, self.b_h);
        let cand = tape.tanh(cand);
        let keep = tape.affine(z, -1.0, 1.0);
        let old = tape.mul(keep, h);
        let new = tape.mul(z, cand);
        tape.add(old, new)
    }
}

/// Runs one GRU cell over `xs`, returning the hidden state at every step in
/// input order.
fn run_gru(tape: &mut Tape, cell: &GruNodes, xs: &[NodeId], hidden: usize, reverse: bool) -> Vec<NodeId> {
    let mut h = tape.constant(Matrix::zeros(1, hidden));
    let mut out = vec![h; xs.len()];
    let order: Vec<usize> = if reverse {
        (0..xs.len()).rev().collect()
    } else {
        (0..xs.len()).collect()
    };
    for t in order {
        h = cell.step(tape, xs[t], h);
        out[t] = h;
    }
    out
}

/// Records a full forward pass.
pub fn trace<'p>(params: &'p ModelParams, seq: &PreparedSequence, mut mode: Mode, probes: Probes) -> Result<Trace<'p>> {
    let cfg = &params.config;
    if seq.is_empty() {
        return Err(Error::ShapeMismatch {
            context: "graph sequence windows".into(),
            expected: 1,
            got: 0,
        });
    }
    let mut tape = Tape::new(&params.store);

    // Parameter nodes are shared across windows.
    let gat_nodes: Vec<Vec<(NodeId, NodeId, NodeId)>> = params
        .gat
        .iter()
        .map(|layer| {
            layer
                .heads
                .iter()
                .map(|h| {
                    let w = tape.param(h.w);
                    let a = tape.param(h.a);
                    let a_src = tape.slice_rows(a, 0, layer.out_dim);
                    let a_dst = tape.slice_rows(a, layer.out_dim, layer.out_dim);
                    (w, a_src, a_dst)
                })
                .collect()
        })
        .collect();

    let mut feature_nodes = Vec::new();
    let mut mask_nodes = Vec::new();
    let mut attention_nodes = Vec::new();
    let mut embeddings = Vec::with_capacity(seq.len());
    for frame in &seq.frames {
        let (n, f) = frame.features.shape();
        if f != cfg.n_features {
            return Err(Error::ShapeMismatch {
                context: "node feature columns".into(),
                expected: cfg.n_features,
                got: f,
            });
        }
        if frame.neighbors.len() != n {
            return Err(Error::ShapeMismatch {
                context: "graph nodes".into(),
                expected: n,
                got: frame.neighbors.len(),
            });
        }
        let mut x = if probes.features {
            let id = tape.variable(frame.features.clone());
            feature_nodes.push(id);
            id
        } else {
            tape.constant(frame.features.clone())
        };
        let base_mask = if cfg.edge_weighted_attention {
            frame.weights.clone()
        } else {
            Matrix::filled(n, n, 1.0)
        };
        let mask = if probes.edge_masks {
            let id = tape.variable(base_mask);
            mask_nodes.push(id);
            Some(id)
        } else if cfg.edge_weighted_attention {
            Some(tape.constant(base_mask))
        } else {
            None
        };

        let mut att = Vec::new();
        for heads in &gat_nodes {
            let outs: Vec<NodeId> = heads
                .iter()
                .map(|&(w, a_src, a_dst)| {
                    let wh = tape.matmul(x, w);
                    let s = tape.matmul(wh, a_src);
                    let d = tape.matmul(wh, a_dst);
                    let agg = tape.attention(s, d, wh, mask, frame.neighbors.clone(), cfg.leaky_slope);
                    att.push(agg);
                    tape.elu(agg)
                })
                .collect();
            let h = tape.concat_cols(&outs);
            x = dropout(&mut tape, h, cfg.dropout_backbone, &mut mode);
        }
        attention_nodes.push(att);
        embeddings.push(tape.mean_rows(x));
    }

    let pooled = match cfg.temporal {
        Temporal::Mean => tape.mean_of(&embeddings),
        Temporal::BiGru => {
            let mut xs = embeddings;
            let mut last = None;
            for (l, layer) in params.gru.iter().enumerate() {
                if l > 0 {
                    xs = xs
                        .into_iter()
                        .map(|x| dropout(&mut tape, x, cfg.dropout_backbone, &mut mode))
                        .collect();
                }
                let fwd = GruNodes::new(&mut tape, &layer.fwd);
                let bwd = GruNodes::new(&mut tape, &layer.bwd);
                let hf = run_gru(&mut tape, &fwd, &xs, layer.fwd.hidden, false);
                let hb = run_gru(&mut tape, &bwd, &xs, layer.bwd.hidden, true);
                last = Some((hf[hf.len() - 1], hb[0]));
                xs = hf.iter().zip(&hb).map(|(&a, &b)| tape.concat_cols(&[a, b])).collect();
            }
            let (f, b) = last.expect("at least one GRU layer");
            tape.concat_cols(&[f, b])
        }
    };

    let w1 = tape.param(params.mlp.w1);
    let b1 = tape.param(params.mlp.b1);
    let w2 = tape.param(params.mlp.w2);
    let b2 = tape.param(params.mlp.b2);
    let hid = tape.matmul(pooled, w1);
    let hid = tape.add_row(hid, b1);
    let hid = tape.elu(hid);
    let hid = dropout(&mut tape, hid, cfg.dropout_head, &mut mode);
    let out = tape.matmul(hid, w2);
    let logit = tape.add_row(out, b2);

    Ok(Trace {
        tape,
        logit,
        feature_nodes,
        mask_nodes,
        attention_nodes,
    })
}

/// Output of one GAT layer on its own.
#[derive(Debug, Clone)]
pub struct GatOutput {
    /// `[n × heads·out]` after ELU, heads concatenated.
    pub nodes: Matrix,
    /// Per head, `(i, j, alpha_ij)` for every neighbour pair.
    pub attention: Vec<Vec<(usize, usize, f64)>>,
}

/// Evaluates GAT layer `layer` of `params` on one graph.
pub fn gat_forward(nodes: &Matrix, topology: &GraphTopology, params: &ModelParams, layer: usize) -> Result<GatOutput> {
    let p = &params.gat[layer];
    if nodes.cols() != p.in_dim {
        return Err(Error::ShapeMismatch {
            context: "GAT input columns".into(),
            expected: p.in_dim,
            got: nodes.cols(),
        });
    }
    let neighbors = Rc::new(topology.neighbors_with_self_loops());
    let mut tape = Tape::new(&params.store);
    let x = tape.constant(nodes.clone());
    let mut outs = Vec::new();
    let mut att = Vec::new();
    for h in &p.heads {
        let w = tape.param(h.w);
        let a = tape.param(h.a);
        let a_src = tape.slice_rows(a, 0, p.out_dim);
        let a_dst = tape.slice_rows(a, p.out_dim, p.out_dim);
        let wh = tape.matmul(x, w);
        let s = tape.matmul(wh, a_src);
        let d = tape.matmul(wh, a_dst);
        let agg = tape.attention(s, d, wh, None, neighbors.clone(), params.config.leaky_slope);
        att.push(tape.attention_coefficients(agg).expect("attention node"));
        outs.push(tape.elu(agg));
    }
    let out = tape.concat_cols(&outs);
    Ok(GatOutput {
        nodes: tape.matrix(out),
        attention: att,
    })
}

/// One GRU update with the cell's parameters from `store`.
pub fn gru_step(x: &[f64], h_prev: &[f64], store: &ParamStore, p: &GruCellParams) -> Vec<f64> {
    let mut tape = Tape::new(store);
    let cell = GruNodes::new(&mut tape, p);
    let x = tape.constant(Matrix::from_vec(1, x.len(), x.to_vec()));
    let h = tape.constant(Matrix::from_vec(1, h_prev.len(), h_prev.to_vec()));
    let out = cell.step(&mut tape, x, h);
    tape.value(out).to_vec()
}

pub fn model_forward(seq: &DynamicGraphSequence, params: &ModelParams, mode: Mode) -> Result<f64> {
    forward_prepared(&PreparedSequence::new(seq, None), params, mode)
}

pub fn forward_prepared(seq: &PreparedSequence, params: &ModelParams, mode: Mode) -> Result<f64> {
    Ok(trace(params, seq, mode, Probes::default())?.logit_value())
}

/// Binary cross-entropy on a logit, in the overflow-free form.
pub fn bce_with_logits(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p()
}

/// Weighted loss and parameter gradients for one sequence.
pub fn loss_and_grads(
    params: &ModelParams,
    seq: &PreparedSequence,
    target: f64,
    weight: f64,
    mode: Mode,
) -> Result<(f64, f64, Vec<Matrix>)> {
    let tr = trace(params, seq, mode, Probes::default())?;
    let z = tr.logit_value();
    let loss = weight * bce_with_logits(z, target);
    let g = tr.tape.backward(tr.logit, &[weight * (sigmoid(z) - target)]);
    let mut grads = params.store.zeros_like();
    tr.tape.param_grads(&g, &mut grads);
    Ok((loss, z, grads))
}
