//! Reverse-mode differentiation over 2-D `f64` values.
//!
//! A [`Tape`] records nodes in evaluation order; [`Tape::backward`] walks it
//! in reverse accumulating vector-Jacobian products. Parameters are read in
//! place from a [`ParamStore`] so building a graph never copies weights.
//! Nodes that cannot reach a parameter or a gradient-tracked leaf are
//! skipped on the way back.

use std::rc::Rc;

use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Named parameter tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    pub names: Vec<String>,
    pub tensors: Vec<Matrix>,
}

impl ParamStore {
    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        self.names.push(name.into());
        self.tensors.push(value);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.rows() * t.cols()).sum()
    }

    pub fn zeros_like(&self) -> Vec<Matrix> {
        self.tensors
            .iter()
            .map(|t| Matrix::zeros(t.rows(), t.cols()))
            .collect()
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// `a + bias` with a `1 × cols` bias broadcast over rows.
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `scale * a + shift`; only the scale matters on the way back.
    Affine(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Elu(NodeId),
    LeakyRelu(NodeId, f64),
    ConcatCols(Vec<NodeId>),
    SliceRows(NodeId, usize),
    MeanRows(NodeId),
    MeanOf(Vec<NodeId>),
    Attention(AttentionOp),
}

#[derive(Debug, Clone)]
struct AttentionOp {
    src: NodeId,
    dst: NodeId,
    values: NodeId,
    mask: Option<NodeId>,
    neighbors: Rc<Vec<Vec<usize>>>,
    slope: f64,
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    /// Attention coefficients in neighbour-list order.
    cache: Vec<f64>,
    needs_grad: bool,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

/// Gradients from one backward pass.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `c += a · b` for row-major `a: m×k`, `b: k×n`.
fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(1024),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>, needs_grad: bool) -> NodeId {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        debug_assert!(value.iter().all(|v| v.is_finite()), "non-finite forward value");
        self.nodes.push(Node {
            op,
            rows,
            cols,
            value,
            cache: Vec::new(),
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        let node = &self.nodes[id.0];
        match node.op {
            Op::Param(i) => self.params.tensors[i].as_slice(),
            _ => &node.value,
        }
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn matrix(&self, id: NodeId) -> Matrix {
        let (r, c) = self.shape(id);
        Matrix::from_vec(r, c, self.value(id).to_vec())
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id)[0]
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Constant input; no gradient.
    pub fn constant(&mut self, m: Matrix) -> NodeId {
        let (r, c) = m.shape();
        self.push(Op::Leaf, r, c, m.into_vec(), false)
    }

    /// Input whose gradient is reported by [`Gradients::get`].
    pub fn variable(&mut self, m: Matrix) -> NodeId {
        let (r, c) = m.shape();
        self.push(Op::Leaf, r, c, m.into_vec(), true)
    }

    pub fn param(&mut self, index: usize) -> NodeId {
        let (r, c) = self.params.tensors[index].shape();
        self.push(Op::Param(index), r, c, Vec::new(), true)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dimension");
        let mut out = vec![0.0; m * n];
        matmul_acc(self.value(a), self.value(b), &mut out, m, k, n);
        let ng = self.needs(a) || self.needs(b);
        self.push(Op::MatMul(a, b), m, n, out, ng)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "add shape");
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let (r, c) = self.shape(a);
        let ng = self.needs(a) || self.needs(b);
        self.push(Op::Add(a, b), r, c, out, ng)
    }

    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(bias), (1, c), "bias shape");
        let bv = self.value(bias);
        let out = self
            .value(a)
            .chunks(c)
            .flat_map(|row| row.iter().zip(bv).map(|(x, b)| x + b))
            .collect();
        let ng = self.needs(a) || self.needs(bias);
        self.push(Op::AddRow(a, bias), r, c, out, ng)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "mul shape");
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let (r, c) = self.shape(a);
        let ng = self.needs(a) || self.needs(b);
        self.push(Op::Mul(a, b), r, c, out, ng)
    }

    pub fn affine(&mut self, a: NodeId, scale: f64, shift: f64) -> NodeId {
        let out = self.value(a).iter().map(|x| scale * x + shift).collect();
        let (r, c) = self.shape(a);
        let ng = self.needs(a);
        self.push(Op::Affine(a, scale), r, c, out, ng)
    }

    fn unary(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let (r, c) = self.shape(a);
        let ng = self.needs(a);
        self.push(op, r, c, out, ng)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    /// ELU with alpha = 1.
    pub fn elu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Elu(a), |x| if x > 0.0 { x } else { x.exp_m1() })
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        self.unary(a, Op::LeakyRelu(a, slope), |x| if x > 0.0 { x } else { slope * x })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let (pr, pc) = self.shape(p);
                assert_eq!(pr, rows, "concat row count");
                out.extend_from_slice(&self.value(p)[r * pc..(r + 1) * pc]);
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(Op::ConcatCols(parts.to_vec()), rows, cols, out, ng)
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let (r, c) = self.shape(a);
        assert!(start + len <= r, "row slice out of range");
        let out = self.value(a)[start * c..(start + len) * c].to_vec();
        let ng = self.needs(a);
        self.push(Op::SliceRows(a, start), len, c, out, ng)
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let mut out = vec![0.0; c];
        for row in self.value(a).chunks(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= r as f64;
        }
        let ng = self.needs(a);
        self.push(Op::MeanRows(a), 1, c, out, ng)
    }

    /// Elementwise mean of equally shaped nodes.
    pub fn mean_of(&mut self, parts: &[NodeId]) -> NodeId {
        let (r, c) = self.shape(parts[0]);
        let mut out = vec![0.0; r * c];
        for &p in parts {
            for (o, v) in out.iter_mut().zip(self.value(p)) {
                *o += v;
            }
        }
        let k = parts.len() as f64;
        for o in &mut out {
            *o /= k;
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(Op::MeanOf(parts.to_vec()), r, c, out, ng)
    }

    /// Masked neighbourhood attention:
    /// `alpha_ij = softmax_j(LeakyReLU(src_i + dst_j))` over `j` in
    /// `neighbors[i]`, then `out_i = sum_j alpha_ij * m_ij * values_j` where
    /// `m` is the optional `n × n` multiplicative edge mask.
    pub fn attention(
        &mut self,
        src: NodeId,
        dst: NodeId,
        values: NodeId,
        mask: Option<NodeId>,
        neighbors: Rc<Vec<Vec<usize>>>,
        slope: f64,
    ) -> NodeId {
        let (n, f) = self.shape(values);
        assert_eq!(self.shape(src), (n, 1));
        assert_eq!(self.shape(dst), (n, 1));
        assert_eq!(neighbors.len(), n);
        if let Some(m) = mask {
            assert_eq!(self.shape(m), (n, n));
        }
        let s = self.value(src);
        let d = self.value(dst);
        let v = self.value(values);
        let mv = mask.map(|m| self.value(m));
        let mut alpha = Vec::new();
        let mut out = vec![0.0; n * f];
        for i in 0..n {
            let nb = &neighbors[i];
            let start = alpha.len();
            let mut max = f64::NEG_INFINITY;
            for &j in nb {
                let u = s[i] + d[j];
                let e = if u > 0.0 { u } else { slope * u };
                max = max.max(e);
                alpha.push(e);
            }
            let mut z = 0.0;
            for a in &mut alpha[start..] {
                *a = (*a - max).exp();
                z += *a;
            }
            let orow = &mut out[i * f..(i + 1) * f];
            for (k, &j) in nb.iter().enumerate() {
                let a = alpha[start + k] / z;
                alpha[start + k] = a;
                let w = a * mv.map_or(1.0, |m| m[i * n + j]);
                for (o, x) in orow.iter_mut().zip(&v[j * f..(j + 1) * f]) {
                    *o += w * x;
                }
            }
        }
        let ng = self.needs(src) || self.needs(dst) || self.needs(values) || mask.is_some_and(|m| self.needs(m));
        let id = self.push(
            Op::Attention(AttentionOp {
                src,
                dst,
                values,
                mask,
                neighbors,
                slope,
            }),
            n,
            f,
            out,
            ng,
        );
        self.nodes[id.0].cache = alpha;
        id
    }

    /// Attention coefficients of an attention node as `(i, j, alpha)` rows.
    pub fn attention_coefficients(&self, id: NodeId) -> Option<Vec<(usize, usize, f64)>> {
        let node = &self.nodes[id.0];
        let Op::Attention(op) = &node.op else {
            return None;
        };
        let mut out = Vec::with_capacity(node.cache.len());
        let mut k = 0;
        for (i, nb) in op.neighbors.iter().enumerate() {
            for &j in nb {
                out.push((i, j, node.cache[k]));
                k += 1;
            }
        }
        Some(out)
    }

    /// Backpropagates `seed` (shaped like `output`).
    pub fn backward(&self, output: NodeId, seed: &[f64]) -> Gradients {
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed.to_vec());
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = node.cols;
                let av = self.value(*a);
                let bv = self.value(*b);
                if self.needs(*a) {
                    // dA = dC · Bᵀ
                    let da = accumulate(&mut grads[a.0], m * k);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            da[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if self.needs(*b) {
                    // dB = Aᵀ · dC
                    let db = accumulate(&mut grads[b.0], k * n);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let a_ip = av[i * k + p];
                            if a_ip == 0.0 {
                                continue;
                            }
                            for (d, x) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += a_ip * x;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for id in [a, b] {
                    if self.needs(*id) {
                        let d = accumulate(&mut grads[id.0], g.len());
                        for (x, y) in d.iter_mut().zip(g) {
                            *x += y;
                        }
                    }
                }
            }
            Op::AddRow(a, bias) => {
                if self.needs(*a) {
                    let d = accumulate(&mut grads[a.0], g.len());
                    for (x, y) in d.iter_mut().zip(g) {
                        *x += y;
                    }
                }
                if self.needs(*bias) {
                    let c = node.cols;
                    let d = accumulate(&mut grads[bias.0], c);
                    for row in g.chunks(c) {
                        for (x, y) in d.iter_mut().zip(row) {
                            *x += y;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let d = accumulate(&mut grads[a.0], g.len());
                    for ((x, gy), y) in d.iter_mut().zip(g).zip(bv) {
                        *x += gy * y;
                    }
                }
                if self.needs(*b) {
                    let d = accumulate(&mut grads[b.0], g.len());
                    for ((x, gy), y) in d.iter_mut().zip(g).zip(av) {
                        *x += gy * y;
                    }
                }
            }
            Op::Affine(a, scale) => {
                let d = accumulate(&mut grads[a.0], g.len());
                for (x, gy) in d.iter_mut().zip(g) {
                    *x += scale * gy;
                }
            }
            Op::Sigmoid(a) => {
                let d = accumulate(&mut grads[a.0], g.len());
                for ((x, gy), y) in d.iter_mut().zip(g).zip(&node.value) {
                    *x += gy * y * (1.0 - y);
                }
            }
            Op::Tanh(a) => {
                let d = accumulate(&mut grads[a.0], g.len());
                for ((x, gy), y) in d.iter_mut().zip(g).zip(&node.value) {
                    *x += gy * (1.0 - y * y);
                }
            }
            Op::Elu(a) => {
                let d = accumulate(&mut grads[a.0], g.len());
                for ((x, gy), y) in d.iter_mut().zip(g).zip(&node.value) {
                    *x += if *y > 0.0 { *gy } else { gy * (y + 1.0) };
                }
            }
            Op::LeakyRelu(a, slope) => {
                let input = self.value(*a);
                let d = accumulate(&mut grads[a.0], g.len());
                for ((x, gy), u) in d.iter_mut().zip(g).zip(input) {
                    *x += if *u > 0.0 { *gy } else { slope * gy };
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let (_, pc) = self.shape(*p);
                    if self.needs(*p) {
                        let d = accumulate(&mut grads[p.0], node.rows * pc);
                        for r in 0..node.rows {
                            let src = &g[r * node.cols + offset..r * node.cols + offset + pc];
                            for (x, y) in d[r * pc..(r + 1) * pc].iter_mut().zip(src) {
                                *x += y;
                            }
                        }
                    }
                    offset += pc;
                }
            }
            Op::SliceRows(a, start) => {
                let (r, c) = self.shape(*a);
                let d = accumulate(&mut grads[a.0], r * c);
                for (x, y) in d[start * c..].iter_mut().zip(g) {
                    *x += y;
                }
            }
            Op::MeanRows(a) => {
                let (r, c) = self.shape(*a);
                let d = accumulate(&mut grads[a.0], r * c);
                for row in d.chunks_mut(c) {
                    for (x, y) in row.iter_mut().zip(g) {
                        *x += y / r as f64;
                    }
                }
            }
            Op::MeanOf(parts) => {
                let k = parts.len() as f64;
                for p in parts {
                    if self.needs(*p) {
                        let d = accumulate(&mut grads[p.0], g.len());
                        for (x, y) in d.iter_mut().zip(g) {
                            *x += y / k;
                        }
                    }
                }
            }
            Op::Attention(op) => self.attention_backward(node, op, g, grads),
        }
    }

    fn attention_backward(&self, node: &Node, op: &AttentionOp, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let (n, f) = (node.rows, node.cols);
        let s = self.value(op.src);
        let d = self.value(op.dst);
        let v = self.value(op.values);
        let mv = op.mask.map(|m| self.value(m));
        let alpha = &node.cache;

        let mut d_src = vec![0.0; n];
        let mut d_dst = vec![0.0; n];
        let mut d_vals = vec![0.0; n * f];
        let mut d_mask = vec![0.0; if op.mask.is_some() { n * n } else { 0 }];

        let mut k0 = 0;
        let mut dalpha: Vec<f64> = Vec::new();
        for i in 0..n {
            let nb = &op.neighbors[i];
            let grow = &g[i * f..(i + 1) * f];
            dalpha.clear();
            for (k, &j) in nb.iter().enumerate() {
                let a = alpha[k0 + k];
                let m = mv.map_or(1.0, |m| m[i * n + j]);
                let vj = &v[j * f..(j + 1) * f];
                let gv: f64 = grow.iter().zip(vj).map(|(x, y)| x * y).sum();
                for (dv, gy) in d_vals[j * f..(j + 1) * f].iter_mut().zip(grow) {
                    *dv += a * m * gy;
                }
                if op.mask.is_some() {
                    d_mask[i * n + j] += a * gv;
                }
                dalpha.push(m * gv);
            }
            // Softmax Jacobian.
            let dot: f64 = dalpha.iter().enumerate().map(|(k, da)| alpha[k0 + k] * da).sum();
            for (k, &j) in nb.iter().enumerate() {
                let a = alpha[k0 + k];
                let de = a * (dalpha[k] - dot);
                let u = s[i] + d[j];
                let du = if u > 0.0 { de } else { op.slope * de };
                d_src[i] += du;
                d_dst[j] += du;
            }
            k0 += nb.len();
        }

        let mut add = |id: NodeId, vals: &[f64]| {
            if self.needs(id) {
                let dst = accumulate(&mut grads[id.0], vals.len());
                for (x, y) in dst.iter_mut().zip(vals) {
                    *x += y;
                }
            }
        };
        add(op.src, &d_src);
        add(op.dst, &d_dst);
        add(op.values, &d_vals);
        if let Some(m) = op.mask {
            add(m, &d_mask);
        }
    }

    /// Sums gradients of every parameter node into per-parameter buffers.
    pub fn param_grads(&self, grads: &Gradients, into: &mut [Matrix]) {
        for (idx, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(p), Some(g)) = (&node.op, &grads.grads[idx]) {
                for (x, y) in into[*p].as_mut_slice().iter_mut().zip(g) {
                    *x += y;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[(usize, usize, Vec<f64>)]) -> ParamStore {
        let mut s = ParamStore::default();
        for (i, (r, c, v)) in values.iter().enumerate() {
            s.push(format!("p{i}"), Matrix::from_vec(*r, *c, v.clone()));
        }
        s
    }

    #[test]
    fn square_gradient() {
        let params = store(&[(1, 1, vec![3.0])]);
        let mut t = Tape::new(&params);
        let w = t.param(0);
        let y = t.mul(w, w);
        assert_eq!(t.scalar(y), 9.0);
        let g = t.backward(y, &[1.0]);
        let mut out = params.zeros_like();
        t.param_grads(&g, &mut out);
        assert_eq!(out[0].get(0, 0), 6.0);
    }

    #[test]
    fn constants_get_no_gradient() {
        let params = store(&[(2, 1, vec![1.0, 2.0])]);
        let mut t = Tape::new(&params);
        let x = t.constant(Matrix::from_vec(1, 2, vec![3.0, 4.0]));
        let w = t.param(0);
        let y = t.matmul(x, w);
        assert_eq!(t.scalar(y), 11.0);
        let g = t.backward(y, &[1.0]);
        assert!(g.get(x).is_none());
        assert_eq!(g.get(w).unwrap(), &[3.0, 4.0]);
    }

    #[test]
    fn attention_single_self_loop() {
        let params = ParamStore::default();
        let mut t = Tape::new(&params);
        let s = t.constant(Matrix::from_vec(2, 1, vec![0.3, -1.0]));
        let d = t.constant(Matrix::from_vec(2, 1, vec![0.1, 0.2]));
        let v = t.constant(Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let nb = Rc::new(vec![vec![0], vec![0, 1]]);
        let out = t.attention(s, d, v, None, nb, 0.2);
        let o = t.value(out);
        assert_eq!(&o[..2], &[1.0, 2.0]);
        let coeffs = t.attention_coefficients(out).unwrap();
        assert_eq!(coeffs[0], (0, 0, 1.0));
        let row1: f64 = coeffs.iter().filter(|c| c.0 == 1).map(|c| c.2).sum();
        assert!((row1 - 1.0).abs() < 1e-12);
    }
}
