//! Reverse-mode differentiation over an explicit topological node list.
//!
//! Nodes are appended in creation order, so every node sits after its
//! parents and `backward` is a single reverse sweep. Leaves may borrow their
//! payload (model parameters are bound by reference, never copied).

use std::borrow::Cow;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::rng::Rng;
use super::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, matrix_dims, Tensor};
use crate::error::{contract_err, shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    SoftmaxRows(NodeId),
    MaskedSoftmaxRows(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
    },
    Gelu(NodeId),
    Sigmoid(NodeId),
    Log(NodeId),
    Sum(NodeId),
    WeightedSum(NodeId, Vec<f64>),
    SliceCols {
        src: NodeId,
        start: usize,
    },
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    Transpose(NodeId),
    MaskRows(NodeId, Vec<bool>),
    GatherRows(NodeId, Vec<usize>),
    CrossEntropy {
        logits: NodeId,
        label: usize,
    },
}

impl Op {
    fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::MaskedSoftmaxRows(..) => "masked_softmax_rows",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Gelu(..) => "gelu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Log(..) => "log",
            Op::Sum(..) => "sum",
            Op::WeightedSum(..) => "weighted_sum",
            Op::SliceCols { .. } => "slice_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::Transpose(..) => "transpose",
            Op::MaskRows(..) => "mask_rows",
            Op::GatherRows(..) => "gather_rows",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }

    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::SoftmaxRows(a)
            | Op::MaskedSoftmaxRows(a)
            | Op::Gelu(a)
            | Op::Sigmoid(a)
            | Op::Log(a)
            | Op::Sum(a)
            | Op::WeightedSum(a, _)
            | Op::Transpose(a)
            | Op::MaskRows(a, _)
            | Op::GatherRows(a, _) => vec![*a],
            Op::SliceCols { src, .. } => vec![*src],
            Op::LayerNorm { x, gain, bias } => vec![*x, *gain, *bias],
            Op::ConcatCols(v) | Op::ConcatRows(v) => v.clone(),
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

struct Node<'a> {
    shape: Vec<usize>,
    data: Cow<'a, [f64]>,
    grad: Option<Vec<f64>>,
    op: Op,
    requires_grad: bool,
    /// Forward intermediates reused by backward (layer-norm statistics, softmax probabilities).
    cache: Vec<f64>,
}

pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    rng: Rng,
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn gelu_scalar(x: f64) -> f64 {
    x * std_normal_cdf(x)
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row softmax restricted to columns where `mask` is true; masked columns get exactly 0.
pub(crate) fn softmax_row_into(row: &[f64], mask: Option<&[bool]>, out: &mut [f64]) {
    let live = |j: usize| mask.map_or(true, |m| m[j]);
    let mut max = f64::NEG_INFINITY;
    for (j, &v) in row.iter().enumerate() {
        if live(j) && v > max {
            max = v;
        }
    }
    if max == f64::NEG_INFINITY {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let mut sum = 0.0;
    for (j, (&v, o)) in row.iter().zip(out.iter_mut()).enumerate() {
        if live(j) {
            *o = (v - max).exp();
            sum += *o;
        } else {
            *o = 0.0;
        }
    }
    for (j, o) in out.iter_mut().enumerate() {
        if live(j) {
            *o /= sum;
        }
    }
}

fn grad_slot<'s>(
    scratch: &'s mut [Option<Vec<f64>>],
    nodes: &[Node<'_>],
    p: NodeId,
) -> &'s mut Vec<f64> {
    let len = nodes[p.0].data.len();
    scratch[p.0].get_or_insert_with(|| vec![0.0; len])
}

impl<'a> Default for Graph<'a> {
    fn default() -> Self {
        Graph::new(0)
    }
}

impl<'a> Graph<'a> {
    pub fn new(seed: u64) -> Self {
        Graph {
            nodes: Vec::new(),
            rng: Rng::seed_from_u64(seed),
        }
    }

    pub fn with_rng(rng: Rng) -> Self {
        Graph {
            nodes: Vec::new(),
            rng,
        }
    }

    pub fn rng_mut(&mut self) -> &mut Rng {
        &mut self.rng
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, cache: Vec<f64>) -> NodeId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            shape,
            data: Cow::Owned(data),
            grad: None,
            op,
            requires_grad,
            cache,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> NodeId {
        let shape = t.shape().to_vec();
        self.nodes.push(Node {
            shape,
            data: Cow::Owned(t.into_data()),
            grad: None,
            op: Op::Leaf,
            requires_grad,
            cache: Vec::new(),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.leaf(t, false)
    }

    pub fn variable(&mut self, t: Tensor) -> NodeId {
        self.leaf(t, true)
    }

    /// Leaf borrowing an existing tensor's storage.
    pub fn leaf_ref(&mut self, t: &'a Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            data: Cow::Borrowed(t.data()),
            grad: None,
            op: Op::Leaf,
            requires_grad,
            cache: Vec::new(),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn dims(&self, id: NodeId) -> (usize, usize) {
        matrix_dims(&self.nodes[id.0].shape)
    }

    pub fn tensor(&self, id: NodeId) -> Tensor {
        Tensor::new(
            self.nodes[id.0].shape.clone(),
            self.nodes[id.0].data.to_vec(),
        )
        .expect("node shape is consistent")
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].data[0]
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn op_tag(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.tag()
    }

    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.parents()
    }

    /// Accumulated gradient, `None` until a backward pass reached the node.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn grad_or_zeros(&self, id: NodeId) -> Vec<f64> {
        match &self.nodes[id.0].grad {
            Some(g) => g.clone(),
            None => vec![0.0; self.nodes[id.0].data.len()],
        }
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    // ----- forward operations -----

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(shape_err(format!(
                "matmul {:?} x {:?}: inner extents differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(self.value(a), self.value(b), &mut out, m, k, n);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), Vec::new()))
    }

    fn same_len(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(format!(
                "{what} {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len(a, b, "add")?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a, b), Vec::new()))
    }

    /// `a [m×n] + b [n]`, broadcasting `b` over rows.
    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, n) = self.dims(a);
        if self.value(b).len() != n {
            return Err(shape_err(format!(
                "add_row {:?} + {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let bv = self.value(b);
        let av = self.value(a);
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            out.extend(av[i * n..(i + 1) * n].iter().zip(bv).map(|(x, y)| x + y));
        }
        Ok(self.push(self.shape(a).to_vec(), out, Op::AddRow(a, b), Vec::new()))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len(a, b, "mul")?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul(a, b), Vec::new()))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let out = self.value(a).iter().map(|x| x * c).collect();
        self.push(self.shape(a).to_vec(), out, Op::Scale(a, c), Vec::new())
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let out = self.value(a).iter().map(|x| x + c).collect();
        self.push(self.shape(a).to_vec(), out, Op::AddScalar(a), Vec::new())
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let (m, n) = self.dims(a);
        let mut out = vec![0.0; m * n];
        let av = self.value(a);
        for i in 0..m {
            softmax_row_into(&av[i * n..(i + 1) * n], None, &mut out[i * n..(i + 1) * n]);
        }
        self.push(self.shape(a).to_vec(), out, Op::SoftmaxRows(a), Vec::new())
    }

    /// Softmax over the columns flagged in `col_mask`; other columns are exactly 0.
    pub fn masked_softmax_rows(&mut self, a: NodeId, col_mask: &[bool]) -> Result<NodeId> {
        let (m, n) = self.dims(a);
        if col_mask.len() != n {
            return Err(shape_err(format!(
                "masked_softmax_rows: {} columns, mask of {}",
                n,
                col_mask.len()
            )));
        }
        let mut out = vec![0.0; m * n];
        let av = self.value(a);
        for i in 0..m {
            softmax_row_into(
                &av[i * n..(i + 1) * n],
                Some(col_mask),
                &mut out[i * n..(i + 1) * n],
            );
        }
        Ok(self.push(
            self.shape(a).to_vec(),
            out,
            Op::MaskedSoftmaxRows(a),
            Vec::new(),
        ))
    }

    /// Per-row normalization to zero mean, unit (population) variance, then `gain ⊙ x̂ + bias`.
    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: f64,
    ) -> Result<NodeId> {
        let (m, d) = self.dims(x);
        if self.value(gain).len() != d || self.value(bias).len() != d {
            return Err(shape_err(format!(
                "layer_norm over width {d} with gain {:?}, bias {:?}",
                self.shape(gain),
                self.shape(bias)
            )));
        }
        let xv = self.value(x);
        let g = self.value(gain);
        let b = self.value(bias);
        let mut out = vec![0.0; m * d];
        let mut cache = vec![0.0; m * d + m];
        for i in 0..m {
            let row = &xv[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv_std = 1.0 / (var + eps).sqrt();
            for j in 0..d {
                let xh = (row[j] - mean) * inv_std;
                cache[i * d + j] = xh;
                out[i * d + j] = g[j] * xh + b[j];
            }
            cache[m * d + i] = inv_std;
        }
        Ok(self.push(
            self.shape(x).to_vec(),
            out,
            Op::LayerNorm { x, gain, bias },
            cache,
        ))
    }

    /// Exact-erf GeLU, `x·Φ(x)`.
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).iter().map(|&x| gelu_scalar(x)).collect();
        self.push(self.shape(a).to_vec(), out, Op::Gelu(a), Vec::new())
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).iter().map(|&x| sigmoid_scalar(x)).collect();
        self.push(self.shape(a).to_vec(), out, Op::Sigmoid(a), Vec::new())
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).iter().map(|x| x.ln()).collect();
        self.push(self.shape(a).to_vec(), out, Op::Log(a), Vec::new())
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).iter().sum();
        self.push(vec![1], vec![s], Op::Sum(a), Vec::new())
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// `Σ_i w_i · a_i` with constant weights.
    pub fn weighted_sum(&mut self, a: NodeId, weights: &[f64]) -> Result<NodeId> {
        if weights.len() != self.value(a).len() {
            return Err(shape_err(format!(
                "weighted_sum: {} weights for {:?}",
                weights.len(),
                self.shape(a)
            )));
        }
        let s = self.value(a).iter().zip(weights).map(|(x, w)| x * w).sum();
        Ok(self.push(
            vec![1],
            vec![s],
            Op::WeightedSum(a, weights.to_vec()),
            Vec::new(),
        ))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (m, n) = self.dims(a);
        if start + len > n {
            return Err(shape_err(format!(
                "slice_cols {start}..{} of {:?}",
                start + len,
                self.shape(a)
            )));
        }
        let av = self.value(a);
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&av[i * n + start..i * n + start + len]);
        }
        Ok(self.push(
            vec![m, len],
            out,
            Op::SliceCols { src: a, start },
            Vec::new(),
        ))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let m = self.dims(parts[0]).0;
        let mut total = 0;
        for &p in parts {
            let (pm, pn) = self.dims(p);
            if pm != m {
                return Err(shape_err(format!(
                    "concat_cols: {:?} vs {m} rows",
                    self.shape(p)
                )));
            }
            total += pn;
        }
        let mut out = vec![0.0; m * total];
        let mut offset = 0;
        for &p in parts {
            let (_, pn) = self.dims(p);
            let pv = self.value(p);
            for i in 0..m {
                out[i * total + offset..i * total + offset + pn]
                    .copy_from_slice(&pv[i * pn..(i + 1) * pn]);
            }
            offset += pn;
        }
        Ok(self.push(
            vec![m, total],
            out,
            Op::ConcatCols(parts.to_vec()),
            Vec::new(),
        ))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let n = self.dims(parts[0]).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (pm, pn) = self.dims(p);
            if pn != n {
                return Err(shape_err(format!(
                    "concat_rows: {:?} vs {n} columns",
                    self.shape(p)
                )));
            }
            rows += pm;
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(
            vec![rows, n],
            out,
            Op::ConcatRows(parts.to_vec()),
            Vec::new(),
        ))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (m, n) = self.dims(a);
        let av = self.value(a);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = av[i * n + j];
            }
        }
        self.push(vec![n, m], out, Op::Transpose(a), Vec::new())
    }

    /// Zeroes every row whose flag is false.
    pub fn mask_rows(&mut self, a: NodeId, row_mask: &[bool]) -> Result<NodeId> {
        let (m, n) = self.dims(a);
        if row_mask.len() != m {
            return Err(shape_err(format!(
                "mask_rows: {m} rows, mask of {}",
                row_mask.len()
            )));
        }
        let mut out = self.value(a).to_vec();
        for (i, &keep) in row_mask.iter().enumerate() {
            if !keep {
                out[i * n..(i + 1) * n].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Ok(self.push(
            self.shape(a).to_vec(),
            out,
            Op::MaskRows(a, row_mask.to_vec()),
            Vec::new(),
        ))
    }

    /// Rows of `a` selected (with repetition allowed) by `index`.
    pub fn gather_rows(&mut self, a: NodeId, index: &[usize]) -> Result<NodeId> {
        let (m, n) = self.dims(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= m) {
            return Err(shape_err(format!("gather_rows: row {bad} of {m}")));
        }
        let av = self.value(a);
        let mut out = Vec::with_capacity(index.len() * n);
        for &i in index {
            out.extend_from_slice(&av[i * n..(i + 1) * n]);
        }
        Ok(self.push(
            vec![index.len(), n],
            out,
            Op::GatherRows(a, index.to_vec()),
            Vec::new(),
        ))
    }

    pub fn row(&mut self, a: NodeId, i: usize) -> Result<NodeId> {
        self.gather_rows(a, &[i])
    }

    /// `-ln softmax(logits)[label]`, logits flattened.
    pub fn cross_entropy(&mut self, logits: NodeId, label: usize) -> Result<NodeId> {
        let lv = self.value(logits);
        if label >= lv.len() {
            return Err(shape_err(format!(
                "cross_entropy: label {label} with {} classes",
                lv.len()
            )));
        }
        let mut probs = vec![0.0; lv.len()];
        softmax_row_into(lv, None, &mut probs);
        let max = lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + lv.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - lv[label];
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::CrossEntropy { logits, label },
            probs,
        ))
    }

    // ----- reverse sweep -----

    /// Accumulates `∂root/∂node` into every node on a path from a
    /// gradient-requiring leaf to `root`. Repeated calls add up.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if self.nodes[root.0].data.len() != 1 {
            return Err(contract_err(format!(
                "backward needs a scalar root, got shape {:?}",
                self.nodes[root.0].shape
            )));
        }
        let mut scratch: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        scratch[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = scratch[i].take() else {
                continue;
            };
            self.propagate(i, &g, &mut scratch);
            scratch[i] = Some(g);
        }
        for (i, s) in scratch.into_iter().enumerate() {
            if let Some(g) = s {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => node.grad = Some(g),
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], scratch: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let node = &nodes[i];
        let wants = |p: NodeId| nodes[p.0].requires_grad;
        macro_rules! acc {
            ($p:expr) => {
                grad_slot(scratch, nodes, $p)
            };
        }
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = matrix_dims(&nodes[a.0].shape);
                let (_, n) = matrix_dims(&nodes[b.0].shape);
                if wants(*a) {
                    gemm_nt_acc(g, &nodes[b.0].data, acc!(*a), m, n, k);
                }
                if wants(*b) {
                    gemm_tn_acc(&nodes[a.0].data, g, acc!(*b), m, k, n);
                }
            }
            Op::Add(a, b) => {
                for p in [*a, *b] {
                    if wants(p) {
                        acc!(p).iter_mut().zip(g).for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::AddRow(a, b) => {
                if wants(*a) {
                    acc!(*a).iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                if wants(*b) {
                    let n = nodes[b.0].data.len();
                    let gb = acc!(*b);
                    for chunk in g.chunks(n) {
                        gb.iter_mut().zip(chunk).for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    let bv = &nodes[b.0].data;
                    let ga = acc!(*a);
                    for j in 0..g.len() {
                        ga[j] += g[j] * bv[j];
                    }
                }
                if wants(*b) {
                    let av = &nodes[a.0].data;
                    let gb = acc!(*b);
                    for j in 0..g.len() {
                        gb[j] += g[j] * av[j];
                    }
                }
            }
            Op::Scale(a, c) => {
                if wants(*a) {
                    acc!(*a).iter_mut().zip(g).for_each(|(x, y)| *x += c * y);
                }
            }
            Op::AddScalar(a) => {
                if wants(*a) {
                    acc!(*a).iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
            }
            Op::SoftmaxRows(a) | Op::MaskedSoftmaxRows(a) => {
                if wants(*a) {
                    let (m, n) = matrix_dims(&node.shape);
                    let y = &node.data;
                    let ga = acc!(*a);
                    for r in 0..m {
                        let yr = &y[r * n..(r + 1) * n];
                        let gr = &g[r * n..(r + 1) * n];
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for j in 0..n {
                            ga[r * n + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::LayerNorm { x, gain, bias } => {
                let (m, d) = matrix_dims(&node.shape);
                let xhat = &node.cache[..m * d];
                let inv_std = &node.cache[m * d..];
                let gv = &nodes[gain.0].data;
                if wants(*x) {
                    let gx = acc!(*x);
                    let mut dxh = vec![0.0; d];
                    for r in 0..m {
                        let gr = &g[r * d..(r + 1) * d];
                        let xr = &xhat[r * d..(r + 1) * d];
                        for j in 0..d {
                            dxh[j] = gr[j] * gv[j];
                        }
                        let s1: f64 = dxh.iter().sum();
                        let s2: f64 = dxh.iter().zip(xr).map(|(p, q)| p * q).sum();
                        let scale = inv_std[r] / d as f64;
                        for j in 0..d {
                            gx[r * d + j] += scale * (d as f64 * dxh[j] - s1 - xr[j] * s2);
                        }
                    }
                }
                if wants(*gain) {
                    let gg = acc!(*gain);
                    for r in 0..m {
                        for j in 0..d {
                            gg[j] += g[r * d + j] * xhat[r * d + j];
                        }
                    }
                }
                if wants(*bias) {
                    let gb = acc!(*bias);
                    for r in 0..m {
                        for j in 0..d {
                            gb[j] += g[r * d + j];
                        }
                    }
                }
            }
            Op::Gelu(a) => {
                if wants(*a) {
                    let av = &nodes[a.0].data;
                    let ga = acc!(*a);
                    for j in 0..g.len() {
                        let x = av[j];
                        ga[j] += g[j] * (std_normal_cdf(x) + x * std_normal_pdf(x));
                    }
                }
            }
            Op::Sigmoid(a) => {
                if wants(*a) {
                    let y = &node.data;
                    let ga = acc!(*a);
                    for j in 0..g.len() {
                        ga[j] += g[j] * y[j] * (1.0 - y[j]);
                    }
                }
            }
            Op::Log(a) => {
                if wants(*a) {
                    let av = &nodes[a.0].data;
                    let ga = acc!(*a);
                    for j in 0..g.len() {
                        ga[j] += g[j] / av[j];
                    }
                }
            }
            Op::Sum(a) => {
                if wants(*a) {
                    acc!(*a).iter_mut().for_each(|x| *x += g[0]);
                }
            }
            Op::WeightedSum(a, w) => {
                if wants(*a) {
                    acc!(*a)
                        .iter_mut()
                        .zip(w)
                        .for_each(|(x, wi)| *x += g[0] * wi);
                }
            }
            Op::SliceCols { src, start } => {
                if wants(*src) {
                    let (m, len) = matrix_dims(&node.shape);
                    let (_, n) = matrix_dims(&nodes[src.0].shape);
                    let gs = acc!(*src);
                    for r in 0..m {
                        for j in 0..len {
                            gs[r * n + start + j] += g[r * len + j];
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let (m, total) = matrix_dims(&node.shape);
                let mut offset = 0;
                for &p in parts {
                    let (_, pn) = matrix_dims(&nodes[p.0].shape);
                    if wants(p) {
                        let gp = acc!(p);
                        for r in 0..m {
                            for j in 0..pn {
                                gp[r * pn + j] += g[r * total + offset + j];
                            }
                        }
                    }
                    offset += pn;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = nodes[p.0].data.len();
                    if wants(p) {
                        acc!(p)
                            .iter_mut()
                            .zip(&g[offset..offset + len])
                            .for_each(|(x, y)| *x += y);
                    }
                    offset += len;
                }
            }
            Op::Transpose(a) => {
                if wants(*a) {
                    let (m, n) = matrix_dims(&nodes[a.0].shape);
                    let ga = acc!(*a);
                    for r in 0..m {
                        for c in 0..n {
                            ga[r * n + c] += g[c * m + r];
                        }
                    }
                }
            }
            Op::MaskRows(a, mask) => {
                if wants(*a) {
                    let (_, n) = matrix_dims(&node.shape);
                    let ga = acc!(*a);
                    for (r, &keep) in mask.iter().enumerate() {
                        if keep {
                            for j in 0..n {
                                ga[r * n + j] += g[r * n + j];
                            }
                        }
                    }
                }
            }
            Op::GatherRows(a, index) => {
                if wants(*a) {
                    let (_, n) = matrix_dims(&node.shape);
                    let ga = acc!(*a);
                    for (r, &src) in index.iter().enumerate() {
                        for j in 0..n {
                            ga[src * n + j] += g[r * n + j];
                        }
                    }
                }
            }
            Op::CrossEntropy { logits, label } => {
                if wants(*logits) {
                    let probs = &node.cache;
                    let gl = acc!(*logits);
                    for j in 0..probs.len() {
                        let onehot = if j == *label { 1.0 } else { 0.0 };
                        gl[j] += g[0] * (probs[j] - onehot);
                    }
                }
            }
        }
    }
}
