//! Recording tape: forward ops append nodes, `backward` replays the record
//! in exact reverse order and accumulates gradients additively.
//!
//! A tape covers one computation (one sample's loss, one encoded item).
//! Parameters stay outside the tape in a [`ParamSet`]; small parameters are
//! leafed onto the tape by copy, embedding tables are read in place through
//! gather ops. Tapes are single-threaded; run independent samples on
//! independent tapes and merge their gradients through [`GradAccumulator`].

use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::ParamSet;
use crate::{Result, TensorError};

/// Handle to a value on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op<S: Scalar> {
    Const,
    ParamLeaf { param: usize },
    EmbedLookup { param: usize, ids: Vec<usize> },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { a: NodeId, c: S },
    AddRowBroadcast { a: NodeId, bias: NodeId },
    MatMul { a: NodeId, b: NodeId },
    Transpose { a: NodeId },
    ConcatCols { parts: Vec<NodeId> },
    StackRows { parts: Vec<NodeId> },
    StackScalars { parts: Vec<NodeId> },
    Reshape { a: NodeId },
    Relu { a: NodeId },
    Tanh { a: NodeId },
    LayerNorm { a: NodeId, gamma: NodeId, beta: NodeId },
    Dropout { a: NodeId, mask: Vec<S> },
    SoftmaxRows { a: NodeId },
    ZeroMaskedRows { a: NodeId, mask: Vec<bool> },
    MaskedMeanRows { a: NodeId, mask: Vec<bool> },
    Dot { a: NodeId, b: NodeId },
    SumAll { a: NodeId },
    LogSumExp { a: NodeId },
}

struct Node<S: Scalar> {
    data: Vec<S>,
    shape: Vec<usize>,
    op: Op<S>,
    needs_grad: bool,
}

const LAYER_NORM_EPS: f64 = 1e-5;

/// Reverse-mode tape over a read-only parameter set.
pub struct Tape<'p, S: Scalar> {
    params: &'p ParamSet<S>,
    nodes: Vec<Node<S>>,
    param_nodes: Vec<Option<NodeId>>,
    param_grads: Vec<Option<Vec<S>>>,
    train_mode: bool,
    check_finite: bool,
    backward_done: bool,
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        1 => (1, shape[0]),
        2 => (shape[0], shape[1]),
        _ => panic!("tape ops support 1-D and 2-D shapes, got {shape:?}"),
    }
}

impl<'p, S: Scalar> Tape<'p, S> {
    pub fn new(params: &'p ParamSet<S>, train_mode: bool, check_finite: bool) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
            param_grads: vec![None; params.len()],
            train_mode,
            check_finite,
            backward_done: false,
        }
    }

    pub fn train_mode(&self) -> bool {
        self.train_mode
    }

    pub fn data(&self, id: NodeId) -> &[S] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn scalar_value(&self, id: NodeId) -> S {
        debug_assert_eq!(self.nodes[id.0].data.len(), 1);
        self.nodes[id.0].data[0]
    }

    fn push(&mut self, data: Vec<S>, shape: Vec<usize>, op: Op<S>, needs_grad: bool) -> Result<NodeId> {
        if self.check_finite && !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite { op: op_name(&op) });
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { data, shape, op, needs_grad });
        Ok(id)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    // ── Leaves ───────────────────────────────────────────────────────

    pub fn constant(&mut self, data: Vec<S>, shape: Vec<usize>) -> Result<NodeId> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::Dimension {
                op: "constant",
                detail: format!("shape {:?} vs {} elements", shape, data.len()),
            });
        }
        self.push(data, shape, Op::Const, false)
    }

    pub fn scalar(&mut self, value: S) -> Result<NodeId> {
        self.push(vec![value], vec![1], Op::Const, false)
    }

    /// Leafs a parameter onto the tape (memoized: repeated calls share one
    /// node, so gradients from every use accumulate into one buffer).
    pub fn param(&mut self, param: usize) -> Result<NodeId> {
        if let Some(id) = self.param_nodes[param] {
            return Ok(id);
        }
        let p = self.params.get(param);
        let id = self.push(
            p.tensor.data.clone(),
            p.tensor.shape.clone(),
            Op::ParamLeaf { param },
            p.tensor.requires_grad,
        )?;
        self.param_nodes[param] = Some(id);
        Ok(id)
    }

    /// Gathers rows of an embedding table parameter: out[i] = table[ids[i]].
    pub fn embedding_lookup(&mut self, param: usize, ids: &[usize]) -> Result<NodeId> {
        let p = self.params.get(param);
        let (rows, dim) = rows_cols(&p.tensor.shape);
        for &id in ids {
            if id >= rows {
                return Err(TensorError::IndexOutOfRange { index: id, len: rows });
            }
        }
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            data.extend_from_slice(&p.tensor.data[id * dim..(id + 1) * dim]);
        }
        self.push(
            data,
            vec![ids.len(), dim],
            Op::EmbedLookup { param, ids: ids.to_vec() },
            p.tensor.requires_grad,
        )
    }

    // ── Elementwise and shape ops ────────────────────────────────────

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(TensorError::Dimension {
                op,
                detail: format!("{:?} vs {:?}", self.nodes[a.0].shape, self.nodes[b.0].shape),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let data: Vec<S> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| *x + *y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a) || self.needs(b);
        self.push(data, shape, Op::Add { a, b }, ng)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let data: Vec<S> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| *x - *y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a) || self.needs(b);
        self.push(data, shape, Op::Sub { a, b }, ng)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let data: Vec<S> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| *x * *y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a) || self.needs(b);
        self.push(data, shape, Op::Mul { a, b }, ng)
    }

    pub fn scale(&mut self, a: NodeId, c: S) -> Result<NodeId> {
        let data: Vec<S> = self.nodes[a.0].data.iter().map(|x| *x * c).collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a);
        self.push(data, shape, Op::Scale { a, c }, ng)
    }

    /// `[r,c] + [c]`: adds `bias` to every row of `a`.
    pub fn add_row_broadcast(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (r, c) = rows_cols(&self.nodes[a.0].shape);
        let bias_len = self.nodes[bias.0].data.len();
        if bias_len != c {
            return Err(TensorError::Dimension {
                op: "add_row_broadcast",
                detail: format!("bias length {bias_len} vs {c} columns"),
            });
        }
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                data.push(self.nodes[a.0].data[i * c + j] + self.nodes[bias.0].data[j]);
            }
        }
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a) || self.needs(bias);
        self.push(data, shape, Op::AddRowBroadcast { a, bias }, ng)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = &self.nodes[a.0].shape;
        let sb = &self.nodes[b.0].shape;
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::Dimension {
                op: "matmul",
                detail: format!("{sa:?} x {sb:?}"),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = kernels::matmul_nn(&self.nodes[a.0].data, &self.nodes[b.0].data, m, k, n);
        let ng = self.needs(a) || self.needs(b);
        self.push(data, vec![m, n], Op::MatMul { a, b }, ng)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = rows_cols(&self.nodes[a.0].shape);
        let src = &self.nodes[a.0].data;
        let mut data = vec![S::ZERO; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let ng = self.needs(a);
        self.push(data, vec![c, r], Op::Transpose { a }, ng)
    }

    /// Concatenates matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(TensorError::Dimension { op: "concat_cols", detail: "no parts".into() });
        }
        let (r, _) = rows_cols(&self.nodes[parts[0].0].shape);
        let mut total_c = 0usize;
        for &p in parts {
            let (pr, pc) = rows_cols(&self.nodes[p.0].shape);
            if pr != r {
                return Err(TensorError::Dimension {
                    op: "concat_cols",
                    detail: format!("row mismatch {pr} vs {r}"),
                });
            }
            total_c += pc;
        }
        let mut data = Vec::with_capacity(r * total_c);
        for i in 0..r {
            for &p in parts {
                let (_, pc) = rows_cols(&self.nodes[p.0].shape);
                data.extend_from_slice(&self.nodes[p.0].data[i * pc..(i + 1) * pc]);
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(data, vec![r, total_c], Op::ConcatCols { parts: parts.to_vec() }, ng)
    }

    /// Stacks equal-length vectors into a matrix, one vector per row.
    pub fn stack_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(TensorError::Dimension { op: "stack_rows", detail: "no parts".into() });
        }
        let c = self.nodes[parts[0].0].data.len();
        let mut data = Vec::with_capacity(parts.len() * c);
        for &p in parts {
            if self.nodes[p.0].data.len() != c {
                return Err(TensorError::Dimension {
                    op: "stack_rows",
                    detail: format!("length mismatch {} vs {c}", self.nodes[p.0].data.len()),
                });
            }
            data.extend_from_slice(&self.nodes[p.0].data);
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(data, vec![parts.len(), c], Op::StackRows { parts: parts.to_vec() }, ng)
    }

    /// Stacks scalars into a vector.
    pub fn stack_scalars(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let mut data = Vec::with_capacity(parts.len());
        for &p in parts {
            if self.nodes[p.0].data.len() != 1 {
                return Err(TensorError::Dimension {
                    op: "stack_scalars",
                    detail: format!("non-scalar part of shape {:?}", self.nodes[p.0].shape),
                });
            }
            data.push(self.nodes[p.0].data[0]);
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(data, vec![parts.len()], Op::StackScalars { parts: parts.to_vec() }, ng)
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let numel: usize = shape.iter().product();
        if numel != self.nodes[a.0].data.len() {
            return Err(TensorError::Dimension {
                op: "reshape",
                detail: format!("{:?} -> {:?}", self.nodes[a.0].shape, shape),
            });
        }
        let data = self.nodes[a.0].data.clone();
        let ng = self.needs(a);
        self.push(data, shape, Op::Reshape { a }, ng)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let data: Vec<S> = self.nodes[a.0].data.iter().map(|x| x.maximum(S::ZERO)).collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a);
        self.push(data, shape, Op::Relu { a }, ng)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let data: Vec<S> = self.nodes[a.0].data.iter().map(|x| x.tanh()).collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a);
        self.push(data, shape, Op::Tanh { a }, ng)
    }

    /// Per-row layer normalization over the last dimension with learned
    /// affine. Zero-variance rows normalize to zero via the epsilon.
    pub fn layer_norm(&mut self, a: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        let (r, c) = rows_cols(&self.nodes[a.0].shape);
        if self.nodes[gamma.0].data.len() != c || self.nodes[beta.0].data.len() != c {
            return Err(TensorError::Dimension {
                op: "layer_norm",
                detail: format!("affine length vs {c} columns"),
            });
        }
        let eps = S::from_f64(LAYER_NORM_EPS);
        let inv_c = S::from_f64(1.0 / c as f64);
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            let row = &self.nodes[a.0].data[i * c..(i + 1) * c];
            let mean = row.iter().copied().sum::<S>() * inv_c;
            let var = row.iter().map(|x| (*x - mean) * (*x - mean)).sum::<S>() * inv_c;
            let inv_std = S::ONE / (var + eps).sqrt();
            for j in 0..c {
                let xhat = (row[j] - mean) * inv_std;
                data.push(xhat * self.nodes[gamma.0].data[j] + self.nodes[beta.0].data[j]);
            }
        }
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a) || self.needs(gamma) || self.needs(beta);
        self.push(data, shape, Op::LayerNorm { a, gamma, beta }, ng)
    }

    /// Inverted dropout: active only in train mode, identity otherwise.
    /// Kept entries are scaled by 1/keep so evaluation needs no rescale.
    pub fn dropout<R: Rng>(&mut self, a: NodeId, rate: f64, rng: &mut R) -> Result<NodeId> {
        if !self.train_mode || rate == 0.0 {
            return Ok(a);
        }
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Dimension {
                op: "dropout",
                detail: format!("rate {rate} outside [0,1)"),
            });
        }
        let keep = 1.0 - rate;
        let inv_keep = S::from_f64(1.0 / keep);
        let mask: Vec<S> = (0..self.nodes[a.0].data.len())
            .map(|_| if rng.gen_range(0.0..1.0) < keep { inv_keep } else { S::ZERO })
            .collect();
        let data: Vec<S> =
            self.nodes[a.0].data.iter().zip(&mask).map(|(x, m)| *x * *m).collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a);
        self.push(data, shape, Op::Dropout { a, mask }, ng)
    }

    /// Row-wise softmax over the last dimension, numerically stabilized by
    /// max subtraction. Masked columns come out exactly zero; a fully masked
    /// mask is a degenerate input.
    pub fn softmax_rows(&mut self, a: NodeId, mask: Option<&[bool]>) -> Result<NodeId> {
        let (r, c) = rows_cols(&self.nodes[a.0].shape);
        if let Some(m) = mask {
            if m.len() != c {
                return Err(TensorError::Dimension {
                    op: "softmax",
                    detail: format!("mask length {} vs {c} columns", m.len()),
                });
            }
            if !m.iter().any(|&x| x) {
                return Err(TensorError::DegenerateInput {
                    op: "softmax",
                    detail: "all positions masked".into(),
                });
            }
        }
        let mut data = vec![S::ZERO; r * c];
        for i in 0..r {
            let row = &self.nodes[a.0].data[i * c..(i + 1) * c];
            let mut max = None::<S>;
            for j in 0..c {
                if mask.is_none_or(|m| m[j]) {
                    max = Some(match max {
                        Some(m) => m.maximum(row[j]),
                        None => row[j],
                    });
                }
            }
            let max = max.expect("at least one unmasked position");
            let mut denom = S::ZERO;
            for j in 0..c {
                if mask.is_none_or(|m| m[j]) {
                    let e = (row[j] - max).exp();
                    data[i * c + j] = e;
                    denom += e;
                }
            }
            for j in 0..c {
                data[i * c + j] /= denom;
            }
        }
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a);
        self.push(data, shape, Op::SoftmaxRows { a }, ng)
    }

    /// Zeroes whole rows flagged false in the mask.
    pub fn zero_masked_rows(&mut self, a: NodeId, mask: &[bool]) -> Result<NodeId> {
        let (r, c) = rows_cols(&self.nodes[a.0].shape);
        if mask.len() != r {
            return Err(TensorError::Dimension {
                op: "zero_masked_rows",
                detail: format!("mask length {} vs {r} rows", mask.len()),
            });
        }
        let mut data = self.nodes[a.0].data.clone();
        for (i, &keep) in mask.iter().enumerate() {
            if !keep {
                for v in &mut data[i * c..(i + 1) * c] {
                    *v = S::ZERO;
                }
            }
        }
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a);
        self.push(data, shape, Op::ZeroMaskedRows { a, mask: mask.to_vec() }, ng)
    }

    /// Mean of the unmasked rows: `[r,c]` with a length-r mask gives `[c]`.
    pub fn masked_mean_rows(&mut self, a: NodeId, mask: &[bool]) -> Result<NodeId> {
        let (r, c) = rows_cols(&self.nodes[a.0].shape);
        if mask.len() != r {
            return Err(TensorError::Dimension {
                op: "masked_mean_rows",
                detail: format!("mask length {} vs {r} rows", mask.len()),
            });
        }
        let count = mask.iter().filter(|&&x| x).count();
        if count == 0 {
            return Err(TensorError::DegenerateInput {
                op: "masked_mean_rows",
                detail: "all rows masked".into(),
            });
        }
        let inv = S::from_f64(1.0 / count as f64);
        let mut data = vec![S::ZERO; c];
        for (i, &keep) in mask.iter().enumerate() {
            if keep {
                for j in 0..c {
                    data[j] += self.nodes[a.0].data[i * c + j];
                }
            }
        }
        for v in &mut data {
            *v *= inv;
        }
        let ng = self.needs(a);
        self.push(data, vec![c], Op::MaskedMeanRows { a, mask: mask.to_vec() }, ng)
    }

    /// Inner product of two equal-length vectors, yielding a scalar node.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.nodes[a.0].data.len() != self.nodes[b.0].data.len() {
            return Err(TensorError::Dimension {
                op: "dot",
                detail: format!(
                    "{} vs {} elements",
                    self.nodes[a.0].data.len(),
                    self.nodes[b.0].data.len()
                ),
            });
        }
        let v = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| *x * *y)
            .sum::<S>();
        let ng = self.needs(a) || self.needs(b);
        self.push(vec![v], vec![1], Op::Dot { a, b }, ng)
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.nodes[a.0].data.iter().copied().sum::<S>();
        let ng = self.needs(a);
        self.push(vec![v], vec![1], Op::SumAll { a }, ng)
    }

    /// log(sum(exp(x))) of a vector, stabilized by max subtraction.
    pub fn logsumexp(&mut self, a: NodeId) -> Result<NodeId> {
        let x = &self.nodes[a.0].data;
        if x.is_empty() {
            return Err(TensorError::DegenerateInput { op: "logsumexp", detail: "empty".into() });
        }
        let max = x.iter().copied().fold(x[0], |m, v| m.maximum(v));
        let sum = x.iter().map(|v| (*v - max).exp()).sum::<S>();
        let v = max + sum.ln();
        let ng = self.needs(a);
        self.push(vec![v], vec![1], Op::LogSumExp { a }, ng)
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Runs the backward pass from a scalar loss. Visits ops in exact
    /// reverse recording order; gradients from multiple consumers add.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.backward_done {
            return Err(TensorError::State("backward already run on this tape".into()));
        }
        if self.nodes[loss.0].data.len() != 1 {
            return Err(TensorError::Dimension {
                op: "backward",
                detail: format!("loss must be scalar, got {:?}", self.nodes[loss.0].shape),
            });
        }
        self.backward_done = true;

        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<S>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![S::ONE]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.backprop_node(i, &g, &mut grads);
        }
        Ok(())
    }

    fn backprop_node(&mut self, i: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
        // Split the borrows: nodes are read-only here, parameter gradient
        // buffers are the only mutable state besides `grads`.
        let nodes = &self.nodes;
        let param_grads = &mut self.param_grads;
        let params = self.params;

        fn add_to<S: Scalar>(
            grads: &mut [Option<Vec<S>>],
            nodes: &[Node<S>],
            id: NodeId,
            delta: &[S],
        ) {
            if !nodes[id.0].needs_grad {
                return;
            }
            let buf = grads[id.0].get_or_insert_with(|| vec![S::ZERO; nodes[id.0].data.len()]);
            for (b, d) in buf.iter_mut().zip(delta) {
                *b += *d;
            }
        }

        match &nodes[i].op {
            Op::Const => {}
            Op::ParamLeaf { param } => {
                let buf = param_grads[*param]
                    .get_or_insert_with(|| vec![S::ZERO; nodes[i].data.len()]);
                for (b, d) in buf.iter_mut().zip(g) {
                    *b += *d;
                }
            }
            Op::EmbedLookup { param, ids } => {
                let dim = nodes[i].shape[1];
                let table_len = params.get(*param).tensor.numel();
                let buf = param_grads[*param].get_or_insert_with(|| vec![S::ZERO; table_len]);
                for (pos, &id) in ids.iter().enumerate() {
                    for j in 0..dim {
                        buf[id * dim + j] += g[pos * dim + j];
                    }
                }
            }
            Op::Add { a, b } => {
                add_to(grads, nodes, *a, g);
                add_to(grads, nodes, *b, g);
            }
            Op::Sub { a, b } => {
                add_to(grads, nodes, *a, g);
                let neg: Vec<S> = g.iter().map(|x| -*x).collect();
                add_to(grads, nodes, *b, &neg);
            }
            Op::Mul { a, b } => {
                let da: Vec<S> = g.iter().zip(&nodes[b.0].data).map(|(x, y)| *x * *y).collect();
                let db: Vec<S> = g.iter().zip(&nodes[a.0].data).map(|(x, y)| *x * *y).collect();
                add_to(grads, nodes, *a, &da);
                add_to(grads, nodes, *b, &db);
            }
            Op::Scale { a, c } => {
                let da: Vec<S> = g.iter().map(|x| *x * *c).collect();
                add_to(grads, nodes, *a, &da);
            }
            Op::AddRowBroadcast { a, bias } => {
                add_to(grads, nodes, *a, g);
                let (r, c) = rows_cols(&nodes[a.0].shape);
                let mut db = vec![S::ZERO; c];
                for row in 0..r {
                    for j in 0..c {
                        db[j] += g[row * c + j];
                    }
                }
                add_to(grads, nodes, *bias, &db);
            }
            Op::MatMul { a, b } => {
                let (m, k) = rows_cols(&nodes[a.0].shape);
                let n = nodes[b.0].shape[1];
                // dA = dC · Bᵀ, dB = Aᵀ · dC
                if nodes[a.0].needs_grad {
                    let da = kernels::matmul_nt(g, &nodes[b.0].data, m, n, k);
                    add_to(grads, nodes, *a, &da);
                }
                if nodes[b.0].needs_grad {
                    let db = kernels::matmul_tn(&nodes[a.0].data, g, m, k, n);
                    add_to(grads, nodes, *b, &db);
                }
            }
            Op::Transpose { a } => {
                let (r, c) = rows_cols(&nodes[a.0].shape);
                let mut da = vec![S::ZERO; r * c];
                for row in 0..r {
                    for j in 0..c {
                        da[row * c + j] = g[j * r + row];
                    }
                }
                add_to(grads, nodes, *a, &da);
            }
            Op::ConcatCols { parts } => {
                let (r, _) = rows_cols(&nodes[i].shape);
                let total_c = nodes[i].shape[1];
                let mut offset = 0usize;
                for &p in parts {
                    let (_, pc) = rows_cols(&nodes[p.0].shape);
                    if nodes[p.0].needs_grad {
                        let mut dp = vec![S::ZERO; r * pc];
                        for row in 0..r {
                            for j in 0..pc {
                                dp[row * pc + j] = g[row * total_c + offset + j];
                            }
                        }
                        add_to(grads, nodes, p, &dp);
                    }
                    offset += pc;
                }
            }
            Op::StackRows { parts } => {
                let c = nodes[i].shape[1];
                for (row, &p) in parts.iter().enumerate() {
                    add_to(grads, nodes, p, &g[row * c..(row + 1) * c]);
                }
            }
            Op::StackScalars { parts } => {
                for (j, &p) in parts.iter().enumerate() {
                    add_to(grads, nodes, p, &[g[j]]);
                }
            }
            Op::Reshape { a } => {
                add_to(grads, nodes, *a, g);
            }
            Op::Relu { a } => {
                let da: Vec<S> = g
                    .iter()
                    .zip(&nodes[a.0].data)
                    .map(|(gi, x)| if *x > S::ZERO { *gi } else { S::ZERO })
                    .collect();
                add_to(grads, nodes, *a, &da);
            }
            Op::Tanh { a } => {
                let da: Vec<S> = g
                    .iter()
                    .zip(&nodes[i].data)
                    .map(|(gi, y)| *gi * (S::ONE - *y * *y))
                    .collect();
                add_to(grads, nodes, *a, &da);
            }
            Op::LayerNorm { a, gamma, beta } => {
                let (r, c) = rows_cols(&nodes[a.0].shape);
                let eps = S::from_f64(LAYER_NORM_EPS);
                let inv_c = S::from_f64(1.0 / c as f64);
                let c_s = S::from_f64(c as f64);
                let mut da = vec![S::ZERO; r * c];
                let mut dgamma = vec![S::ZERO; c];
                let mut dbeta = vec![S::ZERO; c];
                for row in 0..r {
                    let x = &nodes[a.0].data[row * c..(row + 1) * c];
                    let gy = &g[row * c..(row + 1) * c];
                    let mean = x.iter().copied().sum::<S>() * inv_c;
                    let var = x.iter().map(|v| (*v - mean) * (*v - mean)).sum::<S>() * inv_c;
                    let inv_std = S::ONE / (var + eps).sqrt();
                    let xhat: Vec<S> = x.iter().map(|v| (*v - mean) * inv_std).collect();
                    let mut dxhat = vec![S::ZERO; c];
                    for j in 0..c {
                        dgamma[j] += gy[j] * xhat[j];
                        dbeta[j] += gy[j];
                        dxhat[j] = gy[j] * nodes[gamma.0].data[j];
                    }
                    let sum_dxhat = dxhat.iter().copied().sum::<S>();
                    let sum_dxhat_xhat = dxhat.iter().zip(&xhat).map(|(d, h)| *d * *h).sum::<S>();
                    for j in 0..c {
                        da[row * c + j] = inv_std * inv_c
                            * (c_s * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat);
                    }
                }
                add_to(grads, nodes, *a, &da);
                add_to(grads, nodes, *gamma, &dgamma);
                add_to(grads, nodes, *beta, &dbeta);
            }
            Op::Dropout { a, mask } => {
                let da: Vec<S> = g.iter().zip(mask).map(|(gi, m)| *gi * *m).collect();
                add_to(grads, nodes, *a, &da);
            }
            Op::SoftmaxRows { a, .. } => {
                let (r, c) = rows_cols(&nodes[i].shape);
                let y = &nodes[i].data;
                let mut da = vec![S::ZERO; r * c];
                for row in 0..r {
                    let ys = &y[row * c..(row + 1) * c];
                    let gs = &g[row * c..(row + 1) * c];
                    let dot = ys.iter().zip(gs).map(|(yi, gi)| *yi * *gi).sum::<S>();
                    for j in 0..c {
                        da[row * c + j] = ys[j] * (gs[j] - dot);
                    }
                }
                add_to(grads, nodes, *a, &da);
            }
            Op::ZeroMaskedRows { a, mask } => {
                let (_, c) = rows_cols(&nodes[i].shape);
                let mut da = g.to_vec();
                for (row, &keep) in mask.iter().enumerate() {
                    if !keep {
                        for v in &mut da[row * c..(row + 1) * c] {
                            *v = S::ZERO;
                        }
                    }
                }
                add_to(grads, nodes, *a, &da);
            }
            Op::MaskedMeanRows { a, mask } => {
                let (r, c) = rows_cols(&nodes[a.0].shape);
                let count = mask.iter().filter(|&&x| x).count();
                let inv = S::from_f64(1.0 / count as f64);
                let mut da = vec![S::ZERO; r * c];
                for (row, &keep) in mask.iter().enumerate() {
                    if keep {
                        for j in 0..c {
                            da[row * c + j] = g[j] * inv;
                        }
                    }
                }
                add_to(grads, nodes, *a, &da);
            }
            Op::Dot { a, b } => {
                let g0 = g[0];
                let da: Vec<S> = nodes[b.0].data.iter().map(|y| g0 * *y).collect();
                let db: Vec<S> = nodes[a.0].data.iter().map(|x| g0 * *x).collect();
                add_to(grads, nodes, *a, &da);
                add_to(grads, nodes, *b, &db);
            }
            Op::SumAll { a } => {
                let da = vec![g[0]; nodes[a.0].data.len()];
                add_to(grads, nodes, *a, &da);
            }
            Op::LogSumExp { a } => {
                let x = &nodes[a.0].data;
                let max = x.iter().copied().fold(x[0], |m, v| m.maximum(v));
                let sum = x.iter().map(|v| (*v - max).exp()).sum::<S>();
                let g0 = g[0];
                let da: Vec<S> = x.iter().map(|v| g0 * (*v - max).exp() / sum).collect();
                add_to(grads, nodes, *a, &da);
            }
        }
    }

    /// Gradient computed for a parameter by this tape's backward pass.
    pub fn param_grad(&self, param: usize) -> Option<&[S]> {
        self.param_grads[param].as_deref()
    }

    /// Drains this tape's parameter gradients into an accumulator.
    pub fn drain_grads_into(&mut self, acc: &mut GradAccumulator<S>) {
        for (idx, slot) in self.param_grads.iter_mut().enumerate() {
            if let Some(buf) = slot.take() {
                for (a, b) in acc.grads[idx].iter_mut().zip(&buf) {
                    *a += *b;
                }
            }
        }
    }
}

fn op_name<S: Scalar>(op: &Op<S>) -> &'static str {
    match op {
        Op::Const => "constant",
        Op::ParamLeaf { .. } => "param",
        Op::EmbedLookup { .. } => "embedding_lookup",
        Op::Add { .. } => "add",
        Op::Sub { .. } => "sub",
        Op::Mul { .. } => "mul",
        Op::Scale { .. } => "scale",
        Op::AddRowBroadcast { .. } => "add_row_broadcast",
        Op::MatMul { .. } => "matmul",
        Op::Transpose { .. } => "transpose",
        Op::ConcatCols { .. } => "concat_cols",
        Op::StackRows { .. } => "stack_rows",
        Op::StackScalars { .. } => "stack_scalars",
        Op::Reshape { .. } => "reshape",
        Op::Relu { .. } => "relu",
        Op::Tanh { .. } => "tanh",
        Op::LayerNorm { .. } => "layer_norm",
        Op::Dropout { .. } => "dropout",
        Op::SoftmaxRows { .. } => "softmax",
        Op::ZeroMaskedRows { .. } => "zero_masked_rows",
        Op::MaskedMeanRows { .. } => "masked_mean_rows",
        Op::Dot { .. } => "dot",
        Op::SumAll { .. } => "sum",
        Op::LogSumExp { .. } => "logsumexp",
    }
}

/// Per-thread gradient buffer aligned with a [`ParamSet`]. Merging buffers
/// in a fixed order keeps multi-threaded batches bit-reproducible.
pub struct GradAccumulator<S: Scalar> {
    grads: Vec<Vec<S>>,
}

impl<S: Scalar> GradAccumulator<S> {
    pub fn new(params: &ParamSet<S>) -> Self {
        Self { grads: params.iter().map(|p| vec![S::ZERO; p.tensor.numel()]).collect() }
    }

    pub fn merge(&mut self, other: &GradAccumulator<S>) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    /// Adds `scale`-times the accumulated gradients into the parameters'
    /// gradient buffers.
    pub fn apply(&self, params: &mut ParamSet<S>, scale: S) {
        for (idx, buf) in self.grads.iter().enumerate() {
            let scaled: Vec<S> = buf.iter().map(|v| *v * scale).collect();
            params.get_mut(idx).tensor.accumulate_grad(&scaled);
        }
    }

    pub fn grad(&self, param: usize) -> &[S] {
        &self.grads[param]
    }
}

mod kernels {
    use crate::scalar::Scalar;

    /// C[m,n] = A[m,k] · B[k,n]
    pub fn matmul_nn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
        let mut c = vec![S::ZERO; m * n];
        for i in 0..m {
            let crow = &mut c[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = a[i * k + p];
                let brow = &b[p * n..(p + 1) * n];
                for j in 0..n {
                    crow[j] += aip * brow[j];
                }
            }
        }
        c
    }

    /// C[m,k] = A[m,n] · B[k,n]ᵀ
    pub fn matmul_nt<S: Scalar>(a: &[S], b: &[S], m: usize, n: usize, k: usize) -> Vec<S> {
        let mut c = vec![S::ZERO; m * k];
        for i in 0..m {
            let arow = &a[i * n..(i + 1) * n];
            for p in 0..k {
                let brow = &b[p * n..(p + 1) * n];
                let mut acc = S::ZERO;
                for j in 0..n {
                    acc += arow[j] * brow[j];
                }
                c[i * k + p] = acc;
            }
        }
        c
    }

    /// C[k,n] = A[m,k]ᵀ · B[m,n]
    pub fn matmul_tn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
        let mut c = vec![S::ZERO; k * n];
        for i in 0..m {
            let brow = &b[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = a[i * k + p];
                let crow = &mut c[p * n..(p + 1) * n];
                for j in 0..n {
                    crow[j] += aip * brow[j];
                }
            }
        }
        c
    }
}
