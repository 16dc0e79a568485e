//! The tape: nodes are appended in evaluation order and differentiated in reverse.

use std::collections::HashMap;

use rand::Rng;

use crate::attention::{self, AttentionCache, AttentionWeights};
use crate::conv::{self, ConvGeometry};
use crate::error::TensorError;
use crate::params::ParamStore;
use crate::tensor::{gemm_acc, gemm_at_acc, gemm_bt_acc, transpose, Tensor};
use crate::MASK_BIAS;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

const LN_EPS: f64 = 1e-5;
const CE_FLOOR: f64 = 1e-12;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Sum(Var),
    Reshape(Var),
    Softmax(Var),
    CrossEntropy { probs: Var, target: usize },
    Conv3d { input: Var, kernel: Var, bias: Option<Var>, geom: ConvGeometry },
    Attention { q: Var, k: Var, v: Var, cache: AttentionCache },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Dropout { x: Var, scale: Vec<f64> },
    Embedding { table: Var, ids: Vec<usize> },
    MeanAxis { x: Var, axis: usize, weights: Vec<f64> },
    Concat { inputs: Vec<Var>, axis: usize },
    Rows { x: Var, start: usize },
    BroadcastRows(Var),
    MaskRows { x: Var, keep: Vec<bool> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Parameters of a [`ParamStore`] bound as leaves of one graph.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl BoundParams {
    /// Pairs already-created leaves with the names of `store`, in store order.
    pub fn from_vars(store: &ParamStore, vars: Vec<Var>) -> Result<Self, TensorError> {
        if vars.len() != store.len() {
            return Err(TensorError::Config(format!(
                "{} vars for {} parameters",
                vars.len(),
                store.len()
            )));
        }
        Ok(Self {
            vars,
            index: store.index_map().clone(),
        })
    }

    pub fn get(&self, name: &str) -> Var {
        match self.index.get(name) {
            Some(&i) => self.vars[i],
            None => panic!("parameter {name} is not bound"),
        }
    }

    pub fn try_get(&self, name: &str) -> Option<Var> {
        self.index.get(name).map(|&i| self.vars[i])
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros when `v` does not reach the loss.
    pub fn get(&self, v: Var) -> Tensor {
        let shape = &self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    /// Gradients of all bound parameters, in store order.
    pub fn collect(&self, bound: &BoundParams) -> Vec<Tensor> {
        bound.vars.iter().map(|&v| self.get(v)).collect()
    }
}

pub struct Graph {
    nodes: Vec<Node>,
    mode: Mode,
}

impl Graph {
    pub fn new(mode: Mode) -> Self {
        Self {
            nodes: Vec::new(),
            mode,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn bind(&mut self, store: &ParamStore) -> BoundParams {
        let vars = store.tensors().iter().map(|t| self.param(t.clone())).collect();
        BoundParams {
            vars,
            index: store.index_map().clone(),
        }
    }

    fn dims2(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dims2()
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> TensorError {
        TensorError::Shape {
            op,
            lhs: self.value(a).shape().to_vec(),
            rhs: self.value(b).shape().to_vec(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.dims2(a);
        let (k2, n) = self.dims2(b);
        if k != k2 || self.value(a).shape().len() > 2 || self.value(b).shape().len() > 2 {
            return Err(self.shape_err("matmul", a, b));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let (m, n) = self.dims2(a);
        let out = transpose(self.value(a).data(), m, n);
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::Transpose(a), rg))
    }

    fn zip_same(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, TensorError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(self.shape_err(op, a, b));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(self.value(a).shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let t = self.zip_same("add", a, b, |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let t = self.zip_same("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let t = self.zip_same("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    /// `a[m×n] + row[1×n]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (m, n) = self.dims2(a);
        if self.value(row).len() != n {
            return Err(self.shape_err("add_row", a, row));
        }
        let r = self.value(row).data();
        let mut data = self.value(a).data().to_vec();
        for chunk in data.chunks_mut(n) {
            for (x, &b) in chunk.iter_mut().zip(r) {
                *x += b;
            }
        }
        let rg = self.rg(&[a, row]);
        let shape = if self.value(a).shape().len() == 2 {
            self.value(a).shape().to_vec()
        } else {
            vec![m, n]
        };
        Ok(self.push(Tensor::new(shape, data)?, Op::AddRow(a, row), rg))
    }

    /// `x · w + b` with `w: [in × out]`, `b: [1 × out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let src = self.value(a);
        let t = Tensor::new(src.shape().to_vec(), src.data().iter().map(|&x| f(x)).collect())
            .expect("same shape");
        let rg = self.rg(&[a]);
        self.push(t, op, rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    /// Sum of all entries, as a `[1]` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(a).reshape(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    /// Softmax over the last axis. Masked positions (`false`) get [`MASK_BIAS`] added.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var, TensorError> {
        let (rows, n) = self.dims2(a);
        if let Some(m) = mask {
            if m.len() != rows * n {
                return Err(TensorError::Shape {
                    op: "softmax mask",
                    lhs: self.value(a).shape().to_vec(),
                    rhs: vec![m.len()],
                });
            }
        }
        let mut data = self.value(a).data().to_vec();
        for (r, chunk) in data.chunks_mut(n).enumerate() {
            if let Some(m) = mask {
                let row_mask = &m[r * n..(r + 1) * n];
                if !row_mask.iter().any(|&keep| keep) {
                    return Err(TensorError::FullyMasked { row: r });
                }
                for (x, &keep) in chunk.iter_mut().zip(row_mask) {
                    if !keep {
                        *x += MASK_BIAS;
                    }
                }
            }
            softmax_in_place(chunk);
        }
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::Softmax(a), rg))
    }

    /// `-ln(max(p[target], 1e-12))` for a probability vector `p`.
    pub fn cross_entropy(&mut self, probs: Var, target: usize) -> Result<Var, TensorError> {
        let n = self.value(probs).len();
        if target >= n {
            return Err(TensorError::Index { index: target, size: n });
        }
        let p = self.value(probs).data()[target];
        let loss = -p.max(CE_FLOOR).ln();
        let rg = self.rg(&[probs]);
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy { probs, target }, rg))
    }

    /// Stride-1 3D cross-correlation; see [`ConvGeometry`] for supported shapes.
    pub fn conv3d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        padding: usize,
    ) -> Result<Var, TensorError> {
        let geom = ConvGeometry::new(self.value(input).shape(), self.value(kernel).shape(), padding)?;
        if let Some(b) = bias {
            if self.value(b).len() != geom.c_out {
                return Err(self.shape_err("conv3d bias", kernel, b));
            }
        }
        let out = conv::forward(
            &geom,
            self.value(input).data(),
            self.value(kernel).data(),
            bias.map(|b| self.value(b).data()),
        );
        let mut deps = vec![input, kernel];
        deps.extend(bias);
        let rg = self.rg(&deps);
        let t = Tensor::new(geom.output_shape(), out)?;
        Ok(self.push(t, Op::Conv3d { input, kernel, bias, geom }, rg))
    }

    /// Scaled dot-product attention core over already-projected `q`, `k`, `v`.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        key_mask: Option<&[bool]>,
        query_mask: Option<&[bool]>,
    ) -> Result<Var, TensorError> {
        let (n_q, d) = self.dims2(q);
        let (n_k, dk) = self.dims2(k);
        if dk != d || self.value(v).shape() != self.value(k).shape() {
            return Err(self.shape_err("attention", q, k));
        }
        if heads == 0 || d % heads != 0 {
            return Err(TensorError::Config(format!("dim {d} not divisible by {heads} heads")));
        }
        if key_mask.is_some_and(|m| m.len() != n_k) || query_mask.is_some_and(|m| m.len() != n_q) {
            return Err(TensorError::Config("attention mask length mismatch".into()));
        }
        let (out, cache) = attention::core_forward(
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
            n_q,
            n_k,
            d,
            heads,
            key_mask,
            query_mask,
        )?;
        let rg = self.rg(&[q, k, v]);
        Ok(self.push(Tensor::new(vec![n_q, d], out)?, Op::Attention { q, k, v, cache }, rg))
    }

    /// Attention weights recorded by an [`Graph::attention`] node.
    pub fn attention_weights(&self, node: Var) -> Option<AttentionWeights> {
        match &self.nodes[node.0].op {
            Op::Attention { cache, .. } => Some(cache.dense()),
            _ => None,
        }
    }

    /// Every attention node on the tape, in evaluation order.
    pub fn attention_nodes(&self) -> Vec<Var> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i].op, Op::Attention { .. }))
            .map(Var)
            .collect()
    }

    /// Row-wise normalization over the last axis with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, TensorError> {
        let (rows, n) = self.dims2(x);
        if self.value(gain).len() != n || self.value(bias).len() != n {
            return Err(self.shape_err("layer_norm", x, gain));
        }
        let src = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![0.0; rows * n];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; rows * n];
        for r in 0..rows {
            let row = &src[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd[r] = rs;
            for c in 0..n {
                let h = (row[c] - mean) * rs;
                xhat[r * n + c] = h;
                out[r * n + c] = h * g[c] + b[c];
            }
        }
        let rg = self.rg(&[x, gain, bias]);
        let t = Tensor::new(self.value(x).shape().to_vec(), out)?;
        Ok(self.push(t, Op::LayerNorm { x, gain, bias, xhat, rstd }, rg))
    }

    /// Inverted dropout; the identity in [`Mode::Eval`] or at rate 0.
    pub fn dropout<R: Rng>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if self.mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let scale: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let data = self.value(x).data().iter().zip(&scale).map(|(a, s)| a * s).collect();
        let t = Tensor::new(self.value(x).shape().to_vec(), data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Dropout { x, scale }, rg))
    }

    /// Gathers rows of `table: [V × d]` into `[ids.len() × d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let (vocab, d) = self.dims2(table);
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= vocab {
                return Err(TensorError::Index { index: id, size: vocab });
            }
            out.extend_from_slice(&src[id * d..(id + 1) * d]);
        }
        let t = Tensor::new(vec![ids.len(), d], out)?;
        let rg = self.rg(&[table]);
        Ok(self.push(t, Op::Embedding { table, ids: ids.to_vec() }, rg))
    }

    /// Mean of a matrix along `axis` (0: over rows, giving `[1 × n]`; 1: over
    /// columns, giving `[m × 1]`). With a mask only the kept entries along the
    /// axis are averaged.
    pub fn mean_over_axis(&mut self, x: Var, axis: usize, mask: Option<&[bool]>) -> Result<Var, TensorError> {
        let (m, n) = self.dims2(x);
        let len = if axis == 0 { m } else { n };
        if axis > 1 || mask.is_some_and(|k| k.len() != len) {
            return Err(TensorError::Config(format!("mean over axis {axis} of {m}x{n}")));
        }
        let kept = mask.map_or(len, |k| k.iter().filter(|&&b| b).count());
        if kept == 0 {
            return Err(TensorError::FullyMasked { row: 0 });
        }
        let weights: Vec<f64> = (0..len)
            .map(|i| if mask.is_none_or(|k| k[i]) { 1.0 / kept as f64 } else { 0.0 })
            .collect();
        let src = self.value(x).data();
        let (shape, out) = if axis == 0 {
            let mut out = vec![0.0; n];
            for r in 0..m {
                for c in 0..n {
                    out[c] += weights[r] * src[r * n + c];
                }
            }
            (vec![1, n], out)
        } else {
            let out = (0..m)
                .map(|r| (0..n).map(|c| weights[c] * src[r * n + c]).sum())
                .collect();
            (vec![m, 1], out)
        };
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MeanAxis { x, axis, weights }, rg))
    }

    /// Concatenates matrices along axis 0 (rows) or 1 (columns).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let Some(&first) = inputs.first() else {
            return Err(TensorError::Config("concat of nothing".into()));
        };
        let (m0, n0) = self.dims2(first);
        let (shape, data) = match axis {
            0 => {
                let mut data = Vec::new();
                let mut rows = 0;
                for &v in inputs {
                    let (m, n) = self.dims2(v);
                    if n != n0 {
                        return Err(self.shape_err("concat", first, v));
                    }
                    rows += m;
                    data.extend_from_slice(self.value(v).data());
                }
                (vec![rows, n0], data)
            }
            1 => {
                let mut cols = 0;
                for &v in inputs {
                    let (m, n) = self.dims2(v);
                    if m != m0 {
                        return Err(self.shape_err("concat", first, v));
                    }
                    cols += n;
                }
                let mut data = Vec::with_capacity(m0 * cols);
                for r in 0..m0 {
                    for &v in inputs {
                        data.extend_from_slice(self.value(v).row(r));
                    }
                }
                (vec![m0, cols], data)
            }
            _ => return Err(TensorError::Config(format!("concat axis {axis}"))),
        };
        let rg = self.rg(inputs);
        Ok(self.push(Tensor::new(shape, data)?, Op::Concat { inputs: inputs.to_vec(), axis }, rg))
    }

    /// Rows `start..start + len` of a matrix.
    pub fn rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let (m, n) = self.dims2(x);
        if len == 0 || start + len > m {
            return Err(TensorError::Index { index: start + len, size: m });
        }
        let data = self.value(x).data()[start * n..(start + len) * n].to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(vec![len, n], data)?, Op::Rows { x, start }, rg))
    }

    /// Repeats a single row `m` times.
    pub fn broadcast_rows(&mut self, x: Var, m: usize) -> Result<Var, TensorError> {
        let (r, n) = self.dims2(x);
        if r != 1 {
            return Err(TensorError::Config(format!("broadcast_rows needs one row, got {r}")));
        }
        let data = self.value(x).data().repeat(m);
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(vec![m, n], data)?, Op::BroadcastRows(x), rg))
    }

    /// Zeroes every row `r` with `keep[r] == false`.
    pub fn mask_rows(&mut self, x: Var, keep: &[bool]) -> Result<Var, TensorError> {
        let (m, n) = self.dims2(x);
        if keep.len() != m {
            return Err(TensorError::Config(format!("row mask of {} for {m} rows", keep.len())));
        }
        let mut data = self.value(x).data().to_vec();
        for (r, chunk) in data.chunks_mut(n).enumerate() {
            if !keep[r] {
                chunk.fill(0.0);
            }
        }
        let t = Tensor::new(self.value(x).shape().to_vec(), data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::MaskRows { x, keep: keep.to_vec() }, rg))
    }

    /// Reverse accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(gout) = grads[i].take() else { continue };
            self.backprop_node(i, &gout, &mut grads)?;
            grads[i] = Some(gout);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn backprop_node(&self, i: usize, gout: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<(), TensorError> {
        let node = &self.nodes[i];
        let check = |v: Var| -> Result<(), TensorError> {
            if v.0 >= i {
                Err(TensorError::Cycle { node: i, input: v.0 })
            } else {
                Ok(())
            }
        };
        let mut acc = |v: Var, contrib: &dyn Fn(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            contrib(slot);
        };
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                check(*a)?;
                check(*b)?;
                let (m, k) = self.dims2(*a);
                let (_, n) = self.dims2(*b);
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                acc(*a, &|g| gemm_bt_acc(gout, bv, g, m, n, k));
                acc(*b, &|g| gemm_at_acc(av, gout, g, m, k, n));
            }
            Op::Transpose(a) => {
                check(*a)?;
                let (m, n) = self.dims2(*a);
                let t = transpose(gout, n, m);
                acc(*a, &|g| add_into(g, &t));
            }
            Op::Add(a, b) => {
                check(*a)?;
                check(*b)?;
                acc(*a, &|g| add_into(g, gout));
                acc(*b, &|g| add_into(g, gout));
            }
            Op::Sub(a, b) => {
                check(*a)?;
                check(*b)?;
                acc(*a, &|g| add_into(g, gout));
                acc(*b, &|g| g.iter_mut().zip(gout).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                check(*a)?;
                check(*b)?;
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                acc(*a, &|g| {
                    for ((x, &go), &bb) in g.iter_mut().zip(gout).zip(bv) {
                        *x += go * bb;
                    }
                });
                acc(*b, &|g| {
                    for ((x, &go), &aa) in g.iter_mut().zip(gout).zip(av) {
                        *x += go * aa;
                    }
                });
            }
            Op::AddRow(a, row) => {
                check(*a)?;
                check(*row)?;
                let n = self.value(*row).len();
                acc(*a, &|g| add_into(g, gout));
                acc(*row, &|g| {
                    for chunk in gout.chunks(n) {
                        add_into(g, chunk);
                    }
                });
            }
            Op::Scale(a, c) => {
                check(*a)?;
                acc(*a, &|g| g.iter_mut().zip(gout).for_each(|(x, y)| *x += c * y));
            }
            Op::AddScalar(a) | Op::Reshape(a) => {
                check(*a)?;
                acc(*a, &|g| add_into(g, gout));
            }
            Op::Relu(a) => {
                check(*a)?;
                let av = self.value(*a).data();
                acc(*a, &|g| {
                    for ((x, &go), &inp) in g.iter_mut().zip(gout).zip(av) {
                        if inp > 0.0 {
                            *x += go;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                check(*a)?;
                acc(*a, &|g| {
                    for ((x, &go), &y) in g.iter_mut().zip(gout).zip(out) {
                        *x += go * y * (1.0 - y);
                    }
                });
            }
            Op::Tanh(a) => {
                check(*a)?;
                acc(*a, &|g| {
                    for ((x, &go), &y) in g.iter_mut().zip(gout).zip(out) {
                        *x += go * (1.0 - y * y);
                    }
                });
            }
            Op::Sum(a) => {
                check(*a)?;
                let go = gout[0];
                acc(*a, &|g| g.iter_mut().for_each(|x| *x += go));
            }
            Op::Softmax(a) => {
                check(*a)?;
                let (_, n) = node.value.dims2();
                acc(*a, &|g| {
                    for ((gx, go), y) in g.chunks_mut(n).zip(gout.chunks(n)).zip(out.chunks(n)) {
                        let dot: f64 = go.iter().zip(y).map(|(a, b)| a * b).sum();
                        for c in 0..n {
                            gx[c] += y[c] * (go[c] - dot);
                        }
                    }
                });
            }
            Op::CrossEntropy { probs, target } => {
                check(*probs)?;
                let p = self.value(*probs).data()[*target];
                if p > CE_FLOOR {
                    let go = gout[0];
                    acc(*probs, &|g| g[*target] -= go / p);
                }
            }
            Op::Conv3d { input, kernel, bias, geom } => {
                check(*input)?;
                check(*kernel)?;
                let want = [
                    self.requires_grad(*input),
                    self.requires_grad(*kernel),
                    bias.is_some_and(|b| self.requires_grad(b)),
                ];
                let cg = conv::backward(geom, self.value(*input).data(), self.value(*kernel).data(), gout, want);
                if let Some(d) = cg.input {
                    acc(*input, &|g| add_into(g, &d));
                }
                if let Some(d) = cg.kernel {
                    acc(*kernel, &|g| add_into(g, &d));
                }
                if let (Some(b), Some(d)) = (bias, cg.bias) {
                    check(*b)?;
                    acc(*b, &|g| add_into(g, &d));
                }
            }
            Op::Attention { q, k, v, cache } => {
                check(*q)?;
                check(*k)?;
                check(*v)?;
                let (_, d) = self.dims2(*q);
                let cg = attention::core_backward(
                    cache,
                    self.value(*q).data(),
                    self.value(*k).data(),
                    self.value(*v).data(),
                    d,
                    gout,
                );
                acc(*q, &|g| add_into(g, &cg.q));
                acc(*k, &|g| add_into(g, &cg.k));
                acc(*v, &|g| add_into(g, &cg.v));
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                check(*x)?;
                check(*gain)?;
                check(*bias)?;
                let n = self.value(*gain).len();
                let gv = self.value(*gain).data();
                acc(*gain, &|g| {
                    for (go, xh) in gout.chunks(n).zip(xhat.chunks(n)) {
                        for c in 0..n {
                            g[c] += go[c] * xh[c];
                        }
                    }
                });
                acc(*bias, &|g| {
                    for go in gout.chunks(n) {
                        add_into(g, go);
                    }
                });
                acc(*x, &|g| {
                    for (r, ((gx, go), xh)) in g.chunks_mut(n).zip(gout.chunks(n)).zip(xhat.chunks(n)).enumerate() {
                        let dxhat: Vec<f64> = (0..n).map(|c| go[c] * gv[c]).collect();
                        let mean_d = dxhat.iter().sum::<f64>() / n as f64;
                        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        for c in 0..n {
                            gx[c] += rstd[r] * (dxhat[c] - mean_d - xh[c] * mean_dx);
                        }
                    }
                });
            }
            Op::Dropout { x, scale } => {
                check(*x)?;
                acc(*x, &|g| {
                    for ((a, &go), &s) in g.iter_mut().zip(gout).zip(scale) {
                        *a += go * s;
                    }
                });
            }
            Op::Embedding { table, ids } => {
                check(*table)?;
                let (_, d) = self.dims2(*table);
                acc(*table, &|g| {
                    for (row, &id) in ids.iter().enumerate() {
                        add_into(&mut g[id * d..(id + 1) * d], &gout[row * d..(row + 1) * d]);
                    }
                });
            }
            Op::MeanAxis { x, axis, weights } => {
                check(*x)?;
                let (m, n) = self.dims2(*x);
                acc(*x, &|g| {
                    for r in 0..m {
                        for c in 0..n {
                            g[r * n + c] += if *axis == 0 {
                                weights[r] * gout[c]
                            } else {
                                weights[c] * gout[r]
                            };
                        }
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let mut offset = 0;
                let (_, total_cols) = node.value.dims2();
                for &v in inputs {
                    check(v)?;
                    let (m, n) = self.dims2(v);
                    if *axis == 0 {
                        let part = &gout[offset * total_cols..(offset + m) * total_cols];
                        acc(v, &|g| add_into(g, part));
                        offset += m;
                    } else {
                        let off = offset;
                        acc(v, &|g| {
                            for r in 0..m {
                                add_into(&mut g[r * n..(r + 1) * n], &gout[r * total_cols + off..r * total_cols + off + n]);
                            }
                        });
                        offset += n;
                    }
                }
            }
            Op::Rows { x, start } => {
                check(*x)?;
                let (_, n) = self.dims2(*x);
                let s = *start;
                acc(*x, &|g| add_into(&mut g[s * n..s * n + gout.len()], gout));
            }
            Op::BroadcastRows(x) => {
                check(*x)?;
                let n = self.value(*x).len();
                acc(*x, &|g| {
                    for chunk in gout.chunks(n) {
                        add_into(g, chunk);
                    }
                });
            }
            Op::MaskRows { x, keep } => {
                check(*x)?;
                let (_, n) = self.dims2(*x);
                acc(*x, &|g| {
                    for (r, (gx, go)) in g.chunks_mut(n).zip(gout.chunks(n)).enumerate() {
                        if keep[r] {
                            add_into(gx, go);
                        }
                    }
                });
            }
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity_and_zero() {
        let mut g = Graph::new(Mode::Eval);
        let i = g.constant(Tensor::eye(2));
        let m = g.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let p = g.matmul(i, m).unwrap();
        assert_eq!(g.value(p), g.value(m));

        let z = g.constant(Tensor::zeros(&[2, 3]));
        let any = g.constant(Tensor::full(&[3, 4], 7.5));
        let p = g.matmul(z, any).unwrap();
        assert_eq!(g.value(p), &Tensor::zeros(&[2, 4]));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new(Mode::Eval);
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn softmax_cases() {
        let mut g = Graph::new(Mode::Eval);
        let x = g.constant(Tensor::row_vector(&[0.0, 0.0]));
        let y = g.softmax(x, None).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);

        let x = g.constant(Tensor::row_vector(&[3.7, 1.0]));
        let y = g.softmax(x, Some(&[true, false])).unwrap();
        assert_eq!(g.value(y).data()[0], 1.0);
        assert!(g.value(y).data()[1] <= 1e-12);

        let x = g.constant(Tensor::row_vector(&[1.0, 2.0]));
        assert!(matches!(
            g.softmax(x, Some(&[false, false])),
            Err(TensorError::FullyMasked { row: 0 })
        ));
    }

    #[test]
    fn softmax_matches_direct_formula() {
        let mut g = Graph::new(Mode::Eval);
        let x = g.constant(Tensor::row_vector(&[1.0, 2.0, 3.0]));
        let y = g.softmax(x, None).unwrap();
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        for (i, v) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert!((g.value(y).data()[i] - v.exp() / z).abs() <= 1e-12);
        }
    }

    #[test]
    fn cross_entropy_cases() {
        let mut g = Graph::new(Mode::Eval);
        let p = g.constant(Tensor::row_vector(&[0.0, 1.0, 0.0]));
        let l = g.cross_entropy(p, 1).unwrap();
        assert!(g.value(l).data()[0] <= 1e-6);
        let l = g.cross_entropy(p, 0).unwrap();
        assert!((g.value(l).data()[0] - 1e-12f64.ln().abs()).abs() < 1e-9);

        let u = g.constant(Tensor::full(&[1, 4], 0.25));
        let l = g.cross_entropy(u, 2).unwrap();
        assert!((g.value(l).data()[0] - 4f64.ln()).abs() < 1e-15);
        assert!(g.cross_entropy(u, 4).is_err());

        let probs = [0.1, 0.6, 0.3];
        let r = g.constant(Tensor::row_vector(&probs));
        let l = g.cross_entropy(r, 2).unwrap();
        assert!((g.value(l).data()[0] + 0.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn backward_of_sum_and_half_square() {
        let mut g = Graph::new(Mode::Eval);
        let x = g.param(Tensor::row_vector(&[0.5, -1.0, 2.0]));
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).data(), &[1.0, 1.0, 1.0]);

        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq);
        let half = g.scale(s, 0.5);
        let grads = g.backward(half).unwrap();
        assert_eq!(grads.get(x).data(), g.value(x).data());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new(Mode::Eval);
        let x = g.param(Tensor::row_vector(&[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn dropout_is_identity_in_eval() {
        use rand::SeedableRng;
        let mut rng = rand::rngs::StdRng::seed_from_u64(0);
        let mut g = Graph::new(Mode::Eval);
        let x = g.param(Tensor::row_vector(&[1.0, 2.0, 3.0]));
        let y = g.dropout(x, 0.5, &mut rng).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn embedding_rejects_out_of_vocab() {
        let mut g = Graph::new(Mode::Eval);
        let t = g.param(Tensor::zeros(&[3, 2]));
        assert!(matches!(g.embedding(t, &[0, 3]), Err(TensorError::Index { index: 3, size: 3 })));
    }
}
