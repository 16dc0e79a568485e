//! Scaled dot-product multi-head attention.
//!
//! The fused core skips masked keys outright. That is the same function as
//! adding [`crate::MASK_BIAS`] before the softmax: `exp(-1e9)` underflows to
//! exactly zero in `f64`, so masked keys get zero weight either way.

use serde::{Deserialize, Serialize};

use crate::error::TensorError;
use crate::graph::{Graph, Var};
use crate::tensor::dot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub num_heads: usize,
    pub model_dim: usize,
    pub dropout_rate: f64,
}

impl AttentionConfig {
    pub fn new(num_heads: usize, model_dim: usize, dropout_rate: f64) -> Result<Self, TensorError> {
        let cfg = Self {
            num_heads,
            model_dim,
            dropout_rate,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        if self.num_heads == 0 || self.model_dim == 0 || !self.model_dim.is_multiple_of(self.num_heads) {
            return Err(TensorError::Config(format!(
                "model_dim {} must be a positive multiple of num_heads {}",
                self.model_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(TensorError::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }
}

/// Cached state of one attention-core evaluation.
#[derive(Debug, Clone)]
pub(crate) struct AttentionCache {
    pub heads: usize,
    pub n_q: usize,
    pub n_k: usize,
    pub active_q: Vec<usize>,
    pub active_k: Vec<usize>,
    /// `heads × active_q × active_k`, row-normalized.
    pub weights: Vec<f64>,
}

/// Dense view of the attention weights of one call, zero at masked keys.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub heads: usize,
    pub n_q: usize,
    pub n_k: usize,
    /// `heads × n_q × n_k`
    pub data: Vec<f64>,
}

impl AttentionWeights {
    pub fn get(&self, head: usize, q: usize, k: usize) -> f64 {
        self.data[(head * self.n_q + q) * self.n_k + k]
    }

    /// Largest weight any query puts on any key in `keys`.
    pub fn max_mass_on(&self, keys: impl Fn(usize) -> bool) -> f64 {
        let mut worst = 0.0f64;
        for h in 0..self.heads {
            for q in 0..self.n_q {
                for k in (0..self.n_k).filter(|&k| keys(k)) {
                    worst = worst.max(self.get(h, q, k));
                }
            }
        }
        worst
    }
}

impl AttentionCache {
    pub fn dense(&self) -> AttentionWeights {
        let (nqa, nka) = (self.active_q.len(), self.active_k.len());
        let mut data = vec![0.0; self.heads * self.n_q * self.n_k];
        for h in 0..self.heads {
            for (ai, &qi) in self.active_q.iter().enumerate() {
                for (aj, &kj) in self.active_k.iter().enumerate() {
                    data[(h * self.n_q + qi) * self.n_k + kj] =
                        self.weights[(h * nqa + ai) * nka + aj];
                }
            }
        }
        AttentionWeights {
            heads: self.heads,
            n_q: self.n_q,
            n_k: self.n_k,
            data,
        }
    }
}

pub(crate) fn core_forward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    n_q: usize,
    n_k: usize,
    dim: usize,
    heads: usize,
    key_mask: Option<&[bool]>,
    query_mask: Option<&[bool]>,
) -> Result<(Vec<f64>, AttentionCache), TensorError> {
    let active_k: Vec<usize> = match key_mask {
        Some(m) => (0..n_k).filter(|&j| m[j]).collect(),
        None => (0..n_k).collect(),
    };
    let active_q: Vec<usize> = match query_mask {
        Some(m) => (0..n_q).filter(|&i| m[i]).collect(),
        None => (0..n_q).collect(),
    };
    if active_k.is_empty() && !active_q.is_empty() {
        return Err(TensorError::FullyMasked { row: active_q[0] });
    }
    let hd = dim / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let (nqa, nka) = (active_q.len(), active_k.len());
    let mut weights = vec![0.0; heads * nqa * nka];
    let mut out = vec![0.0; n_q * dim];
    for h in 0..heads {
        let cols = h * hd..(h + 1) * hd;
        for (ai, &qi) in active_q.iter().enumerate() {
            let q_row = &q[qi * dim + cols.start..qi * dim + cols.end];
            let w = &mut weights[(h * nqa + ai) * nka..(h * nqa + ai + 1) * nka];
            let mut max = f64::NEG_INFINITY;
            for (wj, &kj) in w.iter_mut().zip(&active_k) {
                let s = dot(q_row, &k[kj * dim + cols.start..kj * dim + cols.end]) * scale;
                *wj = s;
                max = max.max(s);
            }
            let mut total = 0.0;
            for wj in w.iter_mut() {
                *wj = (*wj - max).exp();
                total += *wj;
            }
            let o = &mut out[qi * dim + cols.start..qi * dim + cols.end];
            for (wj, &kj) in w.iter_mut().zip(&active_k) {
                *wj /= total;
                let v_row = &v[kj * dim + cols.start..kj * dim + cols.end];
                for (a, &b) in o.iter_mut().zip(v_row) {
                    *a += *wj * b;
                }
            }
        }
    }
    Ok((
        out,
        AttentionCache {
            heads,
            n_q,
            n_k,
            active_q,
            active_k,
            weights,
        },
    ))
}

pub(crate) struct CoreGrads {
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
}

pub(crate) fn core_backward(
    cache: &AttentionCache,
    q: &[f64],
    k: &[f64],
    v: &[f64],
    dim: usize,
    dout: &[f64],
) -> CoreGrads {
    let heads = cache.heads;
    let hd = dim / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let (nqa, nka) = (cache.active_q.len(), cache.active_k.len());
    let mut dq = vec![0.0; q.len()];
    let mut dk = vec![0.0; k.len()];
    let mut dv = vec![0.0; v.len()];
    let mut ds = vec![0.0; nka];
    for h in 0..heads {
        let c0 = h * hd;
        for (ai, &qi) in cache.active_q.iter().enumerate() {
            let w = &cache.weights[(h * nqa + ai) * nka..(h * nqa + ai + 1) * nka];
            let go = &dout[qi * dim + c0..qi * dim + c0 + hd];
            let mut weighted = 0.0;
            for (aj, &kj) in cache.active_k.iter().enumerate() {
                let da = dot(go, &v[kj * dim + c0..kj * dim + c0 + hd]);
                ds[aj] = da;
                weighted += w[aj] * da;
                let dv_row = &mut dv[kj * dim + c0..kj * dim + c0 + hd];
                for (a, &b) in dv_row.iter_mut().zip(go) {
                    *a += w[aj] * b;
                }
            }
            let q_row = &q[qi * dim + c0..qi * dim + c0 + hd];
            for (aj, &kj) in cache.active_k.iter().enumerate() {
                let s = w[aj] * (ds[aj] - weighted) * scale;
                if s == 0.0 {
                    continue;
                }
                let k_row = &k[kj * dim + c0..kj * dim + c0 + hd];
                let dq_row = &mut dq[qi * dim + c0..qi * dim + c0 + hd];
                for (a, &b) in dq_row.iter_mut().zip(k_row) {
                    *a += s * b;
                }
                let dk_row = &mut dk[kj * dim + c0..kj * dim + c0 + hd];
                for (a, &b) in dk_row.iter_mut().zip(q_row) {
                    *a += s * b;
                }
            }
        }
    }
    CoreGrads {
        q: dq,
        k: dk,
        v: dv,
    }
}

/// Projection weights of one multi-head attention block.
///
/// Queries come from a stream of width `cfg.model_dim`; contexts may have a
/// different width and are projected into the query space.
#[derive(Debug, Clone, Copy)]
pub struct MultiHeadAttention {
    pub w_q: Var,
    pub b_q: Var,
    pub w_k: Var,
    pub b_k: Var,
    pub w_v: Var,
    pub b_v: Var,
    pub w_o: Var,
    pub b_o: Var,
}

impl MultiHeadAttention {
    /// Parameter names and shapes, in binding order.
    pub fn param_shapes(model_dim: usize, context_dim: usize) -> Vec<(&'static str, Vec<usize>)> {
        vec![
            ("q.weight", vec![model_dim, model_dim]),
            ("q.bias", vec![1, model_dim]),
            ("k.weight", vec![context_dim, model_dim]),
            ("k.bias", vec![1, model_dim]),
            ("v.weight", vec![context_dim, model_dim]),
            ("v.bias", vec![1, model_dim]),
            ("o.weight", vec![model_dim, model_dim]),
            ("o.bias", vec![1, model_dim]),
        ]
    }

    /// `query: [n_q × model_dim]`, `context: [n_c × context_dim]`.
    ///
    /// `key_mask[j] == false` removes context `j`; `query_mask[i] == false`
    /// zeroes output row `i`.
    pub fn forward(
        &self,
        g: &mut Graph,
        query: Var,
        context: Var,
        cfg: &AttentionConfig,
        key_mask: Option<&[bool]>,
        query_mask: Option<&[bool]>,
    ) -> Result<Var, TensorError> {
        cfg.validate()?;
        let (_, d) = g.value(query).dims2();
        if d != cfg.model_dim {
            return Err(TensorError::Shape {
                op: "multi_head_attention",
                lhs: g.value(query).shape().to_vec(),
                rhs: vec![cfg.model_dim],
            });
        }
        let q = g.linear(query, self.w_q, self.b_q)?;
        let k = g.linear(context, self.w_k, self.b_k)?;
        let v = g.linear(context, self.w_v, self.b_v)?;
        let mixed = g.attention(q, k, v, cfg.num_heads, key_mask, query_mask)?;
        let out = g.linear(mixed, self.w_o, self.b_o)?;
        match query_mask {
            Some(mask) => g.mask_rows(out, mask),
            None => Ok(out),
        }
    }
}
