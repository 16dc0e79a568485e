//! Interleaved single- and cross-modality attention over the text and grid streams.
//!
//! ```text
//! text:  S₀ ─ X₁ ─ S₁ ─ … ─ X_{N_T} ─ S_{N_T}
//! grid:  S₀ ─ X₁ ─ S₁ ─ … ─ X_{N_G} ─ S_{N_G}
//! ```
//!
//! Cross layer `j` of either stream reads the other stream's single-layer
//! output `j − 1`; grid cross layers past `N_T` keep reading the final text
//! output. Grid attention never uses infeasible cells as keys, and their rows
//! stay zero after every grid layer.

use builder_autodiff::graph::BoundParams;
use builder_autodiff::{AttentionConfig, Graph, MultiHeadAttention, Var};
use rand::Rng;

use super::params::{grid_cross, grid_single, text_cross, text_single};
use super::{ModelConfig, ModelError};

/// Graph nodes of every fusion stage, for inspection in tests.
#[derive(Debug, Clone, Default)]
pub struct FusionTrace {
    pub text_single: Vec<Var>,
    pub grid_single: Vec<Var>,
    /// Grid stage each text cross layer attended to.
    pub text_cross_context: Vec<Var>,
    /// Text stage each grid cross layer attended to.
    pub grid_cross_context: Vec<Var>,
    /// Attention-core nodes of the grid self-attention layers.
    pub grid_self_attention: Vec<Var>,
}

fn attention_block(b: &BoundParams, prefix: &str) -> MultiHeadAttention {
    let p = |n: &str| b.get(&format!("{prefix}.attn.{n}"));
    MultiHeadAttention {
        w_q: p("q.weight"),
        b_q: p("q.bias"),
        w_k: p("k.weight"),
        b_k: p("k.bias"),
        w_v: p("v.weight"),
        b_v: p("v.bias"),
        w_o: p("o.weight"),
        b_o: p("o.bias"),
    }
}

/// `LayerNorm(x + Dropout(x·W + b))`.
fn feed_forward<R: Rng>(g: &mut Graph, b: &BoundParams, prefix: &str, x: Var, dropout: f64, rng: &mut R) -> Result<Var, ModelError> {
    let p = |n: &str| b.get(&format!("{prefix}.ff.{n}"));
    let h = g.linear(x, p("linear.weight"), p("linear.bias"))?;
    let h = g.dropout(h, dropout, rng)?;
    let r = g.add(x, h)?;
    Ok(g.layer_norm(r, p("norm.gain"), p("norm.bias"))?)
}

struct Layer<'a> {
    prefix: String,
    residual: bool,
    att: AttentionConfig,
    key_mask: Option<&'a [bool]>,
    row_mask: Option<&'a [bool]>,
}

impl Layer<'_> {
    fn run<R: Rng>(&self, g: &mut Graph, b: &BoundParams, query: Var, context: Var, dropout: f64, rng: &mut R) -> Result<Var, ModelError> {
        let mha = attention_block(b, &self.prefix);
        let mut a = mha.forward(g, query, context, &self.att, self.key_mask, self.row_mask)?;
        if self.residual {
            a = g.add(query, a)?;
        }
        let out = feed_forward(g, b, &self.prefix, a, dropout, rng)?;
        match self.row_mask {
            Some(keep) => Ok(g.mask_rows(out, keep)?),
            None => Ok(out),
        }
    }
}

/// `u0: [s × d_w]`, `w0: [1089 × d_c']`; returns the final text and grid streams.
#[allow(clippy::too_many_arguments)]
pub fn fuse<R: Rng>(
    g: &mut Graph,
    b: &BoundParams,
    cfg: &ModelConfig,
    u0: Var,
    w0: Var,
    text_mask: Option<&[bool]>,
    feasible: &[bool],
    rng: &mut R,
) -> Result<(Var, Var, FusionTrace), ModelError> {
    if !feasible.iter().any(|&f| f) {
        return Err(ModelError::Config("feasibility mask excludes every cell".into()));
    }
    let text_att = AttentionConfig::new(cfg.heads_text, cfg.d_w, 0.0)?;
    let grid_att = AttentionConfig::new(cfg.heads_grid, cfg.d_c_prime(), 0.0)?;
    let text_layer = |prefix: String, key_mask| Layer {
        prefix,
        residual: cfg.attention_residual,
        att: text_att,
        key_mask,
        row_mask: None,
    };
    let grid_layer = |prefix: String, key_mask| Layer {
        prefix,
        residual: cfg.attention_residual,
        att: grid_att,
        key_mask,
        row_mask: Some(feasible),
    };

    let mut trace = FusionTrace::default();
    let grid_self = |g: &mut Graph, m: usize, x: Var, rng: &mut R, trace: &mut FusionTrace| -> Result<Var, ModelError> {
        let start = g.len();
        let out = grid_layer(grid_single(m), Some(feasible)).run(g, b, x, x, cfg.dropout, rng)?;
        trace
            .grid_self_attention
            .extend(g.attention_nodes().into_iter().filter(|v| v.index() >= start));
        Ok(out)
    };

    let u = text_layer(text_single(0), text_mask).run(g, b, u0, u0, cfg.dropout, rng)?;
    trace.text_single.push(u);
    let w = grid_self(g, 0, w0, rng, &mut trace)?;
    trace.grid_single.push(w);

    for j in 1..=cfg.n_g {
        let u_prev = trace.text_single[(j - 1).min(cfg.n_t)];
        let w_prev = trace.grid_single[j - 1];
        if j <= cfg.n_t {
            let x = text_layer(text_cross(j), Some(feasible)).run(g, b, u_prev, w_prev, cfg.dropout, rng)?;
            let u = text_layer(text_single(j), text_mask).run(g, b, x, x, cfg.dropout, rng)?;
            trace.text_cross_context.push(w_prev);
            trace.text_single.push(u);
        }
        let x = grid_layer(grid_cross(j), text_mask).run(g, b, w_prev, u_prev, cfg.dropout, rng)?;
        let w = grid_self(g, j, x, rng, &mut trace)?;
        trace.grid_cross_context.push(u_prev);
        trace.grid_single.push(w);
    }
    let u = *trace.text_single.last().expect("at least one text layer");
    let w = *trace.grid_single.last().expect("at least one grid layer");
    Ok((u, w, trace))
}
