//! Parameter naming, shapes and initialization.

use builder_autodiff::init::{fans, uniform, xavier_uniform};
use builder_autodiff::{GruParams, MultiHeadAttention, ParamStore, Tensor};
use rand::Rng;

use super::{ModelConfig, ModelError};
use crate::world::{NUM_CELLS, NUM_COLORS, WORLD_CHANNELS};

pub(crate) fn text_single(n: usize) -> String {
    format!("fusion.text.single{n}")
}

pub(crate) fn text_cross(n: usize) -> String {
    format!("fusion.text.cross{n}")
}

pub(crate) fn grid_single(m: usize) -> String {
    format!("fusion.grid.single{m}")
}

pub(crate) fn grid_cross(m: usize) -> String {
    format!("fusion.grid.cross{m}")
}

fn attention_layer(out: &mut Vec<(String, Vec<usize>)>, prefix: &str, dim: usize, context_dim: usize) {
    for (name, shape) in MultiHeadAttention::param_shapes(dim, context_dim) {
        out.push((format!("{prefix}.attn.{name}"), shape));
    }
    out.push((format!("{prefix}.ff.linear.weight"), vec![dim, dim]));
    out.push((format!("{prefix}.ff.linear.bias"), vec![1, dim]));
    out.push((format!("{prefix}.ff.norm.gain"), vec![1, dim]));
    out.push((format!("{prefix}.ff.norm.bias"), vec![1, dim]));
}

/// Every parameter name and shape, in initialization and checkpoint order.
pub fn param_shapes(cfg: &ModelConfig, vocab_size: usize) -> Vec<(String, Vec<usize>)> {
    let (d_w, d_c, dcp) = (cfg.d_w, cfg.d_c, cfg.d_c_prime());
    let mut out = vec![("text.embedding".to_string(), vec![vocab_size, d_w])];
    for (name, shape) in GruParams::param_shapes(d_w, d_w) {
        out.push((format!("text.gru.{name}"), shape));
    }
    for i in 1..=cfg.k {
        let c_in = if i == 1 { WORLD_CHANNELS } else { d_c };
        out.push((format!("grid.conv{i}.f1.weight"), vec![d_c, c_in, 3, 3, 3]));
        out.push((format!("grid.conv{i}.f1.bias"), vec![d_c]));
        if i < cfg.k {
            out.push((format!("grid.conv{i}.f2.weight"), vec![d_c, d_c, 1, 1, 1]));
            out.push((format!("grid.conv{i}.f2.bias"), vec![d_c]));
        }
    }
    if cfg.grid_positional {
        out.push(("grid.position".to_string(), vec![NUM_CELLS, dcp]));
    }
    for n in 0..=cfg.n_t {
        attention_layer(&mut out, &text_single(n), d_w, d_w);
        if n < cfg.n_t {
            attention_layer(&mut out, &text_cross(n + 1), d_w, dcp);
        }
    }
    for m in 0..=cfg.n_g {
        attention_layer(&mut out, &grid_single(m), dcp, dcp);
        if m < cfg.n_g {
            attention_layer(&mut out, &grid_cross(m + 1), dcp, d_w);
        }
    }
    out.push(("decoder.location".to_string(), vec![dcp, 1]));
    out.push(("decoder.color".to_string(), vec![d_w, NUM_COLORS]));
    out.push(("decoder.type".to_string(), vec![d_w, cfg.d_a]));
    out
}

/// Fresh parameters: Xavier-uniform weights and kernels, zero biases, unit
/// norm gains, and small uniform embeddings.
pub fn init_params<R: Rng>(cfg: &ModelConfig, vocab_size: usize, rng: &mut R) -> Result<ParamStore, ModelError> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    for (name, shape) in param_shapes(cfg, vocab_size) {
        let t = if name.ends_with("norm.gain") {
            Tensor::full(&shape, 1.0)
        } else if name.ends_with("bias") || name.contains(".b_") {
            Tensor::zeros(&shape)
        } else if name == "text.embedding" || name == "grid.position" {
            uniform(&shape, 0.1, rng)
        } else {
            let (fan_in, fan_out) = fans(&shape);
            xavier_uniform(&shape, fan_in, fan_out, rng)
        };
        store.insert(name, t)?;
    }
    Ok(store)
}

/// Checks that a store holds exactly the expected names and shapes.
pub fn check_params(cfg: &ModelConfig, vocab_size: usize, store: &ParamStore) -> Result<(), ModelError> {
    let expected = param_shapes(cfg, vocab_size);
    if expected.len() != store.len() {
        return Err(ModelError::Config(format!(
            "expected {} parameter tensors, found {}",
            expected.len(),
            store.len()
        )));
    }
    for ((name, shape), (have_name, have)) in expected.iter().zip(store.iter()) {
        if name != have_name || shape.as_slice() != have.shape() {
            return Err(ModelError::Config(format!(
                "parameter {have_name} {:?} does not match expected {name} {shape:?}",
                have.shape()
            )));
        }
    }
    Ok(())
}
