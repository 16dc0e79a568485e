use builder_autodiff::graph::BoundParams;
use builder_autodiff::gru::gru_sequence;
use builder_autodiff::{Graph, GruParams, Tensor, Var};

use super::{ModelConfig, ModelError};
use crate::world::{LAST_ACTION_DIM, NUM_CELLS, SIZE_X, SIZE_Y, SIZE_Z, WORLD_CHANNELS};

fn gru_params(b: &BoundParams, prefix: &str) -> GruParams {
    let p = |n: &str| b.get(&format!("{prefix}.{n}"));
    GruParams {
        w_z: p("w_z"),
        w_r: p("w_r"),
        w_n: p("w_n"),
        u_z: p("u_z"),
        u_r: p("u_r"),
        u_n: p("u_n"),
        b_z: p("b_z"),
        b_r: p("b_r"),
        b_n: p("b_n"),
    }
}

/// Embedding lookup followed by a unidirectional GRU; `[s × d_w]`.
pub fn encode_dialogue(g: &mut Graph, b: &BoundParams, cfg: &ModelConfig, ids: &[usize]) -> Result<Var, ModelError> {
    if ids.len() != cfg.s {
        return Err(ModelError::Config(format!("expected {} token ids, got {}", cfg.s, ids.len())));
    }
    let emb = g.embedding(b.get("text.embedding"), ids)?;
    let h0 = g.constant(Tensor::zeros(&[1, cfg.d_w]));
    Ok(gru_sequence(g, emb, h0, &gru_params(b, "text.gru"))?)
}

/// 3D-convolutional world features with the last-action vector appended to
/// every cell: `[1089 × (d_c + 11)]`, one row per cell in flat-index order.
pub fn encode_world(
    g: &mut Graph,
    b: &BoundParams,
    cfg: &ModelConfig,
    raw: &Tensor,
    last_action: &Tensor,
) -> Result<Var, ModelError> {
    if raw.shape() != [WORLD_CHANNELS, SIZE_X, SIZE_Y, SIZE_Z] || last_action.len() != LAST_ACTION_DIM {
        return Err(ModelError::Config(format!(
            "world input {:?} / last action {:?}",
            raw.shape(),
            last_action.shape()
        )));
    }
    let mut x = g.constant(raw.clone());
    for i in 1..=cfg.k {
        let f1 = b.get(&format!("grid.conv{i}.f1.weight"));
        let b1 = b.get(&format!("grid.conv{i}.f1.bias"));
        let c = g.conv3d(x, f1, Some(b1), 1)?;
        x = g.relu(c);
        if i < cfg.k {
            let f2 = b.get(&format!("grid.conv{i}.f2.weight"));
            let b2 = b.get(&format!("grid.conv{i}.f2.bias"));
            let c = g.conv3d(x, f2, Some(b2), 0)?;
            x = g.relu(c);
        }
    }
    let flat = g.reshape(x, &[cfg.d_c, NUM_CELLS])?;
    let cells = g.transpose(flat)?;
    let la = g.constant(last_action.reshape(&[1, LAST_ACTION_DIM])?);
    let la = g.broadcast_rows(la, NUM_CELLS)?;
    Ok(g.concat(&[cells, la], 1)?)
}
