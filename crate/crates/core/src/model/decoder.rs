use builder_autodiff::graph::BoundParams;
use builder_autodiff::{Graph, Var};

use super::ModelError;
use crate::world::NUM_CELLS;

/// Probability vectors of the three slots, as graph nodes (`[1 × n]` each).
#[derive(Debug, Clone, Copy)]
pub struct SlotVars {
    pub location: Var,
    pub color: Var,
    pub action_type: Var,
}

/// Location from the grid stream; color and type from the text-stream mean.
/// No feasibility masking happens here.
pub fn decode_slots(g: &mut Graph, b: &BoundParams, u: Var, w: Var, text_mask: Option<&[bool]>) -> Result<SlotVars, ModelError> {
    let loc = g.matmul(w, b.get("decoder.location"))?;
    let loc = g.reshape(loc, &[1, NUM_CELLS])?;
    let location = g.softmax(loc, None)?;
    let mean = g.mean_over_axis(u, 0, text_mask)?;
    let c = g.matmul(mean, b.get("decoder.color"))?;
    let color = g.softmax(c, None)?;
    let t = g.matmul(mean, b.get("decoder.type"))?;
    let action_type = g.softmax(t, None)?;
    Ok(SlotVars {
        location,
        color,
        action_type,
    })
}
