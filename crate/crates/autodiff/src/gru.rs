//! Gated recurrent unit built from graph primitives.
//!
//! ```text
//! z  = σ(x·W_z + h·U_z + b_z)
//! r  = σ(x·W_r + h·U_r + b_r)
//! n  = tanh(x·W_n + (r ⊙ h)·U_n + b_n)
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```

use crate::error::TensorError;
use crate::graph::{Graph, Var};

#[derive(Debug, Clone, Copy)]
pub struct GruParams {
    pub w_z: Var,
    pub w_r: Var,
    pub w_n: Var,
    pub u_z: Var,
    pub u_r: Var,
    pub u_n: Var,
    pub b_z: Var,
    pub b_r: Var,
    pub b_n: Var,
}

impl GruParams {
    pub fn param_shapes(input_dim: usize, hidden_dim: usize) -> Vec<(&'static str, Vec<usize>)> {
        vec![
            ("w_z", vec![input_dim, hidden_dim]),
            ("w_r", vec![input_dim, hidden_dim]),
            ("w_n", vec![input_dim, hidden_dim]),
            ("u_z", vec![hidden_dim, hidden_dim]),
            ("u_r", vec![hidden_dim, hidden_dim]),
            ("u_n", vec![hidden_dim, hidden_dim]),
            ("b_z", vec![1, hidden_dim]),
            ("b_r", vec![1, hidden_dim]),
            ("b_n", vec![1, hidden_dim]),
        ]
    }
}

/// Input-side projections `x·W + b` for one step, precomputed or not.
struct Projected {
    z: Var,
    r: Var,
    n: Var,
}

fn recur(g: &mut Graph, xp: Projected, h_prev: Var, p: &GruParams) -> Result<Var, TensorError> {
    let hz = g.matmul(h_prev, p.u_z)?;
    let z_pre = g.add(xp.z, hz)?;
    let z = g.sigmoid(z_pre);
    let hr = g.matmul(h_prev, p.u_r)?;
    let r_pre = g.add(xp.r, hr)?;
    let r = g.sigmoid(r_pre);
    let rh = g.mul(r, h_prev)?;
    let hn = g.matmul(rh, p.u_n)?;
    let n_pre = g.add(xp.n, hn)?;
    let n = g.tanh(n_pre);
    // h' = n + z ⊙ (h − n)
    let diff = g.sub(h_prev, n)?;
    let gated = g.mul(z, diff)?;
    g.add(n, gated)
}

/// One recurrence step; `x_t: [1 × d_in]`, `h_prev: [1 × d_h]`.
pub fn gru_step(g: &mut Graph, x_t: Var, h_prev: Var, p: &GruParams) -> Result<Var, TensorError> {
    let xp = Projected {
        z: g.linear(x_t, p.w_z, p.b_z)?,
        r: g.linear(x_t, p.w_r, p.b_r)?,
        n: g.linear(x_t, p.w_n, p.b_n)?,
    };
    recur(g, xp, h_prev, p)
}

/// Runs the recurrence over every row of `xs: [s × d_in]` from `h0: [1 × d_h]`,
/// returning the stacked hidden states `[s × d_h]`.
pub fn gru_sequence(g: &mut Graph, xs: Var, h0: Var, p: &GruParams) -> Result<Var, TensorError> {
    let (s, _) = g.value(xs).dims2();
    let all_z = g.linear(xs, p.w_z, p.b_z)?;
    let all_r = g.linear(xs, p.w_r, p.b_r)?;
    let all_n = g.linear(xs, p.w_n, p.b_n)?;
    let mut h = h0;
    let mut states = Vec::with_capacity(s);
    for t in 0..s {
        let xp = Projected {
            z: g.rows(all_z, t, 1)?,
            r: g.rows(all_r, t, 1)?,
            n: g.rows(all_n, t, 1)?,
        };
        h = recur(g, xp, h, p)?;
        states.push(h);
    }
    g.concat(&states, 0)
}
