//! Reverse-mode gradients of every differentiable op against central differences.

use builder_autodiff::gradcheck::{check_gradients, GradCheckConfig};
use builder_autodiff::graph::Graph;
use builder_autodiff::gru::{gru_sequence, gru_step};
use builder_autodiff::{AttentionConfig, GruParams, Mode, MultiHeadAttention, Tensor, TensorError, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn rand_tensor(seed: u64, shape: &[usize]) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Reduces `out` to a scalar with fixed random weights so every entry matters.
fn weighted_sum(g: &mut Graph, out: Var) -> Result<Var, TensorError> {
    let w = g.constant(rand_tensor(999, g.value(out).shape()));
    let p = g.mul(out, w)?;
    Ok(g.sum(p))
}

fn assert_grads<F>(name: &str, inputs: &[Tensor], f: F)
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, TensorError>,
{
    assert_grads_with(name, inputs, GradCheckConfig::default(), f);
}

fn assert_grads_with<F>(name: &str, inputs: &[Tensor], cfg: GradCheckConfig, f: F)
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, TensorError>,
{
    let report = check_gradients(f, inputs, None, cfg).unwrap();
    assert!(report.checked > 0);
    assert!(
        report.max_rel_error <= TOL,
        "{name}: max relative error {:.3e} at {:?}",
        report.max_rel_error,
        report.worst
    );
}

#[test]
fn grad_matmul_and_transpose() {
    assert_grads("matmul", &[rand_tensor(1, &[3, 4]), rand_tensor(2, &[4, 2])], |g, v| {
        let p = g.matmul(v[0], v[1])?;
        weighted_sum(g, p)
    });
    assert_grads("transpose", &[rand_tensor(3, &[3, 4])], |g, v| {
        let t = g.transpose(v[0])?;
        weighted_sum(g, t)
    });
}

#[test]
fn grad_elementwise() {
    let ab = [rand_tensor(4, &[2, 3]), rand_tensor(5, &[2, 3])];
    assert_grads("add", &ab, |g, v| {
        let o = g.add(v[0], v[1])?;
        weighted_sum(g, o)
    });
    assert_grads("sub", &ab, |g, v| {
        let o = g.sub(v[0], v[1])?;
        weighted_sum(g, o)
    });
    assert_grads("mul", &ab, |g, v| {
        let o = g.mul(v[0], v[1])?;
        weighted_sum(g, o)
    });
    assert_grads("add_row", &[rand_tensor(6, &[3, 4]), rand_tensor(7, &[1, 4])], |g, v| {
        let o = g.add_row(v[0], v[1])?;
        weighted_sum(g, o)
    });
    assert_grads("scale/add_scalar", &[rand_tensor(8, &[2, 2])], |g, v| {
        let s = g.scale(v[0], -2.5);
        let o = g.add_scalar(s, 0.75);
        weighted_sum(g, o)
    });
    assert_grads("relu", &[rand_tensor(9, &[3, 5])], |g, v| {
        let o = g.relu(v[0]);
        weighted_sum(g, o)
    });
    assert_grads("sigmoid", &[rand_tensor(10, &[3, 5])], |g, v| {
        let o = g.sigmoid(v[0]);
        weighted_sum(g, o)
    });
    assert_grads("tanh", &[rand_tensor(11, &[3, 5])], |g, v| {
        let o = g.tanh(v[0]);
        weighted_sum(g, o)
    });
    assert_grads("reshape/sum", &[rand_tensor(12, &[2, 6])], |g, v| {
        let r = g.reshape(v[0], &[3, 4])?;
        let w = weighted_sum(g, r)?;
        let s = g.sum(v[0]);
        g.add(w, s)
    });
}

#[test]
fn grad_softmax_and_cross_entropy() {
    let mask = [true, false, true, true, true, true, false, true];
    assert_grads("softmax", &[rand_tensor(13, &[2, 4])], |g, v| {
        let o = g.softmax(v[0], None)?;
        weighted_sum(g, o)
    });
    assert_grads("masked softmax", &[rand_tensor(14, &[2, 4])], |g, v| {
        let o = g.softmax(v[0], Some(&mask))?;
        weighted_sum(g, o)
    });
    assert_grads("cross_entropy", &[rand_tensor(15, &[1, 6])], |g, v| {
        let p = g.softmax(v[0], None)?;
        g.cross_entropy(p, 4)
    });
}

#[test]
fn grad_conv3d() {
    let input = rand_tensor(16, &[2, 4, 3, 4]);
    assert_grads("conv3d k3 p1", &[input.clone(), rand_tensor(17, &[3, 2, 3, 3, 3]), rand_tensor(18, &[3])], |g, v| {
        let o = g.conv3d(v[0], v[1], Some(v[2]), 1)?;
        weighted_sum(g, o)
    });
    assert_grads("conv3d k1 p0", &[input.clone(), rand_tensor(19, &[2, 2, 1, 1, 1])], |g, v| {
        let o = g.conv3d(v[0], v[1], None, 0)?;
        weighted_sum(g, o)
    });
    assert_grads("conv3d k3 p0", &[input, rand_tensor(20, &[1, 2, 3, 3, 3])], |g, v| {
        let o = g.conv3d(v[0], v[1], None, 0)?;
        weighted_sum(g, o)
    });
}

#[test]
fn grad_attention() {
    let keys = [true, true, false, true, false];
    let rows = [true, false, true];
    assert_grads(
        "attention core",
        &[rand_tensor(21, &[3, 4]), rand_tensor(22, &[5, 4]), rand_tensor(23, &[5, 4])],
        |g, v| {
            let o = g.attention(v[0], v[1], v[2], 2, Some(&keys), Some(&rows))?;
            weighted_sum(g, o)
        },
    );
    let mut inputs = vec![rand_tensor(24, &[3, 4]), rand_tensor(25, &[5, 6])];
    for (i, (_, s)) in MultiHeadAttention::param_shapes(4, 6).into_iter().enumerate() {
        inputs.push(rand_tensor(30 + i as u64, &s));
    }
    let cfg = AttentionConfig::new(2, 4, 0.0).unwrap();
    assert_grads("multi_head_attention", &inputs, |g, v| {
        let mha = MultiHeadAttention { w_q: v[2], b_q: v[3], w_k: v[4], b_k: v[5], w_v: v[6], b_v: v[7], w_o: v[8], b_o: v[9] };
        let o = mha.forward(g, v[0], v[1], &cfg, Some(&keys), Some(&rows))?;
        weighted_sum(g, o)
    });
}

#[test]
fn grad_layer_norm() {
    assert_grads("layer_norm", &[rand_tensor(40, &[3, 5]), rand_tensor(41, &[1, 5]), rand_tensor(42, &[1, 5])], |g, v| {
        let o = g.layer_norm(v[0], v[1], v[2])?;
        weighted_sum(g, o)
    });
}

#[test]
fn grad_dropout_train_mode() {
    let cfg = GradCheckConfig { mode: Mode::Train, ..Default::default() };
    assert_grads_with("dropout", &[rand_tensor(43, &[4, 5])], cfg, |g, v| {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let o = g.dropout(v[0], 0.3, &mut rng)?;
        weighted_sum(g, o)
    });
}

#[test]
fn grad_gathers_and_reductions() {
    assert_grads("embedding", &[rand_tensor(44, &[5, 3])], |g, v| {
        let o = g.embedding(v[0], &[4, 0, 4, 2])?;
        weighted_sum(g, o)
    });
    let mask = [true, false, true, true];
    assert_grads("mean axis 0", &[rand_tensor(45, &[4, 3])], |g, v| {
        let o = g.mean_over_axis(v[0], 0, Some(&mask))?;
        weighted_sum(g, o)
    });
    assert_grads("mean axis 1", &[rand_tensor(46, &[3, 4])], |g, v| {
        let o = g.mean_over_axis(v[0], 1, None)?;
        weighted_sum(g, o)
    });
    let parts = [rand_tensor(47, &[2, 3]), rand_tensor(48, &[1, 3]), rand_tensor(49, &[2, 2])];
    assert_grads("concat", &parts, |g, v| {
        let rows = g.concat(&[v[0], v[1]], 0)?;
        let cols = g.concat(&[v[0], v[2]], 1)?;
        let a = weighted_sum(g, rows)?;
        let b = weighted_sum(g, cols)?;
        g.add(a, b)
    });
    assert_grads("rows/broadcast/mask_rows", &[rand_tensor(50, &[4, 3])], |g, v| {
        let r = g.rows(v[0], 1, 1)?;
        let b = g.broadcast_rows(r, 3)?;
        let m = g.mask_rows(b, &[true, false, true])?;
        weighted_sum(g, m)
    });
}

#[test]
fn grad_gru() {
    let mut inputs = vec![rand_tensor(51, &[4, 3]), rand_tensor(52, &[1, 5])];
    for (i, (_, s)) in GruParams::param_shapes(3, 5).into_iter().enumerate() {
        inputs.push(rand_tensor(60 + i as u64, &s));
    }
    let params = |v: &[Var]| GruParams { w_z: v[2], w_r: v[3], w_n: v[4], u_z: v[5], u_r: v[6], u_n: v[7], b_z: v[8], b_r: v[9], b_n: v[10] };
    assert_grads("gru_step", &inputs, |g, v| {
        let x = g.rows(v[0], 0, 1)?;
        let h = gru_step(g, x, v[1], &params(v))?;
        weighted_sum(g, h)
    });
    assert_grads("gru_sequence", &inputs, |g, v| {
        let hs = gru_sequence(g, v[0], v[1], &params(v))?;
        weighted_sum(g, hs)
    });
}
