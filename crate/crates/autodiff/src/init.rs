use rand::Rng;

use crate::tensor::Tensor;

/// Uniform in `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<R: Rng>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(shape, a, rng)
}

pub fn uniform<R: Rng>(shape: &[usize], a: f64, rng: &mut R) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-a..=a)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

/// Fan-in and fan-out for a matrix `[in × out]` or a conv kernel `[out × in × k × k × k]`.
pub fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (*n, *n),
        [r, c] => (*r, *c),
        [out, inp, rest @ ..] => {
            let field: usize = rest.iter().product();
            (inp * field, out * field)
        }
        [] => (1, 1),
    }
}
