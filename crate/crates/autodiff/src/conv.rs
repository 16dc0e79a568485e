//! 3D cross-correlation over `[C, X, Y, Z]` volumes.

use crate::error::TensorError;

/// Resolved geometry of one convolution call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub padding: usize,
    pub input: [usize; 3],
    pub output: [usize; 3],
}

impl ConvGeometry {
    pub fn new(
        input_shape: &[usize],
        kernel_shape: &[usize],
        padding: usize,
    ) -> Result<Self, TensorError> {
        let [c_in, x, y, z] = *input_shape else {
            return Err(TensorError::Config(format!(
                "conv3d input must be [C, X, Y, Z], got {input_shape:?}"
            )));
        };
        let [c_out, kc_in, k0, k1, k2] = *kernel_shape else {
            return Err(TensorError::Config(format!(
                "conv3d kernel must be [C_out, C_in, k, k, k], got {kernel_shape:?}"
            )));
        };
        if kc_in != c_in {
            return Err(TensorError::Shape {
                op: "conv3d",
                lhs: input_shape.to_vec(),
                rhs: kernel_shape.to_vec(),
            });
        }
        if k0 != k1 || k1 != k2 || !matches!(k0, 1 | 3) || !matches!(padding, 0 | 1) {
            return Err(TensorError::Config(format!(
                "unsupported conv3d kernel {k0}x{k1}x{k2} with padding {padding}"
            )));
        }
        let input = [x, y, z];
        let mut output = [0; 3];
        for (o, &d) in output.iter_mut().zip(&input) {
            let size = d + 2 * padding;
            if size < k0 {
                return Err(TensorError::Config(format!(
                    "conv3d input {input_shape:?} too small for kernel {k0}"
                )));
            }
            *o = size - k0 + 1;
        }
        Ok(Self {
            c_in,
            c_out,
            kernel: k0,
            padding,
            input,
            output,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.c_out, self.output[0], self.output[1], self.output[2]]
    }

    fn input_volume(&self) -> usize {
        self.input.iter().product()
    }

    fn output_volume(&self) -> usize {
        self.output.iter().product()
    }

    /// Output index range `[lo, hi)` whose input coordinate `o + d - pad` stays in bounds.
    fn valid_range(&self, axis: usize, d: usize) -> (usize, usize) {
        let lo = self.padding.saturating_sub(d);
        let hi = (self.input[axis] + self.padding)
            .saturating_sub(d)
            .min(self.output[axis]);
        (lo, hi.max(lo))
    }

    /// Visits every (co, ci, kernel tap) with the contiguous z-run pairs of
    /// output and input offsets it touches.
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize, usize, usize, usize)) {
        let k = self.kernel;
        let [_, oy_n, oz_n] = self.output;
        let [_, iy_n, iz_n] = self.input;
        for co in 0..self.c_out {
            for ci in 0..self.c_in {
                for dx in 0..k {
                    let (x_lo, x_hi) = self.valid_range(0, dx);
                    for dy in 0..k {
                        let (y_lo, y_hi) = self.valid_range(1, dy);
                        for dz in 0..k {
                            let (z_lo, z_hi) = self.valid_range(2, dz);
                            if z_hi <= z_lo {
                                continue;
                            }
                            let w_idx = (((co * self.c_in + ci) * k + dx) * k + dy) * k + dz;
                            let run = z_hi - z_lo;
                            for ox in x_lo..x_hi {
                                let ix = ox + dx - self.padding;
                                for oy in y_lo..y_hi {
                                    let iy = oy + dy - self.padding;
                                    let o_off = (ox * oy_n + oy) * oz_n + z_lo;
                                    let i_off = (ix * iy_n + iy) * iz_n + z_lo + dz - self.padding;
                                    f(co, ci, w_idx, o_off, i_off, run);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn forward(
    g: &ConvGeometry,
    input: &[f64],
    kernel: &[f64],
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let ov = g.output_volume();
    let iv = g.input_volume();
    let mut out = vec![0.0; g.c_out * ov];
    if let Some(b) = bias {
        for (co, chunk) in out.chunks_mut(ov).enumerate() {
            chunk.fill(b[co]);
        }
    }
    g.for_each_run(|co, ci, w_idx, o_off, i_off, run| {
        let w = kernel[w_idx];
        if w == 0.0 {
            return;
        }
        let o = &mut out[co * ov + o_off..co * ov + o_off + run];
        let i = &input[ci * iv + i_off..ci * iv + i_off + run];
        for (a, &b) in o.iter_mut().zip(i) {
            *a += w * b;
        }
    });
    out
}

pub(crate) struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub kernel: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
}

pub(crate) fn backward(
    g: &ConvGeometry,
    input: &[f64],
    kernel: &[f64],
    dout: &[f64],
    want: [bool; 3],
) -> ConvGrads {
    let ov = g.output_volume();
    let iv = g.input_volume();
    let mut d_in = want[0].then(|| vec![0.0; g.c_in * iv]);
    let mut d_k = want[1].then(|| vec![0.0; kernel.len()]);
    let d_b = want[2].then(|| dout.chunks(ov).map(|c| c.iter().sum()).collect());
    if d_in.is_some() || d_k.is_some() {
        g.for_each_run(|co, ci, w_idx, o_off, i_off, run| {
            let go = &dout[co * ov + o_off..co * ov + o_off + run];
            if let Some(d_in) = d_in.as_mut() {
                let w = kernel[w_idx];
                let di = &mut d_in[ci * iv + i_off..ci * iv + i_off + run];
                for (a, &b) in di.iter_mut().zip(go) {
                    *a += w * b;
                }
            }
            if let Some(d_k) = d_k.as_mut() {
                let i = &input[ci * iv + i_off..ci * iv + i_off + run];
                d_k[w_idx] += crate::tensor::dot(go, i);
            }
        });
    }
    ConvGrads {
        input: d_in,
        kernel: d_k,
        bias: d_b,
    }
}
