//! Central finite-difference gradient checking.
//!
//! The numeric side only ever runs forward passes, so it stays independent
//! of the reverse-mode code it is used to check.

use crate::error::TensorError;
use crate::graph::{Graph, Mode, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Denominator floor of the relative error, so that near-zero
    /// gradients are compared on an absolute scale.
    pub floor: f64,
    /// Graph mode used for both the analytic and numeric passes.
    pub mode: Mode,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            floor: 1e-6,
            mode: Mode::Eval,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// (input, flat index, analytic, numeric) of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Evaluates `f` on fresh graphs built from `inputs`, returning the scalar output.
pub fn eval_scalar<F>(f: &F, inputs: &[Tensor], mode: Mode) -> Result<f64, TensorError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, TensorError>,
{
    let mut g = Graph::new(mode);
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    Ok(g.value(out).data()[0])
}

/// Compares reverse-mode gradients of `f` against central differences at every
/// entry of every input (or at `entries` when given, as `(input, index)` pairs).
pub fn check_gradients<F>(
    f: F,
    inputs: &[Tensor],
    entries: Option<&[(usize, usize)]>,
    cfg: GradCheckConfig,
) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, TensorError>,
{
    let mut g = Graph::new(cfg.mode);
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.get(v)).collect();

    let all: Vec<(usize, usize)>;
    let entries = match entries {
        Some(e) => e,
        None => {
            all = inputs
                .iter()
                .enumerate()
                .flat_map(|(i, t)| (0..t.len()).map(move |j| (i, j)))
                .collect();
            &all
        }
    };
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    let mut probe = inputs.to_vec();
    for &(i, j) in entries {
        let orig = probe[i].data()[j];
        probe[i].data_mut()[j] = orig + cfg.step;
        let plus = eval_scalar(&f, &probe, cfg.mode)?;
        probe[i].data_mut()[j] = orig - cfg.step;
        let minus = eval_scalar(&f, &probe, cfg.mode)?;
        probe[i].data_mut()[j] = orig;
        let numeric = (plus - minus) / (2.0 * cfg.step);
        let a = analytic[i].data()[j];
        let err = relative_error(a, numeric, cfg.floor);
        report.checked += 1;
        if report.worst.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some((i, j, a, numeric));
        }
    }
    Ok(report)
}
