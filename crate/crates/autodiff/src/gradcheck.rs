//! Central finite differences against tape gradients.

use thiserror::Error;

use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Error, PartialEq)]
pub enum GradCheckError {
    #[error("non-finite function value {value} at parameter {param} coordinate {coord}")]
    NonFiniteValue {
        param: usize,
        coord: usize,
        value: f64,
    },
    #[error("non-finite tape gradient at parameter {param} coordinate {coord}")]
    NonFiniteGradient { param: usize, coord: usize },
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Max relative error per parameter tensor, in input order.
    pub per_param: Vec<f64>,
    pub max_rel_error: f64,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tol
    }
}

/// Relative error used by [`grad_check`]: `|a - b| / max(1, |a|, |b|)`.
pub fn relative_error(fd: f64, bp: f64) -> f64 {
    (fd - bp).abs() / 1f64.max(fd.abs()).max(bp.abs())
}

/// Moves `params` onto a fresh tape and back, so no tensor is copied.
fn evaluate<F>(f: &F, params: &mut Vec<Tensor>) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.drain(..).map(|p| tape.leaf(p)).collect();
    let out = f(&mut tape, &vars);
    let value = tape.value(out).item();
    params.extend(tape.into_values().into_iter().take(vars.len()));
    value
}

/// Compares the tape gradient of the scalar built by `f` against central
/// differences with step `step`, coordinate by coordinate over every tensor
/// in `params`.
///
/// `f` receives a fresh tape with `params` registered as leaves in order.
pub fn grad_check<F>(
    f: F,
    params: &[Tensor],
    step: f64,
    tol: f64,
) -> Result<GradCheckReport, GradCheckError>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out);

    let mut work: Vec<Tensor> = params.to_vec();
    let mut per_param = Vec::with_capacity(params.len());
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var, &params[pi]);
        let mut worst = 0.0f64;
        for coord in 0..params[pi].len() {
            let bp = analytic.data()[coord];
            if !bp.is_finite() {
                return Err(GradCheckError::NonFiniteGradient { param: pi, coord });
            }
            let orig = work[pi].data()[coord];
            work[pi].data_mut()[coord] = orig + step;
            let plus = evaluate(&f, &mut work);
            work[pi].data_mut()[coord] = orig - step;
            let minus = evaluate(&f, &mut work);
            work[pi].data_mut()[coord] = orig;
            for value in [plus, minus] {
                if !value.is_finite() {
                    return Err(GradCheckError::NonFiniteValue {
                        param: pi,
                        coord,
                        value,
                    });
                }
            }
            let fd = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(fd, bp));
        }
        per_param.push(worst);
    }
    let max_rel_error = per_param.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        per_param,
        max_rel_error,
        tol,
    })
}
