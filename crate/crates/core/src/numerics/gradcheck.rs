//! Central-difference verification of tape gradients.

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Gradients smaller than this are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradMismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<GradMismatch>,
    pub failures: Vec<GradMismatch>,
    /// False when two evaluations at the same point disagree, i.e. the loss
    /// still has a live noise source.
    pub deterministic: bool,
    pub passed: bool,
}

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / denom
}

fn eval<F>(loss_fn: &F, params: &ParamStore) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    let tape = Tape::no_grad();
    let loss = loss_fn(&tape, params)?;
    if loss.value().len() != 1 {
        return Err(Error::shape("grad_check", loss.shape(), &[1]));
    }
    Ok(loss.value().data()[0])
}

/// Compares the tape gradient of `loss_fn` with `(f(w+eps) - f(w-eps)) / 2eps`
/// for every element of every parameter.
pub fn grad_check<F>(loss_fn: F, params: &ParamStore, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>>,
{
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let mut analytic = params.clone();
    analytic.zero_grad();
    {
        let tape = Tape::new();
        let loss = loss_fn(&tape, &analytic)?;
        tape.backward(&loss)?.accumulate_into(&mut analytic)?;
    }

    let base = eval(&loss_fn, params)?;
    let again = eval(&loss_fn, params)?;
    let deterministic = base.to_bits() == again.to_bits();

    let mut probe = params.clone();
    let names: Vec<String> = params.names().map(str::to_owned).collect();
    let mut checked = 0;
    let mut failures = Vec::new();
    let mut worst: Option<GradMismatch> = None;
    for name in &names {
        let len = params.get(name)?.len();
        for index in 0..len {
            let w = params.get(name)?.data()[index];
            probe.get_mut(name)?.data_mut()[index] = w + eps;
            let plus = eval(&loss_fn, &probe)?;
            probe.get_mut(name)?.data_mut()[index] = w - eps;
            let minus = eval(&loss_fn, &probe)?;
            probe.get_mut(name)?.data_mut()[index] = w;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.grad(name)?.data()[index];
            let rel_error = relative_error(a, numeric);
            checked += 1;
            let m = GradMismatch {
                param: name.clone(),
                index,
                analytic: a,
                numeric,
                rel_error,
            };
            if rel_error >= tol {
                failures.push(m.clone());
            }
            if worst.as_ref().is_none_or(|w| rel_error > w.rel_error) {
                worst = Some(m);
            }
        }
    }
    let max_rel_error = worst.as_ref().map_or(0.0, |w| w.rel_error);
    Ok(GradCheckReport {
        checked,
        max_rel_error,
        worst,
        passed: failures.is_empty() && deterministic,
        failures,
        deterministic,
    })
}
