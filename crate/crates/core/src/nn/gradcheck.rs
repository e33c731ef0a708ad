//! Central finite-difference verification of recorded gradients.

use super::graph::{Graph, Var};
use std::collections::HashMap;

use super::params::{ParamId, ParamSet};
use crate::error::Result;

/// Default central-difference step.
pub const GRAD_CHECK_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Worst `relative_error` over all checked coordinates.
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Coordinates left out because a ±step probe crossed a ReLU or max-pool
    /// kink, where the difference quotient does not estimate the derivative.
    pub skipped: usize,
}

/// Below this magnitude a gradient is compared absolutely. A central
/// difference at step 1e-5 through a deep f64 graph carries about 1e-12 of
/// rounding, so a 1e-9 gradient cannot be resolved to 1e-4 relative.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-7;

/// `|a - n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares analytic parameter gradients of a scalar-valued fragment with
/// central differences, perturbing every parameter coordinate in turn.
///
/// The fragment is recorded once; each probe recomputes only the nodes that
/// depend on the perturbed parameter, which gives the same values as
/// rebuilding the whole forward pass.
pub fn grad_check<F>(params: &ParamSet, step: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamSet) -> Result<Var>,
{
    let mut g = Graph::new();
    let out = build(&mut g, params)?;
    let analytic = g.backward(out)?.for_params(params);
    let leaves: HashMap<ParamId, Var> = g.param_vars().collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
    };
    for (id, p) in params.iter() {
        // a parameter the fragment never reads has an exactly zero difference quotient
        let leaf = leaves.get(&id).map(|&v| (v, g.downstream(v)));
        for j in 0..p.value.len() {
            let numeric = match &leaf {
                Some((v, downstream)) => {
                    let orig = p.value.data()[j];
                    let (plus, kink_up) = g.probe(*v, j, orig + step, downstream, out)?;
                    let (minus, kink_down) = g.probe(*v, j, orig - step, downstream, out)?;
                    if kink_up || kink_down {
                        report.skipped += 1;
                        continue;
                    }
                    (plus - minus) / (2.0 * step)
                }
                None => 0.0,
            };
            let a = analytic.get(id).map_or(0.0, |t| t.data()[j]);
            let e = relative_error(a, numeric);
            report.checked += 1;
            if e > report.max_rel_error {
                report.max_rel_error = e;
                report.worst = Some((p.name.clone(), j));
            }
        }
    }
    Ok(report)
}

pub fn grad_check_input<F>(input: &super::Tensor, step: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.input(input.clone());
    let out = build(&mut g, x)?;
    let grads = g.backward(out)?;
    let analytic = grads.wrt(x).cloned();
    let mut worst: f64 = 0.0;
    let mut probe = input.clone();
    for j in 0..input.len() {
        let mut eval = |delta: f64| -> Result<f64> {
            probe.data_mut()[j] = input.data()[j] + delta;
            let mut g = Graph::new();
            let x = g.input(probe.clone());
            let out = build(&mut g, x)?;
            Ok(g.value(out).data()[0])
        };
        let numeric = (eval(step)? - eval(-step)?) / (2.0 * step);
        probe.data_mut()[j] = input.data()[j];
        let a = analytic.as_ref().map_or(0.0, |t| t.data()[j]);
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}
