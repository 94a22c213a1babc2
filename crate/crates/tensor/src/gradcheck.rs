//! Central finite-difference gradient checking.
//!
//! The checker only ever evaluates the forward pass at perturbed parameter
//! values, so it is independent of the backward implementation it verifies.
//! Runs in double precision.

use crate::tensor::ParamSet;
use crate::Result;

/// Default step and tolerance for double-precision checks.
pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_REL_TOL: f64 = 1e-4;
/// Gradients below this magnitude are compared on the absolute scale.
pub const ABS_FLOOR: f64 = 1e-6;

/// Central difference of `eval` along one parameter coordinate. The
/// parameter is restored to its exact original bits afterwards.
pub fn central_diff<F>(
    params: &mut ParamSet<f64>,
    param: usize,
    coord: usize,
    step: f64,
    eval: &mut F,
) -> Result<f64>
where
    F: FnMut(&ParamSet<f64>) -> Result<f64>,
{
    let original = params.get(param).tensor.data[coord];
    params.get_mut(param).tensor.data[coord] = original + step;
    let plus = eval(params)?;
    params.get_mut(param).tensor.data[coord] = original - step;
    let minus = eval(params)?;
    params.get_mut(param).tensor.data[coord] = original;
    Ok((plus - minus) / (2.0 * step))
}

/// Relative error with an absolute floor for near-zero gradients.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(ABS_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Worst mismatch seen over a set of checked coordinates.
#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub coords_checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<(String, usize, f64, f64)>,
}

impl CheckReport {
    pub fn record(&mut self, name: &str, coord: usize, analytic: f64, numeric: f64) {
        self.coords_checked += 1;
        let err = relative_error(analytic, numeric);
        if err > self.max_rel_err {
            self.max_rel_err = err;
            self.worst = Some((name.to_string(), coord, analytic, numeric));
        }
    }

    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_rel_err <= rel_tol
    }
}

/// Checks analytic gradients of a scalar function against central finite
/// differences for every parameter, sampling at most `max_coords_per_param`
/// evenly spaced coordinates of each.
///
/// `analytic` must run the differentiated path once and return the full
/// gradient per parameter (aligned with the set); `eval` must compute the
/// plain forward value.
pub fn check<FA, FE>(
    params: &mut ParamSet<f64>,
    max_coords_per_param: usize,
    step: f64,
    analytic: FA,
    mut eval: FE,
) -> Result<CheckReport>
where
    FA: FnOnce(&ParamSet<f64>) -> Result<Vec<Vec<f64>>>,
    FE: FnMut(&ParamSet<f64>) -> Result<f64>,
{
    let grads = analytic(params)?;
    assert_eq!(grads.len(), params.len(), "one gradient buffer per parameter");
    let mut report = CheckReport::default();
    for idx in 0..params.len() {
        if !params.get(idx).tensor.requires_grad {
            continue;
        }
        let numel = params.get(idx).tensor.numel();
        let stride = (numel / max_coords_per_param.max(1)).max(1);
        let name = params.get(idx).name.clone();
        let mut coord = 0;
        while coord < numel {
            let g = grads[idx][coord];
            let mut fd = central_diff(params, idx, coord, step, &mut eval)?;
            // A miss is re-estimated at smaller steps and accepted only if
            // the error shrinks toward the analytic value — the signature
            // of a relu kink inside the perturbation interval, where the
            // plain central difference is not a derivative estimate. A
            // genuinely wrong gradient stays wrong at every step size.
            if relative_error(g, fd) > DEFAULT_REL_TOL {
                let mut err = relative_error(g, fd);
                for shrink in [10.0, 100.0] {
                    let refined = central_diff(params, idx, coord, step / shrink, &mut eval)?;
                    let refined_err = relative_error(g, refined);
                    if refined_err < err {
                        fd = refined;
                        err = refined_err;
                    } else {
                        break;
                    }
                }
            }
            report.record(&name, coord, g, fd);
            coord += stride;
        }
    }
    Ok(report)
}
