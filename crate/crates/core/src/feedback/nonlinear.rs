//! Implicit feedback maps of a quadratic boundary coupling.

use nalgebra::{DMatrix, DVector};

use super::{ControlMap, FeedbackError};
use crate::system::QuadraticMap;

/// Residual at which the Newton iteration stops.
pub const NEWTON_TOL: f64 = 1e-12;
const MAX_ITER: usize = 50;
const MAX_HALVINGS: usize = 30;

fn step_residual(map: &QuadraticMap, step: usize, full: &[f64]) -> DVector<f64> {
    let out = map.eval(full);
    DVector::from_column_slice(&out[out.len() - step..])
}

/// Solves the last `step` rows of `B(inputs, u) = 0` for `u` by damped
/// Newton, starting from the linearized solve. Returns the full `u`.
pub(crate) fn solve_step(
    coupling: &QuadraticMap,
    map: &ControlMap,
    inputs: &[f64],
) -> Result<DVector<f64>, FeedbackError> {
    let step = map.step;
    let width = map.row.len();
    let k = coupling.linear_part().nrows();
    let mut u = &map.solve * DVector::from_column_slice(inputs);
    let mut full: Vec<f64> = inputs.iter().copied().chain(u.iter().copied()).collect();
    let mut f = step_residual(coupling, step, &full);
    for _ in 0..MAX_ITER {
        let res = f.amax();
        if res < NEWTON_TOL {
            return Ok(u);
        }
        let jac = coupling
            .jacobian(&full)
            .view((k - step, width), (step, step))
            .into_owned();
        let delta = jac.lu().solve(&(-&f)).ok_or(FeedbackError::NoConvergence {
            target: map.target,
            residual: res,
        })?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial = &u + alpha * &delta;
            let trial_full: Vec<f64> = inputs.iter().copied().chain(trial.iter().copied()).collect();
            let trial_f = step_residual(coupling, step, &trial_full);
            if trial_f.amax() < res {
                u = trial;
                full = trial_full;
                f = trial_f;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(FeedbackError::NoConvergence {
                target: map.target,
                residual: res,
            });
        }
    }
    Err(FeedbackError::NoConvergence {
        target: map.target,
        residual: f.amax(),
    })
}

/// Value of the implicit map `M(inputs)`: the first unknown of the step.
pub fn solve_nonlinear_map(
    coupling: &QuadraticMap,
    map: &ControlMap,
    inputs: &[f64],
) -> Result<f64, FeedbackError> {
    Ok(solve_step(coupling, map, inputs)?[0])
}

/// Gradient of the implicit map by the implicit-function formula
/// `du/dv = -(∂_u F)⁻¹ ∂_v F`.
pub(crate) fn map_gradient(
    coupling: &QuadraticMap,
    map: &ControlMap,
    inputs: &[f64],
) -> Result<Vec<f64>, FeedbackError> {
    let u = solve_step(coupling, map, inputs)?;
    let step = map.step;
    let width = map.row.len();
    let k = coupling.linear_part().nrows();
    let full: Vec<f64> = inputs.iter().copied().chain(u.iter().copied()).collect();
    let jac = coupling.jacobian(&full);
    let rows = jac.rows(k - step, step);
    let du: DMatrix<f64> = rows.columns(width, step).into_owned();
    let dv: DMatrix<f64> = rows.columns(0, width).into_owned();
    let sens = du.lu().solve(&dv).ok_or(FeedbackError::NoConvergence {
        target: map.target,
        residual: f64::NAN,
    })?;
    Ok(sens.row(0).iter().map(|v| -v).collect())
}
