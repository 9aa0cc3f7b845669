//! First-order upwind transport with the boundary closures.

use super::{SolverError, StateGrid};
use crate::feedback::{boundary_closure, FeedbackLaw, Sampler};
use crate::system::HyperbolicSystem;

/// Speeds `λ_c(x_p, w(x_p))` for every component and node, component-major.
pub(crate) fn speed_table(sys: &HyperbolicSystem, state: &StateGrid) -> Vec<f64> {
    let (n, nx) = (state.n, state.nx);
    let mut out = vec![0.0; n * nx];
    let quasilinear = sys.has_state_coupling();
    let mut node = vec![0.0; n];
    for p in 0..nx {
        let x = state.x(p);
        let y = if quasilinear {
            for (c, v) in node.iter_mut().enumerate() {
                *v = state.values[c * nx + p];
            }
            Some(node.as_slice())
        } else {
            None
        };
        for c in 0..n {
            out[c * nx + p] = sys.speed(c, x, y);
        }
    }
    out
}

/// Upwind update of every node that is not an inflow node: right-moving
/// families on `1..nx`, left-moving families on `0..nx-1`.
pub(crate) fn advance_interior(
    sys: &HyperbolicSystem,
    values: &mut [f64],
    speeds: &[f64],
    nx: usize,
    dt: f64,
) {
    let ratio = dt * (nx - 1) as f64;
    for c in 0..sys.n() {
        let row = &mut values[c * nx..(c + 1) * nx];
        let lam = &speeds[c * nx..(c + 1) * nx];
        if sys.is_negative(c) {
            for p in (1..nx).rev() {
                row[p] -= lam[p] * ratio * (row[p] - row[p - 1]);
            }
        } else {
            for p in 0..nx - 1 {
                row[p] += lam[p] * ratio * (row[p + 1] - row[p]);
            }
        }
    }
}

/// Imposes `w_-(0) = B(w_+(0))`.
pub(crate) fn impose_left_boundary(sys: &HyperbolicSystem, values: &mut [f64], nx: usize) {
    let (k, n) = (sys.k(), sys.n());
    let plus: Vec<f64> = (k..n).map(|c| values[c * nx]).collect();
    for (i, v) in sys.coupling().eval(&plus).into_iter().enumerate() {
        values[i * nx] = v;
    }
}

/// One closed-loop step of length `dt`.
///
/// The interior and outflow nodes are updated from the old state, then the
/// inflow values are set: `B` at `x = 0`, the feedback at `x = 1` evaluated
/// on the updated state.
pub fn step(
    state: &mut StateGrid,
    sys: &HyperbolicSystem,
    law: &FeedbackLaw,
    sampler: &mut Sampler,
    dt: f64,
    cfl: f64,
) -> Result<(), SolverError> {
    let nx = state.nx;
    let dx = state.dx();
    let speeds = speed_table(sys, state);
    let max_speed = speeds.iter().fold(0.0f64, |a, s| a.max(*s));
    let limit = cfl * dx / max_speed;
    if dt > limit * (1.0 + 1e-12) {
        return Err(SolverError::CflViolation { dt, limit });
    }
    advance_interior(sys, &mut state.values, &speeds, nx, dt);
    impose_left_boundary(sys, &mut state.values, nx);
    state.time += dt;
    let controls = boundary_closure(state.time, state, sys, law, sampler)?;
    for (r, v) in controls.into_iter().enumerate() {
        state.values[(sys.k() + r) * nx + nx - 1] = v;
    }
    Ok(())
}

/// `∂_t w_c = ∓λ_c ∂_x w_c` with one-sided differences taken against the
/// direction of transport, second order at the inflow end.
pub fn time_derivative_field(state: &StateGrid, sys: &HyperbolicSystem) -> Vec<f64> {
    let (n, nx) = (state.n, state.nx);
    let dx = state.dx();
    let speeds = speed_table(sys, state);
    let mut out = vec![0.0; n * nx];
    for c in 0..n {
        let w = state.component(c);
        let lam = &speeds[c * nx..(c + 1) * nx];
        let dst = &mut out[c * nx..(c + 1) * nx];
        if sys.is_negative(c) {
            dst[0] = -lam[0] * (-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * dx);
            for p in 1..nx {
                dst[p] = -lam[p] * (w[p] - w[p - 1]) / dx;
            }
        } else {
            let last = nx - 1;
            for p in 0..last {
                dst[p] = lam[p] * (w[p + 1] - w[p]) / dx;
            }
            dst[last] = lam[last] * (3.0 * w[last] - 4.0 * w[last - 1] + w[last - 2]) / (2.0 * dx);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::DelayTable;
    use crate::solver::{simulate, ComponentData, InitialData, NoObserver, SimulationOptions};
    use crate::system::{BoundaryCoupling, SpeedProfile};
    use nalgebra::DMatrix;

    fn sys_with(speeds: Vec<SpeedProfile>, b: f64) -> HyperbolicSystem {
        HyperbolicSystem::new(
            1,
            1,
            speeds,
            BoundaryCoupling::Linear(DMatrix::from_element(1, 1, b)),
        )
        .unwrap()
    }

    #[test]
    fn constant_state_has_zero_time_derivative() {
        let sys = sys_with(
            vec![
                SpeedProfile::constant(1.0),
                SpeedProfile::constant(1.0).with_state_coupling(vec![0.0, 1.0]),
            ],
            0.5,
        );
        let mut s = StateGrid::zeros(2, 21);
        s.values.iter_mut().for_each(|v| *v = 0.1);
        assert!(time_derivative_field(&s, &sys).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn time_derivative_of_sine() {
        let sys = sys_with(vec![SpeedProfile::constant(1.0); 2], 0.5);
        let nx = 401;
        let w0 = InitialData::new(vec![ComponentData::zero(), ComponentData::sine(&[1.0])]);
        let s = w0.sample(nx);
        let field = time_derivative_field(&s, &sys);
        let pi = std::f64::consts::PI;
        for p in 0..nx {
            let exact = pi * (pi * s.x(p)).cos();
            assert!((field[nx + p] - exact).abs() < 10.0 * s.dx());
        }
        // Second-order stencil at the inflow end.
        assert!((field[2 * nx - 1] + pi).abs() < 1e-3);
    }

    #[test]
    fn zero_is_preserved_by_step() {
        let sys = sys_with(vec![SpeedProfile::polynomial(&[1.0, 0.5]).unwrap(), SpeedProfile::constant(2.0)], 0.5);
        let law = FeedbackLaw::linear(&sys, &DelayTable::new(&sys, 41)).unwrap();
        let mut s = StateGrid::zeros(2, 41);
        let dt = 0.9 * s.dx() / 2.0;
        step(&mut s, &sys, &law, &mut Sampler::Fixed, dt, 0.9).unwrap();
        assert!(s.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn one_step_shifts_left_moving_component() {
        let sys = sys_with(vec![SpeedProfile::constant(1.0); 2], 1.0);
        let law = FeedbackLaw::linear(&sys, &DelayTable::new(&sys, 11)).unwrap();
        let w0 = InitialData::new(vec![ComponentData::zero(), ComponentData::sine(&[1.0])]);
        let mut s = w0.sample(11);
        let old = s.clone();
        let dt = s.dx();
        step(&mut s, &sys, &law, &mut Sampler::Fixed, dt, 1.0).unwrap();
        // With unit Courant number the upwind update is an exact shift.
        for p in 0..10 {
            assert!((s.values[11 + p] - old.values[11 + p + 1]).abs() < 1e-15);
        }
        assert_eq!(s.values[21], 0.0);
        assert_eq!(s.values[0], s.values[11]);
    }

    #[test]
    fn constant_state_interior_is_unchanged() {
        let sys = HyperbolicSystem::new(
            1,
            2,
            vec![SpeedProfile::constant(1.0), SpeedProfile::constant(1.0), SpeedProfile::constant(2.0)],
            BoundaryCoupling::Linear(DMatrix::from_row_slice(1, 2, &[1.0, 2.0])),
        )
        .unwrap();
        let law = FeedbackLaw::linear(&sys, &DelayTable::new(&sys, 21)).unwrap();
        let mut s = StateGrid::zeros(3, 21);
        let (c2, c3) = (0.4, -0.1);
        let c1 = c2 + 2.0 * c3;
        for p in 0..21 {
            s.values[p] = c1;
            s.values[21 + p] = c2;
            s.values[42 + p] = c3;
        }
        step(&mut s, &sys, &law, &mut Sampler::Fixed, 0.02, 0.9).unwrap();
        for p in 0..20 {
            assert_eq!(s.values[21 + p], c2);
            assert_eq!(s.values[42 + p], c3);
        }
        for p in 1..21 {
            assert_eq!(s.values[p], c1);
        }
        // Controls at x = 1: component 2 is free (0), component 3 = -0.5 · w2(0.5).
        assert_eq!(s.values[41], 0.0);
        assert_eq!(s.values[62], -0.5 * c2);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let sys = sys_with(vec![SpeedProfile::constant(1.0); 2], 1.0);
        let law = FeedbackLaw::linear(&sys, &DelayTable::new(&sys, 11)).unwrap();
        let mut s = StateGrid::zeros(2, 11);
        let err = step(&mut s, &sys, &law, &mut Sampler::Fixed, 0.2, 0.9).unwrap_err();
        assert!(matches!(err, SolverError::CflViolation { .. }));
    }

    #[test]
    fn zero_state_coupling_matches_linear_path_bitwise() {
        let linear = sys_with(
            vec![SpeedProfile::polynomial(&[1.0, 0.2]).unwrap(), SpeedProfile::polynomial(&[2.0, -0.3]).unwrap()],
            0.7,
        );
        let coupled = sys_with(
            vec![
                SpeedProfile::polynomial(&[1.0, 0.2]).unwrap().with_state_coupling(vec![0.0, 0.0]),
                SpeedProfile::polynomial(&[2.0, -0.3]).unwrap().with_state_coupling(vec![0.0, 0.0]),
            ],
            0.7,
        );
        let w0 = InitialData::new(vec![ComponentData::sine(&[0.3, 0.1]), ComponentData::sine(&[1.0])]);
        let opts = SimulationOptions {
            nx: 101,
            horizon: 2.0,
            y_max: 1.0,
            ..Default::default()
        };
        let run = |sys: &HyperbolicSystem| {
            let law = FeedbackLaw::linear(sys, &DelayTable::new(sys, 101)).unwrap();
            simulate(sys, &law, &w0, &opts, &mut NoObserver).unwrap()
        };
        let (a, b) = (run(&linear), run(&coupled));
        assert_eq!(a.rows.len(), b.rows.len());
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.linf.to_bits(), y.linf.to_bits());
            assert_eq!(x.l2.to_bits(), y.l2.to_bits());
        }
    }
}
