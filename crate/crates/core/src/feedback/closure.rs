//! Control values at `x = 1`.

use super::{FeedbackError, FeedbackLaw, FeedbackMode};
use crate::characteristics::FrozenField;
use crate::numerics::{cumulative_trapezoid, interp_uniform, invert_increasing};
use crate::solver::{advance_interior, impose_left_boundary, speed_table, StateGrid};
use crate::system::HyperbolicSystem;

/// How sampling positions are obtained.
#[derive(Debug, Clone)]
pub enum Sampler {
    /// Zero-state delay maps stored in the law.
    Fixed,
    /// Characteristics of the current snapshot held fixed in time.
    Frozen,
    /// Characteristics of a private copy of the state advanced over the
    /// determinacy triangle of each target.
    LocalCauchy(LocalCauchySampler),
}

/// Returns the `m` control values for components `k..n` at time `t`.
///
/// Interior values are read by linear interpolation. Targets are filled in
/// increasing order, so a sample falling in the last cell of a lower
/// controlled component sees that component's new boundary value.
pub fn boundary_closure(
    t: f64,
    state: &StateGrid,
    sys: &HyperbolicSystem,
    law: &FeedbackLaw,
    sampler: &mut Sampler,
) -> Result<Vec<f64>, FeedbackError> {
    let (k, m) = (law.k(), law.m());
    let ell = law.ell();
    let nonlinear = law.mode == FeedbackMode::Nonlinear;
    let ramps = law.ramps.as_ref().filter(|_| nonlinear);
    let gates: Vec<(f64, f64)> = (0..m)
        .map(|r| match ramps {
            Some(set) => {
                let pair = set.pair(r);
                (pair.zeta.value(t), pair.eta.value(t))
            }
            None => (0.0, 0.0),
        })
        .collect();

    let needs_positions = (ell..k + m).any(|j| j > k && gates[j - k].1 < 1.0);
    let positions: Vec<Vec<f64>> = if !needs_positions {
        vec![Vec::new(); law.synthesis.maps.len()]
    } else {
        match (nonlinear, sampler) {
            (false, _) | (true, Sampler::Fixed) => law.sample_positions.clone(),
            (true, Sampler::Frozen) => frozen_positions(sys, law, state),
            (true, Sampler::LocalCauchy(lc)) => lc.positions(sys, law, state),
        }
    };

    let nx = state.nx;
    let mut out = vec![0.0; m];
    for j in k..k + m {
        let (zeta, eta) = gates[j - k];
        if j < ell {
            out[j - k] = zeta;
            continue;
        }
        if eta == 1.0 {
            out[j - k] = zeta;
            continue;
        }
        let idx = law
            .synthesis
            .maps
            .iter()
            .position(|c| c.target == j)
            .expect("target is a controlled component");
        let inputs: Vec<f64> = positions[idx]
            .iter()
            .enumerate()
            .map(|(r, a)| {
                let l = k + r;
                sample_with_boundary(state.component(l), *a, out[r], nx)
            })
            .collect();
        let value = if positions[idx].is_empty() {
            0.0
        } else {
            law.eval_map(j, &inputs)?
        };
        out[j - k] = zeta + (1.0 - eta) * value;
    }
    Ok(out)
}

/// Linear interpolation where the last node is replaced by `boundary`.
fn sample_with_boundary(values: &[f64], a: f64, boundary: f64, nx: usize) -> f64 {
    let last = nx - 1;
    let pos = a.clamp(0.0, 1.0) * last as f64;
    let p = (pos.floor() as usize).min(last - 1);
    let frac = pos - p as f64;
    let right = if p + 1 == last { boundary } else { values[p + 1] };
    if frac == 0.0 {
        return values[p];
    }
    values[p] * (1.0 - frac) + right * frac
}

/// `a_{l,j}(1) = Φ_l⁻¹(Φ_j(1))` for the frozen field of `state`.
fn frozen_positions(sys: &HyperbolicSystem, law: &FeedbackLaw, state: &StateGrid) -> Vec<Vec<f64>> {
    let nx = state.nx;
    let field = FrozenField::new(sys, &state.values, nx);
    let dx = state.dx();
    let phi = |f: usize| {
        let slowness: Vec<f64> = field.tabulate(f, nx).iter().map(|s| 1.0 / s).collect();
        cumulative_trapezoid(&slowness, dx)
    };
    law.synthesis
        .maps
        .iter()
        .map(|map| {
            if map.row.is_empty() {
                return Vec::new();
            }
            let total = *phi(map.target).last().unwrap();
            (sys.k()..map.target)
                .map(|l| invert_increasing(&phi(l), total))
                .collect()
        })
        .collect()
}

/// Sampling positions from a private copy of the state.
///
/// The copy is advanced with the solver's upwind step (inflow at `x = 1`
/// held, `B` imposed at `x = 0`) while the target characteristic from
/// `(t, 1)` is integrated to `x = 0`. Each input family is then traced back
/// from the arrival point to the current time through the stored speed
/// snapshots, linearly interpolated in time.
#[derive(Debug, Clone)]
pub struct LocalCauchySampler {
    dt: f64,
    max_steps: usize,
}

impl LocalCauchySampler {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            max_steps: 1_000_000,
        }
    }

    pub fn positions(
        &mut self,
        sys: &HyperbolicSystem,
        law: &FeedbackLaw,
        state: &StateGrid,
    ) -> Vec<Vec<f64>> {
        let k = sys.k();
        let nx = state.nx;
        let targets: Vec<usize> = law
            .synthesis
            .maps
            .iter()
            .filter(|c| !c.row.is_empty())
            .map(|c| c.target)
            .collect();
        if targets.is_empty() {
            return vec![Vec::new(); law.synthesis.maps.len()];
        }

        let mut scratch = state.values.clone();
        let mut snapshots = vec![speed_table(sys, state)];
        let mut heads: Vec<(usize, f64, Option<f64>)> = targets.iter().map(|j| (*j, 1.0, None)).collect();
        let dt = self.dt;
        let mut steps = 0;
        while heads.iter().any(|h| h.2.is_none()) && steps < self.max_steps {
            let before = snapshots.last().unwrap().clone();
            advance_interior(sys, &mut scratch, &before, nx, dt);
            impose_left_boundary(sys, &mut scratch, nx);
            let grid = StateGrid {
                n: state.n,
                nx,
                values: scratch.clone(),
                time: 0.0,
            };
            let after = speed_table(sys, &grid);
            let s0 = steps as f64 * dt;
            for head in heads.iter_mut().filter(|h| h.2.is_none()) {
                let f = |theta: f64, x: f64| -lerp_speed(&before, &after, theta, head.0, x, nx);
                let next = rk4_in_slab(&f, head.1, 1.0, dt);
                if next > 0.0 {
                    head.1 = next;
                    continue;
                }
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if rk4_in_slab(&f, head.1, mid, dt) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                head.2 = Some(s0 + 0.5 * (lo + hi) * dt);
            }
            snapshots.push(after);
            steps += 1;
        }

        let speed_at = |family: usize, s: f64, x: f64| {
            let idx = ((s / dt).floor() as usize).min(snapshots.len() - 2);
            let theta = (s / dt - idx as f64).clamp(0.0, 1.0);
            lerp_speed(&snapshots[idx], &snapshots[idx + 1], theta, family, x, nx)
        };

        law.synthesis
            .maps
            .iter()
            .map(|map| {
                if map.row.is_empty() {
                    return Vec::new();
                }
                let arrival = heads
                    .iter()
                    .find(|h| h.0 == map.target)
                    .and_then(|h| h.2)
                    .unwrap_or(steps as f64 * dt);
                (k..map.target)
                    .map(|l| {
                        // Backward in time the left-moving family moves right.
                        let rhs = |s: f64, x: f64| -speed_at(l, s, x);
                        let pieces = (arrival / dt).ceil().max(1.0) as usize;
                        let h = -arrival / pieces as f64;
                        let mut x = 0.0;
                        let mut s = arrival;
                        for _ in 0..pieces {
                            let k1 = rhs(s, x);
                            let k2 = rhs(s + 0.5 * h, x + 0.5 * h * k1);
                            let k3 = rhs(s + 0.5 * h, x + 0.5 * h * k2);
                            let k4 = rhs(s + h, x + h * k3);
                            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                            s += h;
                        }
                        x.clamp(0.0, 1.0)
                    })
                    .collect()
            })
            .collect()
    }
}

#[inline]
fn lerp_speed(before: &[f64], after: &[f64], theta: f64, family: usize, x: f64, nx: usize) -> f64 {
    let a = interp_uniform(&before[family * nx..(family + 1) * nx], x);
    let b = interp_uniform(&after[family * nx..(family + 1) * nx], x);
    a + theta * (b - a)
}

/// RK4 over the first `frac` of a time slab of length `dt`; `f(θ, x)` is
/// `dx/ds` at slab fraction `θ`.
fn rk4_in_slab<F: Fn(f64, f64) -> f64>(f: &F, x: f64, frac: f64, dt: f64) -> f64 {
    let h = frac * dt;
    let k1 = f(0.0, x);
    let k2 = f(0.5 * frac, x + 0.5 * h * k1);
    let k3 = f(0.5 * frac, x + 0.5 * h * k2);
    let k4 = f(frac, x + h * k3);
    x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::DelayTable;
    use crate::feedback::RampSet;
    use crate::system::{BoundaryCoupling, QuadraticMap, QuadraticTerm, SpeedProfile};
    use nalgebra::DMatrix;

    fn three_component(coupled: bool) -> HyperbolicSystem {
        let speeds = if coupled {
            vec![
                SpeedProfile::constant(1.0).with_state_coupling(vec![0.05, 0.0, 0.0]),
                SpeedProfile::constant(1.0).with_state_coupling(vec![0.0, 0.05, 0.0]),
                SpeedProfile::constant(2.0).with_state_coupling(vec![0.0, 0.0, 0.1]),
            ]
        } else {
            vec![SpeedProfile::constant(1.0), SpeedProfile::constant(1.0), SpeedProfile::constant(2.0)]
        };
        let map = QuadraticMap::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            vec![QuadraticTerm {
                row: 0,
                a: 1,
                b: 1,
                coeff: 1.0,
            }],
        )
        .unwrap();
        HyperbolicSystem::new(1, 2, speeds, BoundaryCoupling::Nonlinear(map)).unwrap()
    }

    #[test]
    fn linear_closure_reads_delay_position() {
        let sys = HyperbolicSystem::new(
            1,
            2,
            vec![SpeedProfile::constant(1.0), SpeedProfile::constant(1.0), SpeedProfile::constant(2.0)],
            BoundaryCoupling::Linear(DMatrix::from_row_slice(1, 2, &[1.0, 2.0])),
        )
        .unwrap();
        let nx = 21;
        let law = FeedbackLaw::linear(&sys, &DelayTable::new(&sys, nx)).unwrap();
        assert_eq!(law.sample_positions, vec![vec![0.5]]);
        let mut state = StateGrid::zeros(3, nx);
        for p in 0..nx {
            state.values[nx + p] = state.x(p).powi(2);
        }
        let out = boundary_closure(0.3, &state, &sys, &law, &mut Sampler::Fixed).unwrap();
        assert_eq!(out, vec![0.0, -0.5 * 0.25]);
    }

    #[test]
    fn scalar_loop_control_is_zero() {
        let sys = HyperbolicSystem::new(
            1,
            1,
            vec![SpeedProfile::constant(1.0); 2],
            BoundaryCoupling::Linear(DMatrix::from_element(1, 1, 0.8)),
        )
        .unwrap();
        let law = FeedbackLaw::linear(&sys, &DelayTable::new(&sys, 11)).unwrap();
        let mut state = StateGrid::zeros(2, 11);
        state.values.iter_mut().for_each(|v| *v = 0.7);
        for t in [0.0, 0.5, 3.0] {
            assert_eq!(boundary_closure(t, &state, &sys, &law, &mut Sampler::Fixed).unwrap(), vec![0.0]);
        }
    }

    #[test]
    fn nonlinear_zero_state_after_ramps_gives_zero() {
        let sys = three_component(true);
        let nx = 41;
        let ramps = RampSet::new(0.2, &[0.3, -0.2], &[1.0, 2.0]);
        let law = FeedbackLaw::nonlinear(&sys, &DelayTable::new(&sys, nx), ramps).unwrap();
        let state = StateGrid::zeros(3, nx);
        for mut sampler in [Sampler::Fixed, Sampler::Frozen, Sampler::LocalCauchy(LocalCauchySampler::new(0.01))] {
            let out = boundary_closure(0.1, &state, &sys, &law, &mut sampler).unwrap();
            assert_eq!(out, vec![0.0, 0.0]);
            let out = boundary_closure(0.0, &state, &sys, &law, &mut sampler).unwrap();
            assert_eq!(out, vec![0.3, -0.2]);
        }
    }

    #[test]
    fn samplers_agree_with_zero_state_delays_without_coupling() {
        let sys = three_component(false);
        let nx = 101;
        let delays = DelayTable::new(&sys, nx);
        let ramps = RampSet::new(0.2, &[0.0, 0.0], &[0.0, 0.0]);
        let law = FeedbackLaw::nonlinear(&sys, &delays, ramps).unwrap();
        let state = StateGrid::zeros(3, nx);
        let dt = 0.9 / (nx - 1) as f64 / 2.0;
        let frozen = frozen_positions(&sys, &law, &state);
        let local = LocalCauchySampler::new(dt).positions(&sys, &law, &state);
        assert!((frozen[0][0] - 0.5).abs() < 1e-12);
        assert!((local[0][0] - 0.5).abs() < 1e-9, "{}", local[0][0]);
    }

    #[test]
    fn local_cauchy_tracks_state_dependent_speed() {
        // With a uniform state the speeds are constant in space and time, so
        // the sampling point is λ_2(y)/λ_3(y).
        let sys = three_component(true);
        let nx = 101;
        let delays = DelayTable::new(&sys, nx);
        let ramps = RampSet::new(0.2, &[0.0, 0.0], &[0.0, 0.0]);
        let law = FeedbackLaw::nonlinear(&sys, &delays, ramps).unwrap();
        let mut state = StateGrid::zeros(3, nx);
        let y = [0.0, 0.2, 0.1];
        for c in 0..3 {
            state.component_mut(c).iter_mut().for_each(|v| *v = y[c]);
        }
        // Keep the boundary relation so the copy stays uniform: w1 = w2 + 2 w3 + w3².
        let w1 = y[1] + 2.0 * y[2] + y[2] * y[2];
        state.component_mut(0).iter_mut().for_each(|v| *v = w1);
        let l2 = 1.0 + 0.05 * y[1];
        let l3 = 2.0 + 0.1 * y[2];
        let expected = l2 / l3;
        let frozen = frozen_positions(&sys, &law, &state);
        assert!((frozen[0][0] - expected).abs() < 1e-12);
        let dt = 0.9 / (nx - 1) as f64 / 2.1;
        let local = LocalCauchySampler::new(dt).positions(&sys, &law, &state);
        assert!((local[0][0] - expected).abs() < 1e-9, "{} vs {expected}", local[0][0]);
    }
}
