//! Characteristic curves, transit times, delay maps and the optimal time.
//!
//! Family `i < k` travels right with `dx/dt = λ_i`, family `i ≥ k` travels
//! left with `dx/dt = -λ_i`. Flows are computed with fixed-step RK4 on a
//! [`SpeedField`], which is either the zero-state speed of a system or a
//! snapshot of the state frozen in time.

use crate::numerics::{cumulative_trapezoid, integrate, invert_increasing, rk4_step};
use crate::system::HyperbolicSystem;

/// Upper bound on the RK4 step.
pub const MAX_FLOW_STEP: f64 = 1e-3;
/// Position tolerance of the exit-time bisection.
pub const EVENT_TOL: f64 = 1e-10;

/// Speed magnitudes as a function of position only.
pub trait SpeedField {
    fn speed(&self, family: usize, x: f64) -> f64;

    /// `Some(λ)` when the family's speed does not depend on `x`.
    fn constant_speed(&self, _family: usize) -> Option<f64> {
        None
    }
}

/// The zero-state speeds `λ_i(x, 0)`.
impl SpeedField for HyperbolicSystem {
    #[inline]
    fn speed(&self, family: usize, x: f64) -> f64 {
        self.speed(family, x, None)
    }

    fn constant_speed(&self, family: usize) -> Option<f64> {
        let base = self.profile(family).base_coefficients();
        base.iter()
            .skip(1)
            .all(|c| *c == 0.0)
            .then_some(base[0])
    }
}

/// Speeds `λ_i(x, w(x))` for a state snapshot `w` held fixed in time.
///
/// The state enters affinely, so the coupling sum is tabulated per family and
/// interpolated linearly; the base polynomial is evaluated exactly.
#[derive(Debug, Clone)]
pub struct FrozenField<'a> {
    sys: &'a HyperbolicSystem,
    /// `coupling[f][p] = Σ_j c_{f,j} w_j(x_p)`, empty for families without coupling.
    coupling: Vec<Vec<f64>>,
}

impl<'a> FrozenField<'a> {
    /// `values` is component-major, `values[c * nx + p]`.
    pub fn new(sys: &'a HyperbolicSystem, values: &[f64], nx: usize) -> Self {
        let coupling = sys
            .speeds()
            .iter()
            .map(|profile| match profile.state_coupling() {
                Some(c) if profile.is_quasilinear() => (0..nx)
                    .map(|p| {
                        c.iter()
                            .enumerate()
                            .map(|(j, c)| c * values[j * nx + p])
                            .sum()
                    })
                    .collect(),
                _ => Vec::new(),
            })
            .collect();
        Self { sys, coupling }
    }

    /// Family speeds sampled on the `nx`-point grid.
    pub fn tabulate(&self, family: usize, nx: usize) -> Vec<f64> {
        (0..nx)
            .map(|p| self.speed(family, p as f64 / (nx - 1) as f64))
            .collect()
    }
}

impl SpeedField for FrozenField<'_> {
    #[inline]
    fn speed(&self, family: usize, x: f64) -> f64 {
        let base = self.sys.profile(family).base_at(x);
        match self.coupling[family].as_slice() {
            [] => base,
            table => base + crate::numerics::interp_uniform(table, x),
        }
    }

    fn constant_speed(&self, family: usize) -> Option<f64> {
        if self.coupling[family].is_empty() {
            SpeedField::constant_speed(self.sys, family)
        } else {
            None
        }
    }
}

/// `+1` for right-moving (negative-speed) families, `-1` otherwise.
#[inline]
pub fn direction(sys: &HyperbolicSystem, family: usize) -> f64 {
    if sys.is_negative(family) {
        1.0
    } else {
        -1.0
    }
}

/// RK4 step size `min(dx / λ_max, 1e-3)`.
pub fn flow_step(dx: f64, max_speed: f64) -> f64 {
    (dx / max_speed).min(MAX_FLOW_STEP)
}

/// The curve `x_i(·, s, ξ)` evaluated at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowQuery {
    pub family: usize,
    pub t: f64,
    pub s: f64,
    pub xi: f64,
}

/// Position `x_i(t, s, ξ)` of the family-`i` characteristic through `(s, ξ)`.
pub fn flow(
    sys: &HyperbolicSystem,
    field: &impl SpeedField,
    query: FlowQuery,
    step: f64,
) -> f64 {
    let dir = direction(sys, query.family);
    let span = query.t - query.s;
    if let Some(speed) = field.constant_speed(query.family) {
        return query.xi + dir * speed * span;
    }
    if span == 0.0 {
        return query.xi;
    }
    let steps = (span.abs() / step).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let rhs = |x: f64| dir * field.speed(query.family, x);
    (0..steps).fold(query.xi, |x, _| rk4_step(&rhs, x, h))
}

/// Time `τ(j, x)` for the left-moving family `j` to travel from `x` to `0`.
pub fn transit_time(field: &impl SpeedField, family: usize, x: f64, step: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if let Some(speed) = field.constant_speed(family) {
        return x / speed;
    }
    let rhs = |y: f64| -field.speed(family, y);
    let mut pos = x;
    let mut time = 0.0;
    loop {
        let next = rk4_step(&rhs, pos, step);
        if next > 0.0 {
            pos = next;
            time += step;
            continue;
        }
        if next == 0.0 {
            return time + step;
        }
        // Bracket the exit inside the last step and bisect on its length.
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let p = rk4_step(&rhs, pos, mid * step);
            if p.abs() < EVENT_TOL {
                return time + mid * step;
            }
            if p > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return time + 0.5 * (lo + hi) * step;
    }
}

/// Transit times and the optimal stabilization time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingData {
    pub tau: Vec<f64>,
    pub t_opt: f64,
}

/// `τ_i = ∫_0^1 dx / λ_i(x, 0)` and `T_opt`.
pub fn compute_timing(sys: &HyperbolicSystem) -> TimingData {
    let tau: Vec<f64> = (0..sys.n())
        .map(|i| match SpeedField::constant_speed(sys, i) {
            Some(speed) => 1.0 / speed,
            None => integrate(|x| 1.0 / sys.speed(i, x, None), 0.0, 1.0),
        })
        .collect();
    let t_opt = optimal_time(sys.k(), sys.m(), &tau);
    TimingData { tau, t_opt }
}

/// The optimal time from the transit times.
///
/// For `m ≥ k` it is `max{τ_1 + τ_{m+1}, …, τ_k + τ_{m+k}, τ_{k+1}}`, for
/// `m < k` it is `max{τ_{k+1-m} + τ_{k+1}, …, τ_k + τ_{k+m}}` (one-based).
pub fn optimal_time(k: usize, m: usize, tau: &[f64]) -> f64 {
    if m >= k {
        (0..k)
            .map(|i| tau[i] + tau[m + i])
            .fold(tau[k], f64::max)
    } else {
        (0..m)
            .map(|r| tau[k - m + r] + tau[k + r])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `a_{i,j}(x) = x_i(0, τ(j, x), 0)` for left-moving families `i < j`.
pub fn delay_map(
    sys: &HyperbolicSystem,
    field: &impl SpeedField,
    i: usize,
    j: usize,
    x: f64,
    step: f64,
) -> f64 {
    if let (Some(li), Some(lj)) = (field.constant_speed(i), field.constant_speed(j)) {
        return li / lj * x;
    }
    let tau = transit_time(field, j, x, step);
    flow(
        sys,
        field,
        FlowQuery {
            family: i,
            t: 0.0,
            s: tau,
            xi: 0.0,
        },
        step,
    )
}

/// Delay maps `a_{l,j}` on the solver grid for every pair `k ≤ l < j < n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayTable {
    k: usize,
    m: usize,
    nx: usize,
    /// Row-major over `(l - k, j - k)`; empty unless `l < j`.
    rows: Vec<Vec<f64>>,
}

impl DelayTable {
    /// Zero-state delay maps by characteristic integration.
    pub fn new(sys: &HyperbolicSystem, nx: usize) -> Self {
        let dx = 1.0 / (nx - 1) as f64;
        let step = flow_step(dx, sys.max_base_speed());
        Self::build(sys.k(), sys.m(), nx, |l, j| {
            (0..nx)
                .map(|p| delay_map(sys, sys, l, j, p as f64 * dx, step))
                .collect()
        })
    }

    /// Delay maps of a frozen field through the tabulated travel-time
    /// coordinates `Φ_f(x) = ∫_0^x 1/λ_f`: `a_{l,j} = Φ_l⁻¹ ∘ Φ_j`.
    pub fn frozen(sys: &HyperbolicSystem, field: &FrozenField<'_>, nx: usize) -> Self {
        let dx = 1.0 / (nx - 1) as f64;
        let phi: Vec<Option<Vec<f64>>> = (0..sys.n())
            .map(|f| {
                (f >= sys.k()).then(|| {
                    let slowness: Vec<f64> =
                        field.tabulate(f, nx).iter().map(|s| 1.0 / s).collect();
                    cumulative_trapezoid(&slowness, dx)
                })
            })
            .collect();
        Self::build(sys.k(), sys.m(), nx, |l, j| {
            let (phi_l, phi_j) = (phi[l].as_ref().unwrap(), phi[j].as_ref().unwrap());
            phi_j.iter().map(|v| invert_increasing(phi_l, *v)).collect()
        })
    }

    fn build(k: usize, m: usize, nx: usize, mut row: impl FnMut(usize, usize) -> Vec<f64>) -> Self {
        let mut rows = vec![Vec::new(); m * m];
        for l in k..k + m {
            for j in l + 1..k + m {
                rows[(l - k) * m + (j - k)] = row(l, j);
            }
        }
        Self { k, m, nx, rows }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Samples `a_{l,j}(x_p)`.
    pub fn row(&self, l: usize, j: usize) -> &[f64] {
        &self.rows[(l - self.k) * self.m + (j - self.k)]
    }

    /// `a_{l,j}(1)`.
    pub fn at_boundary(&self, l: usize, j: usize) -> f64 {
        self.row(l, j)[self.nx - 1]
    }
}
