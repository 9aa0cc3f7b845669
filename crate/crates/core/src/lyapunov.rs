//! Weighted Lyapunov functionals, their unweighted norms, and decay checks.
//!
//! With `ell = max(m, k)`, the functional is
//!
//! ```text
//! V(w) = Σ_{c < ell} ∫ p_c |w_c|^q + Σ_{j ≥ ell} ∫ p_j |T_j|^q,
//! T_j(x) = w_j(x) - M_j(w_k(a_{k,j}(x)), …, w_{j-1}(a_{j-1,j}(x))),
//! ```
//!
//! and the weights satisfy `(λ_c p_c)' = ∓ qΛ p_c` (minus for right-moving
//! families). All integrals are composite trapezoid sums on the solver grid.

use gauss_quad::GaussLegendre;
use nalgebra::DMatrix;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::characteristics::{DelayTable, FrozenField, SpeedField, TimingData};
use crate::feedback::{FeedbackError, FeedbackLaw, Synthesis};
use crate::numerics::{integrate, interp_uniform, trapezoid, QUAD_TOL};
use crate::solver::{time_derivative_field, ExactSolution, Observer, SolverError, SolverMode, StateGrid};
use crate::system::HyperbolicSystem;

/// Largest `Γ` tried by [`calibrate_gamma`].
pub const GAMMA_CAP: f64 = 1_099_511_627_776.0; // 2^40

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LyapunovError {
    #[error("no Γ ≤ 2^40 dominates the boundary terms (needed {needed:.3e})")]
    CalibrationFailed { needed: f64 },
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
}

/// `Φ_c(x) = ∫_0^x 1/λ_c(s, 0) ds` on the grid.
fn travel_coordinate(sys: &HyperbolicSystem, c: usize, nx: usize) -> Vec<f64> {
    let dx = 1.0 / (nx - 1) as f64;
    if let Some(speed) = SpeedField::constant_speed(sys, c) {
        return (0..nx).map(|p| p as f64 * dx / speed).collect();
    }
    let mut acc = 0.0;
    let mut out = vec![0.0];
    for p in 1..nx {
        acc += integrate(|x| 1.0 / sys.speed(c, x, None), (p - 1) as f64 * dx, p as f64 * dx);
        out.push(acc);
    }
    out
}

/// Exponents `(q, Λ, Γ)` and the weight samples `p_c(x_p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovWeights {
    pub q: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub k: usize,
    pub m: usize,
    pub nx: usize,
    /// Component-major samples.
    pub values: Vec<f64>,
    /// `(prefactor, sign, offset)` per component, see [`weight_shape`].
    pub shapes: Vec<(f64, f64, f64)>,
}

impl LyapunovWeights {
    pub fn ell(&self) -> usize {
        self.k.max(self.m)
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.values[c * self.nx..(c + 1) * self.nx]
    }
}

/// Closed-form weight ingredients for component `c`: `(prefactor, sign,
/// offset)` with `p_c(x) = prefactor · exp(sign·qΛ Φ_c(x) + qΛ offset) / λ_c(x)`.
fn weight_shape(k: usize, m: usize, tau: &[f64], gamma: f64, q: f64, c: usize) -> (f64, f64, f64) {
    let ell = k.max(m);
    if c < k {
        (1.0, -1.0, tau[c])
    } else if c < ell {
        (gamma.powf(q), 1.0, 0.0)
    } else {
        (gamma.powf(q), 1.0, tau[c - m])
    }
}

/// Weights on an `nx`-point grid.
pub fn build_weights(
    sys: &HyperbolicSystem,
    timing: &TimingData,
    q: f64,
    lambda: f64,
    gamma: f64,
    nx: usize,
) -> LyapunovWeights {
    let (k, m) = (sys.k(), sys.m());
    let mut values = Vec::with_capacity(sys.n() * nx);
    let shapes: Vec<_> = (0..sys.n())
        .map(|c| weight_shape(k, m, &timing.tau, gamma, q, c))
        .collect();
    for (c, &(pref, sign, offset)) in shapes.iter().enumerate() {
        let phi = travel_coordinate(sys, c, nx);
        for (p, phi) in phi.iter().enumerate() {
            let x = p as f64 / (nx - 1) as f64;
            values.push(pref * (q * lambda * (sign * phi + offset)).exp() / sys.speed(c, x, None));
        }
    }
    LyapunovWeights {
        q,
        lambda,
        gamma,
        k,
        m,
        nx,
        values,
        shapes,
    }
}

/// Weight of component `c` at an arbitrary `x`, with `Φ_c` by quadrature.
pub fn weight_at(sys: &HyperbolicSystem, timing: &TimingData, w: &LyapunovWeights, c: usize, x: f64) -> f64 {
    let (pref, sign, offset) = weight_shape(w.k, w.m, &timing.tau, w.gamma, w.q, c);
    let phi = integrate(|s| 1.0 / sys.speed(c, s, None), 0.0, x);
    pref * (w.q * w.lambda * (sign * phi + offset)).exp() / sys.speed(c, x, None)
}

/// Largest relative defect of the cellwise identity
/// `λp(x_{p+1}) - λp(x_p) = ∓qΛ ∫_{x_p}^{x_{p+1}} p`, scaled by `max |λp|` on the cell.
pub fn weight_identity_error(sys: &HyperbolicSystem, timing: &TimingData, w: &LyapunovWeights) -> f64 {
    let nx = w.nx;
    let dx = 1.0 / (nx - 1) as f64;
    let mut worst = 0.0f64;
    for c in 0..sys.n() {
        let sign = if sys.is_negative(c) { -1.0 } else { 1.0 };
        let lp: Vec<f64> = (0..nx)
            .map(|p| sys.speed(c, p as f64 * dx, None) * w.component(c)[p])
            .collect();
        for p in 0..nx - 1 {
            let lhs = lp[p + 1] - lp[p];
            let cell = integrate(|x| weight_at(sys, timing, w, c, x), p as f64 * dx, (p + 1) as f64 * dx);
            let rhs = sign * w.q * w.lambda * cell;
            worst = worst.max((lhs - rhs).abs() / lp[p].abs().max(lp[p + 1].abs()));
        }
    }
    worst
}

/// Tolerance used with [`weight_identity_error`].
pub const WEIGHT_IDENTITY_TOL: f64 = 10.0 * QUAD_TOL;

/// Per-step tolerance for [`verify_decay`]: round-off level in exact mode,
/// and a first-order allowance `5 Δx q Λ λ_max` for the upwind scheme.
pub fn decay_tolerance(sys: &HyperbolicSystem, mode: SolverMode, nx: usize, q: f64, lambda: f64) -> f64 {
    match mode {
        SolverMode::Exact => 1e-10,
        SolverMode::Upwind => 5.0 / (nx - 1) as f64 * q * lambda * sys.max_base_speed(),
    }
}

/// Smallest `C` with `max p / min p ≤ C^q e^{qΛ T_opt}`.
pub fn ratio_bound_constant(w: &LyapunovWeights, t_opt: f64) -> f64 {
    let max = w.values.iter().copied().fold(f64::MIN, f64::max);
    let min = w.values.iter().copied().fold(f64::MAX, f64::min);
    (max / min).powf(1.0 / w.q) * (-w.lambda * t_opt).exp()
}

/// Values of component `l` at off-grid positions.
fn sample(state: &StateGrid, exact: Option<&ExactSolution<'_>>, l: usize, x: f64) -> f64 {
    match exact {
        Some(ex) => ex.value(l, state.time, x),
        None => interp_uniform(state.component(l), x),
    }
}

/// Defect fields `T_j` for `j = ell..n` (index `j - ell`), read through `maps`.
pub fn defect_fields(
    state: &StateGrid,
    law: &FeedbackLaw,
    maps: &DelayTable,
    exact: Option<&ExactSolution<'_>>,
) -> Result<Vec<Vec<f64>>, FeedbackError> {
    let (k, ell, n, nx) = (law.k(), law.ell(), state.n, state.nx);
    let mut out = Vec::with_capacity(n - ell);
    let mut inputs = Vec::new();
    for j in ell..n {
        let own = state.component(j);
        let mut row = Vec::with_capacity(nx);
        for p in 0..nx {
            inputs.clear();
            inputs.extend((k..j).map(|l| sample(state, exact, l, maps.row(l, j)[p])));
            let mapped = if inputs.is_empty() {
                0.0
            } else {
                law.eval_map(j, &inputs)?
            };
            row.push(own[p] - mapped);
        }
        out.push(row);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovValue {
    pub total: f64,
    /// `T_j` for `j = ell..n`.
    pub defects: Vec<Vec<f64>>,
}

fn weighted_sum(
    state: &StateGrid,
    defects: &[Vec<f64>],
    ell: usize,
    q: f64,
    weight: impl Fn(usize, usize) -> f64,
) -> f64 {
    let dx = state.dx();
    let nx = state.nx;
    let mut total = 0.0;
    let mut integrand = vec![0.0; nx];
    for c in 0..state.n {
        let field = if c < ell {
            state.component(c)
        } else {
            &defects[c - ell][..]
        };
        for p in 0..nx {
            integrand[p] = weight(c, p) * field[p].abs().powf(q);
        }
        total += trapezoid(&integrand, dx);
    }
    total
}

/// `V(state)` with the defects exposed.
pub fn lyapunov_value(
    state: &StateGrid,
    weights: &LyapunovWeights,
    law: &FeedbackLaw,
    maps: &DelayTable,
    exact: Option<&ExactSolution<'_>>,
) -> Result<LyapunovValue, FeedbackError> {
    let defects = defect_fields(state, law, maps, exact)?;
    let total = match exact {
        Some(ex) => exact_integral(ex, state.time, state.nx, weights, law)?,
        None => weighted_sum(state, &defects, law.ell(), weights.q, |c, p| {
            weights.values[c * weights.nx + p]
        }),
    };
    Ok(LyapunovValue { total, defects })
}

/// `V` of the analytic solution: 8-point Gauss-Legendre on every grid cell,
/// with cells split at sign changes of the integrand base unless `q` is an
/// even integer. Fronts of the exact-mode solution sit on grid nodes, so
/// each piece is smooth.
fn exact_integral(
    ex: &ExactSolution<'_>,
    t: f64,
    nx: usize,
    weights: &LyapunovWeights,
    law: &FeedbackLaw,
) -> Result<f64, FeedbackError> {
    let rule = GaussLegendre::new(8).expect("degree 8 is valid");
    let (k, ell, q) = (law.k(), law.ell(), weights.q);
    let smooth_power = q.fract() == 0.0 && (q as i64) % 2 == 0;
    let dx = 1.0 / (nx - 1) as f64;
    let mut total = 0.0;
    let mut inputs = Vec::new();
    for c in 0..ex.n() {
        let (pref, sign, offset) = weights.shapes[c];
        let speed = ex.speed(c);
        let weight = |x: f64| pref * (q * weights.lambda * (sign * x / speed + offset)).exp() / speed;
        let mut failure = None;
        let mut base = |x: f64| -> f64 {
            let own = ex.value(c, t, x);
            if c < ell || c == k {
                return own;
            }
            inputs.clear();
            inputs.extend((k..c).map(|l| ex.value(l, t, ex.speed(l) / speed * x)));
            match law.eval_map(c, &inputs) {
                Ok(v) => own - v,
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        };
        for p in 0..nx - 1 {
            let (a, b) = (p as f64 * dx, (p + 1) as f64 * dx);
            let mut cuts = vec![a];
            if !smooth_power {
                let probes: Vec<(f64, f64)> = (0..=8)
                    .map(|i| {
                        let x = a + (b - a) * i as f64 / 8.0;
                        (x, base(x))
                    })
                    .collect();
                for w in probes.windows(2) {
                    let ((mut lo, flo), (mut hi, fhi)) = (w[0], w[1]);
                    if flo * fhi >= 0.0 {
                        continue;
                    }
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if base(mid) * flo > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    cuts.push(0.5 * (lo + hi));
                }
            }
            cuts.push(b);
            for w in cuts.windows(2) {
                total += rule.integrate(w[0], w[1], |x| weight(x) * base(x).abs().powf(q));
            }
        }
        if let Some(e) = failure {
            return Err(e);
        }
    }
    Ok(total)
}

/// The `C¹` part: the same functional applied to `∂_t w` and to the time
/// derivative of the defects,
/// `∂_t T_j = ∂_t w_j - Σ_l ∂_l M_j · (∂_t w_l + ∂_x w_l ∂_t a_{l,j})` at `a_{l,j}(x)`.
///
/// `previous_maps` with its time step gives `∂_t a` by a backward difference;
/// without it the maps are treated as time-independent.
pub fn lyapunov_value_c1(
    state: &StateGrid,
    weights: &LyapunovWeights,
    law: &FeedbackLaw,
    sys: &HyperbolicSystem,
    maps: &DelayTable,
    previous_maps: Option<(&DelayTable, f64)>,
) -> Result<f64, FeedbackError> {
    let (k, ell, n, nx) = (law.k(), law.ell(), state.n, state.nx);
    let dt_field = StateGrid {
        values: time_derivative_field(state, sys),
        ..state.clone()
    };
    let dx = state.dx();
    let mut defects = Vec::with_capacity(n - ell);
    let mut inputs = Vec::new();
    for j in ell..n {
        let mut row = Vec::with_capacity(nx);
        for p in 0..nx {
            let mut d = dt_field.component(j)[p];
            if j > k {
                inputs.clear();
                inputs.extend((k..j).map(|l| interp_uniform(state.component(l), maps.row(l, j)[p])));
                let grad = law.map_gradient(j, &inputs)?;
                for (r, g) in grad.iter().enumerate() {
                    let l = k + r;
                    let a = maps.row(l, j)[p];
                    let mut rate = interp_uniform(dt_field.component(l), a);
                    if let Some((prev, dt)) = previous_maps {
                        let da = (a - prev.row(l, j)[p]) / dt;
                        if da != 0.0 {
                            let w = state.component(l);
                            let cell = ((a * (nx - 1) as f64).floor() as usize).min(nx - 2);
                            rate += (w[cell + 1] - w[cell]) / dx * da;
                        }
                    }
                    d -= g * rate;
                }
            }
            row.push(d);
        }
        defects.push(row);
    }
    Ok(weighted_sum(&dt_field, &defects, ell, weights.q, |c, p| {
        weights.values[c * weights.nx + p]
    }))
}

/// `⫼v⫼ = (Σ_{c<ell} ∫|v_c|^q + Σ_j ∫|v_j - M_j(v_l ∘ b_{l,j})|^q)^{1/q}` for
/// arbitrary admissible maps `b`.
pub fn triple_norm(state: &StateGrid, law: &FeedbackLaw, maps: &DelayTable, q: f64) -> Result<f64, FeedbackError> {
    let defects = defect_fields(state, law, maps, None)?;
    Ok(weighted_sum(state, &defects, law.ell(), q, |_, _| 1.0).powf(1.0 / q))
}

/// `‖v‖_V`: [`triple_norm`] with the delay maps.
pub fn vnorm(state: &StateGrid, law: &FeedbackLaw, delays: &DelayTable, q: f64) -> Result<f64, FeedbackError> {
    triple_norm(state, law, delays, q)
}

/// Rebuilds the state from its plain components (`c < ell`) and defects.
pub fn back_substitute(
    plain: &StateGrid,
    defects: &[Vec<f64>],
    law: &FeedbackLaw,
    maps: &DelayTable,
) -> Result<StateGrid, FeedbackError> {
    let (k, ell, nx) = (law.k(), law.ell(), plain.nx);
    let mut out = plain.clone();
    let mut inputs = Vec::new();
    for j in ell..plain.n {
        for p in 0..nx {
            inputs.clear();
            inputs.extend((k..j).map(|l| interp_uniform(out.component(l), maps.row(l, j)[p])));
            let mapped = if inputs.is_empty() {
                0.0
            } else {
                law.eval_map(j, &inputs)?
            };
            out.values[j * nx + p] = defects[j - ell][p] + mapped;
        }
    }
    Ok(out)
}

/// Linear operator `v ↦ (v_c for c < ell, T_j for j ≥ ell)` on grid values,
/// conjugated by the square roots of the trapezoid weights. Its extreme
/// singular values bound `⫼v⫼ / ‖v‖_{L²}` from below and above.
pub fn defect_operator_bounds(synthesis: &Synthesis, maps: &DelayTable) -> (f64, f64) {
    let (k, m) = (synthesis.k, synthesis.m);
    let n = k + m;
    let ell = synthesis.ell();
    let nx = maps.nx();
    let dim = n * nx;
    let dx = 1.0 / (nx - 1) as f64;
    let mut op = DMatrix::<f64>::identity(dim, dim);
    for j in ell..n {
        let map = synthesis.map_for(j).expect("controlled component");
        for (r, coeff) in map.row.iter().enumerate() {
            let l = k + r;
            for p in 0..nx {
                let pos = maps.row(l, j)[p].clamp(0.0, 1.0) * (nx - 1) as f64;
                let cell = (pos.floor() as usize).min(nx - 2);
                let frac = pos - cell as f64;
                op[(j * nx + p, l * nx + cell)] -= coeff * (1.0 - frac);
                op[(j * nx + p, l * nx + cell + 1)] -= coeff * frac;
            }
        }
    }
    let sqrt_w: Vec<f64> = (0..dim)
        .map(|i| {
            let p = i % nx;
            let w = if p == 0 || p == nx - 1 { 0.5 * dx } else { dx };
            w.sqrt()
        })
        .collect();
    for r in 0..dim {
        for c in 0..dim {
            op[(r, c)] *= sqrt_w[r] / sqrt_w[c];
        }
    }
    let sv = op.singular_values();
    (sv.min(), sv.max())
}

/// Boundary domination at `x = 0`, per sample `v_+`:
/// `Γ^q Σ_{j ≥ ell} e^{qΛτ_{j-m}} |d_j|^q ≥ Σ_{i<k} e^{qΛτ_i} |(B v_+)_i|^q`,
/// where `d_j = v_j - M_j(v_k, …, v_{j-1})`. Returns the smallest `Γ`
/// satisfying it for that sample, or `∞` if none does.
fn needed_gamma(
    b: &DMatrix<f64>,
    synthesis: &Synthesis,
    tau: &[f64],
    v: &[f64],
    q: f64,
    lambda: f64,
) -> f64 {
    let (k, m) = (synthesis.k, synthesis.m);
    let ell = synthesis.ell();
    let bv = b * nalgebra::DVector::from_column_slice(v);
    let rhs: f64 = (0..k)
        .map(|i| (q * lambda * tau[i]).exp() * bv[i].abs().powf(q))
        .sum();
    if rhs == 0.0 {
        return 0.0;
    }
    let lhs: f64 = (ell..k + m)
        .map(|j| {
            let map = synthesis.map_for(j).expect("controlled component");
            let d = v[j - k] - map.eval_linear(&v[..j - k]);
            (q * lambda * tau[j - m]).exp() * d.abs().powf(q)
        })
        .sum();
    if lhs == 0.0 {
        return f64::INFINITY;
    }
    (rhs / lhs).powf(1.0 / q)
}

/// Smallest power of two `Γ ≥ 1` satisfying the boundary domination on
/// `samples` random traces `v_+ ∈ [-1, 1]^m` for every `(q, Λ)` given.
///
/// The ratio is scale invariant in `v_+`, so the best sample for each
/// `(q, Λ)` is then refined by a compass search to approach the supremum
/// over all traces rather than over the drawn ones.
pub fn calibrate_gamma(
    sys: &HyperbolicSystem,
    synthesis: &Synthesis,
    timing: &TimingData,
    qs: &[f64],
    lambdas: &[f64],
    samples: usize,
    seed: u64,
) -> Result<f64, LyapunovError> {
    let b = sys.coupling().jacobian_at_zero();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let traces: Vec<Vec<f64>> = (0..samples)
        .map(|_| (0..sys.m()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut needed = 1.0f64;
    for &q in qs {
        for &lambda in lambdas {
            let ratio = |v: &[f64]| needed_gamma(b, synthesis, &timing.tau, v, q, lambda);
            let Some((best, value)) = traces
                .iter()
                .map(|v| (v, ratio(v)))
                .max_by(|a, c| a.1.total_cmp(&c.1))
            else {
                continue;
            };
            needed = needed.max(value).max(compass_search(&ratio, best.clone(), value));
        }
    }
    let mut gamma = 1.0;
    while gamma < needed * (1.0 - 1e-12) {
        gamma *= 2.0;
        if gamma > GAMMA_CAP {
            return Err(LyapunovError::CalibrationFailed { needed });
        }
    }
    Ok(gamma)
}

/// Coordinate ascent with step halving from `0.25` down to `1e-9`.
fn compass_search(f: &impl Fn(&[f64]) -> f64, mut v: Vec<f64>, mut value: f64) -> f64 {
    if !value.is_finite() {
        return value;
    }
    let mut h = 0.25;
    while h > 1e-9 {
        let mut improved = false;
        for i in 0..v.len() {
            for sign in [1.0, -1.0] {
                let old = v[i];
                v[i] += sign * h;
                let trial = f(&v);
                if trial > value {
                    value = trial;
                    improved = true;
                } else {
                    v[i] = old;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    value
}

/// Fraction of fresh random samples on which `Γ` dominates (1.0 = all).
#[allow(clippy::too_many_arguments)]
pub fn check_domination(
    sys: &HyperbolicSystem,
    synthesis: &Synthesis,
    timing: &TimingData,
    gamma: f64,
    qs: &[f64],
    lambdas: &[f64],
    samples: usize,
    seed: u64,
) -> f64 {
    let b = sys.coupling().jacobian_at_zero();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ok = 0usize;
    let mut total = 0usize;
    for _ in 0..samples {
        let v: Vec<f64> = (0..sys.m()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for &q in qs {
            for &lambda in lambdas {
                total += 1;
                if needed_gamma(b, synthesis, &timing.tau, &v, q, lambda) <= gamma * (1.0 + 1e-12) {
                    ok += 1;
                }
            }
        }
    }
    ok as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    pub passed: bool,
    /// `max_n V_{n+1} / (V_n e^{-qΛ'Δt}) - 1` over the checked steps.
    pub worst_margin: f64,
    /// `log(V_{n+1} / V_n) / Δt` for every pair of positive values.
    pub rates: Vec<f64>,
    pub checked_steps: usize,
    pub first_violation: Option<f64>,
}

/// Checks `V_{n+1} ≤ V_n e^{-qΛ'Δt} (1 + tol)` while `V_n > 10⁻¹² V_0` and
/// `t_n ≥ t_start`, where `Λ' = Λ (1 - slack)`.
pub fn verify_decay(
    series: &[(f64, f64)],
    q: f64,
    lambda: f64,
    tol_disc: f64,
    slack: f64,
    t_start: f64,
) -> LyapunovReport {
    let floor = series.first().map(|s| 1e-12 * s.1).unwrap_or(0.0);
    let rate = q * lambda * (1.0 - slack);
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    let mut first_violation = None;
    let mut rates = Vec::new();
    for w in series.windows(2) {
        let ((t0, v0), (t1, v1)) = (w[0], w[1]);
        if v0 > 0.0 && v1 > 0.0 {
            rates.push((v1 / v0).ln() / (t1 - t0));
        }
        if t0 < t_start - 1e-12 || v0 <= floor || v0 == 0.0 {
            continue;
        }
        checked += 1;
        let margin = v1 / (v0 * (-rate * (t1 - t0)).exp()) - 1.0;
        if margin > tol_disc && first_violation.is_none() {
            first_violation = Some(t0);
        }
        worst = worst.max(margin);
    }
    LyapunovReport {
        passed: first_violation.is_none(),
        worst_margin: if checked == 0 { 0.0 } else { worst },
        rates,
        checked_steps: checked,
        first_violation,
    }
}

/// Smallest `C` with `‖w(t)‖ ≤ C e^{Λ(T_opt - t)} ‖w(0)‖` on the samples.
pub fn fit_envelope(series: &[(f64, f64)], lambda: f64, t_opt: f64) -> f64 {
    let norm0 = series.first().map(|s| s.1).unwrap_or(0.0);
    if norm0 == 0.0 {
        return 0.0;
    }
    series
        .iter()
        .map(|(t, v)| v / (norm0 * (lambda * (t_opt - t)).exp()))
        .fold(0.0, f64::max)
}

/// Records `V` (and `‖·‖_V`) at every observed state.
///
/// For quasilinear systems the delay maps follow the current state by
/// freezing it, and `V = V̂ + Ṽ` with the `C¹` part from
/// [`lyapunov_value_c1`].
pub struct LyapunovObserver<'a> {
    sys: &'a HyperbolicSystem,
    law: &'a FeedbackLaw,
    weights: &'a LyapunovWeights,
    delays: &'a DelayTable,
    with_c1: bool,
    previous: Option<(DelayTable, f64)>,
    /// `(t, V, Ṽ)` per observation.
    pub parts: Vec<(f64, f64, f64)>,
}

impl<'a> LyapunovObserver<'a> {
    pub fn new(
        sys: &'a HyperbolicSystem,
        law: &'a FeedbackLaw,
        weights: &'a LyapunovWeights,
        delays: &'a DelayTable,
    ) -> Self {
        Self {
            sys,
            law,
            weights,
            delays,
            with_c1: sys.is_quasilinear(),
            previous: None,
            parts: Vec::new(),
        }
    }

    /// `(t, V)` pairs.
    pub fn series(&self) -> Vec<(f64, f64)> {
        self.parts.iter().map(|(t, v, _)| (*t, *v)).collect()
    }
}

impl Observer for LyapunovObserver<'_> {
    fn observe(
        &mut self,
        state: &StateGrid,
        exact: Option<&ExactSolution<'_>>,
    ) -> Result<(Option<f64>, Option<f64>), SolverError> {
        if !self.with_c1 {
            let v = lyapunov_value(state, self.weights, self.law, self.delays, exact)?;
            let norm = vnorm(state, self.law, self.delays, self.weights.q)?;
            self.parts.push((state.time, v.total, 0.0));
            return Ok((Some(v.total), Some(norm)));
        }
        let field = FrozenField::new(self.sys, &state.values, state.nx);
        let maps = DelayTable::frozen(self.sys, &field, state.nx);
        let hat = lyapunov_value(state, self.weights, self.law, &maps, None)?;
        let prev = self
            .previous
            .as_ref()
            .map(|(table, t)| (table, state.time - t))
            .filter(|(_, dt)| *dt > 0.0);
        let tilde = lyapunov_value_c1(state, self.weights, self.law, self.sys, &maps, prev)?;
        let norm = vnorm(state, self.law, &maps, self.weights.q)?;
        self.previous = Some((maps, state.time));
        let total = hat.total + tilde;
        self.parts.push((state.time, total, tilde));
        Ok((Some(total), Some(norm)))
    }
}
