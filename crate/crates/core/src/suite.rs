//! Built-in numerical checks, one per acceptance criterion.
//!
//! Every check returns its measurements together with the bound each one is
//! held to; the bounds are fixed here and nowhere else.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::characteristics::{compute_timing, delay_map, DelayTable, TimingData};
use crate::feedback::{
    boundary_closure, check_class_b, check_compatibility, plug_in_residual, synthesize_linear, FeedbackLaw, RampSet,
    Sampler,
};
use crate::lyapunov::{
    build_weights, calibrate_gamma, check_domination, defect_operator_bounds, fit_envelope, ratio_bound_constant,
    decay_tolerance, triple_norm, verify_decay, weight_identity_error, LyapunovObserver, WEIGHT_IDENTITY_TOL,
};
use crate::solver::{
    simulate, ComponentData, ExactSolution, InitialData, NoObserver, Observer, SamplingMode, SimulationOptions,
    SolverError, SolverMode, StateGrid,
};
use crate::system::{BoundaryCoupling, HyperbolicSystem, QuadraticMap, QuadraticTerm, SpeedProfile};

/// Seed of every randomized check.
pub const SUITE_SEED: u64 = 20_240_611;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub label: String,
    pub value: f64,
    pub relation: Relation,
    pub bound: f64,
}

impl Measurement {
    pub fn at_most(label: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            label: label.into(),
            value,
            relation: Relation::AtMost,
            bound,
        }
    }

    pub fn at_least(label: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            label: label.into(),
            value,
            relation: Relation::AtLeast,
            bound,
        }
    }

    pub fn passed(&self) -> bool {
        match self.relation {
            Relation::AtMost => self.value <= self.bound,
            Relation::AtLeast => self.value >= self.bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub measurements: Vec<Measurement>,
    /// Set when the check could not run to completion.
    pub error: Option<String>,
}

impl CriterionResult {
    pub fn passed(&self) -> bool {
        self.error.is_none() && !self.measurements.is_empty() && self.measurements.iter().all(Measurement::passed)
    }

    fn finish(id: u8, title: &'static str, body: impl FnOnce(&mut Vec<Measurement>) -> Result<(), String>) -> Self {
        let mut measurements = Vec::new();
        let error = body(&mut measurements).err();
        Self {
            id,
            title,
            measurements,
            error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteSelection {
    Linear,
    Nonlinear,
    All,
}

impl SuiteSelection {
    pub fn criteria(self) -> Vec<u8> {
        match self {
            Self::Linear => vec![1, 2, 3, 4, 5, 6, 7, 8, 10],
            Self::Nonlinear => vec![9],
            Self::All => (1..=10).collect(),
        }
    }
}

pub const TITLES: [&str; 10] = [
    "feedback plug-in consistency",
    "delay-map derivative identity",
    "finite-time vanishing (exact advection)",
    "grid convergence of the vanishing residual (upwind)",
    "Lyapunov decay",
    "envelope constant independent of Λ",
    "weight identities and ratio bound",
    "norm equivalence independent of q",
    "quasilinear small-data decay",
    "m < k closure",
];

/// Runs criterion `id` (1 to 10).
pub fn run_criterion(id: u8) -> CriterionResult {
    let title = TITLES[(id - 1) as usize];
    let body: fn(&mut Vec<Measurement>) -> Result<(), String> = match id {
        1 => criterion_1,
        2 => criterion_2,
        3 => criterion_3,
        4 => criterion_4,
        5 => criterion_5,
        6 => criterion_6,
        7 => criterion_7,
        8 => criterion_8,
        9 => criterion_9,
        10 => criterion_10,
        _ => panic!("no criterion {id}"),
    };
    CriterionResult::finish(id, title, body)
}

/// Human-readable report: one `PASS`/`FAIL` line per criterion followed by
/// its measurements.
pub fn render_report(results: &[CriterionResult]) -> String {
    let mut out = String::new();
    for r in results {
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{verdict} criterion {:>2}: {}", r.id, r.title);
        for m in &r.measurements {
            let op = match m.relation {
                Relation::AtMost => "<=",
                Relation::AtLeast => ">=",
            };
            let mark = if m.passed() { "ok  " } else { "FAIL" };
            let _ = writeln!(out, "    {mark} {}: {:.6e} {op} {:.6e}", m.label, m.value, m.bound);
        }
        if let Some(e) = &r.error {
            let _ = writeln!(out, "    error: {e}");
        }
    }
    out
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn constant_system(k: usize, speeds: &[f64], b: &[f64]) -> HyperbolicSystem {
    let m = speeds.len() - k;
    HyperbolicSystem::new(
        k,
        m,
        speeds.iter().map(|s| SpeedProfile::constant(*s)).collect(),
        BoundaryCoupling::Linear(DMatrix::from_row_slice(k, m, b)),
    )
    .expect("valid fixture")
}

/// `k = m = 1`, unit speeds, `B = [0.8]`.
pub fn scalar_loop() -> HyperbolicSystem {
    constant_system(1, &[1.0, 1.0], &[0.8])
}

/// `k = 1`, `m = 2`, speeds `(1, 1, 2)`, `B = [1 2]`.
pub fn three_state() -> HyperbolicSystem {
    constant_system(1, &[1.0, 1.0, 2.0], &[1.0, 2.0])
}

/// Smooth data vanishing at both ends, different per component.
pub fn smooth_data(n: usize) -> InitialData {
    InitialData::new(
        (0..n)
            .map(|c| ComponentData::sine(&[1.0 - 0.2 * c as f64, 0.3, -0.1 * c as f64]))
            .collect(),
    )
}

fn exact_options(horizon: f64) -> SimulationOptions {
    SimulationOptions {
        nx: 201,
        horizon,
        mode: SolverMode::Exact,
        ..Default::default()
    }
}

fn criterion_1(out: &mut Vec<Measurement>) -> Result<(), String> {
    const TRIALS: usize = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED);
    for (k, m) in [(1, 1), (1, 3), (2, 2), (2, 3), (3, 2), (3, 3)] {
        let mut worst = 0.0f64;
        let mut accepted = 0;
        while accepted < TRIALS {
            let b = DMatrix::from_fn(k, m, |_, _| rng.gen_range(-2.0..2.0));
            if !check_class_b(&b).is_member() {
                continue;
            }
            let synth = synthesize_linear(&b).map_err(err)?;
            let free: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            worst = worst.max(plug_in_residual(&b, &synth, &free).1);
            accepted += 1;
        }
        out.push(Measurement::at_most(format!("max |B v| for shape ({k},{m})"), worst, 1e-10));
    }
    Ok(())
}

fn criterion_2(out: &mut Vec<Measurement>) -> Result<(), String> {
    let profiles = [
        ("constant", [1.5, 0.0, 0.0, 0.0]),
        ("linear", [1.0, 1.0, 0.0, 0.0]),
        ("cubic", [1.0, 0.3, -0.2, 0.4]),
    ];
    for (name, coeffs) in profiles {
        // Family 1 carries the profile; family 2 is faster and constant.
        let sys = HyperbolicSystem::new(
            1,
            2,
            vec![
                SpeedProfile::constant(3.0),
                SpeedProfile::polynomial(&coeffs).map_err(err)?,
                SpeedProfile::constant(2.5),
            ],
            BoundaryCoupling::Linear(DMatrix::from_row_slice(1, 2, &[1.0, 1.0])),
        )
        .map_err(err)?;
        let step = 1e-4;
        let h = 1e-4;
        let mut worst = 0.0f64;
        for p in 0..64 {
            let x = (p as f64 + 0.5) / 64.0;
            let a = |y: f64| delay_map(&sys, &sys, 1, 2, y, step);
            let fd = (a(x + h) - a(x - h)) / (2.0 * h);
            let exact = sys.speed(1, a(x), None) / sys.speed(2, x, None);
            worst = worst.max((fd - exact).abs() / exact.abs());
        }
        out.push(Measurement::at_most(format!("{name} profile: max relative error"), worst, 1e-5));
    }
    Ok(())
}

/// Largest `‖w(t)‖_∞` over recorded rows with `t ≥ from`.
fn tail_sup(rows: &[crate::solver::TraceRow], from: f64) -> f64 {
    rows.iter()
        .filter(|r| r.t >= from - 1e-12)
        .map(|r| r.linf)
        .fold(0.0, f64::max)
}

fn criterion_3(out: &mut Vec<Measurement>) -> Result<(), String> {
    for (name, sys, expected) in [("k=m=1", scalar_loop(), 2.0), ("k=1,m=2", three_state(), 1.5)] {
        let timing = compute_timing(&sys);
        out.push(Measurement::at_most(
            format!("{name}: |T_opt - {expected}|"),
            (timing.t_opt - expected).abs(),
            1e-14,
        ));
        let delays = DelayTable::new(&sys, 201);
        let law = FeedbackLaw::linear(&sys, &delays).map_err(err)?;
        let w0 = smooth_data(sys.n());
        let trace = simulate(&sys, &law, &w0, &exact_options(timing.t_opt + 1.0), &mut NoObserver).map_err(err)?;
        out.push(Measurement::at_least(
            format!("{name}: ‖w(0)‖_∞"),
            trace.rows[0].linf,
            0.5,
        ));
        out.push(Measurement::at_most(
            format!("{name}: sup_(t ≥ T_opt) ‖w(t)‖_∞"),
            tail_sup(&trace.rows, timing.t_opt),
            1e-12,
        ));
    }
    Ok(())
}

/// Upwind residual `‖w(T_opt + 0.1)‖_∞` of the scalar loop.
pub fn upwind_residual(nx: usize) -> Result<f64, SolverError> {
    let sys = scalar_loop();
    let timing = compute_timing(&sys);
    let law = FeedbackLaw::linear(&sys, &DelayTable::new(&sys, nx))?;
    let t = timing.t_opt + 0.1;
    let opts = SimulationOptions {
        nx,
        horizon: t,
        ..Default::default()
    };
    let trace = simulate(&sys, &law, &smooth_data(2), &opts, &mut NoObserver)?;
    Ok(trace.rows.last().expect("rows").linf)
}

fn criterion_4(out: &mut Vec<Measurement>) -> Result<(), String> {
    let res: Vec<f64> = [101, 201, 401]
        .iter()
        .map(|nx| upwind_residual(*nx))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    out.push(Measurement::at_least("residual(101) / residual(201)", res[0] / res[1], 1.8));
    out.push(Measurement::at_least("residual(201) / residual(401)", res[1] / res[2], 1.8));
    Ok(())
}

/// Decay report of one closed-loop run with the weighted functional.
#[allow(clippy::too_many_arguments)]
pub fn decay_run(
    sys: &HyperbolicSystem,
    law: &FeedbackLaw,
    w0: &InitialData,
    timing: &TimingData,
    opts: &SimulationOptions,
    q: f64,
    lambda: f64,
    gamma: f64,
) -> Result<Vec<(f64, f64)>, String> {
    let delays = DelayTable::new(sys, opts.nx);
    let weights = build_weights(sys, timing, q, lambda, gamma, opts.nx);
    let mut obs = LyapunovObserver::new(sys, law, &weights, &delays);
    simulate(sys, law, w0, opts, &mut obs).map_err(err)?;
    Ok(obs.series())
}

fn criterion_5(out: &mut Vec<Measurement>) -> Result<(), String> {
    let (qs, lambdas) = ([1.0, 2.0], [1.0, 2.0, 4.0]);
    for (name, sys) in [("k=m=1", scalar_loop()), ("k=1,m=2", three_state())] {
        let timing = compute_timing(&sys);
        let synth = synthesize_linear(sys.coupling().jacobian_at_zero()).map_err(err)?;
        let gamma = calibrate_gamma(&sys, &synth, &timing, &qs, &lambdas, 512, SUITE_SEED).map_err(err)?;
        let fresh = check_domination(&sys, &synth, &timing, gamma, &qs, &lambdas, 512, SUITE_SEED + 1);
        out.push(Measurement::at_least(format!("{name}: Γ = {gamma} dominates fresh samples (fraction)"), fresh, 1.0));
        let w0 = smooth_data(sys.n());
        for mode in [SolverMode::Exact, SolverMode::Upwind] {
            let opts = SimulationOptions {
                nx: 201,
                horizon: timing.t_opt + 0.5,
                mode,
                ..Default::default()
            };
            let law = FeedbackLaw::linear(&sys, &DelayTable::new(&sys, opts.nx)).map_err(err)?;
            let tag = match mode {
                SolverMode::Exact => "exact",
                SolverMode::Upwind => "upwind",
            };
            for &q in &qs {
                for &lambda in &lambdas {
                    let series = decay_run(&sys, &law, &w0, &timing, &opts, q, lambda, gamma)?;
                    let tol = decay_tolerance(&sys, mode, opts.nx, q, lambda);
                    let report = verify_decay(&series, q, lambda, tol, 0.0, 0.0);
                    if report.checked_steps == 0 {
                        return Err(format!("{name} {tag} q={q} Λ={lambda}: no steps checked"));
                    }
                    out.push(Measurement::at_most(
                        format!("{name} {tag} q={q} Λ={lambda}: worst step margin"),
                        report.worst_margin,
                        tol,
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Initial data used for the envelope fit: the smooth data, a constant,
/// and the two linear ramps.
pub fn envelope_family() -> Vec<InitialData> {
    let poly = |coeffs: &[f64]| ComponentData::Series {
        sine: Vec::new(),
        poly: coeffs.to_vec(),
    };
    vec![
        smooth_data(2),
        InitialData::new(vec![poly(&[1.0]), poly(&[1.0])]),
        InitialData::new(vec![poly(&[0.0, 1.0]), poly(&[0.0, 1.0])]),
        InitialData::new(vec![poly(&[1.0, -1.0]), poly(&[1.0, -1.0])]),
    ]
}

/// Fitted envelope constants `C(Λ)` in the sup norm for the scalar loop:
/// for each `Λ`, the largest fit over [`envelope_family`], since the
/// envelope constant is uniform over the data.
pub fn envelope_constants(lambdas: &[f64]) -> Result<Vec<f64>, String> {
    let sys = scalar_loop();
    let timing = compute_timing(&sys);
    let law = FeedbackLaw::linear(&sys, &DelayTable::new(&sys, 201)).map_err(err)?;
    let mut out = vec![0.0f64; lambdas.len()];
    for w0 in envelope_family() {
        let trace =
            simulate(&sys, &law, &w0, &exact_options(timing.t_opt + 0.5), &mut NoObserver).map_err(err)?;
        let series: Vec<(f64, f64)> = trace.rows.iter().map(|r| (r.t, r.linf)).collect();
        for (c, l) in out.iter_mut().zip(lambdas) {
            *c = c.max(fit_envelope(&series, *l, timing.t_opt));
        }
    }
    Ok(out)
}

fn criterion_6(out: &mut Vec<Measurement>) -> Result<(), String> {
    let c = envelope_constants(&[1.0, 2.0, 4.0])?;
    let max = c.iter().copied().fold(f64::MIN, f64::max);
    let min = c.iter().copied().fold(f64::MAX, f64::min);
    for (l, v) in [1.0, 2.0, 4.0].iter().zip(&c) {
        out.push(Measurement::at_least(format!("C(Λ={l})"), *v, f64::MIN_POSITIVE));
    }
    out.push(Measurement::at_most("max C / min C", max / min, 3.0));
    Ok(())
}

/// A system with position-dependent speeds for the weight checks.
pub fn variable_speed_system() -> HyperbolicSystem {
    HyperbolicSystem::new(
        1,
        2,
        vec![
            SpeedProfile::polynomial(&[3.0, 0.5]).expect("coefficients"),
            SpeedProfile::polynomial(&[1.0, 0.3, -0.2, 0.1]).expect("coefficients"),
            SpeedProfile::polynomial(&[2.0, 0.5]).expect("coefficients"),
        ],
        BoundaryCoupling::Linear(DMatrix::from_row_slice(1, 2, &[1.0, 2.0])),
    )
    .expect("valid fixture")
}

fn criterion_7(out: &mut Vec<Measurement>) -> Result<(), String> {
    let grid = [1.0, 2.0, 4.0];
    for (name, sys) in [
        ("k=m=1", scalar_loop()),
        ("k=1,m=2", three_state()),
        ("variable speeds", variable_speed_system()),
    ] {
        let timing = compute_timing(&sys);
        let synth = synthesize_linear(sys.coupling().jacobian_at_zero()).map_err(err)?;
        let gamma = calibrate_gamma(&sys, &synth, &timing, &grid, &grid, 512, SUITE_SEED).map_err(err)?;
        let mut worst = 0.0f64;
        let mut constants = Vec::new();
        for &q in &grid {
            for &lambda in &grid {
                let w = build_weights(&sys, &timing, q, lambda, gamma, 65);
                worst = worst.max(weight_identity_error(&sys, &timing, &w));
                constants.push(ratio_bound_constant(&w, timing.t_opt));
            }
        }
        let max = constants.iter().copied().fold(f64::MIN, f64::max);
        let min = constants.iter().copied().fold(f64::MAX, f64::min);
        out.push(Measurement::at_most(format!("{name}: weight identity relative error"), worst, WEIGHT_IDENTITY_TOL));
        out.push(Measurement::at_most(format!("{name}: max C / min C over (q, Λ)"), max / min, 3.0));
    }
    Ok(())
}

/// Random smooth state with four sine modes and a linear part per component.
fn random_state(rng: &mut ChaCha8Rng, n: usize, nx: usize) -> StateGrid {
    InitialData::new(
        (0..n)
            .map(|_| ComponentData::Series {
                sine: (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                poly: (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            })
            .collect(),
    )
    .sample(nx)
}

fn criterion_8(out: &mut Vec<Measurement>) -> Result<(), String> {
    let sys = three_state();
    let nx = 101;
    let delays = DelayTable::new(&sys, nx);
    let law = FeedbackLaw::linear(&sys, &delays).map_err(err)?;
    let (lo, hi) = defect_operator_bounds(&law.synthesis, &delays);
    let lambda_star = hi.max(1.0 / lo);
    out.push(Measurement::at_most("λ* (from q = 2)", lambda_star, f64::MAX));
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED);
    let states: Vec<StateGrid> = (0..100).map(|_| random_state(&mut rng, sys.n(), nx)).collect();
    for q in [1.0, 2.0, 4.0, 8.0] {
        let (mut rmin, mut rmax) = (f64::MAX, 0.0f64);
        for s in &states {
            let r = triple_norm(s, &law, &delays, q).map_err(err)? / s.lq_norm(q);
            rmin = rmin.min(r);
            rmax = rmax.max(r);
        }
        out.push(Measurement::at_least(format!("q={q}: min ratio"), rmin, 1.0 / lambda_star));
        out.push(Measurement::at_most(format!("q={q}: max ratio"), rmax, lambda_star));
    }
    Ok(())
}

/// The quasilinear `2 × 2` system: `λ_i = λ_i0 (1 + 0.05 y_i)`,
/// `B(v) = 0.8 v + 0.5 v²`.
pub fn quasilinear_system() -> HyperbolicSystem {
    let base = [1.0, 1.25];
    let speeds = (0..2)
        .map(|i| {
            let mut c = vec![0.0; 2];
            c[i] = 0.05 * base[i];
            SpeedProfile::constant(base[i]).with_state_coupling(c)
        })
        .collect();
    let map = QuadraticMap::new(
        DMatrix::from_element(1, 1, 0.8),
        vec![QuadraticTerm {
            row: 0,
            a: 0,
            b: 0,
            coeff: 0.5,
        }],
    )
    .expect("valid terms");
    HyperbolicSystem::new(1, 1, speeds, BoundaryCoupling::Nonlinear(map)).expect("valid fixture")
}

/// Compatible data with `‖w0‖_C¹ = 0.01`: `w0_2 = A sin πx`,
/// `w0_1 = -0.8 (λ_2/λ_1) A sin πx`.
pub fn quasilinear_data(sys: &HyperbolicSystem) -> InitialData {
    let ratio = sys.speed(1, 0.0, None) / sys.speed(0, 0.0, None);
    let amp = 0.01 / std::f64::consts::PI / (0.8 * ratio).max(1.0);
    InitialData::new(vec![
        ComponentData::sine(&[-0.8 * ratio * amp]),
        ComponentData::sine(&[amp]),
    ])
}

pub const QUASILINEAR_DELTA: f64 = 0.2;

/// Records the control values `w_{k..n}(t, 1)` at every step.
#[derive(Default)]
pub struct ControlProbe {
    pub k: usize,
    pub samples: Vec<(f64, Vec<f64>)>,
}

impl Observer for ControlProbe {
    fn observe(
        &mut self,
        state: &StateGrid,
        _: Option<&ExactSolution<'_>>,
    ) -> Result<(Option<f64>, Option<f64>), SolverError> {
        let nx = state.nx;
        let controls = (self.k..state.n).map(|c| state.values[c * nx + nx - 1]).collect();
        self.samples.push((state.time, controls));
        Ok((None, None))
    }
}

fn quasilinear_run(nx: usize) -> Result<(HyperbolicSystem, TimingData, f64, f64), String> {
    let sys = quasilinear_system();
    let timing = compute_timing(&sys);
    let w0 = quasilinear_data(&sys);
    let ramps = RampSet::from_initial(&sys, &w0, QUASILINEAR_DELTA, nx);
    let law = FeedbackLaw::nonlinear(&sys, &DelayTable::new(&sys, nx), ramps).map_err(err)?;
    let t_end = timing.t_opt + QUASILINEAR_DELTA;
    let opts = SimulationOptions {
        nx,
        horizon: t_end,
        y_max: 0.05,
        sampling: SamplingMode::LocalCauchy,
        ..Default::default()
    };
    let trace = simulate(&sys, &law, &w0, &opts, &mut NoObserver).map_err(err)?;
    let last = trace.rows.last().expect("rows");
    Ok((sys, timing, trace.rows[0].linf, last.linf))
}

fn criterion_9(out: &mut Vec<Measurement>) -> Result<(), String> {
    let sys = quasilinear_system();
    let w0 = quasilinear_data(&sys);
    let nx = 201;
    out.push(Measurement::at_most("|‖w0‖_C¹ - 0.01|", (w0.c1_norm(nx) - 0.01).abs(), 1e-12));
    let compat = check_compatibility(&w0, &sys, nx);
    out.push(Measurement::at_most(
        "compatibility residual (orders 0, 1)",
        compat.order0_norm().max(compat.order1_norm()),
        1e-12,
    ));

    // (a) Ramps and the control around δ/2.
    let ramps = RampSet::from_initial(&sys, &w0, QUASILINEAR_DELTA, nx);
    let half = 0.5 * QUASILINEAR_DELTA;
    let mut jump = 0.0f64;
    let mut inactive = 0.0f64;
    for r in 0..ramps.len() {
        let pair = ramps.pair(r);
        for ramp in [pair.zeta, pair.eta] {
            let left = ramp.slope(half * (1.0 - 1e-12));
            let right = ramp.slope(half);
            jump = jump.max((left - right).abs());
            inactive = inactive.max(ramp.value(half).abs()).max(ramp.value(half + 0.05).abs());
        }
        out.push(Measurement::at_least("η(δ/4) (ramp active)", pair.eta.value(0.25 * QUASILINEAR_DELTA), 0.25));
    }
    out.push(Measurement::at_most("ramps after δ/2", inactive, 0.0));
    out.push(Measurement::at_most("jump of one-sided ramp slopes at δ/2", jump, 1e-6));

    let law = FeedbackLaw::nonlinear(&sys, &DelayTable::new(&sys, nx), ramps).map_err(err)?;
    let timing = compute_timing(&sys);
    let opts = SimulationOptions {
        nx,
        horizon: timing.t_opt + QUASILINEAR_DELTA,
        y_max: 0.05,
        ..Default::default()
    };
    // One-sided time derivatives of the closure on the state reached at δ/2.
    let snap_opts = SimulationOptions {
        horizon: half,
        snapshots: vec![half],
        ..opts.clone()
    };
    let trace = simulate(&sys, &law, &w0, &snap_opts, &mut NoObserver).map_err(err)?;
    let state = trace.snapshots.last().ok_or("no snapshot at δ/2")?;
    let h = 1e-8;
    let u = |t: f64| boundary_closure(t, state, &sys, &law, &mut Sampler::Frozen).map(|v| v[0]);
    let (before, at, after) = (u(half - h).map_err(err)?, u(half).map_err(err)?, u(half + h).map_err(err)?);
    out.push(Measurement::at_most(
        "closure: |left - right derivative| at δ/2",
        ((at - before) / h - (after - at) / h).abs(),
        1e-6,
    ));

    // (b) Residual at T_opt + δ under refinement.
    let mut residuals = Vec::new();
    for nx in [101, 201, 401] {
        let (_, _, w0_sup, end) = quasilinear_run(nx)?;
        residuals.push(end);
        out.push(Measurement::at_most(format!("nx={nx}: ‖w(T_opt+δ)‖_∞ / ‖w0‖_∞"), end / w0_sup, 1e-3));
    }
    out.push(Measurement::at_least("residual(101) / residual(201)", residuals[0] / residuals[1], 1.0));
    out.push(Measurement::at_least("residual(201) / residual(401)", residuals[1] / residuals[2], 1.0));

    // (c) Quasilinear decay with slack.
    let synth = synthesize_linear(sys.coupling().jacobian_at_zero()).map_err(err)?;
    let (q, lambda, slack) = (2.0, 1.0, 0.2);
    let gamma = calibrate_gamma(&sys, &synth, &timing, &[q], &[lambda], 512, SUITE_SEED).map_err(err)?;
    let series = decay_run(&sys, &law, &w0, &timing, &opts, q, lambda, gamma)?;
    let dx = 1.0 / (nx - 1) as f64;
    let tol = 5.0 * dx * q * lambda * sys.max_speed(opts.y_max);
    let report = verify_decay(&series, q, lambda, tol, slack, half);
    if report.checked_steps == 0 {
        return Err("quasilinear decay: no steps checked".into());
    }
    out.push(Measurement::at_most("worst step margin for t ≥ δ/2 (slack 0.2)", report.worst_margin, tol));
    Ok(())
}

/// `k = 2`, `m = 1`, speeds `(2, 1, 1)`.
pub fn wide_system() -> HyperbolicSystem {
    constant_system(2, &[2.0, 1.0, 1.0], &[1.0, 0.5])
}

fn criterion_10(out: &mut Vec<Measurement>) -> Result<(), String> {
    let sys = wide_system();
    let timing = compute_timing(&sys);
    out.push(Measurement::at_most("|T_opt - 2|", (timing.t_opt - 2.0).abs(), 1e-14));
    // C¹ bump: the upwind residual at T_opt is first order only when the
    // data and the zero control join with matching slopes.
    let w0 = InitialData::new(
        (0..3)
            .map(|c| ComponentData::Series {
                sine: Vec::new(),
                poly: [0.0, 0.0, 16.0, -32.0, 16.0].iter().map(|v| v * (1.0 - 0.3 * c as f64)).collect(),
            })
            .collect(),
    );
    let delays = DelayTable::new(&sys, 201);
    let law = FeedbackLaw::linear(&sys, &delays).map_err(err)?;
    out.push(Measurement::at_most(
        "linear map driving w_3 (coefficients)",
        law.synthesis.maps[0].row.len() as f64,
        0.0,
    ));

    let trace = simulate(&sys, &law, &w0, &exact_options(timing.t_opt + 0.5), &mut NoObserver).map_err(err)?;
    out.push(Measurement::at_most("exact: sup_(t ≥ T_opt) ‖w(t)‖_∞", tail_sup(&trace.rows, timing.t_opt), 1e-12));

    let sup0 = w0.sample(201).sup_norm();
    for nx in [101, 201, 401] {
        let law = FeedbackLaw::linear(&sys, &DelayTable::new(&sys, nx)).map_err(err)?;
        let opts = SimulationOptions {
            nx,
            horizon: timing.t_opt,
            ..Default::default()
        };
        let trace = simulate(&sys, &law, &w0, &opts, &mut NoObserver).map_err(err)?;
        let dx = 1.0 / (nx - 1) as f64;
        let scaled = trace.rows.last().expect("rows").linf / (sup0 * dx);
        out.push(Measurement::at_most(format!("upwind nx={nx}: ‖w(T_opt)‖_∞ / (‖w0‖_∞ Δx)"), scaled, 10.0));
    }

    // Nonlinear closure: the control is the ramp alone and vanishes after δ/2.
    let ramps = RampSet::from_initial(&sys, &w0, QUASILINEAR_DELTA, 201);
    let law = FeedbackLaw::nonlinear(&sys, &delays, ramps).map_err(err)?;
    let opts = SimulationOptions {
        nx: 201,
        horizon: timing.t_opt,
        ..Default::default()
    };
    let mut probe = ControlProbe {
        k: sys.k(),
        ..Default::default()
    };
    simulate(&sys, &law, &w0, &opts, &mut probe).map_err(err)?;
    let late = probe
        .samples
        .iter()
        .filter(|(t, _)| *t >= 0.5 * QUASILINEAR_DELTA)
        .map(|(_, u)| u[0].abs())
        .fold(0.0, f64::max);
    out.push(Measurement::at_most("nonlinear closure: sup_(t ≥ δ/2) |w_3(t, 1)|", late, 0.0));
    Ok(())
}
