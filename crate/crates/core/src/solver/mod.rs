//! Closed-loop time integration.
//!
//! Two modes are available. [`SolverMode::Upwind`] is a first-order upwind
//! scheme for general speeds. [`SolverMode::Exact`] evaluates the
//! method-of-characteristics solution for constant speeds directly on the
//! grid at multiples of a time step that moves every family by a whole
//! number of cells.

mod exact;
mod initial;
mod upwind;

pub use exact::{exact_time_step, ExactSolution};
pub use initial::{ComponentData, InitialData};
pub use upwind::{step, time_derivative_field};

pub(crate) use upwind::{advance_interior, impose_left_boundary, speed_table};

use thiserror::Error;

use crate::feedback::{FeedbackError, FeedbackLaw, FeedbackMode, LocalCauchySampler, Sampler};
use crate::system::HyperbolicSystem;

/// Sup-norm beyond which a run is aborted.
pub const BLOW_UP: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("time step {dt:.3e} exceeds the CFL limit {limit:.3e}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("solution blew up at t = {t:.4} (sup norm {sup:.3e})")]
    BlowUp { t: f64, sup: f64 },
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error("exact mode unavailable: {0}")]
    ExactModeUnsupported(&'static str),
    #[error("initial data has {got} components, system has {expected}")]
    ComponentMismatch { expected: usize, got: usize },
    #[error("grid needs at least 3 points, got {0}")]
    GridTooSmall(usize),
}

/// Values `w_c(x_p)` on the uniform grid `x_p = p / (nx - 1)`, stored
/// component-major (`values[c * nx + p]`).
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    pub n: usize,
    pub nx: usize,
    pub values: Vec<f64>,
    pub time: f64,
}

impl StateGrid {
    pub fn zeros(n: usize, nx: usize) -> Self {
        Self {
            n,
            nx,
            values: vec![0.0; n * nx],
            time: 0.0,
        }
    }

    pub fn dx(&self) -> f64 {
        1.0 / (self.nx - 1) as f64
    }

    pub fn x(&self, p: usize) -> f64 {
        p as f64 / (self.nx - 1) as f64
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.values[c * self.nx..(c + 1) * self.nx]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.values[c * self.nx..(c + 1) * self.nx]
    }

    /// All components at node `p`.
    pub fn node(&self, p: usize) -> Vec<f64> {
        (0..self.n).map(|c| self.values[c * self.nx + p]).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `(∫ Σ_c |w_c|^q)^{1/q}` by the trapezoid rule.
    pub fn lq_norm(&self, q: f64) -> f64 {
        let integrand: Vec<f64> = (0..self.nx)
            .map(|p| (0..self.n).map(|c| self.values[c * self.nx + p].abs().powf(q)).sum())
            .collect();
        crate::numerics::trapezoid(&integrand, self.dx()).powf(1.0 / q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMode {
    #[default]
    Upwind,
    Exact,
}

/// How the nonlinear closure locates its sampling points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    #[default]
    LocalCauchy,
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOptions {
    pub nx: usize,
    pub cfl: f64,
    pub horizon: f64,
    /// Output interval; `0` records every step.
    pub cadence: f64,
    /// Exponent of the `lq` trace column.
    pub q: f64,
    pub mode: SolverMode,
    pub sampling: SamplingMode,
    /// Radius of the state box used to bound speeds when choosing `Δt`.
    pub y_max: f64,
    pub snapshots: Vec<f64>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            nx: 201,
            cfl: 0.9,
            horizon: 1.0,
            cadence: 0.0,
            q: 2.0,
            mode: SolverMode::Upwind,
            sampling: SamplingMode::LocalCauchy,
            y_max: 0.0,
            snapshots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub l1: f64,
    pub l2: f64,
    pub lq: f64,
    pub linf: f64,
    pub lyapunov: Option<f64>,
    pub vnorm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationTrace {
    pub dt: f64,
    pub q: f64,
    pub rows: Vec<TraceRow>,
    pub snapshots: Vec<StateGrid>,
}

impl SimulationTrace {
    /// Header of [`to_csv`](Self::to_csv).
    pub const HEADER: &'static str = "t,l1,l2,lq,linf,lyapunov,vnorm";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.12e}")).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{}\n",
                r.t,
                r.l1,
                r.l2,
                r.lq,
                r.linf,
                opt(r.lyapunov),
                opt(r.vnorm)
            ));
        }
        out
    }

    /// Last recorded row with `t ≤ time`.
    pub fn row_at(&self, time: f64) -> Option<&TraceRow> {
        self.rows.iter().rev().find(|r| r.t <= time + 1e-12)
    }
}

/// Snapshot as CSV with header `x,w1,…,wn`.
pub fn snapshot_csv(state: &StateGrid) -> String {
    let mut out = String::from("x");
    for c in 0..state.n {
        out.push_str(&format!(",w{}", c + 1));
    }
    out.push('\n');
    for p in 0..state.nx {
        out.push_str(&format!("{:.12e}", state.x(p)));
        for c in 0..state.n {
            out.push_str(&format!(",{:.12e}", state.values[c * state.nx + p]));
        }
        out.push('\n');
    }
    out
}

/// Per-step measurement hook (Lyapunov functionals, norms).
pub trait Observer {
    /// Returns `(𝒱, ‖·‖_𝒱)` for the state. `exact` is set in exact mode so
    /// that off-grid samples can be taken from the analytic solution.
    fn observe(
        &mut self,
        state: &StateGrid,
        exact: Option<&ExactSolution<'_>>,
    ) -> Result<(Option<f64>, Option<f64>), SolverError>;
}

/// Observer recording nothing.
pub struct NoObserver;

impl Observer for NoObserver {
    fn observe(
        &mut self,
        _: &StateGrid,
        _: Option<&ExactSolution<'_>>,
    ) -> Result<(Option<f64>, Option<f64>), SolverError> {
        Ok((None, None))
    }
}

/// Time step used by [`simulate`] for the given options.
pub fn time_step(sys: &HyperbolicSystem, opts: &SimulationOptions) -> Result<f64, SolverError> {
    let dx = 1.0 / (opts.nx - 1) as f64;
    match opts.mode {
        SolverMode::Exact => exact_time_step(sys, dx),
        SolverMode::Upwind => Ok(opts.cfl * dx / sys.max_speed(opts.y_max)),
    }
}

fn sampler_for(law: &FeedbackLaw, opts: &SimulationOptions, dt: f64) -> Sampler {
    match (law.mode, opts.sampling) {
        (FeedbackMode::Linear, _) => Sampler::Fixed,
        (FeedbackMode::Nonlinear, SamplingMode::Frozen) => Sampler::Frozen,
        (FeedbackMode::Nonlinear, SamplingMode::LocalCauchy) => {
            Sampler::LocalCauchy(LocalCauchySampler::new(dt))
        }
    }
}

/// Runs the closed loop from `w0` up to `opts.horizon`.
pub fn simulate(
    sys: &HyperbolicSystem,
    law: &FeedbackLaw,
    w0: &InitialData,
    opts: &SimulationOptions,
    observer: &mut dyn Observer,
) -> Result<SimulationTrace, SolverError> {
    if w0.n() != sys.n() {
        return Err(SolverError::ComponentMismatch {
            expected: sys.n(),
            got: w0.n(),
        });
    }
    if opts.nx < 3 {
        return Err(SolverError::GridTooSmall(opts.nx));
    }
    let dt = time_step(sys, opts)?;
    let steps = ((opts.horizon / dt) - 1e-9).ceil().max(0.0) as usize;
    let mut trace = SimulationTrace {
        dt,
        q: opts.q,
        rows: Vec::new(),
        snapshots: Vec::new(),
    };
    let mut recorder = Recorder::new(opts);

    match opts.mode {
        SolverMode::Exact => {
            let exact = ExactSolution::new(sys, law, w0)?;
            for n in 0..=steps {
                let state = exact.state_at(n as f64 * dt, opts.nx);
                let obs = observer.observe(&state, Some(&exact))?;
                recorder.record(&mut trace, &state, obs, n == steps);
            }
        }
        SolverMode::Upwind => {
            let mut sampler = sampler_for(law, opts, dt);
            let mut state = w0.sample(opts.nx);
            let obs = observer.observe(&state, None)?;
            recorder.record(&mut trace, &state, obs, steps == 0);
            for n in 1..=steps {
                step(&mut state, sys, law, &mut sampler, dt, opts.cfl)?;
                state.time = n as f64 * dt;
                let sup = state.sup_norm();
                if !(sup <= BLOW_UP) {
                    return Err(SolverError::BlowUp { t: state.time, sup });
                }
                let obs = observer.observe(&state, None)?;
                recorder.record(&mut trace, &state, obs, n == steps);
            }
        }
    }
    Ok(trace)
}

struct Recorder {
    cadence: f64,
    next_output: f64,
    q: f64,
    pending_snapshots: Vec<f64>,
}

impl Recorder {
    fn new(opts: &SimulationOptions) -> Self {
        let mut pending = opts.snapshots.clone();
        pending.sort_by(f64::total_cmp);
        Self {
            cadence: opts.cadence,
            next_output: 0.0,
            q: opts.q,
            pending_snapshots: pending,
        }
    }

    fn record(
        &mut self,
        trace: &mut SimulationTrace,
        state: &StateGrid,
        (lyapunov, vnorm): (Option<f64>, Option<f64>),
        last: bool,
    ) {
        let t = state.time;
        while self
            .pending_snapshots
            .first()
            .is_some_and(|s| t >= s - 1e-12)
        {
            self.pending_snapshots.remove(0);
            trace.snapshots.push(state.clone());
        }
        if self.cadence > 0.0 && t < self.next_output - 1e-12 && !last {
            return;
        }
        while self.cadence > 0.0 && self.next_output <= t + 1e-12 {
            self.next_output += self.cadence;
        }
        trace.rows.push(TraceRow {
            t,
            l1: state.lq_norm(1.0),
            l2: state.lq_norm(2.0),
            lq: state.lq_norm(self.q),
            linf: state.sup_norm(),
            lyapunov,
            vnorm,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::DelayTable;
    use crate::system::{BoundaryCoupling, SpeedProfile};
    use nalgebra::DMatrix;

    fn two_by_two(b: f64) -> HyperbolicSystem {
        HyperbolicSystem::new(
            1,
            1,
            vec![SpeedProfile::constant(1.0); 2],
            BoundaryCoupling::Linear(DMatrix::from_element(1, 1, b)),
        )
        .unwrap()
    }

    #[test]
    fn zero_data_gives_zero_trace() {
        let sys = two_by_two(0.8);
        let law = FeedbackLaw::linear(&sys, &DelayTable::new(&sys, 51)).unwrap();
        for mode in [SolverMode::Upwind, SolverMode::Exact] {
            let opts = SimulationOptions {
                nx: 51,
                horizon: 1.0,
                mode,
                ..Default::default()
            };
            let trace = simulate(&sys, &law, &InitialData::zero(2), &opts, &mut NoObserver).unwrap();
            assert!(trace.rows.iter().all(|r| r.linf == 0.0 && r.l1 == 0.0));
            assert!(trace.rows.windows(2).all(|w| w[0].t < w[1].t));
        }
    }

    #[test]
    fn cadence_and_snapshots() {
        let sys = two_by_two(0.8);
        let law = FeedbackLaw::linear(&sys, &DelayTable::new(&sys, 51)).unwrap();
        let opts = SimulationOptions {
            nx: 51,
            horizon: 1.0,
            cadence: 0.25,
            mode: SolverMode::Exact,
            snapshots: vec![0.5, 0.1],
            ..Default::default()
        };
        let w0 = InitialData::new(vec![ComponentData::zero(), ComponentData::sine(&[1.0])]);
        let trace = simulate(&sys, &law, &w0, &opts, &mut NoObserver).unwrap();
        let times: Vec<f64> = trace.rows.iter().map(|r| r.t).collect();
        let expected = [0.0, 0.26, 0.5, 0.76, 1.0];
        assert_eq!(times.len(), expected.len());
        for (t, e) in times.iter().zip(expected) {
            assert!((t - e).abs() < 1e-12, "{times:?}");
        }
        assert_eq!(trace.snapshots.len(), 2);
        assert!((trace.snapshots[0].time - 0.1).abs() < 1e-12);
        let csv = trace.to_csv();
        assert!(csv.starts_with("t,l1,l2,lq,linf,lyapunov,vnorm\n"));
        assert_eq!(csv.lines().count(), 6);
        let snap = snapshot_csv(&trace.snapshots[1]);
        assert!(snap.starts_with("x,w1,w2\n"));
        assert_eq!(snap.lines().count(), 52);
    }

    #[test]
    fn norms() {
        let mut s = StateGrid::zeros(2, 3);
        s.values = vec![1.0, 1.0, 1.0, 0.0, -2.0, 0.0];
        assert_eq!(s.sup_norm(), 2.0);
        assert!((s.lq_norm(1.0) - 2.0).abs() < 1e-15);
        assert_eq!(s.node(1), vec![1.0, -2.0]);
    }

    #[test]
    fn component_mismatch() {
        let sys = two_by_two(0.8);
        let law = FeedbackLaw::linear(&sys, &DelayTable::new(&sys, 11)).unwrap();
        let err = simulate(
            &sys,
            &law,
            &InitialData::zero(3),
            &SimulationOptions::default(),
            &mut NoObserver,
        )
        .unwrap_err();
        assert!(matches!(err, SolverError::ComponentMismatch { .. }));
    }
}
