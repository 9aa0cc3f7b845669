use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use hypstab_core::feedback::check_compatibility;
use hypstab_core::lyapunov::{build_weights, calibrate_gamma, decay_tolerance, verify_decay, LyapunovObserver};
use hypstab_core::scenario::{parse_scenario, FeedbackChoice, GammaSpec, Scenario};
use hypstab_core::solver::snapshot_csv;
use hypstab_core::suite::{render_report, run_criterion, CriterionResult, Relation, SuiteSelection};
use hypstab_core::{
    compute_timing, simulate as run_closed_loop, DelayTable, FeedbackLaw, HyperbolicSystem, InitialData, LyapunovReport,
    SimulationOptions, SimulationTrace, SolverError, TimingData,
};

use crate::output::{label, out_dir, write};
use crate::Failure;

/// Largest compatibility residual accepted for nonlinear feedback.
const COMPAT_TOL: f64 = 1e-8;

struct Loaded {
    scenario: Scenario,
    sys: HyperbolicSystem,
    timing: TimingData,
    w0: InitialData,
}

fn load(path: &Path) -> Result<Loaded, Failure> {
    let scenario = parse_scenario(path).map_err(|e| Failure::Usage(e.to_string()))?;
    let sys = scenario
        .build_system()
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let w0 = scenario.initial_data();
    if scenario.feedback == FeedbackChoice::Nonlinear {
        let report = check_compatibility(&w0, &sys, scenario.numerics.nx);
        if !report.accepts(COMPAT_TOL) {
            return Err(Failure::Usage(format!(
                "initial data is not compatible with the boundary relation at x = 0 \
                 (order 0: {:.3e}, order 1: {:.3e})",
                report.order0_norm(),
                report.order1_norm()
            )));
        }
    }
    let timing = compute_timing(&sys);
    Ok(Loaded {
        scenario,
        sys,
        timing,
        w0,
    })
}

impl Loaded {
    fn law(&self, delays: &DelayTable) -> Result<FeedbackLaw, Failure> {
        self.scenario
            .feedback_law(&self.sys, delays)
            .map_err(|e| Failure::Usage(format!("feedback synthesis failed: {e}")))
    }

    fn gamma(&self, law: &FeedbackLaw, qs: &[f64], lambdas: &[f64]) -> Result<f64, Failure> {
        match self.scenario.lyapunov.gamma {
            GammaSpec::Fixed(g) => Ok(g),
            GammaSpec::Keyword(_) => calibrate_gamma(
                &self.sys,
                &law.synthesis,
                &self.timing,
                qs,
                lambdas,
                self.scenario.lyapunov.samples,
                self.scenario.seed,
            )
            .map_err(|e| Failure::Usage(e.to_string())),
        }
    }

    /// Slack and start time of the decay check: the quasilinear estimate
    /// holds with a reduced rate once the ramps have finished.
    fn decay_window(&self) -> (f64, f64) {
        match self.scenario.feedback {
            FeedbackChoice::Linear => (0.0, 0.0),
            FeedbackChoice::Nonlinear => (self.scenario.lyapunov.slack, 0.5 * self.scenario.delta.unwrap_or(0.0)),
        }
    }

    /// Runs one closed loop with the Lyapunov observer at `(q, Λ)`.
    fn run(&self, opts: &SimulationOptions, lambda: f64, gamma: f64) -> Result<Run, Failure> {
        let delays = DelayTable::new(&self.sys, opts.nx);
        let law = self.law(&delays)?;
        let weights = build_weights(&self.sys, &self.timing, opts.q, lambda, gamma, opts.nx);
        let mut observer = LyapunovObserver::new(&self.sys, &law, &weights, &delays);
        let trace = run_closed_loop(&self.sys, &law, &self.w0, opts, &mut observer).map_err(|e| match e {
            SolverError::BlowUp { .. } => Failure::Verdict(format!("simulation: {e}")),
            _ => Failure::Usage(e.to_string()),
        })?;
        let (slack, t_start) = self.decay_window();
        let tol = decay_tolerance(&self.sys, opts.mode, opts.nx, opts.q, lambda);
        let decay = verify_decay(&observer.series(), opts.q, lambda, tol, slack, t_start);
        let residual = trace
            .rows
            .iter()
            .filter(|r| r.t >= self.timing.t_opt - 1e-12)
            .map(|r| r.linf)
            .fold(0.0, f64::max);
        Ok(Run {
            trace,
            decay,
            tol,
            residual,
        })
    }
}

struct Run {
    trace: SimulationTrace,
    decay: LyapunovReport,
    tol: f64,
    /// `sup_{t ≥ T_opt} ‖w(t)‖_∞`.
    residual: f64,
}

pub fn synth(path: &Path) -> Result<(), Failure> {
    let loaded = load(path)?;
    let (sys, timing) = (&loaded.sys, &loaded.timing);
    let delays = DelayTable::new(sys, loaded.scenario.numerics.nx);
    let law = loaded.law(&delays)?;
    let synthesis = &law.synthesis;
    let (k, m) = (sys.k(), sys.m());

    let mut text = String::new();
    let _ = writeln!(text, "scenario: {}", loaded.scenario.name);
    let _ = writeln!(text, "k = {k}, m = {m}, ell = {}", synthesis.ell());
    let member = if synthesis.class.is_member() { "yes" } else { "no" };
    let _ = writeln!(text, "B in class: {member}");
    for c in &synthesis.class.checks {
        let verdict = if c.invertible { "invertible" } else { "singular" };
        let _ = writeln!(
            text,
            "  trailing {0}x{0} block: sigma_min = {1:.6e}, sigma_max = {2:.6e} ({verdict})",
            c.size, c.sigma_min, c.sigma_max
        );
    }
    let mut maps = Vec::new();
    for map in &synthesis.maps {
        let inputs: Vec<String> = (k..map.target).map(|l| format!("w_{}", l + 1)).collect();
        let row: Vec<String> = map.row.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(
            text,
            "M_{} drives w_{}(t, 1) from ({}): [{}]",
            map.label(m),
            map.target + 1,
            inputs.join(", "),
            row.join(", ")
        );
        let samples: Vec<_> = (k..map.target)
            .map(|l| {
                let a = delays.at_boundary(l, map.target);
                let _ = writeln!(text, "  a_{{{},{}}}(1) = {a:.6}", l + 1, map.target + 1);
                json!({ "i": l + 1, "j": map.target + 1, "a": a })
            })
            .collect();
        maps.push(json!({
            "label": map.label(m),
            "target": map.target + 1,
            "row": map.row,
            "samples": samples,
        }));
    }
    let tau: Vec<String> = timing.tau.iter().map(|t| format!("{t:.6}")).collect();
    let _ = writeln!(text, "tau = [{}]", tau.join(", "));
    let _ = writeln!(text, "T_opt = {:.6}", timing.t_opt);

    let doc = json!({
        "name": loaded.scenario.name,
        "k": k,
        "m": m,
        "class_member": synthesis.class.is_member(),
        "blocks": synthesis.class.checks.iter().map(|c| json!({
            "size": c.size,
            "sigma_min": c.sigma_min,
            "sigma_max": c.sigma_max,
            "invertible": c.invertible,
        })).collect::<Vec<_>>(),
        "maps": maps,
        "tau": timing.tau,
        "t_opt": timing.t_opt,
    });
    let dir = out_dir(loaded.scenario.output_dir.as_deref())?;
    let file = dir.join(format!("{}.synth.json", loaded.scenario.name));
    write(&file, &format!("{doc:#}\n"))?;
    print!("{text}");
    println!("json: {}", file.display());
    Ok(())
}

pub fn simulate(path: &Path, snapshots: Option<Vec<f64>>) -> Result<(), Failure> {
    let loaded = load(path)?;
    let lyap = &loaded.scenario.lyapunov;
    let mut opts = loaded.scenario.simulation_options(loaded.timing.t_opt);
    if let Some(s) = snapshots {
        opts.snapshots = s;
    }
    let lambda = lyap.lambda[0];
    let law = loaded.law(&DelayTable::new(&loaded.sys, opts.nx))?;
    let gamma = loaded.gamma(&law, &lyap.q[..1], &[lambda])?;
    let run = loaded.run(&opts, lambda, gamma)?;

    let name = &loaded.scenario.name;
    let dir = out_dir(loaded.scenario.output_dir.as_deref())?;
    let trace_file = dir.join(format!("{name}.trace.csv"));
    write(&trace_file, &run.trace.to_csv())?;
    println!("trace: {}", trace_file.display());
    // One snapshot per requested time, in ascending order, each taken at
    // the first step on or after it.
    let mut requested = opts.snapshots.clone();
    requested.sort_by(f64::total_cmp);
    for (time, state) in requested.iter().zip(&run.trace.snapshots) {
        let file = dir.join(format!("{name}.snapshot.t{}.csv", label(*time)));
        write(&file, &snapshot_csv(state))?;
        println!("snapshot: {}", file.display());
    }
    println!("dt = {:.6e}, trace rows = {}", run.trace.dt, run.trace.rows.len());
    println!("T_opt = {:.6}", loaded.timing.t_opt);
    println!("sup_(t >= T_opt) |w|_inf = {:.6e}", run.residual);
    println!(
        "decay of V (q = {}, Lambda = {lambda}, Gamma = {gamma}): worst step margin {:.6e} (tolerance {:.3e}, {} steps)",
        opts.q, run.decay.worst_margin, run.tol, run.decay.checked_steps
    );
    match run.decay.first_violation {
        None => Ok(()),
        Some(t) => Err(Failure::Verdict(format!("decay of V violated at t = {t:.6}"))),
    }
}

pub fn verify(selection: SuiteSelection) -> Result<(), Failure> {
    let results: Vec<CriterionResult> = selection.criteria().into_par_iter().map(run_criterion).collect();
    let text = render_report(&results);
    let suite = match selection {
        SuiteSelection::Linear => "linear",
        SuiteSelection::Nonlinear => "nonlinear",
        SuiteSelection::All => "all",
    };
    let doc: Vec<_> = results
        .iter()
        .map(|r| {
            json!({
                "criterion": r.id,
                "title": r.title,
                "passed": r.passed(),
                "error": r.error,
                "measurements": r.measurements.iter().map(|m| json!({
                    "label": m.label,
                    "value": m.value,
                    "relation": match m.relation {
                        Relation::AtMost => "at_most",
                        Relation::AtLeast => "at_least",
                    },
                    "bound": m.bound,
                    "passed": m.passed(),
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let dir = out_dir(None)?;
    write(&dir.join(format!("verify.{suite}.txt")), &text)?;
    write(&dir.join(format!("verify.{suite}.json")), &format!("{:#}\n", json!(doc)))?;
    print!("{text}");
    match results.iter().find(|r| !r.passed()) {
        None => Ok(()),
        Some(r) => Err(Failure::Verdict(format!("criterion {}: {}", r.id, r.title))),
    }
}

struct Cell {
    lambda: f64,
    q: f64,
    nx: usize,
}

pub fn sweep(
    path: &Path,
    lambdas: Option<Vec<f64>>,
    qs: Option<Vec<f64>>,
    nxs: Option<Vec<usize>>,
) -> Result<(), Failure> {
    let loaded = load(path)?;
    let lyap = &loaded.scenario.lyapunov;
    let lambdas = lambdas.unwrap_or_else(|| lyap.lambda.clone());
    let qs = qs.unwrap_or_else(|| lyap.q.clone());
    let nxs = nxs.unwrap_or_else(|| vec![loaded.scenario.numerics.nx]);
    if lambdas.is_empty() || qs.is_empty() || nxs.is_empty() {
        return Err(Failure::Usage("empty sweep axis".into()));
    }
    if let Some(nx) = nxs.iter().find(|nx| **nx < 3) {
        return Err(Failure::Usage(format!("grid needs at least 3 points, got {nx}")));
    }
    let law = loaded.law(&DelayTable::new(&loaded.sys, nxs[0]))?;
    let gamma = loaded.gamma(&law, &qs, &lambdas)?;

    let mut cells = Vec::new();
    for &lambda in &lambdas {
        for &q in &qs {
            for &nx in &nxs {
                cells.push(Cell { lambda, q, nx });
            }
        }
    }
    let name = &loaded.scenario.name;
    let dir = out_dir(loaded.scenario.output_dir.as_deref())?;
    let base = loaded.scenario.simulation_options(loaded.timing.t_opt);
    let runs: Vec<Result<Run, Failure>> = cells
        .par_iter()
        .map(|cell| {
            let opts = SimulationOptions {
                nx: cell.nx,
                q: cell.q,
                snapshots: Vec::new(),
                ..base.clone()
            };
            let run = loaded.run(&opts, cell.lambda, gamma)?;
            let file = dir.join(format!(
                "{name}.sweep.L{}.q{}.nx{}.csv",
                label(cell.lambda),
                label(cell.q),
                cell.nx
            ));
            write(&file, &run.trace.to_csv())?;
            Ok(run)
        })
        .collect();

    let mut summary = String::from("lambda,q,nx,gamma,checked_steps,worst_margin,tolerance,residual,verdict\n");
    let mut first_failure = None;
    println!(
        "{:>8} {:>5} {:>6} {:>14} {:>11} {:>12}  verdict",
        "Lambda", "q", "nx", "worst margin", "tolerance", "residual"
    );
    for (cell, run) in cells.iter().zip(runs) {
        let run = run?;
        let passed = run.decay.passed;
        let verdict = if passed { "PASS" } else { "FAIL" };
        let _ = writeln!(
            summary,
            "{},{},{},{gamma},{},{:.12e},{:.12e},{:.12e},{verdict}",
            cell.lambda, cell.q, cell.nx, run.decay.checked_steps, run.decay.worst_margin, run.tol, run.residual
        );
        println!(
            "{:>8} {:>5} {:>6} {:>14.6e} {:>11.3e} {:>12.4e}  {verdict}",
            cell.lambda, cell.q, cell.nx, run.decay.worst_margin, run.tol, run.residual
        );
        if !passed && first_failure.is_none() {
            first_failure = Some(format!(
                "sweep cell Lambda = {}, q = {}, nx = {}: decay of V violated",
                cell.lambda, cell.q, cell.nx
            ));
        }
    }
    let file = dir.join(format!("{name}.sweep.csv"));
    write(&file, &summary)?;
    println!("summary: {}", file.display());
    match first_failure {
        None => Ok(()),
        Some(msg) => Err(Failure::Verdict(msg)),
    }
}
