//! TOML scenario files.
//!
//! ```toml
//! name = "scalar-loop"
//! horizon = 3.0
//!
//! [system]
//! k = 1
//! m = 1
//! speeds = [{ base = [1.0] }, { base = [1.0] }]
//! coupling = [[0.8]]
//!
//! [initial]
//! components = [{ sine = [0.8] }, { sine = [1.0] }]
//! ```
//!
//! Everything but `name` and `[system]` has a default.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::characteristics::DelayTable;
use crate::feedback::{FeedbackError, FeedbackLaw, RampSet};
use crate::solver::{ComponentData, InitialData, SamplingMode, SimulationOptions, SolverMode};
use crate::system::{BoundaryCoupling, HyperbolicSystem, QuadraticMap, QuadraticTerm, SpeedProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Simulated time; `T_opt + 1` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub feedback: FeedbackChoice,
    /// Ramp length for the nonlinear feedback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub system: SystemSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub lyapunov: LyapunovSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackChoice {
    #[default]
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub k: usize,
    pub m: usize,
    pub speeds: Vec<SpeedSpec>,
    /// `k` rows of `m` entries: the linear part of the boundary map.
    pub coupling: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub quadratic: Vec<TermSpec>,
    /// Radius of the state box used for speed validation and the time step.
    #[serde(default)]
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedSpec {
    /// Coefficients of the zero-state speed in powers of `x`.
    pub base: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_coupling: Option<Vec<f64>>,
}

/// Zero-based monomial `coeff · v_a · v_b` in row `row`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub row: usize,
    pub a: usize,
    pub b: usize,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// One entry per component; empty means zero data.
    #[serde(default)]
    pub components: Vec<ComponentSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sine: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub poly: Vec<f64>,
    /// Uniform-grid samples; exclusive with `sine`/`poly`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    #[default]
    Upwind,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingChoice {
    #[default]
    LocalCauchy,
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub nx: usize,
    pub cfl: f64,
    pub solver: SolverChoice,
    pub sampling: SamplingChoice,
    /// Trace output interval; `0` writes every step.
    pub cadence: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<f64>,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            nx: 201,
            cfl: 0.9,
            solver: SolverChoice::Upwind,
            sampling: SamplingChoice::LocalCauchy,
            cadence: 0.0,
            snapshots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Fixed(f64),
    Keyword(GammaKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaKeyword {
    Auto,
}

impl Default for GammaSpec {
    fn default() -> Self {
        Self::Keyword(GammaKeyword::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovSpec {
    pub q: Vec<f64>,
    pub lambda: Vec<f64>,
    pub gamma: GammaSpec,
    /// Rate allowance of the quasilinear decay check.
    pub slack: f64,
    /// Random traces used by the `Γ` calibration.
    pub samples: usize,
}

impl Default for LyapunovSpec {
    fn default() -> Self {
        Self {
            q: vec![1.0, 2.0],
            lambda: vec![1.0, 2.0, 4.0],
            gamma: GammaSpec::default(),
            slack: 0.2,
            samples: 512,
        }
    }
}

/// One schema problem, with the 1-based line of the offending key when known.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaIssue {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for SchemaIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid scenario:\n{}", join_issues(.0))]
    Schema(Vec<SchemaIssue>),
}

fn join_issues(issues: &[SchemaIssue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let src = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_toml_str(&src)
}

/// Line of the first `key = …` assignment in `src`.
fn line_of(src: &str, key: &str) -> Option<usize> {
    src.lines().position(|l| {
        l.trim_start()
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

impl Scenario {
    pub fn from_toml_str(src: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(src).map_err(|e| {
            let line = e
                .span()
                .map(|span| src[..span.start.min(src.len())].lines().count().max(1));
            ScenarioError::Schema(vec![SchemaIssue {
                line,
                message: e.message().to_string(),
            }])
        })?;
        let issues: Vec<SchemaIssue> = scenario
            .check()
            .into_iter()
            .map(|(key, message)| SchemaIssue {
                line: line_of(src, key),
                message,
            })
            .collect();
        if issues.is_empty() {
            Ok(scenario)
        } else {
            Err(ScenarioError::Schema(issues))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// `(key, message)` for every cross-field problem.
    fn check(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let s = &self.system;
        if s.k < 1 {
            out.push(("k", "k ≥ 1 required".to_string()));
        }
        if s.m < 1 {
            out.push(("m", "m ≥ 1 required".to_string()));
        }
        let n = s.k + s.m;
        if s.speeds.len() != n {
            out.push(("speeds", format!("expected {n} speed profiles, found {}", s.speeds.len())));
        }
        for (i, sp) in s.speeds.iter().enumerate() {
            if sp.base.is_empty() || sp.base.len() > 4 {
                out.push(("speeds", format!("speed {}: 1 to 4 base coefficients required", i + 1)));
            }
            if sp.state_coupling.as_ref().is_some_and(|c| c.len() != n) {
                out.push(("speeds", format!("speed {}: state_coupling needs {n} entries", i + 1)));
            }
        }
        if s.coupling.len() != s.k || s.coupling.iter().any(|r| r.len() != s.m) {
            out.push(("coupling", format!("coupling must be {} × {}", s.k, s.m)));
        }
        for (i, t) in s.quadratic.iter().enumerate() {
            if t.row >= s.k || t.a >= s.m || t.b >= s.m {
                out.push(("quadratic", format!("quadratic term {} indexes outside {} × {}", i + 1, s.k, s.m)));
            }
        }
        if !(s.y_max >= 0.0) {
            out.push(("y_max", "y_max must be non-negative".to_string()));
        }
        let comps = &self.initial.components;
        if !comps.is_empty() && comps.len() != n {
            out.push(("components", format!("expected {n} initial components, found {}", comps.len())));
        }
        for (i, c) in comps.iter().enumerate() {
            if let Some(samples) = &c.samples {
                if !c.sine.is_empty() || !c.poly.is_empty() {
                    out.push(("components", format!("component {}: samples exclude sine/poly", i + 1)));
                }
                if samples.len() < 2 {
                    out.push(("components", format!("component {}: at least 2 samples", i + 1)));
                }
            }
        }
        if self.horizon.is_some_and(|h| !(h > 0.0)) {
            out.push(("horizon", "horizon must be positive".to_string()));
        }
        if self.numerics.nx < 3 {
            out.push(("nx", "nx ≥ 3 required".to_string()));
        }
        if !(self.numerics.cfl > 0.0 && self.numerics.cfl <= 1.0) {
            out.push(("cfl", "cfl must lie in (0, 1]".to_string()));
        }
        if self.numerics.cadence < 0.0 {
            out.push(("cadence", "cadence must be non-negative".to_string()));
        }
        if self.feedback == FeedbackChoice::Nonlinear {
            if !self.delta.is_some_and(|d| d > 0.0) {
                out.push(("feedback", "nonlinear feedback needs delta > 0".to_string()));
            }
            if self.numerics.solver == SolverChoice::Exact {
                out.push(("solver", "exact solver requires linear feedback".to_string()));
            }
        }
        let l = &self.lyapunov;
        if l.q.is_empty() || l.q.iter().any(|q| !(*q >= 1.0)) {
            out.push(("q", "q values must be ≥ 1".to_string()));
        }
        if l.lambda.is_empty() || l.lambda.iter().any(|v| !(*v > 0.0)) {
            out.push(("lambda", "lambda values must be positive".to_string()));
        }
        if let GammaSpec::Fixed(g) = l.gamma {
            if !(g >= 1.0) {
                out.push(("gamma", "gamma must be ≥ 1 or \"auto\"".to_string()));
            }
        }
        if !(0.0..1.0).contains(&l.slack) {
            out.push(("slack", "slack must lie in [0, 1)".to_string()));
        }
        if out.is_empty() {
            if let Err(e) = self.build_system() {
                out.push(("speeds", e.to_string()));
            }
        }
        out
    }

    /// The validated system.
    pub fn build_system(&self) -> Result<HyperbolicSystem, crate::system::ValidationError> {
        let s = &self.system;
        let speeds = s
            .speeds
            .iter()
            .map(|sp| {
                let p = SpeedProfile::polynomial(&sp.base)?;
                Ok(match &sp.state_coupling {
                    Some(c) => p.with_state_coupling(c.clone()),
                    None => p,
                })
            })
            .collect::<Result<Vec<_>, crate::system::ValidationError>>()?;
        let flat: Vec<f64> = s.coupling.iter().flatten().copied().collect();
        let linear = DMatrix::from_row_slice(s.k, s.m, &flat);
        let coupling = if s.quadratic.is_empty() {
            BoundaryCoupling::Linear(linear)
        } else {
            let terms = s
                .quadratic
                .iter()
                .map(|t| QuadraticTerm {
                    row: t.row,
                    a: t.a,
                    b: t.b,
                    coeff: t.coeff,
                })
                .collect();
            BoundaryCoupling::Nonlinear(QuadraticMap::new(linear, terms)?)
        };
        let sys = HyperbolicSystem::new(s.k, s.m, speeds, coupling)?;
        sys.validate(s.y_max).into_result()?;
        Ok(sys)
    }

    pub fn initial_data(&self) -> InitialData {
        let n = self.system.k + self.system.m;
        if self.initial.components.is_empty() {
            return InitialData::zero(n);
        }
        InitialData::new(
            self.initial
                .components
                .iter()
                .map(|c| match &c.samples {
                    Some(v) => ComponentData::Samples(v.clone()),
                    None => ComponentData::Series {
                        sine: c.sine.clone(),
                        poly: c.poly.clone(),
                    },
                })
                .collect(),
        )
    }

    pub fn simulation_options(&self, t_opt: f64) -> SimulationOptions {
        SimulationOptions {
            nx: self.numerics.nx,
            cfl: self.numerics.cfl,
            horizon: self.horizon.unwrap_or(t_opt + 1.0),
            cadence: self.numerics.cadence,
            q: self.lyapunov.q[0],
            mode: match self.numerics.solver {
                SolverChoice::Upwind => SolverMode::Upwind,
                SolverChoice::Exact => SolverMode::Exact,
            },
            sampling: match self.numerics.sampling {
                SamplingChoice::LocalCauchy => SamplingMode::LocalCauchy,
                SamplingChoice::Frozen => SamplingMode::Frozen,
            },
            y_max: self.system.y_max,
            snapshots: self.numerics.snapshots.clone(),
        }
    }

    pub fn feedback_law(
        &self,
        sys: &HyperbolicSystem,
        delays: &DelayTable,
    ) -> Result<FeedbackLaw, FeedbackError> {
        match self.feedback {
            FeedbackChoice::Linear => FeedbackLaw::linear(sys, delays),
            FeedbackChoice::Nonlinear => {
                let delta = self.delta.ok_or(FeedbackError::MissingDelta)?;
                let ramps = RampSet::from_initial(sys, &self.initial_data(), delta, self.numerics.nx);
                FeedbackLaw::nonlinear(sys, delays, ramps)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"
name = "minimal"

[system]
k = 1
m = 1
speeds = [{ base = [1.0] }, { base = [1.0] }]
coupling = [[0.8]]
"#;

    fn issues(src: &str) -> Vec<SchemaIssue> {
        match Scenario::from_toml_str(src) {
            Err(ScenarioError::Schema(v)) => v,
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        assert_eq!(s.numerics.nx, 201);
        assert_eq!(s.numerics.cfl, 0.9);
        assert_eq!(s.feedback, FeedbackChoice::Linear);
        assert_eq!(s.lyapunov.gamma, GammaSpec::Keyword(GammaKeyword::Auto));
        assert_eq!(s.initial_data().n(), 2);
        let sys = s.build_system().unwrap();
        assert_eq!((sys.k(), sys.m()), (1, 1));
        assert_eq!(s.simulation_options(2.0).horizon, 3.0);
    }

    #[test]
    fn k_zero_is_rejected_with_line() {
        let src = MINIMAL.replace("k = 1", "k = 0");
        let v = issues(&src);
        let issue = v.iter().find(|i| i.message.contains("k ≥ 1")).unwrap();
        assert_eq!(issue.line, Some(5));
    }

    #[test]
    fn coupling_shape_mismatch() {
        let src = MINIMAL.replace("coupling = [[0.8]]", "coupling = [[0.8, 1.0]]");
        let v = issues(&src);
        assert!(v.iter().any(|i| i.message.contains("coupling must be 1 × 1") && i.line == Some(8)));
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let src = MINIMAL.replace("m = 1", "m = one");
        let v = issues(&src);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].line, Some(6));
        let unknown = format!("{MINIMAL}\n[numerics]\nnxx = 3\n");
        assert!(issues(&unknown)[0].message.contains("nxx"));
    }

    #[test]
    fn semantic_checks() {
        let src = format!("{MINIMAL}\n[numerics]\nnx = 2\ncfl = 1.5\n");
        assert_eq!(issues(&src).len(), 2);
        let src = MINIMAL.replace("name = \"minimal\"", "name = \"x\"\nfeedback = \"nonlinear\"");
        assert!(issues(&src)[0].message.contains("delta"));
        let src = MINIMAL.replace("{ base = [1.0] }, { base = [1.0] }", "{ base = [-1.0] }, { base = [1.0] }");
        assert!(!issues(&src).is_empty());
    }

    #[test]
    fn gamma_accepts_number_or_auto() {
        let src = format!("{MINIMAL}\n[lyapunov]\ngamma = 4.0\n");
        assert_eq!(Scenario::from_toml_str(&src).unwrap().lyapunov.gamma, GammaSpec::Fixed(4.0));
        let src = format!("{MINIMAL}\n[lyapunov]\ngamma = \"auto\"\n");
        assert!(Scenario::from_toml_str(&src).is_ok());
        let src = format!("{MINIMAL}\n[lyapunov]\ngamma = \"big\"\n");
        assert!(Scenario::from_toml_str(&src).is_err());
    }

    #[test]
    fn io_error() {
        assert!(matches!(parse_scenario("/nonexistent/x.toml"), Err(ScenarioError::Io { .. })));
    }

    proptest! {
        #[test]
        fn round_trip(
            b in -3.0f64..3.0,
            l1 in 0.5f64..3.0,
            slope in 0.0f64..0.4,
            amp in proptest::collection::vec(-1.0f64..1.0, 0..4),
            nx in 3usize..500,
            seed in any::<u64>(),
            horizon in proptest::option::of(0.1f64..10.0),
            nonlinear in any::<bool>(),
        ) {
            let s = Scenario {
                name: "rt".into(),
                seed,
                horizon,
                feedback: if nonlinear { FeedbackChoice::Nonlinear } else { FeedbackChoice::Linear },
                delta: nonlinear.then_some(0.2),
                output_dir: Some("out/rt".into()),
                system: SystemSpec {
                    k: 1,
                    m: 2,
                    speeds: vec![
                        SpeedSpec { base: vec![l1 + 3.0], state_coupling: None },
                        SpeedSpec { base: vec![l1, slope], state_coupling: Some(vec![0.0, 0.05, 0.0]) },
                        SpeedSpec { base: vec![l1 + 1.0], state_coupling: None },
                    ],
                    coupling: vec![vec![b, 1.0]],
                    quadratic: vec![TermSpec { row: 0, a: 1, b: 1, coeff: 0.5 }],
                    y_max: 0.1,
                },
                initial: InitialSpec {
                    components: vec![
                        ComponentSpec { sine: amp.clone(), poly: vec![], samples: None },
                        ComponentSpec { sine: vec![], poly: vec![0.1, b], samples: None },
                        ComponentSpec { sine: vec![], poly: vec![], samples: Some(vec![0.0, b, 0.0]) },
                    ],
                },
                numerics: Numerics { nx, snapshots: vec![0.5], ..Numerics::default() },
                lyapunov: LyapunovSpec { gamma: GammaSpec::Fixed(2.0), ..LyapunovSpec::default() },
            };
            let text = s.to_toml();
            let back = Scenario::from_toml_str(&text).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
