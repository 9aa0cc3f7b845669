//! Static problem data for a diagonal hyperbolic system on `[0, 1]`.
//!
//! The system is `∂_t w = Σ(x, w) ∂_x w` with
//! `Σ = diag(-λ_1, …, -λ_k, λ_{k+1}, …, λ_{k+m})`. Speeds are stored as
//! positive magnitudes; the sign is implied by the family index. Families are
//! indexed from zero throughout the crate: `0..k` are the negative-speed
//! families (transported to the right, fed at `x = 0`), `k..n` the
//! positive-speed families (transported to the left, fed at `x = 1`).
//!
//! The boundary condition at `x = 0` is `w_-(t, 0) = B(w_+(t, 0))`, with `B`
//! either a `k × m` matrix or a quadratic polynomial map vanishing at zero.

use nalgebra::DMatrix;
use thiserror::Error;

/// Number of sample points used along `[0, 1]` by [`HyperbolicSystem::validate`].
pub const VALIDATION_POINTS: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("k and m must both be at least 1 (got k = {k}, m = {m})")]
    Dimensions { k: usize, m: usize },
    #[error("expected {expected} speed profiles, got {got}")]
    SpeedCount { expected: usize, got: usize },
    #[error("speed polynomial needs 1 to 4 coefficients, got {0}")]
    Degree(usize),
    #[error("state coupling of family {family} has {got} entries, expected {expected}")]
    CouplingLength {
        family: usize,
        expected: usize,
        got: usize,
    },
    #[error("boundary coupling is {rows}x{cols}, expected {k}x{m}")]
    CouplingShape {
        rows: usize,
        cols: usize,
        k: usize,
        m: usize,
    },
    #[error("quadratic term #{0} indexes outside the boundary map")]
    TermIndex(usize),
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),
    #[error("speed of family {family} is {value} <= 0 at x = {x}")]
    NonPositiveSpeed { family: usize, x: f64, value: f64 },
    #[error("system violates the speed ordering: {0}")]
    Report(String),
}

/// Speed magnitude `λ(x, y) = base(x) + Σ_j c_j y_j`, with `base` a
/// polynomial of degree at most three.
///
/// Outside `[0, 1]` the profile is extended by its boundary values, so flows
/// are globally defined.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile {
    base: Vec<f64>,
    state_coupling: Option<Vec<f64>>,
}

impl SpeedProfile {
    pub fn constant(value: f64) -> Self {
        Self {
            base: vec![value],
            state_coupling: None,
        }
    }

    /// Coefficients in increasing degree: `[c0, c1, c2, c3]`.
    pub fn polynomial(coefficients: &[f64]) -> Result<Self, ValidationError> {
        if coefficients.is_empty() || coefficients.len() > 4 {
            return Err(ValidationError::Degree(coefficients.len()));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(ValidationError::NonFinite("speed polynomial"));
        }
        Ok(Self {
            base: coefficients.to_vec(),
            state_coupling: None,
        })
    }

    pub fn with_state_coupling(mut self, coupling: Vec<f64>) -> Self {
        self.state_coupling = Some(coupling);
        self
    }

    pub fn base_coefficients(&self) -> &[f64] {
        &self.base
    }

    pub fn state_coupling(&self) -> Option<&[f64]> {
        self.state_coupling.as_deref()
    }

    /// `base(clamp(x))`.
    #[inline]
    pub fn base_at(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        self.base.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// `d/dx base(x)`, zero outside `[0, 1]`.
    pub fn base_slope(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        self.base
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (d, c)| acc * x + d as f64 * c)
    }

    /// Speed at `x` (clamped) and optional state `y`.
    #[inline]
    pub fn speed(&self, x: f64, y: Option<&[f64]>) -> f64 {
        let base = self.base_at(x);
        match (y, &self.state_coupling) {
            (Some(y), Some(c)) => base + c.iter().zip(y).map(|(c, y)| c * y).sum::<f64>(),
            _ => base,
        }
    }

    /// True when the speed depends on neither position nor state.
    pub fn is_constant(&self) -> bool {
        self.base.iter().skip(1).all(|c| *c == 0.0) && !self.is_quasilinear()
    }

    pub fn is_quasilinear(&self) -> bool {
        self.state_coupling
            .as_ref()
            .is_some_and(|c| c.iter().any(|c| *c != 0.0))
    }
}

/// Checked speed evaluation.
pub fn evaluate_speed(
    profile: &SpeedProfile,
    family: usize,
    x: f64,
    y: Option<&[f64]>,
) -> Result<f64, ValidationError> {
    let value = profile.speed(x, y);
    if value > 0.0 {
        Ok(value)
    } else {
        Err(ValidationError::NonPositiveSpeed { family, x, value })
    }
}

/// One quadratic monomial `coeff · v_a · v_b` of boundary-map row `row`.
/// Indices are zero-based; `a` and `b` index into `w_+`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticTerm {
    pub row: usize,
    pub a: usize,
    pub b: usize,
    pub coeff: f64,
}

/// `B(v) = L v + Σ coeff · v_a v_b`, a polynomial map `ℝ^m → ℝ^k` with `B(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticMap {
    linear: DMatrix<f64>,
    terms: Vec<QuadraticTerm>,
}

impl QuadraticMap {
    pub fn new(linear: DMatrix<f64>, terms: Vec<QuadraticTerm>) -> Result<Self, ValidationError> {
        for (idx, t) in terms.iter().enumerate() {
            if t.row >= linear.nrows() || t.a >= linear.ncols() || t.b >= linear.ncols() {
                return Err(ValidationError::TermIndex(idx));
            }
            if !t.coeff.is_finite() {
                return Err(ValidationError::NonFinite("quadratic term"));
            }
        }
        Ok(Self { linear, terms })
    }

    pub fn linear_part(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub fn terms(&self) -> &[QuadraticTerm] {
        &self.terms
    }

    pub fn eval(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = (0..self.linear.nrows())
            .map(|r| (0..self.linear.ncols()).map(|c| self.linear[(r, c)] * v[c]).sum())
            .collect();
        for t in &self.terms {
            out[t.row] += t.coeff * v[t.a] * v[t.b];
        }
        out
    }

    pub fn jacobian(&self, v: &[f64]) -> DMatrix<f64> {
        let mut jac = self.linear.clone();
        for t in &self.terms {
            jac[(t.row, t.a)] += t.coeff * v[t.b];
            jac[(t.row, t.b)] += t.coeff * v[t.a];
        }
        jac
    }
}

/// Boundary relation `w_-(t, 0) = B(w_+(t, 0))`.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCoupling {
    Linear(DMatrix<f64>),
    Nonlinear(QuadraticMap),
}

impl BoundaryCoupling {
    pub fn shape(&self) -> (usize, usize) {
        let mat = self.jacobian_at_zero();
        (mat.nrows(), mat.ncols())
    }

    pub fn eval(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Self::Linear(b) => (0..b.nrows())
                .map(|r| (0..b.ncols()).map(|c| b[(r, c)] * v[c]).sum())
                .collect(),
            Self::Nonlinear(map) => map.eval(v),
        }
    }

    pub fn jacobian(&self, v: &[f64]) -> DMatrix<f64> {
        match self {
            Self::Linear(b) => b.clone(),
            Self::Nonlinear(map) => map.jacobian(v),
        }
    }

    /// `∇B(0)`, the matrix every class-membership test is run against.
    pub fn jacobian_at_zero(&self) -> &DMatrix<f64> {
        match self {
            Self::Linear(b) => b,
            Self::Nonlinear(map) => map.linear_part(),
        }
    }

    pub fn is_linear(&self) -> bool {
        match self {
            Self::Linear(_) => true,
            Self::Nonlinear(map) => map.terms().iter().all(|t| t.coeff == 0.0),
        }
    }
}

/// A violated positivity or ordering constraint, reported at its worst sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositive {
        family: usize,
        x: f64,
        y: Vec<f64>,
        speed: f64,
    },
    /// Signed speeds of `lower` and `upper` (adjacent, same sign) are not
    /// strictly increasing.
    Misordered {
        lower: usize,
        upper: usize,
        x: f64,
        y: Vec<f64>,
        gap: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<(), ValidationError> {
        if self.is_valid() {
            return Ok(());
        }
        let text = self
            .violations
            .iter()
            .map(|v| match v {
                Violation::NonPositive {
                    family, x, speed, ..
                } => format!("family {} has speed {speed:.3e} at x = {x:.4}", family + 1),
                Violation::Misordered {
                    lower, upper, x, gap, ..
                } => format!(
                    "families {} and {} are not strictly ordered at x = {x:.4} (gap {gap:.3e})",
                    lower + 1,
                    upper + 1
                ),
            })
            .collect::<Vec<_>>()
            .join("; ");
        Err(ValidationError::Report(text))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicSystem {
    k: usize,
    m: usize,
    speeds: Vec<SpeedProfile>,
    coupling: BoundaryCoupling,
}

impl HyperbolicSystem {
    /// Checks shapes only; call [`validate`](Self::validate) for the speed ordering.
    pub fn new(
        k: usize,
        m: usize,
        speeds: Vec<SpeedProfile>,
        coupling: BoundaryCoupling,
    ) -> Result<Self, ValidationError> {
        if k == 0 || m == 0 {
            return Err(ValidationError::Dimensions { k, m });
        }
        let n = k + m;
        if speeds.len() != n {
            return Err(ValidationError::SpeedCount {
                expected: n,
                got: speeds.len(),
            });
        }
        for (family, s) in speeds.iter().enumerate() {
            if let Some(c) = s.state_coupling() {
                if c.len() != n {
                    return Err(ValidationError::CouplingLength {
                        family,
                        expected: n,
                        got: c.len(),
                    });
                }
                if c.iter().any(|c| !c.is_finite()) {
                    return Err(ValidationError::NonFinite("state coupling"));
                }
            }
        }
        let (rows, cols) = coupling.shape();
        if rows != k || cols != m {
            return Err(ValidationError::CouplingShape { rows, cols, k, m });
        }
        if coupling.jacobian_at_zero().iter().any(|c| !c.is_finite()) {
            return Err(ValidationError::NonFinite("boundary coupling"));
        }
        Ok(Self {
            k,
            m,
            speeds,
            coupling,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.k + self.m
    }

    /// `max(m, k)`: components `0..ell` enter the Lyapunov functional
    /// directly, components `ell..n` through their feedback defect.
    pub fn ell(&self) -> usize {
        self.k.max(self.m)
    }

    pub fn is_negative(&self, family: usize) -> bool {
        family < self.k
    }

    pub fn speeds(&self) -> &[SpeedProfile] {
        &self.speeds
    }

    pub fn profile(&self, family: usize) -> &SpeedProfile {
        &self.speeds[family]
    }

    pub fn coupling(&self) -> &BoundaryCoupling {
        &self.coupling
    }

    /// Speed magnitude of `family` at `x` and optional full state `y`.
    #[inline]
    pub fn speed(&self, family: usize, x: f64, y: Option<&[f64]>) -> f64 {
        self.speeds[family].speed(x, y)
    }

    pub fn has_constant_speeds(&self) -> bool {
        self.speeds.iter().all(SpeedProfile::is_constant)
    }

    pub fn is_quasilinear(&self) -> bool {
        self.speeds.iter().any(SpeedProfile::is_quasilinear)
    }

    /// True when any profile declares a state coupling, even an all-zero one.
    pub fn has_state_coupling(&self) -> bool {
        self.speeds.iter().any(|s| s.state_coupling().is_some())
    }

    /// Largest zero-state speed over `[0, 1]`, sampled on the validation grid.
    pub fn max_base_speed(&self) -> f64 {
        let mut best = 0.0f64;
        for p in 0..VALIDATION_POINTS {
            let x = p as f64 / (VALIDATION_POINTS - 1) as f64;
            for s in &self.speeds {
                best = best.max(s.base_at(x));
            }
        }
        best
    }

    /// Largest speed over `[0, 1]` and the corners of the box `|y|_∞ ≤ y_max`
    /// (zero-state speeds when the system is linear or `y_max = 0`).
    pub fn max_speed(&self, y_max: f64) -> f64 {
        if !self.is_quasilinear() || y_max <= 0.0 {
            return self.max_base_speed();
        }
        let n = self.n();
        let mut best = 0.0f64;
        for p in 0..VALIDATION_POINTS {
            let x = p as f64 / (VALIDATION_POINTS - 1) as f64;
            for s in &self.speeds {
                let base = s.base_at(x);
                // The coupling is affine: its maximum over the box is Σ |c_j| y_max.
                let spread: f64 = s
                    .state_coupling()
                    .map(|c| c.iter().take(n).map(|c| c.abs() * y_max).sum())
                    .unwrap_or(0.0);
                best = best.max(base + spread);
            }
        }
        best
    }

    /// Samples positivity and strict ordering of the signed speeds
    /// `-λ_1 < … < -λ_k < 0 < λ_{k+1} < … < λ_n` on a 1024-point grid and, for
    /// quasilinear systems, on every corner of the box `|y|_∞ ≤ y_max`.
    pub fn validate(&self, y_max: f64) -> ValidationReport {
        let n = self.n();
        let corners: Vec<Option<Vec<f64>>> = if self.is_quasilinear() && y_max > 0.0 {
            (0..1usize << n)
                .map(|bits| {
                    Some(
                        (0..n)
                            .map(|j| if bits >> j & 1 == 1 { y_max } else { -y_max })
                            .collect(),
                    )
                })
                .collect()
        } else {
            vec![None]
        };

        let signed = |family: usize, x: f64, y: Option<&[f64]>| {
            let s = self.speed(family, x, y);
            if self.is_negative(family) {
                -s
            } else {
                s
            }
        };

        let mut worst_speed: Vec<Option<(f64, f64, Vec<f64>)>> = vec![None; n];
        let mut worst_gap: Vec<Option<(f64, f64, Vec<f64>)>> = vec![None; n.saturating_sub(1)];
        for p in 0..VALIDATION_POINTS {
            let x = p as f64 / (VALIDATION_POINTS - 1) as f64;
            for y in &corners {
                let yv = y.as_deref();
                for family in 0..n {
                    let s = self.speed(family, x, yv);
                    if s <= 0.0 && worst_speed[family].as_ref().is_none_or(|w| s < w.0) {
                        worst_speed[family] = Some((s, x, y.clone().unwrap_or_default()));
                    }
                }
                for family in 0..n - 1 {
                    // The pair (k-1, k) straddles zero; positivity covers it.
                    if family + 1 == self.k {
                        continue;
                    }
                    let gap = signed(family + 1, x, yv) - signed(family, x, yv);
                    if gap <= 0.0 && worst_gap[family].as_ref().is_none_or(|w| gap < w.0) {
                        worst_gap[family] = Some((gap, x, y.clone().unwrap_or_default()));
                    }
                }
            }
        }

        let mut violations = Vec::new();
        for (family, w) in worst_speed.into_iter().enumerate() {
            if let Some((speed, x, y)) = w {
                violations.push(Violation::NonPositive {
                    family,
                    x,
                    y,
                    speed,
                });
            }
        }
        for (lower, w) in worst_gap.into_iter().enumerate() {
            if let Some((gap, x, y)) = w {
                violations.push(Violation::Misordered {
                    lower,
                    upper: lower + 1,
                    x,
                    y,
                    gap,
                });
            }
        }
        ValidationReport { violations }
    }
}
