//! C¹ ramps that hand the initial boundary trace over to the feedback.
//!
//! Each ramp is a cubic Hermite segment on `[0, δ/2]` ending at value and
//! slope zero, and vanishes identically afterwards.

use crate::numerics::{hermite_basis, hermite_basis_slope};
use crate::solver::InitialData;
use crate::system::HyperbolicSystem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ramp {
    pub value0: f64,
    pub slope0: f64,
    /// Support length `δ/2`.
    pub width: f64,
}

impl Ramp {
    pub fn new(value0: f64, slope0: f64, delta: f64) -> Self {
        Self {
            value0,
            slope0,
            width: 0.5 * delta,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        if t >= self.width {
            return 0.0;
        }
        let h = hermite_basis(t.max(0.0) / self.width);
        h[0] * self.value0 + h[1] * self.width * self.slope0
    }

    pub fn slope(&self, t: f64) -> f64 {
        if t >= self.width {
            return 0.0;
        }
        let h = hermite_basis_slope(t.max(0.0) / self.width);
        h[0] * self.value0 / self.width + h[1] * self.slope0
    }
}

/// Value ramp `ζ_j` and gate ramp `η_j` of one left-moving family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampPair {
    pub zeta: Ramp,
    pub eta: Ramp,
}

/// Ramps for families `k..n`, indexed from zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RampSet {
    delta: f64,
    pairs: Vec<RampPair>,
}

impl RampSet {
    /// `trace[r]` and `trace_slope[r]` are `w0_{k+r}(1)` and its time
    /// derivative `λ_{k+r}(1, w0(1)) ∂_x w0_{k+r}(1)`.
    pub fn new(delta: f64, trace: &[f64], trace_slope: &[f64]) -> Self {
        let pairs = trace
            .iter()
            .zip(trace_slope)
            .map(|(v, s)| RampPair {
                zeta: Ramp::new(*v, *s, delta),
                eta: Ramp::new(1.0, 0.0, delta),
            })
            .collect();
        Self { delta, pairs }
    }

    /// Ramps matching the trace of `w0` at `x = 1` for families `k..n`.
    pub fn from_initial(sys: &HyperbolicSystem, w0: &InitialData, delta: f64, nx: usize) -> Self {
        let at_one: Vec<f64> = (0..sys.n()).map(|c| w0.value(c, 1.0)).collect();
        let trace: Vec<f64> = (sys.k()..sys.n()).map(|c| at_one[c]).collect();
        let slope: Vec<f64> = (sys.k()..sys.n())
            .map(|c| sys.speed(c, 1.0, Some(&at_one)) * w0.slope(c, 1.0, nx))
            .collect();
        Self::new(delta, &trace, &slope)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Pair for positive family offset `r` (component `k + r`).
    pub fn pair(&self, r: usize) -> &RampPair {
        &self.pairs[r]
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}
