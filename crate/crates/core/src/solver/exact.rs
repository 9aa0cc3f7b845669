//! Method-of-characteristics solution for constant speeds and a linear law.
//!
//! Each value is traced back along its characteristic either to the initial
//! data or to an inflow boundary, where the boundary relation (at `x = 0`) or
//! the feedback (at `x = 1`) is evaluated recursively. Every recursion moves
//! strictly back in time, so it terminates.

use super::{SolverError, StateGrid};
use crate::feedback::{FeedbackLaw, FeedbackMode};
use crate::solver::InitialData;
use crate::system::{BoundaryCoupling, HyperbolicSystem};

/// Entry times within this distance of zero are treated as boundary entries.
const ENTRY_TIE: f64 = 1e-12;
const MAX_DENOMINATOR: usize = 64;

/// `Δx / λ_u` where `λ_u = λ_min / d` for the smallest `d ≤ 64` that makes
/// every `λ_i / λ_u` an integer, so each family moves a whole number of cells.
pub fn exact_time_step(sys: &HyperbolicSystem, dx: f64) -> Result<f64, SolverError> {
    let speeds = constant_speeds(sys)?;
    let min = speeds.iter().copied().fold(f64::INFINITY, f64::min);
    for d in 1..=MAX_DENOMINATOR {
        let unit = min / d as f64;
        let integral = speeds.iter().all(|s| {
            let r = s / unit;
            (r - r.round()).abs() <= 1e-9 * r
        });
        if integral {
            return Ok(dx / unit);
        }
    }
    Err(SolverError::ExactModeUnsupported(
        "speed ratios are not rational with denominator at most 64",
    ))
}

fn constant_speeds(sys: &HyperbolicSystem) -> Result<Vec<f64>, SolverError> {
    if !sys.has_constant_speeds() {
        return Err(SolverError::ExactModeUnsupported("speeds are not constant"));
    }
    Ok(sys
        .speeds()
        .iter()
        .map(|s| s.base_coefficients()[0])
        .collect())
}

pub struct ExactSolution<'a> {
    k: usize,
    ell: usize,
    speeds: Vec<f64>,
    b: nalgebra::DMatrix<f64>,
    law: &'a FeedbackLaw,
    w0: &'a InitialData,
}

impl<'a> ExactSolution<'a> {
    pub fn new(
        sys: &HyperbolicSystem,
        law: &'a FeedbackLaw,
        w0: &'a InitialData,
    ) -> Result<Self, SolverError> {
        let speeds = constant_speeds(sys)?;
        let b = match sys.coupling() {
            BoundaryCoupling::Linear(b) => b.clone(),
            c if c.is_linear() => c.jacobian_at_zero().clone(),
            _ => {
                return Err(SolverError::ExactModeUnsupported(
                    "boundary coupling is nonlinear",
                ))
            }
        };
        if law.mode != FeedbackMode::Linear {
            return Err(SolverError::ExactModeUnsupported("feedback law is nonlinear"));
        }
        Ok(Self {
            k: sys.k(),
            ell: sys.ell(),
            speeds,
            b,
            law,
            w0,
        })
    }

    pub fn n(&self) -> usize {
        self.speeds.len()
    }

    /// Constant speed of family `c`.
    pub fn speed(&self, c: usize) -> f64 {
        self.speeds[c]
    }

    /// `w_c(t, x)`.
    pub fn value(&self, c: usize, t: f64, x: f64) -> f64 {
        let speed = self.speeds[c];
        if c < self.k {
            let entry = t - x / speed;
            if t <= 0.0 || entry < -ENTRY_TIE {
                self.w0.value(c, (x - speed * t).clamp(0.0, 1.0))
            } else {
                self.left_inflow(c, entry.max(0.0))
            }
        } else {
            let entry = t - (1.0 - x) / speed;
            if t <= 0.0 || entry < -ENTRY_TIE {
                self.w0.value(c, (x + speed * t).clamp(0.0, 1.0))
            } else {
                self.right_inflow(c, entry.max(0.0))
            }
        }
    }

    /// `w_c(s, 0) = (B w_+(s, 0))_c` for `c < k`.
    fn left_inflow(&self, c: usize, s: f64) -> f64 {
        (0..self.b.ncols())
            .map(|r| self.b[(c, r)] * self.value(self.k + r, s, 0.0))
            .sum()
    }

    /// Control value `w_j(s, 1)`.
    fn right_inflow(&self, j: usize, s: f64) -> f64 {
        if j < self.ell {
            return 0.0;
        }
        let map = self
            .law
            .synthesis
            .map_for(j)
            .expect("target is a controlled component");
        map.row
            .iter()
            .enumerate()
            .map(|(r, coeff)| {
                let l = self.k + r;
                coeff * self.value(l, s, self.speeds[l] / self.speeds[j])
            })
            .sum()
    }

    pub fn state_at(&self, t: f64, nx: usize) -> StateGrid {
        let n = self.speeds.len();
        let mut state = StateGrid::zeros(n, nx);
        state.time = t;
        for c in 0..n {
            for p in 0..nx {
                let x = p as f64 / (nx - 1) as f64;
                state.values[c * nx + p] = self.value(c, t, x);
            }
        }
        state
    }
}
