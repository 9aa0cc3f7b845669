//! Fixtures shared by the `kernels` benchmarks.

use hypstab_core::lyapunov::{build_weights, LyapunovWeights};
use hypstab_core::suite::{smooth_data, three_state};
use hypstab_core::{compute_timing, DelayTable, FeedbackLaw, HyperbolicSystem, InitialData, StateGrid};

pub use hypstab_core::suite::{quasilinear_system, variable_speed_system};

/// A `k = 1, m = 2` closed loop on `nx` points with its weights at `q = 2`, `Λ = 1`.
pub struct Fixture {
    pub sys: HyperbolicSystem,
    pub delays: DelayTable,
    pub law: FeedbackLaw,
    pub w0: InitialData,
    pub state: StateGrid,
    pub weights: LyapunovWeights,
}

impl Fixture {
    pub fn three_state(nx: usize) -> Self {
        let sys = three_state();
        let timing = compute_timing(&sys);
        let delays = DelayTable::new(&sys, nx);
        let law = FeedbackLaw::linear(&sys, &delays).expect("B = [1 2] is in the class");
        let w0 = smooth_data(sys.n());
        let state = w0.sample(nx);
        let weights = build_weights(&sys, &timing, 2.0, 1.0, 2.0, nx);
        Self {
            sys,
            delays,
            law,
            w0,
            state,
            weights,
        }
    }
}

/// Cauchy matrix `1 / (i + j + 1.5)`: every square submatrix is invertible,
/// so it lies in the class for every shape.
pub fn coupling(k: usize, m: usize) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(k, m, |i, j| 1.0 / (i as f64 + j as f64 + 1.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use hypstab_core::{check_class_b, synthesize_linear};

    #[test]
    fn cauchy_coupling_is_in_the_class() {
        for (k, m) in [(1, 3), (3, 3), (4, 6), (8, 8), (5, 2)] {
            assert!(check_class_b(&coupling(k, m)).is_member(), "{k}x{m}");
            assert!(synthesize_linear(&coupling(k, m)).is_ok());
        }
    }
}
