//! Zeroth- and first-order compatibility of initial data with the relation at `x = 0`.

use crate::solver::InitialData;
use crate::system::HyperbolicSystem;

#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityReport {
    /// `w_-(0) - B(w_+(0))`.
    pub order0: Vec<f64>,
    /// `Σ_- ∂_x w_-(0) - ∇B(w_+(0)) Σ_+ ∂_x w_+(0)`.
    pub order1: Vec<f64>,
}

impl CompatibilityReport {
    pub fn order0_norm(&self) -> f64 {
        self.order0.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn order1_norm(&self) -> f64 {
        self.order1.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn accepts(&self, tol: f64) -> bool {
        self.order0_norm() <= tol && self.order1_norm() <= tol
    }
}

/// Residuals of both compatibility conditions at `x = 0`. Derivatives of
/// sampled data use one-sided second-order differences on `nx` points.
pub fn check_compatibility(w0: &InitialData, sys: &HyperbolicSystem, nx: usize) -> CompatibilityReport {
    let (k, n) = (sys.k(), sys.n());
    let state: Vec<f64> = (0..n).map(|c| w0.value(c, 0.0)).collect();
    let plus = &state[k..];
    let image = sys.coupling().eval(plus);
    let order0 = (0..k).map(|i| state[i] - image[i]).collect();

    let signed_slope: Vec<f64> = (0..n)
        .map(|c| {
            let speed = sys.speed(c, 0.0, Some(&state));
            let s = w0.slope(c, 0.0, nx);
            if sys.is_negative(c) {
                -speed * s
            } else {
                speed * s
            }
        })
        .collect();
    let jac = sys.coupling().jacobian(plus);
    let order1 = (0..k)
        .map(|i| {
            let mapped: f64 = (0..sys.m()).map(|c| jac[(i, c)] * signed_slope[k + c]).sum();
            signed_slope[i] - mapped
        })
        .collect();
    CompatibilityReport { order0, order1 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::ComponentData;
    use crate::system::{BoundaryCoupling, QuadraticMap, QuadraticTerm, SpeedProfile};
    use nalgebra::DMatrix;

    fn quasilinear() -> HyperbolicSystem {
        let b = QuadraticMap::new(
            DMatrix::from_element(1, 1, 0.8),
            vec![QuadraticTerm {
                row: 0,
                a: 0,
                b: 0,
                coeff: 0.5,
            }],
        )
        .unwrap();
        HyperbolicSystem::new(
            1,
            1,
            vec![
                SpeedProfile::constant(1.0).with_state_coupling(vec![0.05, 0.0]),
                SpeedProfile::constant(2.0).with_state_coupling(vec![0.0, 0.1]),
            ],
            BoundaryCoupling::Nonlinear(b),
        )
        .unwrap()
    }

    #[test]
    fn zero_data_is_compatible() {
        let r = check_compatibility(&InitialData::zero(2), &quasilinear(), 101);
        assert_eq!(r.order0_norm(), 0.0);
        assert_eq!(r.order1_norm(), 0.0);
    }

    #[test]
    fn projected_linear_data_has_zero_order0_residual() {
        let sys = HyperbolicSystem::new(
            1,
            2,
            vec![SpeedProfile::constant(1.0); 3],
            BoundaryCoupling::Linear(DMatrix::from_row_slice(1, 2, &[1.0, 2.0])),
        )
        .unwrap();
        let w0 = InitialData::new(vec![
            ComponentData::Series {
                sine: vec![],
                poly: vec![0.3 + 2.0 * -0.4],
            },
            ComponentData::Series {
                sine: vec![1.0],
                poly: vec![0.3],
            },
            ComponentData::Series {
                sine: vec![],
                poly: vec![-0.4, 1.0],
            },
        ]);
        let r = check_compatibility(&w0, &sys, 101);
        assert_eq!(r.order0_norm(), 0.0);
    }

    #[test]
    fn order0_defect_is_reported() {
        let w0 = InitialData::new(vec![
            ComponentData::Series {
                sine: vec![],
                poly: vec![0.1],
            },
            ComponentData::zero(),
        ]);
        let r = check_compatibility(&w0, &quasilinear(), 101);
        assert!((r.order0_norm() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn sampled_data_uses_one_sided_differences() {
        // w_2 = A sin(πx), w_1 = -0.8 (λ_2/λ_1) A sin(πx) satisfies both conditions
        // at the zero trace.
        let sys = quasilinear();
        let a = 0.01;
        let nx = 401;
        let grid = |scale: f64| {
            (0..nx)
                .map(|p| scale * (std::f64::consts::PI * p as f64 / (nx - 1) as f64).sin())
                .collect::<Vec<_>>()
        };
        let w0 = InitialData::new(vec![
            ComponentData::Samples(grid(-1.6 * a)),
            ComponentData::Samples(grid(a)),
        ]);
        let r = check_compatibility(&w0, &sys, nx);
        assert_eq!(r.order0_norm(), 0.0);
        // Second-order one-sided differences: O(dx²) residual.
        assert!(r.order1_norm() < 1e-6, "{}", r.order1_norm());
    }
}
