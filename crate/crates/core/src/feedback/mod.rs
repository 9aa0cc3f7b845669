//! Boundary feedback at `x = 1`.
//!
//! The coupling matrix `B` (or `∇B(0)`) determines a cascade of row maps.
//! Components are split as
//!
//! * `k..ell`: left-moving components that are never controlled (value 0 at
//!   `x = 1`, or the ramp `ζ_j` in nonlinear mode), present only when `m > k`;
//! * `ell..n`: controlled components. Target `j` is driven by the map built
//!   from the last `n - j` rows of `B` and reads components `k..j`.
//!
//! Setting every target by its map makes `B v_+` vanish; see
//! [`plug_in_residual`].

mod closure;
mod compat;
mod nonlinear;
mod ramps;

pub use closure::{boundary_closure, LocalCauchySampler, Sampler};
pub use compat::{check_compatibility, CompatibilityReport};
pub use nonlinear::{solve_nonlinear_map, NEWTON_TOL};
pub use ramps::{Ramp, RampPair, RampSet};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::characteristics::DelayTable;
use crate::system::{BoundaryCoupling, HyperbolicSystem};

/// Relative singular-value threshold below which a block counts as singular.
pub const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeedbackError {
    #[error("trailing {size}x{size} block of B is singular (σ_min/σ_max = {ratio:.3e})")]
    SingularSubmatrix { size: usize, ratio: f64 },
    #[error("implicit boundary solve for component {target} did not converge (residual {residual:.3e})")]
    NoConvergence { target: usize, residual: f64 },
    #[error("nonlinear feedback needs the ramp parameter δ > 0")]
    MissingDelta,
}

/// Invertibility test of one trailing block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCheck {
    pub size: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub invertible: bool,
}

/// Result of the class-membership test: one entry per block size
/// `1..=min(m-1, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub checks: Vec<BlockCheck>,
}

impl ClassReport {
    pub fn is_member(&self) -> bool {
        self.checks.iter().all(|c| c.invertible)
    }

    pub fn first_failure(&self) -> Option<&BlockCheck> {
        self.checks.iter().find(|c| !c.invertible)
    }
}

fn trailing_block(b: &DMatrix<f64>, size: usize) -> DMatrix<f64> {
    b.view((b.nrows() - size, b.ncols() - size), (size, size))
        .into_owned()
}

/// Tests the trailing `i × i` blocks of `B` for `1 ≤ i ≤ min(m-1, k)`.
pub fn check_class_b(b: &DMatrix<f64>) -> ClassReport {
    let (k, m) = (b.nrows(), b.ncols());
    let checks = (1..=k.min(m.saturating_sub(1)))
        .map(|size| {
            let sv = trailing_block(b, size).singular_values();
            let sigma_max = sv.max();
            let sigma_min = sv.min();
            BlockCheck {
                size,
                sigma_min,
                sigma_max,
                invertible: sigma_max > 0.0 && sigma_min >= SINGULAR_TOL * sigma_max,
            }
        })
        .collect();
    ClassReport { checks }
}

/// One controlled component and its linear row map.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMap {
    /// Zero-based component index driven at `x = 1`.
    pub target: usize,
    /// Number of trailing rows of `B` used by the elimination step.
    pub step: usize,
    /// Coefficients on components `k..target`; empty for the zero map.
    pub row: Vec<f64>,
    /// `-Q⁻¹ L`, the full linearized solve of the step (`step × row.len()`).
    pub solve: DMatrix<f64>,
}

impl ControlMap {
    /// One-based label of the map as it appears in reports (`M_1`, `M_2`, …).
    pub fn label(&self, m: usize) -> usize {
        self.target + 1 - m
    }

    pub fn eval_linear(&self, inputs: &[f64]) -> f64 {
        self.row.iter().zip(inputs).map(|(c, v)| c * v).sum()
    }
}

/// Linear synthesis result: the class report and the maps, ordered from the
/// last component (`step = 1`) downwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub k: usize,
    pub m: usize,
    pub class: ClassReport,
    pub maps: Vec<ControlMap>,
}

impl Synthesis {
    pub fn ell(&self) -> usize {
        self.k.max(self.m)
    }

    /// Map driving component `target`, if it is controlled.
    pub fn map_for(&self, target: usize) -> Option<&ControlMap> {
        self.maps.iter().find(|c| c.target == target)
    }
}

/// Gaussian elimination on the trailing rows of `B`.
///
/// Step `i` takes the last `i` rows, splits their columns into `L` (the
/// first `m - i`) and `Q` (the last `i`), and keeps the first row of
/// `-Q⁻¹ L`. The step whose input set is empty yields the zero map and needs
/// no inverse, so the blocks that must be invertible are exactly those tested
/// by [`check_class_b`].
pub fn synthesize_linear(b: &DMatrix<f64>) -> Result<Synthesis, FeedbackError> {
    let (k, m) = (b.nrows(), b.ncols());
    let n = k + m;
    let class = check_class_b(b);
    if let Some(fail) = class.first_failure() {
        return Err(FeedbackError::SingularSubmatrix {
            size: fail.size,
            ratio: fail.sigma_min / fail.sigma_max.max(f64::MIN_POSITIVE),
        });
    }
    let ell = k.max(m);
    let mut maps = Vec::with_capacity(n - ell);
    for target in (ell..n).rev() {
        let step = n - target;
        let width = m - step;
        if width == 0 {
            maps.push(ControlMap {
                target,
                step,
                row: Vec::new(),
                solve: DMatrix::zeros(step, 0),
            });
            continue;
        }
        let rows = b.rows(k - step, step);
        let q = rows.columns(width, step).into_owned();
        let l = rows.columns(0, width).into_owned();
        let solve = -q
            .lu()
            .solve(&l)
            .ok_or(FeedbackError::SingularSubmatrix {
                size: step,
                ratio: 0.0,
            })?;
        maps.push(ControlMap {
            target,
            step,
            row: solve.row(0).iter().copied().collect(),
            solve,
        });
    }
    Ok(Synthesis { k, m, class, maps })
}

/// Builds `v_+` from free values on components `k..ell` by applying every
/// map in increasing target order, and returns `(v_+, max_i |(B v_+)_i|)`.
pub fn plug_in_residual(
    b: &DMatrix<f64>,
    synthesis: &Synthesis,
    free: &[f64],
) -> (Vec<f64>, f64) {
    let (k, m) = (synthesis.k, synthesis.m);
    let ell = synthesis.ell();
    let mut v = vec![0.0; m];
    v[..ell - k].copy_from_slice(&free[..ell - k]);
    for target in ell..k + m {
        let map = synthesis.map_for(target).expect("every target has a map");
        v[target - k] = map.eval_linear(&v[..target - k]);
    }
    let residual = (b * nalgebra::DVector::from_column_slice(&v)).amax();
    (v, residual)
}

/// Linear or nonlinear closure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeedbackMode {
    #[default]
    Linear,
    Nonlinear,
}

/// Everything needed to evaluate the control at `x = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackLaw {
    pub mode: FeedbackMode,
    pub synthesis: Synthesis,
    pub coupling: BoundaryCoupling,
    /// Zero-state sampling positions: `sample_positions[t][r] = a_{k+r, j}(1)`
    /// for the map `synthesis.maps[t]` with target `j`.
    pub sample_positions: Vec<Vec<f64>>,
    pub ramps: Option<RampSet>,
    pub delta: Option<f64>,
}

impl FeedbackLaw {
    /// Linear law for `∇B(0)` with sampling positions from the zero-state
    /// delay maps.
    pub fn linear(sys: &HyperbolicSystem, delays: &DelayTable) -> Result<Self, FeedbackError> {
        let synthesis = synthesize_linear(sys.coupling().jacobian_at_zero())?;
        let sample_positions = synthesis
            .maps
            .iter()
            .map(|map| {
                (sys.k()..map.target)
                    .map(|l| delays.at_boundary(l, map.target))
                    .collect()
            })
            .collect();
        Ok(Self {
            mode: FeedbackMode::Linear,
            synthesis,
            coupling: BoundaryCoupling::Linear(sys.coupling().jacobian_at_zero().clone()),
            sample_positions,
            ramps: None,
            delta: None,
        })
    }

    /// Nonlinear law: implicit maps of the full coupling, blended in through
    /// the ramps over `[0, δ/2]`.
    pub fn nonlinear(
        sys: &HyperbolicSystem,
        delays: &DelayTable,
        ramps: RampSet,
    ) -> Result<Self, FeedbackError> {
        let mut law = Self::linear(sys, delays)?;
        law.mode = FeedbackMode::Nonlinear;
        law.coupling = sys.coupling().clone();
        law.delta = Some(ramps.delta());
        law.ramps = Some(ramps);
        Ok(law)
    }

    pub fn k(&self) -> usize {
        self.synthesis.k
    }

    pub fn m(&self) -> usize {
        self.synthesis.m
    }

    pub fn ell(&self) -> usize {
        self.synthesis.ell()
    }

    /// Evaluates the map driving `target` at the given input values
    /// (components `k..target`).
    pub fn eval_map(&self, target: usize, inputs: &[f64]) -> Result<f64, FeedbackError> {
        let map = self
            .synthesis
            .map_for(target)
            .expect("target is a controlled component");
        if map.row.is_empty() {
            return Ok(0.0);
        }
        match (self.mode, &self.coupling) {
            (FeedbackMode::Nonlinear, BoundaryCoupling::Nonlinear(q)) if !self.coupling.is_linear() => {
                solve_nonlinear_map(q, map, inputs)
            }
            _ => Ok(map.eval_linear(inputs)),
        }
    }

    /// Partial derivatives of the map driving `target` at `inputs`.
    pub fn map_gradient(&self, target: usize, inputs: &[f64]) -> Result<Vec<f64>, FeedbackError> {
        let map = self
            .synthesis
            .map_for(target)
            .expect("target is a controlled component");
        if map.row.is_empty() {
            return Ok(Vec::new());
        }
        match (self.mode, &self.coupling) {
            (FeedbackMode::Nonlinear, BoundaryCoupling::Nonlinear(q)) if !self.coupling.is_linear() => {
                nonlinear::map_gradient(q, map, inputs)
            }
            _ => Ok(map.row.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mat(k: usize, m: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(k, m, v)
    }

    #[test]
    fn class_examples() {
        let id = DMatrix::identity(2, 2);
        let report = check_class_b(&id);
        assert_eq!(report.checks.len(), 1);
        assert!(report.is_member());

        let b = mat(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let report = check_class_b(&b);
        assert!(!report.is_member());
        assert_eq!(report.first_failure().unwrap().size, 1);

        let report = check_class_b(&mat(1, 1, &[0.0]));
        assert!(report.checks.is_empty() && report.is_member());
    }

    #[test]
    fn synthesis_examples() {
        let s = synthesize_linear(&mat(1, 2, &[1.0, 2.0])).unwrap();
        assert_eq!(s.maps.len(), 1);
        assert_eq!(s.maps[0].target, 2);
        assert_eq!(s.maps[0].label(2), 1);
        assert_eq!(s.maps[0].row, vec![-0.5]);

        let b = mat(2, 2, &[1.0, 1.0, 1.0, 2.0]);
        let s = synthesize_linear(&b).unwrap();
        let m2 = s.map_for(3).unwrap();
        let m1 = s.map_for(2).unwrap();
        assert_eq!((m2.label(2), m1.label(2)), (2, 1));
        assert_eq!(m2.row, vec![-0.5]);
        assert!(m1.row.is_empty());
        // Row 2 of B·(w3, M_2 w3) vanishes for any w3.
        let w3 = 0.7;
        assert_eq!(b[(1, 0)] * w3 + b[(1, 1)] * (-0.5 * w3), 0.0);
        // With the zero map on top, the only consistent trace is zero.
        let (v, res) = plug_in_residual(&b, &s, &[]);
        assert_eq!((v, res), (vec![0.0, 0.0], 0.0));

        let s = synthesize_linear(&mat(1, 1, &[3.0])).unwrap();
        assert!(s.maps[0].row.is_empty());
    }

    #[test]
    fn singular_block_is_reported() {
        let err = synthesize_linear(&mat(1, 2, &[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, FeedbackError::SingularSubmatrix { size: 1, .. }));
    }

    #[test]
    fn wide_matrix_free_components() {
        // k = 1, m = 3: components 1, 2 are free, component 3 is driven.
        let b = mat(1, 3, &[1.0, -2.0, 4.0]);
        let s = synthesize_linear(&b).unwrap();
        assert_eq!(s.ell(), 3);
        assert_eq!(s.maps[0].row, vec![-0.25, 0.5]);
        let (_, res) = plug_in_residual(&b, &s, &[0.3, -1.1]);
        assert!(res < 1e-15);
    }

    fn random_member(rng: &mut ChaCha8Rng, k: usize, m: usize) -> DMatrix<f64> {
        loop {
            let b = DMatrix::from_fn(k, m, |_, _| rng.gen_range(-2.0..2.0));
            if check_class_b(&b).is_member() {
                return b;
            }
        }
    }

    #[test]
    fn plug_in_consistency_across_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (k, m) in [(1, 1), (1, 3), (2, 2), (2, 3), (3, 2), (3, 3)] {
            for _ in 0..50 {
                let b = random_member(&mut rng, k, m);
                let s = synthesize_linear(&b).unwrap();
                let free: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let (_, res) = plug_in_residual(&b, &s, &free);
                assert!(res <= 1e-10, "shape {k}x{m}: {res}");
            }
        }
    }

    proptest! {
        #[test]
        fn map_sizes_follow_targets(k in 1usize..4, m in 1usize..4, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = random_member(&mut rng, k, m);
            let s = synthesize_linear(&b).unwrap();
            prop_assert_eq!(s.maps.len(), (k + m) - k.max(m));
            for map in &s.maps {
                prop_assert_eq!(map.row.len(), map.target - k);
                prop_assert_eq!(map.step, k + m - map.target);
            }
        }

        #[test]
        fn full_rank_forces_every_row_to_vanish(seed in 0u64..1000, k in 1usize..4, extra in 0usize..2) {
            // m ≥ k with an invertible k × k trailing block.
            let m = k + extra;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = loop {
                let b = random_member(&mut rng, k, m);
                let sv = trailing_block(&b, k).singular_values();
                if sv.min() > 1e-3 * sv.max() {
                    break b;
                }
            };
            let s = synthesize_linear(&b).unwrap();
            let free: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (v, res) = plug_in_residual(&b, &s, &free);
            prop_assert!(res <= 1e-10);
            if m == k {
                prop_assert!(v.iter().all(|x| *x == 0.0));
            }
        }
    }
}
