//! Minimum-time boundary stabilization of one-dimensional first-order
//! hyperbolic systems on `[0, 1]`.
//!
//! The crate builds the feedback from a boundary coupling, simulates the
//! closed loop, and measures the weighted Lyapunov functionals along the
//! trajectories. [`scenario`] reads TOML descriptions and [`suite`] runs the
//! numerical checks exposed by the `hypstab` binary.

pub mod characteristics;
pub mod feedback;
pub mod lyapunov;
pub mod numerics;
pub mod scenario;
pub mod solver;
pub mod suite;
pub mod system;

pub use characteristics::{compute_timing, DelayTable, TimingData};
pub use feedback::{
    check_class_b, synthesize_linear, ClassReport, FeedbackError, FeedbackLaw, FeedbackMode, RampSet, Synthesis,
};
pub use lyapunov::{LyapunovError, LyapunovReport, LyapunovWeights};
pub use solver::{
    simulate, ComponentData, InitialData, SimulationOptions, SimulationTrace, SolverError, SolverMode, StateGrid,
};
pub use system::{BoundaryCoupling, HyperbolicSystem, QuadraticMap, QuadraticTerm, SpeedProfile, ValidationError};
