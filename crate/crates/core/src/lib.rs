//! Numerical laboratory for self-consistent β-map dynamics.
//!
//! The self-consistent system evolves a probability measure `μ` on `[0, 1]`
//! under `T_μ(x) = β(μ) x mod 1`, with slope `β(μ) = 2 + ε F(1/E_μ - 2)`
//! determined by the mean `E_μ` of the current measure. This crate provides
//!
//! * exact step-function densities and their calculus ([`step_density`]),
//! * the β-map, the orbit of 1 and the Parry invariant density
//!   ([`beta_dynamics`]),
//! * the map `ψ^ε(β)` whose fixed points are the invariant measures, with
//!   fixed-point scans and the `β_k` family ([`psi`]),
//! * the exact transfer operator on step densities ([`transfer`]),
//! * ensemble stability experiments ([`experiments`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beta_dynamics;
pub mod error;
pub mod experiments;
pub mod psi;
pub mod rng;
pub mod step_density;
pub mod transfer;

pub use beta_dynamics::{
    beta_map, orbit_of_one, orbit_sum, parry_data, parry_density, ParryData, DEFAULT_TOL,
};
pub use error::{Error, Result};
pub use experiments::{
    detect_convergence, epsilon_sweep, generate_pool, reference_density, run_ensemble, Convergence,
    PoolSpec, SweepRow, SweepSpec, TrajectoryStats, WindowSummary,
};
pub use psi::{
    beta_k_moments, epsilon_star_2, find_fixed_points, psi, psi_curve, psi_ergodic, solve_beta_k,
    BetaKMoments, Coupling, CurveMethod, FixedPointScan, OrbitStart, PsiMethod, PsiSample,
    SelfConsistency,
};
pub use step_density::{random_density, random_density_with, StepDensity, StepFunction};
pub use transfer::{
    iterate, pushforward, self_consistent_step, slope_of, IterationFailure, PushforwardRecord,
    Trajectory,
};
