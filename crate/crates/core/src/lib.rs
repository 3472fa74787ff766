//! Pseudospectral solvers for the phase-field crystal equation (PFC),
//!
//! ```text
//! φ_t = Δ[Δ²φ + 2Δφ + f(φ)],        f(φ) = φ³ + (1-ε)φ,
//! ```
//!
//! and its inertial modification (MPFC), `βφ_tt + φ_t = Δ[Δ²φ + 2Δφ + f(φ)]`,
//! on the periodic unit box in one to three dimensions.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral`]: grids, fields, Fourier multipliers and Sobolev norms.
//! * [`model`]: parameters, the nonlinearity, energies, mean-mode laws.
//! * [`integrators`]: IMEX steppers, the linear oracle, the energy identity.
//! * [`decomposition`]: the decaying/compact split of an MPFC trajectory.
//! * [`experiments`]: β-continuation, boundary-layer and dissipativity scans.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decomposition;
pub mod error;
pub mod experiments;
pub mod integrators;
pub mod model;
pub mod spectral;

pub use decomposition::{
    fit_decay_rate, run_split, split_integrate, step_c, step_d, DecayFit, Reconstruction, SplitRun,
};
pub use error::{Error, Result};
pub use experiments::{
    beta_distance_scan, boundary_layer_metric, dissipativity_scan, rescale, unrescale, BetaSweep,
    DistanceRecord, InitialDataSpec,
};
pub use integrators::{
    energy_identity_residual, integrate, oracle_solve, step, step_mpfc, step_pfc, EnergyIdentity,
    LinearModeOracle, SchemeKind, StepScheme,
};
pub use model::{
    energy, f_eval, fk_eval, free_energy_density, full_energy, mean_mode_exact, rhs_pfc,
    ConservedCharge, ModelParams, Nonlinearity, State,
};
pub use spectral::{
    hm_norm, inv_laplacian_pow, mean, x_norm, zero_mean, Field, Grid, SobolevLevel,
};
