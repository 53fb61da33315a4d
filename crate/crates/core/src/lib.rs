//! Finite-volume generalized Anderson models with finite-rank random
//! perturbations, and Monte Carlo estimators for their local eigenvalue
//! statistics.
//!
//! The crate is organized bottom-up:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`lattice`] | box geometry, projection families, disorder sampling, Hamiltonian assembly |
//! | [`spectral`] | dense symmetric eigensolver, Jacobi oracle, interval counts, multiplicity census, localization diagnostics |
//! | [`trace`] | weighted eigenvalue trace, its gradient and Hessian, pair Jacobians, the 2×2-minor inequality |
//! | [`process`] | covering arrays and the Wegner / Minami / decorrelation / independence / count / multiplicity estimators |
//! | [`harness`] | TOML experiment configs, seeded parallel sweeps, checkpointed runs, ndjson output |
//!
//! The Hamiltonian on a box Λ is `H = Δ + Σᵢ ωᵢ Pᵢ`, where `Δ` is the lattice
//! adjacency operator (spectrum in `[-2d, 2d]`) and the `Pᵢ` are orthogonal
//! coordinate projections of uniform rank that partition the identity.

pub mod error;
pub mod harness;
pub mod lattice;
pub mod process;
pub mod seed;
pub mod spectral;
pub mod trace;

pub use error::{Error, Result};
pub use lattice::{
    assemble_hamiltonian, build_laplacian, sample_disorder, BoxGeometry, DisorderLaw,
    DisorderSpec, HamiltonianMatrix, Hopping, LatticeModel, PerturbationScheme, SchemeKind,
    DEFAULT_DIMENSION_CAP,
};
pub use spectral::{
    brute_force_oracle, count_in_interval, eigendecompose, localization_diagnostics,
    multiplicity_census, EnergyWindow, MultiplicityCensus, ScaledInterval, SpectralData,
};
pub use trace::{
    euler_identity_residual, gradient_fd_check, jacobian_pair, minor_inequality_check,
    weighted_trace, JacobianReport, MinorCheck, WeightedTraceReport,
};
