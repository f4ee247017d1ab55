//! Derivative-free estimation of the second-moment matrix
//! `Σ_μ = E_μ[∇f(x) ∇f(x)*]` of a smooth function from point evaluations.
//!
//! The crate draws `N` centers from `μ`, then `N_{X,ε}` neighbors from `μ`
//! conditioned on the ε-balls around the centers, forms a finite-difference
//! gradient at every center along random directions, and averages their
//! outer products with a correction that removes the bias introduced by the
//! random projections. Alongside the estimator it ships the statistical
//! checks and the convergence-study harness used to validate it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod experiments;
pub mod functions;
pub mod gradients;
pub mod measure;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use estimator::{
    bias_constants, debiased_estimate, ideal_debiased_estimate, naive_estimate, oracle_estimate, BiasConstants,
    EstimatorKind, MomentEstimate,
};
pub use functions::{make_quadratic, make_ridge, FunctionSpec, QuadraticSpec, RidgeProfile, TargetFunction};
pub use gradients::{fd_gradient, ideal_gradient, project, Projection};
pub use measure::{
    ball_mass, epsilon_max, rho, sample_centers, sample_neighbors, Domain, Measure, SampleDesign, SamplingMode,
};
pub use spectral::{eigendecompose, principal_angle, subspace_recovery_report, ActiveSubspace, SubspaceReport};
