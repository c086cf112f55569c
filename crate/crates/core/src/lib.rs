//! Simulation engine for m-component reaction-diffusion systems in which
//! components diffuse either nonlocally, through a symmetric convolution
//! kernel restricted to the domain, or locally, through the Neumann
//! Laplacian.
//!
//! The crate is organized around the pipeline
//! grid -> kernel/operator assembly -> reaction field -> time integration,
//! with side modules for structural-assumption audits ([`reactions`]),
//! Lp-energy and dissipation diagnostics ([`diagnostics`]), and pre-built
//! comparison studies such as the kernel-rescaling convergence sweep
//! ([`experiments`]).

// Validation uses `!(x > 0.0)` so NaN is rejected along with nonpositive
// values; stencil loops index parallel arrays by node.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod integrate;
pub mod kernels;
pub mod linalg;
pub mod operators;
pub mod reactions;

pub use error::CoreError;
pub use grid::{Field, Grid};
pub use integrate::{SolverConfig, SystemSpec, Termination, Trajectory};
pub use kernels::{DiscreteNonlocalOperator, KernelShape, KernelSpec, Normalization};
pub use operators::DiffusionMode;
pub use reactions::ReactionSystem;
