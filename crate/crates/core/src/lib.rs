//! Solvers and verification monitors for the parabolic p-Laplacian system
//! with a convective term,
//!
//! ```text
//! u_t - ν Δu - ∇·((μ + |∇u|²)^((p-2)/2) ∇u) = -δ J_μ(u)·∇u   in (0,T)×Ω,
//! u = 0 on ∂Ω,  u(0) = u₀,
//! ```
//!
//! on the unit box Ω = (0,1)^d. Setting ν = 0 and then μ = 0 walks from the
//! regularized problem down to the degenerate limit system.
//!
//! The crate is organised bottom-up:
//!
//! * [`fields`]: grids, vector fields, parameters, trajectories and norms.
//! * [`operators`]: discrete gradients, the degenerate flux, convection and
//!   Friedrichs mollifiers.
//! * [`solver`]: preconditioned conjugate gradients for the lagged
//!   diffusion systems.
//! * [`stepper`]: semi-implicit and explicit time integration.
//! * [`galerkin`]: a sine-basis Galerkin solver used as an independent oracle.
//! * [`dual`]: the time-reversed linear dual problem and duality checks.
//! * [`diagnostics`]: energy, extinction, Sobolev-constant and regularity
//!   monitors.

pub mod diagnostics;
pub mod dual;
pub mod error;
pub mod fields;
pub mod galerkin;
pub mod operators;
pub mod solver;
pub mod stepper;

pub use error::{Error, Result};
pub use fields::{Grid, InitialCondition, SimParams, Trajectory, VectorField};
pub use stepper::{SchemeConfig, SchemeMode};
