//! Penalty-based smoothing of convex supremum functions
//!
//! ```text
//! φ(x)   = max_{λ ∈ Q} ⟨λ, g(x)⟩
//! φ_μ(x) = max_{λ ∈ Q} ⟨λ, g(x)⟩ − μ D(λ)
//! ```
//!
//! together with the vanishing-damping inertial dynamics
//!
//! ```text
//! ẍ + (α/t) ẋ + ∇φ_{μ(t)}(x) = 0
//! ```
//!
//! driven by a regularization schedule μ(t) → 0.
//!
//! Modules:
//!
//! - [`feasible`]: the compact dual domains Q and their Euclidean projections.
//! - [`penalty`]: strongly convex penalties D with modulus σ and bound C.
//! - [`smoothing`]: φ, φ_μ, the dual maximizer λ^μ(x), envelope gradients and
//!   the Lipschitz modulus of ∇φ_μ.
//! - [`dro`]: KL-regularized worst-case expectations over moment-constrained
//!   ambiguity sets (exponential tilting).
//! - [`dynamics`]: schedules, the inertial and first-order flows, and the
//!   Lyapunov/rate diagnostics along trajectories.

pub mod config;
pub mod dro;
pub mod dynamics;


pub mod error;
pub mod feasible;
pub mod linalg;
pub mod penalty;
pub mod smoothing;


pub use config::SolverConfig;
pub use error::{Error, Result};
pub use feasible::{FeasibleSet, LpNorm, MomentPolytope};
pub use penalty::Penalty;
pub use smoothing::{ClosedForm, DualCertificate, ObjectiveFamily, QuadraticFamily, SupProblem};

/// Dense column vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
