//! Numerical solver for the dual Orlicz–Minkowski problem on S¹ and S².
//!
//! The Monge–Ampère type equation
//!
//! ```text
//!     u φ(r) / r^{n+1} · det(u_ij + u δ_ij) = λ f(x),    r = √(|Du|² + u²)
//! ```
//!
//! is solved by running a normalised anisotropic Gauss curvature flow on the
//! support function `u` until it becomes stationary. Along the way the solver
//! monitors the quantities the flow is known to control: the Orlicz volume
//! `V_φ` (conserved), the entropy `J_φ = ∫ log u · f` (non-increasing), and
//! the bounds on `u`, `|Du|/u`, the Gauss curvature and the principal radii.
//!
//! Module map:
//!
//! * [`sphere`]: grids on S¹/S², quadrature and covariant differences.
//! * [`harmonics`]: real harmonics used for densities and initial bodies.
//! * [`geometry`]: body state assembled from a support function.
//! * [`orlicz`]: the Orlicz function φ, its primitive Φ and the density f.
//! * [`functionals`]: θ, V_φ, J_φ and the Monge–Ampère residual.
//! * [`flow`]: adaptive explicit integration of the normalised flow.
//! * [`oracle`]: damped Newton solve of the stationary problem on S¹.
//! * [`config`] / [`cli`]: run configuration and command-line front end.

pub mod cli;
pub mod config;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod geometry;
pub mod harmonics;
pub mod oracle;
pub mod orlicz;
pub mod quad;
pub mod sphere;

pub use error::{Error, Result};
