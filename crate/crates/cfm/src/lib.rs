//! Correction-function solver for the 2D constant-coefficient Poisson equation
//! with prescribed jump discontinuities across embedded interfaces.
//!
//! The solution `u` satisfies `∇²u = f` away from an interface `Γ`, with jumps
//! `[u]_Γ = a` and `[u_n]_Γ = b` given on `Γ` and Dirichlet data on the outer
//! boundary. Instead of modifying the finite-difference stencils that straddle
//! `Γ`, the jump information is condensed into a correction function
//! `D = u⁺ − u⁻`, solved locally on small patches around the interface and
//! moved to the right-hand side. The linear system is therefore identical to
//! the one for a smooth problem, and standard Poisson solvers apply unchanged.
//!
//! Module map:
//! - [`grid`]: uniform grids, node classification, irregular-stencil discovery
//! - [`geom`]: Hermite/bicubic/bilinear bases and Gauss–Legendre quadrature
//! - [`interface`]: level-set and exact-circle interface geometry
//! - [`cauchy`]: patch construction and the penalized local Cauchy solves for `D`
//! - [`assembly`]: 9-point/5-point global systems, correction terms, gradients
//! - [`harness`]: built-in benchmark problems and convergence studies
//! - [`cli`]: command-line entry point

pub mod assembly;
pub mod cauchy;
pub mod cli;
pub mod geom;
pub mod grid;
pub mod harness;
pub mod interface;

mod error;

pub use error::{Error, Result};
