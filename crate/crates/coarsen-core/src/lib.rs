//! Numerical laboratory for the mean-field interval-coarsening model.
//!
//! The model eliminates the shortest interval of a partition of the line
//! by merging it with j partners drawn with probability p_j. In rescaled
//! variables the length density η(τ, y) on [1, ∞) obeys
//!
//!   ∂_τ η = ∂_y(y η) + β(τ) 𝔔[η](y - 1),     β(τ) = η(τ, 1),
//!
//! with 𝔔[η] = Σ p_j η^{*j}. The crate computes the analytic transforms
//! that linearize this flow globally (kernel, special, linearize), the
//! self-similar steady states by two independent routes (profiles),
//! a direct splitting integrator with trace/rate extraction (evolve), and
//! an event-driven simulator of the underlying merging process (mc).

pub mod error;
pub mod quad;
pub mod special;
pub mod kernel;
pub mod grid;
mod fft;
pub mod profiles;
pub mod linearize;
pub mod evolve;
pub mod mc;
pub mod checks;

pub use error::{Error, Result};
pub use kernel::Kernel;
