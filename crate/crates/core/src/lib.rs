//! Nonlocal KPP equations `u_t + L[u] = f(x, u)` with heavy-tailed,
//! periodically modulated kernels of order `α ∈ (0, 2)`.
//!
//! The crate covers the whole numerical chain: problem definitions and
//! assumption checks ([`model`]), quadrature of the singular operator on the
//! torus and on a truncated line ([`discretize`]), the principal eigenpair
//! ([`spectral`]), the positive periodic steady state ([`steady`]), time
//! integration ([`evolve`]), front and rescaling diagnostics
//! ([`asymptotics`]), explicit barrier bounds ([`bounds`]) and a
//! configuration-driven pipeline ([`pipeline`]).

pub mod asymptotics;
pub mod bounds;
pub mod discretize;
pub mod evolve;
pub mod exec;
pub mod model;
pub mod pipeline;
pub mod plot;
mod quadrature;
pub mod spectral;
pub mod steady;

pub use exec::Execution;
