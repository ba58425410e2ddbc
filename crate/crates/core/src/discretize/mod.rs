//! Grids, sampled fields and quadrature of the singular operator
//! `L[u](x) = ∫ (u(x) - u(x+y)) K(x,y) dy`.
//!
//! Two discretizations are provided: the periodized operator on a uniform
//! torus grid, and a truncated line grid (uniform core, geometric outer
//! zones) with an analytic closure for the far tail.

mod field;
mod grid;
pub mod io;
mod line;
mod operator;
mod torus;

pub use field::Field;
pub use grid::{Grid, LineGrid, LineGridParams, TorusGrid};
pub use line::{
    apply_line_operator, apply_line_operator_with, assemble_line_operator, assemble_line_operator_with, TailModel,
};
pub use operator::OperatorMatrix;
pub use torus::{
    assemble_torus_operator, assemble_torus_operator_with, fourier_symbol, periodized_kernel, quadratic_form,
    PeriodizedValue,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizeError {
    #[error("torus grid needs an even number of points N ≥ 16, got {0}")]
    TorusTooSmall(usize),
    #[error("invalid line grid: {0}")]
    InvalidLineGrid(String),
    #[error("periodized kernel is singular at y ≡ 0 mod 1")]
    SingularPoint,
    #[error("k_max must be at least 4, got {0}")]
    KMaxTooSmall(usize),
    #[error("only d = 1 is discretized, got d = {0}")]
    UnsupportedDimension(usize),
    #[error("N = {n} too coarse for α = {order}: estimated relative quadrature error {estimate:.3e} exceeds {tolerance:.1e}; try N ≥ {suggested}")]
    Resolution { n: usize, order: f64, estimate: f64, tolerance: f64, suggested: usize },
    #[error("field has {got} values but the grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("field contains a non-finite value at node {0}")]
    NonFinite(usize),
    #[error("field is defined on a different grid than the operator")]
    GridMismatch,
    #[error("I/O error: {0}")]
    Io(String),
}
