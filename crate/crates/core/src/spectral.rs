//! Principal eigenpair of `L - μ` on the torus.
//!
//! `A = L + (μ₀ - μ)` with `μ₀ = max μ + 1` is an M-matrix, so `A⁻¹` is
//! positive and power iteration from the all-ones vector converges to the
//! positive eigenvector; `λ1 = 1/ρ(A⁻¹) - μ₀`.

use crate::discretize::{io, DiscretizeError, Field, OperatorMatrix};
use crate::exec::Execution;
use nalgebra::{DMatrix, DVector};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error("the eigenproblem needs a torus grid")]
    NotTorus,
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("shifted operator is singular")]
    Singular,
    #[error("iterate lost positivity at node {node} (value {value:e}, iteration {iteration}); the discretization is too coarse")]
    Positivity { iteration: usize, node: usize, value: f64 },
    #[error("power iteration did not converge in {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dense spectrum limited to N ≤ {max}, got {n}")]
    TooLarge { n: usize, max: usize },
}

/// `(λ1, g)` with `(L - μ) e^g = λ1 e^g` and `max e^g = 1`.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda1: f64,
    pub g: Field,
    pub residual: f64,
    pub iterations: usize,
}

impl EigenPair {
    pub fn eigenfunction(&self) -> Field {
        self.g.map(|_, g| g.exp())
    }

    pub fn write(&self, dir: &Path) -> Result<(), DiscretizeError> {
        io::write_json(
            &dir.join("eigen.json"),
            &serde_json::json!({
                "lambda1": self.lambda1,
                "residual": self.residual,
                "iterations": self.iterations,
            }),
        )?;
        let e: Vec<f64> = self.g.values().iter().map(|g| g.exp()).collect();
        io::write_columns_csv(&dir.join("eigen.csv"), &["x", "g", "exp_g"], &[self.g.nodes(), self.g.values(), &e])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iterations: usize,
}

impl EigenOptions {
    pub fn new(tol: f64) -> Self {
        Self { tol, max_iterations: 20_000 }
    }
}

pub fn principal_eigenpair(op: &OperatorMatrix, mu: &Field, tol: f64) -> Result<EigenPair, SpectralError> {
    principal_eigenpair_with(op, mu, EigenOptions::new(tol))
}

pub fn principal_eigenpair_with(
    op: &OperatorMatrix,
    mu: &Field,
    opts: EigenOptions,
) -> Result<EigenPair, SpectralError> {
    if !(opts.tol > 0.0) {
        return Err(SpectralError::InvalidTolerance(opts.tol));
    }
    if !op.grid().is_torus() {
        return Err(SpectralError::NotTorus);
    }
    op.check_field(mu)?;
    let n = op.len();
    let mu0 = mu.max() + 1.0;
    let shift: Vec<f64> = mu.values().iter().map(|m| mu0 - m).collect();
    let lu = op.to_dmatrix(1.0, &shift).lu();
    // residuals below this are dominated by rounding in the matvec
    let norm_inf = (0..n).map(|i| op.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max) + mu0;
    let floor = 64.0 * f64::EPSILON * norm_inf;

    let mut v = DVector::from_element(n, 1.0);
    let mut rho_prev = f64::NAN;
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let w = lu.solve(&v).ok_or(SpectralError::Singular)?;
        let rho = v.dot(&w) / v.dot(&v);
        let sup = w.amax();
        v = w / sup;
        if let Some((node, &value)) = v.iter().enumerate().find(|(_, x)| !(**x > 0.0)) {
            return Err(SpectralError::Positivity { iteration: it, node, value });
        }
        let lambda = 1.0 / rho - mu0;
        residual = residual_of(op, mu.values(), lambda, v.as_slice());
        if (rho - rho_prev).abs() < opts.tol && residual <= opts.tol.max(floor) {
            let g = Field::new(op.grid().clone(), v.iter().map(|x| x.ln()).collect())?;
            return Ok(EigenPair { lambda1: lambda, g, residual, iterations: it });
        }
        rho_prev = rho;
    }
    Err(SpectralError::NoConvergence { iterations: opts.max_iterations, residual })
}

fn residual_of(op: &OperatorMatrix, mu: &[f64], lambda: f64, phi: &[f64]) -> f64 {
    let lphi = op.apply_slice(phi, Execution::default());
    let sup = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst =
        lphi.iter().zip(mu.iter().zip(phi)).map(|(l, (m, p))| (l - m * p - lambda * p).abs()).fold(0.0, f64::max);
    worst / sup
}

/// `‖L e^g - μ e^g - λ1 e^g‖∞ / ‖e^g‖∞`.
pub fn eigen_residual(op: &OperatorMatrix, mu: &Field, pair: &EigenPair) -> Result<f64, SpectralError> {
    op.check_field(mu)?;
    op.check_field(&pair.g)?;
    let phi: Vec<f64> = pair.g.values().iter().map(|g| g.exp()).collect();
    Ok(residual_of(op, mu.values(), pair.lambda1, &phi))
}

pub const DENSE_LIMIT: usize = 2048;

/// The two smallest real parts of the spectrum of `L - μ` (dense).
///
/// Row-scaled symmetric operators are symmetrized by `S^{1/2}` and handled
/// by a symmetric eigensolver; anything else goes through a real Schur form.
pub fn spectral_gap_probe(op: &OperatorMatrix, mu: &Field) -> Result<(f64, f64), SpectralError> {
    op.check_field(mu)?;
    let n = op.len();
    if n > DENSE_LIMIT {
        return Err(SpectralError::TooLarge { n, max: DENSE_LIMIT });
    }
    let mut eig: Vec<f64> = match symmetrized(op, mu.values()) {
        Some(sym) => sym.symmetric_eigen().eigenvalues.iter().copied().collect(),
        None => {
            let m = op.to_dmatrix(1.0, &mu.values().iter().map(|m| -m).collect::<Vec<_>>());
            m.complex_eigenvalues().iter().map(|z| z.re).collect()
        }
    };
    eig.sort_by(f64::total_cmp);
    Ok((eig[0], eig[1]))
}

/// `S^{1/2} B S^{1/2} - μ` when `op = S B` with `B` symmetric.
fn symmetrized(op: &OperatorMatrix, mu: &[f64]) -> Option<DMatrix<f64>> {
    let n = op.len();
    let s = op.row_scale();
    if s.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let b = |i: usize, j: usize| op.entry(i, j) / s[i];
    let mut diff = 0.0f64;
    let mut norm = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            diff = diff.max((b(i, j) - b(j, i)).abs());
            norm = norm.max(b(i, j).abs());
        }
    }
    if diff > 1e-12 * norm.max(f64::MIN_POSITIVE) {
        return None;
    }
    let r: Vec<f64> = s.iter().map(|v| v.sqrt()).collect();
    Some(DMatrix::from_fn(n, n, |i, j| {
        let sym = 0.5 * (b(i, j) + b(j, i));
        r[i] * sym * r[j] - if i == j { mu[i] } else { 0.0 }
    }))
}
