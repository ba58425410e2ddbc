//! Positive periodic steady state by monotone iteration
//! `(L + N₀) u_{k+1} = f(·, u_k) + N₀ u_k`.

use crate::discretize::{io, DiscretizeError, Field, OperatorMatrix};
use crate::exec::Execution;
use crate::model::ProblemSpec;
use crate::spectral::EigenPair;
use nalgebra::DVector;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteadyError {
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error("λ1 = {0} ≥ 0: extinction regime, no positive steady state is sought")]
    Regime(f64),
    #[error("the steady problem needs a torus grid")]
    NotTorus,
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("no dyadic δ ≥ {min:e} makes δ·e^g a discrete subsolution")]
    NoSubsolution { min: f64 },
    #[error("monotonicity lost at iteration {iteration}, node {node}: wrong-sign increment {increment:e}")]
    Monotonicity { iteration: usize, node: usize, increment: f64 },
    #[error("iterate exceeds the saturation level {cap} at node {node} (value {value})")]
    Cap { node: usize, value: f64, cap: f64 },
    #[error("shifted operator is singular")]
    Singular,
    #[error("no convergence after {iterations} iterations (last update {update:e})")]
    NoConvergence { iterations: usize, update: f64 },
}

/// Increments below this magnitude are attributed to rounding.
pub const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub u_plus: Field,
    pub iterations: usize,
    /// `‖L u⁺ - f(·, u⁺)‖∞`.
    pub residual: f64,
    /// Per iteration, the smallest signed increment (largest for descending runs).
    pub increments: Vec<f64>,
    pub delta: f64,
    pub n0: f64,
    /// Tolerance applied to the monotonicity and cap checks.
    pub slack: f64,
}

impl SteadyState {
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "iterations": self.iterations,
            "residual": self.residual,
            "weak_mean": weak_mean(&self.u_plus),
            "delta": self.delta,
            "N0": self.n0,
            "slack": self.slack,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<(), DiscretizeError> {
        io::write_json(&dir.join("steady.json"), &self.summary())?;
        io::write_columns_csv(&dir.join("steady.csv"), &["x", "u_plus"], &[self.u_plus.nodes(), self.u_plus.values()])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SteadyOptions {
    pub tol: f64,
    pub max_iterations: usize,
}

impl SteadyOptions {
    pub fn new(tol: f64) -> Self {
        Self { tol, max_iterations: 100_000 }
    }
}

fn reaction_field(spec: &ProblemSpec, u: &[f64], nodes: &[f64]) -> Vec<f64> {
    nodes.iter().zip(u).map(|(&x, &v)| spec.reaction.eval_unchecked(&[x], v)).collect()
}

/// `1.1 · max(-∂_u f)` over the grid nodes and a 65-point ladder of `[0, M]`.
pub fn monotonicity_shift(spec: &ProblemSpec, nodes: &[f64]) -> f64 {
    let m = spec.reaction.saturation();
    let mut worst = f64::NEG_INFINITY;
    for &x in nodes {
        for k in 0..=64 {
            worst = worst.max(spec.reaction.neg_du_fd(&[x], m * k as f64 / 64.0));
        }
    }
    1.1 * worst.max(0.0)
}

/// `‖L u - f(·, u)‖∞`.
pub fn steady_residual(op: &OperatorMatrix, spec: &ProblemSpec, u: &Field) -> Result<f64, DiscretizeError> {
    op.check_field(u)?;
    let lu = op.apply_slice(u.values(), Execution::default());
    let f = reaction_field(spec, u.values(), u.nodes());
    Ok(lu.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Grid average of `u⁺` over one period.
pub fn weak_mean(u_plus: &Field) -> f64 {
    let w = u_plus.grid().quadrature_weights();
    let total: f64 = w.iter().sum();
    u_plus.integral() / total
}

pub fn positive_steady_state(
    spec: &ProblemSpec,
    op: &OperatorMatrix,
    pair: &EigenPair,
    tol: f64,
) -> Result<SteadyState, SteadyError> {
    positive_steady_state_with(spec, op, pair, SteadyOptions::new(tol))
}

pub fn positive_steady_state_with(
    spec: &ProblemSpec,
    op: &OperatorMatrix,
    pair: &EigenPair,
    opts: SteadyOptions,
) -> Result<SteadyState, SteadyError> {
    check(op, opts.tol)?;
    op.check_field(&pair.g)?;
    if pair.lambda1 >= 0.0 {
        return Err(SteadyError::Regime(pair.lambda1));
    }
    let nodes = op.grid().nodes();
    let phi: Vec<f64> = pair.g.values().iter().map(|g| g.exp()).collect();
    let phi_max = phi.iter().copied().fold(0.0, f64::max);
    let mut delta = dyadic_floor(pair.lambda1.abs() / (2.0 * spec.reaction.m_upper() * phi_max));
    let min_delta = 1e-12;
    loop {
        let seed: Vec<f64> = phi.iter().map(|p| delta * p).collect();
        let lseed = op.apply_slice(&seed, Execution::default());
        let f = reaction_field(spec, &seed, nodes);
        if lseed.iter().zip(&f).all(|(l, f)| l <= f) {
            break;
        }
        delta *= 0.5;
        if delta < min_delta {
            return Err(SteadyError::NoSubsolution { min: min_delta });
        }
    }
    let seed: Vec<f64> = phi.iter().map(|p| delta * p).collect();
    iterate(spec, op, seed, 1.0, delta, opts)
}

/// Same iteration started from the supersolution `ū ≡ M`; the sequence is
/// nonincreasing.
pub fn steady_state_from_above(spec: &ProblemSpec, op: &OperatorMatrix, tol: f64) -> Result<SteadyState, SteadyError> {
    check(op, tol)?;
    let seed = vec![spec.reaction.saturation(); op.len()];
    iterate(spec, op, seed, -1.0, f64::NAN, SteadyOptions::new(tol))
}

fn check(op: &OperatorMatrix, tol: f64) -> Result<(), SteadyError> {
    if !(tol > 0.0) {
        return Err(SteadyError::InvalidTolerance(tol));
    }
    if !op.grid().is_torus() {
        return Err(SteadyError::NotTorus);
    }
    Ok(())
}

fn dyadic_floor(v: f64) -> f64 {
    2f64.powi(v.log2().floor() as i32)
}

/// `direction = 1` for ascending runs, `-1` for descending ones.
fn iterate(
    spec: &ProblemSpec,
    op: &OperatorMatrix,
    seed: Vec<f64>,
    direction: f64,
    delta: f64,
    opts: SteadyOptions,
) -> Result<SteadyState, SteadyError> {
    let n = op.len();
    let nodes = op.grid().nodes().to_vec();
    let n0 = monotonicity_shift(spec, &nodes);
    let cap = spec.reaction.saturation();
    let lu = op.to_dmatrix(1.0, &vec![n0; n]).lu();
    // the factored matrix annihilates constants only up to roundoff, which the solve divides by n0
    let defect = cap * op.row_sum_defect();
    let diag = op.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let slack = MONOTONE_SLACK + 4.0 * (defect + f64::EPSILON * diag * cap) / n0.max(1e-3);
    let mut u = seed;
    let mut increments = Vec::new();
    for it in 1..=opts.max_iterations {
        let f = reaction_field(spec, &u, &nodes);
        let rhs = DVector::from_iterator(n, f.iter().zip(&u).map(|(f, u)| f + n0 * u));
        let next = lu.solve(&rhs).ok_or(SteadyError::Singular)?;
        let mut worst = f64::INFINITY;
        let mut worst_node = 0;
        let mut update = 0.0f64;
        for i in 0..n {
            let inc = direction * (next[i] - u[i]);
            if inc < worst {
                worst = inc;
                worst_node = i;
            }
            update = update.max((next[i] - u[i]).abs());
        }
        increments.push(direction * worst);
        if worst < -slack {
            return Err(SteadyError::Monotonicity { iteration: it, node: worst_node, increment: direction * worst });
        }
        if let Some((node, &value)) = next.iter().enumerate().find(|(_, v)| **v > cap + slack) {
            return Err(SteadyError::Cap { node, value, cap });
        }
        u = next.iter().copied().collect();
        if update < opts.tol {
            let u_plus = Field::new(op.grid().clone(), u)?;
            let residual = steady_residual(op, spec, &u_plus)?;
            return Ok(SteadyState { u_plus, iterations: it, residual, increments, delta, n0, slack });
        }
    }
    Err(SteadyError::NoConvergence { iterations: opts.max_iterations, update: f64::NAN })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{assemble_torus_operator, TorusGrid};
    use crate::model::{InitialData, KernelSpec, ReactionSpec, TrigPoly};
    use crate::spectral::principal_eigenpair;

    fn problem(mu_amp: f64, kernel_amp: f64) -> ProblemSpec {
        let k = KernelSpec::new(1, 1.0, TrigPoly::cosine(0.0, kernel_amp)).unwrap();
        let init = InitialData::algebraic(1.0, &k).unwrap();
        ProblemSpec::new(k, ReactionSpec::logistic(1.0, mu_amp).unwrap(), init).unwrap()
    }

    fn solve(spec: &ProblemSpec, n: usize) -> (OperatorMatrix, SteadyState) {
        let op = assemble_torus_operator(&spec.kernel, &TorusGrid::new(n).unwrap()).unwrap();
        let mu = Field::from_fn(op.grid().clone(), |x| spec.reaction.mu_1d(x));
        let pair = principal_eigenpair(&op, &mu, 1e-12).unwrap();
        let s = positive_steady_state(spec, &op, &pair, 1e-12).unwrap();
        (op, s)
    }

    #[test]
    fn constant_logistic_converges_to_one() {
        let spec = problem(0.0, 0.0);
        let (_, s) = solve(&spec, 64);
        assert!(s.u_plus.values().iter().all(|v| (v - 1.0).abs() < 1e-10));
        assert!(s.increments.iter().all(|v| *v >= -MONOTONE_SLACK));
        assert!((weak_mean(&s.u_plus) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn stiff_operator_roundoff_stays_within_slack() {
        let k = KernelSpec::homogeneous(1, 1.5).unwrap();
        let init = InitialData::algebraic(1.0, &k).unwrap();
        let spec = ProblemSpec::new(k, ReactionSpec::logistic(1.0, 0.0).unwrap(), init).unwrap();
        let (op, s) = solve(&spec, 1024);
        assert!(s.slack < 1e-8, "{}", s.slack);
        assert!(s.u_plus.values().iter().all(|v| (v - 1.0).abs() < 1e-8));
        let above = steady_state_from_above(&spec, &op, 1e-12).unwrap();
        assert!(above.u_plus.values().iter().all(|v| (v - 1.0).abs() < 1e-8));
    }

    #[test]
    fn periodic_case_is_nonconstant_and_two_sided() {
        let spec = problem(0.5, 0.2);
        let (op, s) = solve(&spec, 128);
        assert!(s.u_plus.max() - s.u_plus.min() > 1e-2);
        assert!(s.residual < 1e-9);
        let above = steady_state_from_above(&spec, &op, 1e-12).unwrap();
        let gap = above.u_plus.values().iter().zip(s.u_plus.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-10, "{gap}");
    }

    #[test]
    fn saturated_constant_has_reaction_residual() {
        let spec = problem(0.5, 0.0);
        let op = assemble_torus_operator(&spec.kernel, &TorusGrid::new(32).unwrap()).unwrap();
        let m = spec.reaction.saturation();
        let u = Field::constant(op.grid().clone(), m);
        let expected =
            op.grid().nodes().iter().map(|&x| spec.reaction.eval_unchecked(&[x], m).abs()).fold(0.0, f64::max);
        assert!((steady_residual(&op, &spec, &u).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn weak_mean_is_linear() {
        let grid = std::sync::Arc::new(crate::discretize::Grid::Torus(TorusGrid::new(32).unwrap()));
        let u = Field::from_fn(grid, |x| 2.0 + (6.0 * x).sin());
        let scaled = u.map(|_, v| 3.0 * v);
        assert!((weak_mean(&scaled) - 3.0 * weak_mean(&u)).abs() < 1e-14);
    }

    #[test]
    fn refuses_extinction_regime() {
        let k = KernelSpec::homogeneous(1, 1.0).unwrap();
        let init = InitialData::algebraic(1.0, &k).unwrap();
        let spec = ProblemSpec::new(k, ReactionSpec::logistic(1.0, 0.0).unwrap(), init).unwrap();
        let op = assemble_torus_operator(&spec.kernel, &TorusGrid::new(32).unwrap()).unwrap();
        let g = Field::constant(op.grid().clone(), 0.0);
        let pair = EigenPair { lambda1: 0.2, g, residual: 0.0, iterations: 0 };
        assert!(matches!(positive_steady_state(&spec, &op, &pair, 1e-8), Err(SteadyError::Regime(_))));
    }
}
