//! Periodized operator on the unit torus.
//!
//! With `K̃(x,y) = Σ_k K(x, y+k)` even in `y`, the operator reads
//! `L[u](x) = (1+a(x)) ∫_0^{1/2} D(y) K̃₀(y) dy`, `D(y) = 2u(x) - u(x+y) - u(x-y)`.
//! `K̃₀` is split into the `k = 0` term `y^{-1-α}` and the smooth image sum
//! `S(y)`. The singular part is integrated by product integration of the
//! piecewise-linear interpolant of `q = D/y²` against `y^{1-α}`; the smooth
//! part by the trapezoid rule.

use super::{DiscretizeError, Field, Grid, OperatorMatrix, TorusGrid};
use crate::exec::Execution;
use crate::model::KernelSpec;
use crate::quadrature::gauss8;
use std::f64::consts::PI;
use std::sync::Arc;

/// Partial image sum plus Euler–Maclaurin tail, with an error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodizedValue {
    pub value: f64,
    pub tail_bound: f64,
}

/// `Σ_{k=K+1}^∞ (k + c)^{-s}` via midpoint Euler–Maclaurin; returns the
/// value and the size of the first neglected term.
fn em_tail(s: f64, c: f64, k_max: usize) -> (f64, f64) {
    let t = k_max as f64 + 0.5 + c;
    let value = t.powf(1.0 - s) / (s - 1.0) - s / 24.0 * t.powf(-s - 1.0);
    let next = 7.0 / 5760.0 * s * (s + 1.0) * (s + 2.0) * t.powf(-s - 3.0);
    (value, next)
}

/// `Σ_{k≠0} |y + k|^{-s}` for `y ∈ [-1/2, 1/2]`.
pub(crate) fn image_sum(s: f64, y: f64, k_max: usize) -> PeriodizedValue {
    let mut value = 0.0;
    for k in (1..=k_max).rev() {
        let k = k as f64;
        value += (k + y).powf(-s) + (k - y).powf(-s);
    }
    let (r, rb) = em_tail(s, y, k_max);
    let (l, lb) = em_tail(s, -y, k_max);
    PeriodizedValue { value: value + r + l, tail_bound: 2.0 * (rb + lb) }
}

/// Periodized kernel `K̃(x, y) = Σ_{k∈ℤ} K(x, y + k)` in one dimension.
pub fn periodized_kernel(spec: &KernelSpec, x: f64, y: f64, k_max: usize) -> Result<PeriodizedValue, DiscretizeError> {
    if spec.dim() != 1 {
        return Err(DiscretizeError::UnsupportedDimension(spec.dim()));
    }
    if k_max < 4 {
        return Err(DiscretizeError::KMaxTooSmall(k_max));
    }
    let mut r = y - y.round();
    if r.abs() < 1e-300 {
        return Err(DiscretizeError::SingularPoint);
    }
    if r == -0.5 {
        r = 0.5;
    }
    let s = spec.tail_exponent();
    let images = image_sum(s, r, k_max);
    let scale = spec.scale_1d(x);
    Ok(PeriodizedValue { value: scale * (r.abs().powf(-s) + images.value), tail_bound: scale * images.tail_bound })
}

/// Base weights `c_j` (`j = 1..=N/2`) of the periodized operator for an
/// `x`-independent kernel: `L[u](x_i) = Σ_j c_j (2u_i - u_{i+j} - u_{i-j})`.
pub(crate) fn torus_base_weights(order: f64, n: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let half = n / 2;
    let mut c = SymmetricRule::new(order, half).weights(h, half);
    let s = 1.0 + order;
    for j in 1..=half {
        let y = j as f64 * h;
        let tau = if j == half { 0.5 } else { 1.0 };
        c[j - 1] += h * tau * image_sum(s, y, 64).value;
    }
    c
}

/// Product-integration weights for `∫_0^{J h} q(y) y^{1-α} dy` with `q`
/// piecewise linear on the nodes `y_j = j h` (`j ≥ 1`).
///
/// On `[0, h]`, `q` is continued as the even quadratic through `q(h)` and
/// `q(2h)`. Its `q(2h)` weight is negative, so near `α = 2` the continuation
/// is blended back towards `q(0) := q(h)` as far as needed to keep every
/// weight positive.
pub(crate) struct SymmetricRule {
    order: f64,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl SymmetricRule {
    /// Interval weights for up to `cells` intervals.
    pub(crate) fn new(order: f64, cells: usize) -> Self {
        let p = 1.0 - order;
        let rule = gauss8();
        let mut left = vec![0.0; cells];
        let mut right = vec![0.0; cells];
        if cells > 0 {
            left[0] = 1.0 / ((2.0 - order) * (3.0 - order));
            right[0] = 1.0 / (3.0 - order);
        }
        for j in 1..cells {
            let jf = j as f64;
            left[j] = rule.integrate(0.0, 1.0, |s| (1.0 - s) * (jf + s).powf(p));
            right[j] = rule.integrate(0.0, 1.0, |s| s * (jf + s).powf(p));
        }
        Self { order, left, right }
    }

    /// `c_j`, `j = 1..=count` (index `j-1`), divided by `y_j²` so that
    /// `∫_0^{count·h} D(y) y^{-1-α} dy ≈ Σ_j c_j D(y_j)`.
    pub(crate) fn weights(&self, h: f64, count: usize) -> Vec<f64> {
        assert!(count >= 1 && count <= self.left.len());
        let a = self.order;
        let mut w = vec![0.0; count + 1];
        for j in 0..count {
            w[j] += self.left[j];
            w[j + 1] += self.right[j];
        }
        let w0 = w[0];
        w[1] += w0;
        if count >= 2 {
            let shift = (1.0 / (2.0 - a) - 1.0 / (4.0 - a)) / 3.0;
            let theta = (0.5 * w[2] / shift).min(1.0);
            w[1] += theta * shift;
            w[2] -= theta * shift;
        }
        let scale = h.powf(2.0 - a);
        (1..=count)
            .map(|j| {
                let y = j as f64 * h;
                scale * w[j] / (y * y)
            })
            .collect()
    }
}

/// Exact symbol of the unmodulated operator on `cos(2πm·)`:
/// `(2πm)^α · π / (Γ(1+α) sin(πα/2))`.
pub fn fourier_symbol(order: f64, m: f64) -> f64 {
    let c = PI / (statrs::function::gamma::gamma(1.0 + order) * (PI * order / 2.0).sin());
    (2.0 * PI * m).powf(order) * c
}

fn discrete_symbol(weights: &[f64], n: usize, m: usize) -> f64 {
    weights
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let j = (k + 1) as f64;
            2.0 * c * (1.0 - (2.0 * PI * m as f64 * j / n as f64).cos())
        })
        .sum()
}

const RESOLUTION_TOL: f64 = 1e-2;

pub fn assemble_torus_operator(spec: &KernelSpec, grid: &TorusGrid) -> Result<OperatorMatrix, DiscretizeError> {
    assemble_torus_operator_with(spec, grid, Execution::default())
}

pub fn assemble_torus_operator_with(
    spec: &KernelSpec,
    grid: &TorusGrid,
    exec: Execution,
) -> Result<OperatorMatrix, DiscretizeError> {
    if spec.dim() != 1 {
        return Err(DiscretizeError::UnsupportedDimension(spec.dim()));
    }
    let n = grid.len();
    let order = spec.order();
    let base = torus_base_weights(order, n);

    let m = (n / 64).max(1);
    let exact = fourier_symbol(order, m as f64);
    let estimate = (discrete_symbol(&base, n, m) - exact).abs() / exact;
    if estimate > RESOLUTION_TOL {
        let factor = (estimate / RESOLUTION_TOL).sqrt();
        let suggested = ((n as f64 * factor).ceil() as usize).div_ceil(2) * 2;
        return Err(DiscretizeError::Resolution { n, order, estimate, tolerance: RESOLUTION_TOL, suggested });
    }

    let row_scale: Vec<f64> = grid.nodes().iter().map(|&x| spec.scale_1d(x)).collect();
    let half = n / 2;
    let diag: f64 = 2.0 * base.iter().sum::<f64>();
    let mut data = vec![0.0; n * n];
    exec.fill_rows(&mut data, n, |i, row| {
        let s = row_scale[i];
        for (k, c) in base.iter().enumerate() {
            let j = k + 1;
            let right = (i + j) % n;
            let left = (i + n - j) % n;
            row[right] -= s * c;
            if j != half {
                row[left] -= s * c;
            } else {
                row[right] -= s * c;
            }
        }
        row[i] = s * diag;
    });
    Ok(OperatorMatrix::from_rows(Arc::new(Grid::Torus(grid.clone())), data, row_scale, true))
}

/// `⟨L u, u⟩` with the uniform grid inner product.
pub fn quadratic_form(op: &OperatorMatrix, u: &Field) -> Result<f64, DiscretizeError> {
    let lu = op.apply(u)?;
    Ok(lu.inner(u))
}
