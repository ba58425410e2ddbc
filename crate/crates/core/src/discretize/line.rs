//! Operator on the truncated line.
//!
//! Row `i` splits `∫ (u(x_i) - u(z)) K(x_i, z - x_i) dz` into
//!
//! * a near zone `|z - x_i| < r_i` in symmetrized form: inside the uniform
//!   core `r_i` reaches the core edge and the same product rule as on the
//!   torus is used; elsewhere `r_i` is the smaller neighbour gap and
//!   `D(y) ≈ -u''(x_i) y²` with a three-point `u''`;
//! * a far zone, integrated exactly against the piecewise-linear
//!   interpolant of `u` (Gauss–Legendre on elements that are short compared
//!   with their distance to `x_i`);
//! * beyond `±R_max`, ghost elements carrying the tail extension of
//!   `u(±R_max)`, then an analytic remainder.
//!
//! All off-diagonal weights are nonpositive, and a constant field with
//! constant extension is annihilated up to rounding.

use super::torus::SymmetricRule;
use super::{DiscretizeError, Field, Grid, LineGrid, OperatorMatrix};
use crate::exec::Execution;
use crate::model::KernelSpec;
use crate::quadrature::{gauss3, gauss5, gauss8, GaussRule};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// How `u` is continued beyond `±R_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TailModel {
    /// `u ≡ 0` outside the window.
    Zero,
    /// `u(±R)·(R/|x|)^{d+α}`.
    #[default]
    Algebraic,
    /// `u(±R)`; diagnostic mode in which constants are annihilated exactly.
    Constant,
}

const GHOST_COARSE_RATIO: f64 = 1.25;
const GHOST_REACH: f64 = 1e6;

/// Precomputed geometry shared by all rows.
struct LineStencil {
    order: f64,
    /// Extended coordinates: left ghosts, grid nodes, right ghosts.
    z: Vec<f64>,
    /// `(column, factor)` mapping each extended node to a grid value.
    map: Vec<(usize, f64)>,
    offset: usize,
    n: usize,
    core: (usize, usize),
    core_h: f64,
    symmetric: SymmetricRule,
    tail_coef_scale: f64,
    tail: TailModel,
    r_max: f64,
}

impl LineStencil {
    fn new(order: f64, grid: &LineGrid, tail: TailModel) -> Self {
        let x = grid.nodes();
        let n = x.len();
        let r = grid.r_max();
        let beta = 1.0 + order;
        let ratio = grid.outer_ratio();
        let factor = |zz: f64| match tail {
            TailModel::Zero => 0.0,
            TailModel::Algebraic => (r / zz).powf(beta),
            TailModel::Constant => 1.0,
        };
        // ghost gaps keep growing by the grid ratio until they reach a
        // quarter of the radius, then the radius grows by a fixed factor
        let mut ghosts = Vec::new();
        let mut zz = r;
        let mut gap = r - x[n - 2];
        while zz < r * GHOST_REACH {
            if gap < (GHOST_COARSE_RATIO - 1.0) * zz {
                gap *= ratio;
                zz += gap;
            } else {
                zz *= GHOST_COARSE_RATIO;
            }
            ghosts.push(zz.min(r * GHOST_REACH));
        }
        let g = ghosts.len();
        let mut z = Vec::with_capacity(n + 2 * g);
        let mut map = Vec::with_capacity(n + 2 * g);
        for &gz in ghosts.iter().rev() {
            z.push(-gz);
            map.push((0, factor(gz)));
        }
        for (i, &xi) in x.iter().enumerate() {
            z.push(xi);
            map.push((i, 1.0));
        }
        for &gz in &ghosts {
            z.push(gz);
            map.push((n - 1, factor(gz)));
        }

        let (c_lo, c_hi) = grid.core_range();
        let symmetric = SymmetricRule::new(order, (c_hi - c_lo) / 2);
        Self {
            order,
            z,
            map,
            offset: g,
            n,
            core: (c_lo, c_hi),
            core_h: grid.core_spacing(),
            symmetric,
            tail_coef_scale: r.powf(beta),
            tail,
            r_max: r,
        }
    }

    /// Hat weights at `za`, `zb` over the piece `[a, b]` of the element
    /// `[za, zb]`, seen from `xi` outside `(a, b)`, together with the moment
    /// `∫ (z - za)(z - zb) |z - xi|^{-1-α} dz` used by the curvature
    /// correction.
    fn piece(&self, xi: f64, a: f64, b: f64, za: f64, zb: f64) -> (f64, f64, f64) {
        let h = zb - za;
        let sigma = if a >= xi { 1.0 } else { -1.0 };
        // hats as affine functions of the distance w
        let (p, q) = if sigma > 0.0 { (a - xi, b - xi) } else { (xi - b, xi - a) };
        let ha = ((zb - xi) / h, -sigma / h);
        let hb = ((xi - za) / h, sigma / h);
        if b <= a {
            return (0.0, 0.0, 0.0);
        }
        let (ca, cb) = (xi - za, xi - zb);
        let s = 1.0 + self.order;
        // lengths from b - a directly: q - p cancels when |x_i| dwarfs the element
        let rel = (b - a) / p;
        let rule: Option<&GaussRule> = if rel <= 0.05 {
            Some(gauss3())
        } else if rel <= 0.3 {
            Some(gauss5())
        } else if rel <= 1.0 {
            Some(gauss8())
        } else {
            None
        };
        match rule {
            Some(rule) => {
                let mid = 0.5 * (a + b);
                let half = 0.5 * (b - a);
                let (mut wa, mut wb, mut m2) = (0.0, 0.0, 0.0);
                for (t, g) in rule.nodes.iter().zip(&rule.weights) {
                    let z = mid + half * t;
                    let k = g * (sigma * (z - xi)).powf(-s);
                    wa += k * (zb - z) / h;
                    wb += k * (z - za) / h;
                    m2 += k * (z - za) * (z - zb);
                }
                (wa * half, wb * half, m2 * half)
            }
            None => {
                let al = self.order;
                let i0 = (p.powf(-al) - q.powf(-al)) / al;
                let i1 = if (al - 1.0).abs() < 1e-12 {
                    (q / p).ln()
                } else {
                    (q.powf(1.0 - al) - p.powf(1.0 - al)) / (1.0 - al)
                };
                let i2 = (q.powf(2.0 - al) - p.powf(2.0 - al)) / (2.0 - al);
                let m2 = i2 + sigma * (ca + cb) * i1 + ca * cb * i0;
                (ha.0 * i0 + ha.1 * i1, hb.0 * i0 + hb.1 * i1, m2.min(0.0))
            }
        }
    }

    /// Subtract the interpolation error `½ u''·(z - za)(z - zb)` of element
    /// `k`, with `u''` from the three-point difference at the element end
    /// farther from `x_i`.
    fn curvature(&self, k: usize, right: bool, m2: f64, row: &mut [f64]) {
        let last = self.z.len() - 1;
        let mut c = if right { k + 1 } else { k };
        if c == 0 || c == last {
            c = if c == k { k + 1 } else { k };
        }
        if c == 0 || c == last || m2 == 0.0 {
            return;
        }
        let z = &self.z;
        let gm = z[c] - z[c - 1];
        let gp = z[c + 1] - z[c];
        let coef = -m2 / (gm + gp);
        for (ext, w) in [(c + 1, coef / gp), (c - 1, coef / gm), (c, -coef * (1.0 / gp + 1.0 / gm))] {
            let (col, f) = self.map[ext];
            row[col] += w * f;
        }
    }

    /// Fill `row` (length `n`) with the unscaled weights of grid node `i`.
    fn fill(&self, i: usize, row: &mut [f64]) {
        row.iter_mut().for_each(|v| *v = 0.0);
        let z = &self.z;
        let e = i + self.offset;
        let xi = z[e];
        let mut diag = 0.0;
        let add = |ext: usize, w: f64, row: &mut [f64], diag: &mut f64| {
            let (col, f) = self.map[ext];
            row[col] -= w * f;
            *diag += w;
        };

        // near zone: [left_end, right_end] in extended indices, plus radius
        let (c_lo, c_hi) = self.core;
        let m = if i >= c_lo && i <= c_hi { (i - c_lo).min(c_hi - i) } else { 0 };
        let (far_left, far_right, left_cut, right_cut);
        if m >= 1 {
            for (j, c) in self.symmetric.weights(self.core_h, m).into_iter().enumerate() {
                add(e + j + 1, c, row, &mut diag);
                add(e - j - 1, c, row, &mut diag);
            }
            far_left = e - m;
            far_right = e + m;
            left_cut = None;
            right_cut = None;
        } else {
            let gm = xi - z[e - 1];
            let gp = z[e + 1] - xi;
            let r = gm.min(gp);
            let kappa = r.powf(2.0 - self.order) / (2.0 - self.order) * 2.0 / (gm + gp);
            add(e + 1, kappa / gp, row, &mut diag);
            add(e - 1, kappa / gm, row, &mut diag);
            far_left = e - 1;
            far_right = e + 1;
            left_cut = if gm > gp { Some(xi - r) } else { None };
            right_cut = if gp > gm { Some(xi + r) } else { None };
        }

        // partial elements adjacent to x_i
        if let Some(cut) = left_cut {
            let (wa, wb, m2) = self.piece(xi, z[e - 1], cut, z[e - 1], z[e]);
            add(e - 1, wa, row, &mut diag);
            add(e, wb, row, &mut diag);
            self.curvature(e - 1, false, m2, row);
        }
        if let Some(cut) = right_cut {
            let (wa, wb, m2) = self.piece(xi, cut, z[e + 1], z[e], z[e + 1]);
            add(e, wa, row, &mut diag);
            add(e + 1, wb, row, &mut diag);
            self.curvature(e, true, m2, row);
        }
        // full far elements, nearest first
        for k in (0..far_left).rev() {
            let (wa, wb, m2) = self.piece(xi, z[k], z[k + 1], z[k], z[k + 1]);
            add(k, wa, row, &mut diag);
            add(k + 1, wb, row, &mut diag);
            self.curvature(k, false, m2, row);
        }
        for k in far_right..z.len() - 1 {
            let (wa, wb, m2) = self.piece(xi, z[k], z[k + 1], z[k], z[k + 1]);
            add(k, wa, row, &mut diag);
            add(k + 1, wb, row, &mut diag);
            self.curvature(k, true, m2, row);
        }

        // analytic remainder beyond the ghost layer
        let zr = *z.last().unwrap();
        let zl = z[0];
        let al = self.order;
        for (dist, col, zend) in [(zr - xi, self.n - 1, zr), (xi - zl, 0, -zl)] {
            let i0 = dist.powf(-al) / al;
            diag += i0;
            let coef = match self.tail {
                TailModel::Zero => 0.0,
                TailModel::Constant => i0,
                TailModel::Algebraic => self.tail_coef_scale * zend.powf(-(1.0 + al) - al) / (1.0 + 2.0 * al),
            };
            row[col] -= coef;
        }
        row[i] += diag;
        debug_assert!(self.r_max > 0.0);
    }
}

fn check(spec: &KernelSpec) -> Result<(), DiscretizeError> {
    if spec.dim() != 1 {
        return Err(DiscretizeError::UnsupportedDimension(spec.dim()));
    }
    Ok(())
}

pub fn assemble_line_operator(
    spec: &KernelSpec,
    grid: &LineGrid,
    tail: TailModel,
) -> Result<OperatorMatrix, DiscretizeError> {
    assemble_line_operator_with(spec, grid, tail, Execution::default())
}

pub fn assemble_line_operator_with(
    spec: &KernelSpec,
    grid: &LineGrid,
    tail: TailModel,
    exec: Execution,
) -> Result<OperatorMatrix, DiscretizeError> {
    check(spec)?;
    let stencil = LineStencil::new(spec.order(), grid, tail);
    let n = grid.len();
    let row_scale: Vec<f64> = grid.nodes().iter().map(|&x| spec.scale_1d(x)).collect();
    let mut data = vec![0.0; n * n];
    exec.fill_rows(&mut data, n, |i, row| {
        stencil.fill(i, row);
        let s = row_scale[i];
        if s != 1.0 {
            row.iter_mut().for_each(|v| *v *= s);
        }
    });
    Ok(OperatorMatrix::from_rows(Arc::new(Grid::Line(grid.clone())), data, row_scale, tail == TailModel::Constant))
}

pub fn apply_line_operator(
    spec: &KernelSpec,
    grid: &LineGrid,
    u: &Field,
    tail: TailModel,
) -> Result<Field, DiscretizeError> {
    apply_line_operator_with(spec, grid, u, tail, Execution::default())
}

/// `L[u]` at every node without storing the matrix.
pub fn apply_line_operator_with(
    spec: &KernelSpec,
    grid: &LineGrid,
    u: &Field,
    tail: TailModel,
    exec: Execution,
) -> Result<Field, DiscretizeError> {
    check(spec)?;
    if u.len() != grid.len() {
        return Err(DiscretizeError::LengthMismatch { expected: grid.len(), got: u.len() });
    }
    if u.grid().as_line() != Some(grid) {
        return Err(DiscretizeError::GridMismatch);
    }
    if let Some(i) = u.values().iter().position(|v| !v.is_finite()) {
        return Err(DiscretizeError::NonFinite(i));
    }
    let stencil = LineStencil::new(spec.order(), grid, tail);
    let n = grid.len();
    let values = exec.map(n, |i| {
        let mut row = vec![0.0; n];
        stencil.fill(i, &mut row);
        spec.scale_1d(grid.nodes()[i]) * super::operator::dot(&row, u.values())
    });
    Ok(Field::new(u.grid().clone(), values)?.with_time(u.time()))
}
