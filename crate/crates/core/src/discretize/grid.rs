use super::DiscretizeError;
use serde::{Deserialize, Serialize};

/// Uniform grid on the unit torus `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    n: usize,
    #[serde(skip)]
    nodes: Vec<f64>,
}

impl TorusGrid {
    pub fn new(n: usize) -> Result<Self, DiscretizeError> {
        if n < 16 || !n.is_multiple_of(2) {
            return Err(DiscretizeError::TorusTooSmall(n));
        }
        let nodes = (0..n).map(|i| i as f64 / n as f64).collect();
        Ok(Self { n, nodes })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineGridParams {
    /// Half width `x_c` of the uniform core `[-x_c, x_c]`.
    pub core_half_width: f64,
    /// Number of uniform cells on each side of the origin.
    pub core_cells: usize,
    /// Number of geometrically spaced nodes on each side beyond the core.
    pub outer_nodes: usize,
    /// Truncation radius.
    pub r_max: f64,
}

/// Symmetric node set on `[-R_max, R_max]`: uniform on the core, geometric
/// beyond it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineGrid {
    params: LineGridParams,
    nodes: Vec<f64>,
}

impl LineGrid {
    /// Outer gaps grow geometrically from the core spacing `h`:
    /// `x_{c+k} - x_{c+k-1} = h ρ^k`, with `ρ` chosen so the last node lands on
    /// `R_max`.
    pub fn new(params: LineGridParams) -> Result<Self, DiscretizeError> {
        let LineGridParams { core_half_width: xc, core_cells: j, outer_nodes: k, r_max } = params;
        if !(xc > 0.0 && xc.is_finite()) {
            return Err(DiscretizeError::InvalidLineGrid(format!("core half width must be positive, got {xc}")));
        }
        if j < 2 {
            return Err(DiscretizeError::InvalidLineGrid(format!("need at least 2 core cells per side, got {j}")));
        }
        if k < 1 {
            return Err(DiscretizeError::InvalidLineGrid("need at least 1 outer node per side".into()));
        }
        if !(r_max > xc && r_max.is_finite()) {
            return Err(DiscretizeError::InvalidLineGrid(format!(
                "R_max = {r_max} must exceed the core half width {xc}"
            )));
        }
        let h = xc / j as f64;
        if (k as f64) * h >= r_max - xc {
            return Err(DiscretizeError::InvalidLineGrid(format!(
                "{k} outer nodes at core spacing {h} already overshoot R_max = {r_max}"
            )));
        }
        let ratio = outer_gap_ratio(h, k, r_max - xc);
        let mut right = Vec::with_capacity(j + k + 1);
        for i in 0..=j {
            right.push(i as f64 * h);
        }
        let mut gap = h;
        for i in 1..=k {
            gap *= ratio;
            let next = if i == k { r_max } else { right.last().unwrap() + gap };
            right.push(next);
        }
        let mut nodes: Vec<f64> = right.iter().skip(1).rev().map(|x| -x).collect();
        nodes.extend_from_slice(&right);
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DiscretizeError::InvalidLineGrid("nodes are not strictly increasing".into()));
        }
        Ok(Self { params, nodes })
    }

    pub fn params(&self) -> LineGridParams {
        self.params
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        self.params.r_max
    }

    pub fn core_spacing(&self) -> f64 {
        self.params.core_half_width / self.params.core_cells as f64
    }

    /// Ratio `ρ` between consecutive outer gaps.
    pub fn outer_ratio(&self) -> f64 {
        let p = self.params;
        outer_gap_ratio(self.core_spacing(), p.outer_nodes, p.r_max - p.core_half_width)
    }

    /// Index range of the uniform core (inclusive).
    pub fn core_range(&self) -> (usize, usize) {
        let k = self.params.outer_nodes;
        (k, k + 2 * self.params.core_cells)
    }

    pub fn center_index(&self) -> usize {
        self.params.outer_nodes + self.params.core_cells
    }

    /// Whether `R_max` leaves room for a front spreading like
    /// `exp(|λ1| t / (d+α))` up to `horizon`, with the given safety margin.
    pub fn covers_horizon(&self, lambda1: f64, horizon: f64, tail_exponent: f64, margin: f64) -> bool {
        self.params.r_max >= (lambda1.abs() * horizon / tail_exponent).exp() * margin
    }
}

/// `ρ > 1` with `h Σ_{k=1..K} ρ^k = span`, by bisection on `log ρ`.
fn outer_gap_ratio(h: f64, k: usize, span: f64) -> f64 {
    let total = |r: f64| {
        let mut g = h;
        let mut s = 0.0;
        for _ in 0..k {
            g *= r;
            s += g;
            if s > span {
                break;
            }
        }
        s
    };
    let (mut lo, mut hi) = (0.0f64, (span / h).ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid.exp()) < span {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Either kind of grid; fields and operators hold one behind an `Arc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Grid {
    Torus(TorusGrid),
    Line(LineGrid),
}

impl Grid {
    pub fn len(&self) -> usize {
        match self {
            Grid::Torus(g) => g.len(),
            Grid::Line(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes(&self) -> &[f64] {
        match self {
            Grid::Torus(g) => g.nodes(),
            Grid::Line(g) => g.nodes(),
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, Grid::Torus(_))
    }

    pub fn as_line(&self) -> Option<&LineGrid> {
        match self {
            Grid::Line(g) => Some(g),
            Grid::Torus(_) => None,
        }
    }

    pub fn as_torus(&self) -> Option<&TorusGrid> {
        match self {
            Grid::Torus(g) => Some(g),
            Grid::Line(_) => None,
        }
    }

    /// Trapezoid weights (torus: uniform `h`).
    pub fn quadrature_weights(&self) -> Vec<f64> {
        match self {
            Grid::Torus(g) => vec![g.spacing(); g.len()],
            Grid::Line(g) => {
                let x = g.nodes();
                let n = x.len();
                let mut w = vec![0.0; n];
                for i in 0..n - 1 {
                    let half = 0.5 * (x[i + 1] - x[i]);
                    w[i] += half;
                    w[i + 1] += half;
                }
                w
            }
        }
    }

    /// Serializable description (node coordinates omitted).
    pub fn descriptor(&self) -> serde_json::Value {
        match self {
            Grid::Torus(g) => serde_json::json!({"kind": "torus", "n": g.len(), "spacing": g.spacing()}),
            Grid::Line(g) => serde_json::json!({
                "kind": "line",
                "n": g.len(),
                "core_half_width": g.params.core_half_width,
                "core_cells": g.params.core_cells,
                "outer_nodes": g.params.outer_nodes,
                "r_max": g.params.r_max,
                "outer_ratio": g.outer_ratio(),
            }),
        }
    }
}
