//! Explicit sub- and supersolution barriers and the decay constant behind
//! them.
//!
//! With `h_λ(x,t) = 1/(1+e^{-λt}|x|^{d+α})`, the constant `D̂` bounds
//! `|L h_λ| ≤ D̂ e^{-αλt/(d+α)} h_λ`. From it
//!
//! ```text
//! W(x,t) = C₀ / (1 + e^{-B₀t}|x|^{d+α})
//! w(x,t) = c₀ e^{-A₀t} / (1 + e^{-|λ1|t}|x|^{d+α})
//! ```
//!
//! are a super- and a subsolution once `B₀ > D̂ + μ₊`, `C₀ ≥ max(1, B₀/m̄)`,
//! `A₀ > |λ1| + D̂ - μ₋` and `c₀ ≤ |λ1|/M̄`.

use crate::discretize::{
    assemble_line_operator_with, DiscretizeError, Field, Grid, LineGrid, OperatorMatrix, TailModel,
};
use crate::evolve::Trajectory;
use crate::exec::Execution;
use crate::model::{KernelSpec, ProblemSpec};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error("rate λ must be positive, got {0}")]
    InvalidRate(f64),
    #[error("sample times must be nonnegative and nonempty")]
    InvalidTimes,
    #[error("barriers need λ1 < 0, got {0}")]
    NotInvading(f64),
    #[error("decay constant must be positive and finite, got {0}")]
    InvalidDecay(f64),
    #[error("expected an operator on a line grid")]
    NotLine,
    #[error("no admissible c₀ above 1e-8: the initial envelope is too small on this grid")]
    InitialData,
}

/// Strict inequalities in the recipe are met with this margin.
pub const MARGIN: f64 = 0.1;
/// Absolute slack of the sandwich check.
pub const SANDWICH_TOL: f64 = 1e-8;
/// Relative slack of the residual sign checks.
pub const RESIDUAL_TOL: f64 = 1e-6;

fn profile(lambda: f64, p: f64, x: f64, t: f64) -> f64 {
    1.0 / (1.0 + (-lambda * t).exp() * x.abs().powf(p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccEstimate {
    pub lambda: f64,
    pub times: Vec<f64>,
    /// `max_x |L h|·(1+e^{-λt}|x|^{d+α})` per time.
    pub per_time: Vec<f64>,
    /// `max_t per_time·e^{αλt/(d+α)}`.
    pub d_hat: f64,
    /// Least-squares slope of `log per_time` against `t`.
    pub slope: f64,
    /// Scaled maxima spread by more than 2×: suspect the truncation.
    pub truncation_suspect: bool,
}

impl AccEstimate {
    pub fn predicted_slope(&self, order: f64, tail_exponent: f64) -> f64 {
        -order * self.lambda / tail_exponent
    }
}

pub fn acc_constant(
    kernel: &KernelSpec,
    lambda: f64,
    grid: &LineGrid,
    times: &[f64],
) -> Result<AccEstimate, BoundsError> {
    let op = assemble_line_operator_with(kernel, grid, TailModel::Algebraic, Execution::default())?;
    acc_constant_on(&op, kernel, lambda, times)
}

/// As [`acc_constant`] with a line operator already assembled for `kernel`.
pub fn acc_constant_on(
    op: &OperatorMatrix,
    kernel: &KernelSpec,
    lambda: f64,
    times: &[f64],
) -> Result<AccEstimate, BoundsError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(BoundsError::InvalidRate(lambda));
    }
    if times.is_empty() || times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(BoundsError::InvalidTimes);
    }
    let p = kernel.tail_exponent();
    let alpha = kernel.order();
    let g = line_grid(op)?;
    let mut per_time = Vec::with_capacity(times.len());
    for &t in times {
        let h = Field::from_fn(g.clone(), |x| profile(lambda, p, x, t));
        let lh = op.apply(&h)?;
        let m = lh.values().iter().zip(h.values()).map(|(l, h)| (l / h).abs()).fold(0.0, f64::max);
        per_time.push(m);
    }
    let scaled: Vec<f64> = times.iter().zip(&per_time).map(|(t, m)| m * (alpha * lambda * t / p).exp()).collect();
    let d_hat = scaled.iter().copied().fold(0.0, f64::max);
    let lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let truncation_suspect = d_hat > 2.0 * lo;
    if truncation_suspect {
        log::warn!("scaled decay maxima range over [{lo:e}, {d_hat:e}]; the line truncation may be too tight");
    }
    Ok(AccEstimate {
        lambda,
        times: times.to_vec(),
        per_time: per_time.clone(),
        d_hat,
        slope: log_slope(times, &per_time),
        truncation_suspect,
    })
}

fn line_grid(op: &OperatorMatrix) -> Result<Arc<Grid>, BoundsError> {
    match **op.grid() {
        Grid::Line(_) => Ok(op.grid().clone()),
        Grid::Torus(_) => Err(BoundsError::NotLine),
    }
}

fn log_slope(t: &[f64], v: &[f64]) -> f64 {
    if t.len() < 2 {
        return f64::NAN;
    }
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let ly: Vec<f64> = v.iter().map(|v| v.ln()).collect();
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = t.iter().zip(&ly).map(|(t, y)| (t - mt) * (y - my)).sum();
    let den: f64 = t.iter().map(|t| (t - mt).powi(2)).sum();
    num / den
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSet {
    pub d_hat: f64,
    pub a0: f64,
    pub b0: f64,
    pub c0: f64,
    pub big_c0: f64,
    pub lambda1: f64,
    pub tail_exponent: f64,
    /// Dyadic factor applied to `max(1, B₀/m̄)` to dominate `u₀`.
    pub kappa: f64,
}

impl BarrierSet {
    pub fn upper(&self, x: f64, t: f64) -> f64 {
        self.big_c0 * profile(self.b0, self.tail_exponent, x, t)
    }

    pub fn lower(&self, x: f64, t: f64) -> f64 {
        self.c0 * (-self.a0 * t).exp() * profile(self.lambda1.abs(), self.tail_exponent, x, t)
    }

    /// `∂_t W = B₀ W (1 - W/C₀)`.
    pub fn upper_dt(&self, x: f64, t: f64) -> f64 {
        let h = profile(self.b0, self.tail_exponent, x, t);
        self.b0 * self.big_c0 * h * (1.0 - h)
    }

    /// `∂_t w = w (|λ1|(1 - h) - A₀)`.
    pub fn lower_dt(&self, x: f64, t: f64) -> f64 {
        let h = profile(self.lambda1.abs(), self.tail_exponent, x, t);
        self.lower(x, t) * (self.lambda1.abs() * (1.0 - h) - self.a0)
    }

    pub fn with_a0(mut self, a0: f64) -> Self {
        self.a0 = a0;
        self
    }

    pub fn with_b0(mut self, b0: f64) -> Self {
        self.b0 = b0;
        self
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "D_hat": self.d_hat,
            "A0": self.a0,
            "B0": self.b0,
            "c0": self.c0,
            "C0": self.big_c0,
            "lambda1": self.lambda1,
            "kappa": self.kappa,
        })
    }
}

/// Recipe constants; admissibility at `t = 0` is enforced on `nodes`.
pub fn barrier_constants(
    spec: &ProblemSpec,
    d_hat: f64,
    lambda1: f64,
    nodes: &[f64],
) -> Result<BarrierSet, BoundsError> {
    if !(lambda1 < 0.0) {
        return Err(BoundsError::NotInvading(lambda1));
    }
    if !(d_hat > 0.0 && d_hat.is_finite()) {
        return Err(BoundsError::InvalidDecay(d_hat));
    }
    let r = &spec.reaction;
    let p = spec.kernel.tail_exponent();
    let l1 = lambda1.abs();
    let b0 = d_hat + r.mu_plus() + MARGIN;
    let a0 = l1 + d_hat - r.mu_minus() + MARGIN;
    // u₀ (1+|x|^p) over the nodes
    let ratios: Vec<f64> = nodes.iter().map(|&x| spec.initial.eval(&[x]) * (1.0 + x.abs().powf(p))).collect();
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let base = 1f64.max(b0 / r.m_lower());
    let mut kappa = 1.0;
    while base * kappa <= hi {
        kappa *= 2.0;
    }
    let mut dyadic = 1.0;
    while dyadic >= lo {
        dyadic *= 0.5;
        if dyadic < 1e-8 {
            return Err(BoundsError::InitialData);
        }
    }
    let c0 = (l1 / (2.0 * r.m_upper())).min(dyadic);
    Ok(BarrierSet { d_hat, a0, b0, c0, big_c0: base * kappa, lambda1, tail_exponent: p, kappa })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub t: f64,
    pub x: f64,
    pub u: f64,
    pub barrier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotViolations {
    pub t: f64,
    pub lower: usize,
    pub upper: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub snapshots: Vec<SnapshotViolations>,
    pub lower_total: usize,
    pub upper_total: usize,
    /// Largest `w - u` and `u - W` seen, with where.
    pub worst_lower: Option<Witness>,
    pub worst_upper: Option<Witness>,
}

impl SandwichReport {
    pub fn violations(&self) -> usize {
        self.lower_total + self.upper_total
    }
}

/// Nodes with `u < w - 1e-8` or `u > W + 1e-8`, per snapshot.
pub fn sandwich_check(traj: &Trajectory, b: &BarrierSet) -> SandwichReport {
    let mut snapshots = Vec::with_capacity(traj.snapshots.len());
    let (mut wl, mut wu): (Option<(f64, Witness)>, Option<(f64, Witness)>) = (None, None);
    for s in &traj.snapshots {
        let t = s.time();
        let mut row = SnapshotViolations { t, lower: 0, upper: 0 };
        for (&x, &u) in s.nodes().iter().zip(s.values()) {
            let (lo, hi) = (b.lower(x, t), b.upper(x, t));
            if u < lo - SANDWICH_TOL {
                row.lower += 1;
            }
            if u > hi + SANDWICH_TOL {
                row.upper += 1;
            }
            if wl.as_ref().is_none_or(|(g, _)| lo - u > *g) {
                wl = Some((lo - u, Witness { t, x, u, barrier: lo }));
            }
            if wu.as_ref().is_none_or(|(g, _)| u - hi > *g) {
                wu = Some((u - hi, Witness { t, x, u, barrier: hi }));
            }
        }
        snapshots.push(row);
    }
    SandwichReport {
        lower_total: snapshots.iter().map(|s| s.lower).sum(),
        upper_total: snapshots.iter().map(|s| s.upper).sum(),
        snapshots,
        worst_lower: wl.map(|w| w.1),
        worst_upper: wu.map(|w| w.1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub t: f64,
    pub x: f64,
    /// `residual / scale`.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Smallest relative `W_t + L[W] - f(·,W)`; must be `≥ -1e-6`.
    pub super_min: ResidualPoint,
    /// Largest relative `w_t + L[w] - f(·,w)`; must be `≤ 1e-6`.
    pub sub_max: ResidualPoint,
    pub super_violations: usize,
    pub sub_violations: usize,
    pub samples: usize,
    pub note: Option<String>,
}

impl ResidualReport {
    pub fn passed(&self) -> bool {
        self.super_violations == 0 && self.sub_violations == 0
    }
}

/// Residual signs at `x_samples` nodes (see [`sample_nodes`]) at each of
/// `times`. Each residual is divided by the largest of its three terms.
pub fn barrier_residuals(
    b: &BarrierSet,
    spec: &ProblemSpec,
    grid: &LineGrid,
    times: &[f64],
    x_samples: usize,
) -> Result<ResidualReport, BoundsError> {
    let op = assemble_line_operator_with(&spec.kernel, grid, TailModel::Algebraic, Execution::default())?;
    barrier_residuals_on(&op, b, spec, times, x_samples)
}

/// As [`barrier_residuals`] with a line operator already assembled for
/// `spec.kernel`.
pub fn barrier_residuals_on(
    op: &OperatorMatrix,
    b: &BarrierSet,
    spec: &ProblemSpec,
    times: &[f64],
    x_samples: usize,
) -> Result<ResidualReport, BoundsError> {
    if times.is_empty() || times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(BoundsError::InvalidTimes);
    }
    let g = line_grid(op)?;
    let grid = g.as_line().expect("checked above");
    let picks = sample_nodes(grid, x_samples);
    let mut super_min = ResidualPoint { t: 0.0, x: 0.0, relative: f64::INFINITY };
    let mut sub_max = ResidualPoint { t: 0.0, x: 0.0, relative: f64::NEG_INFINITY };
    let (mut sup_v, mut sub_v) = (0, 0);
    for &t in times {
        let w_up = Field::from_fn(g.clone(), |x| b.upper(x, t));
        let w_lo = Field::from_fn(g.clone(), |x| b.lower(x, t));
        let l_up = op.apply(&w_up)?;
        let l_lo = op.apply(&w_lo)?;
        for &i in &picks {
            let x = grid.nodes()[i];
            let terms = [b.upper_dt(x, t), l_up.values()[i], -spec.reaction.eval_unchecked(&[x], w_up.values()[i])];
            let rel = relative(&terms);
            if rel < -RESIDUAL_TOL {
                sup_v += 1;
            }
            if rel < super_min.relative {
                super_min = ResidualPoint { t, x, relative: rel };
            }
            let terms = [b.lower_dt(x, t), l_lo.values()[i], -spec.reaction.eval_unchecked(&[x], w_lo.values()[i])];
            let rel = relative(&terms);
            if rel > RESIDUAL_TOL {
                sub_v += 1;
            }
            if rel > sub_max.relative {
                sub_max = ResidualPoint { t, x, relative: rel };
            }
        }
    }
    let note = (sup_v + sub_v > 0).then(|| {
        "barrier residual has the wrong sign; D̂ may be underestimated, re-run acc_constant on a finer grid or larger R_max".to_string()
    });
    Ok(ResidualReport {
        super_min,
        sub_max,
        super_violations: sup_v,
        sub_violations: sub_v,
        samples: picks.len() * times.len(),
        note,
    })
}

/// About half of `count` nodes evenly over the core (centre included), the
/// rest evenly by index over the outer nodes.
pub fn sample_nodes(grid: &LineGrid, count: usize) -> Vec<usize> {
    let n = grid.len();
    if count >= n {
        return (0..n).collect();
    }
    let (lo, hi) = grid.core_range();
    let core = (count / 2) | 1;
    let mut picks: Vec<usize> = (0..core).map(|k| lo + k * (hi - lo) / (core - 1).max(1)).collect();
    let outer = count.saturating_sub(core);
    let left = outer / 2;
    picks.extend((0..left).map(|k| k * lo.saturating_sub(1) / left.max(1)));
    let right = outer - left;
    picks.extend((1..=right).map(|k| hi + k * (n - 1 - hi) / right));
    picks.sort_unstable();
    picks.dedup();
    picks
}

fn relative(terms: &[f64; 3]) -> f64 {
    let sum: f64 = terms.iter().sum();
    let scale = terms.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        0.0
    } else {
        sum / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::LineGridParams;
    use crate::model::{InitialData, ReactionSpec};

    fn spec(alpha: f64) -> ProblemSpec {
        let k = KernelSpec::homogeneous(1, alpha).unwrap();
        let init = InitialData::algebraic(1.0, &k).unwrap();
        ProblemSpec::new(k, ReactionSpec::logistic(1.0, 0.0).unwrap(), init).unwrap()
    }

    fn grid() -> LineGrid {
        LineGrid::new(LineGridParams { core_half_width: 8.0, core_cells: 64, outer_nodes: 160, r_max: 1e8 }).unwrap()
    }

    #[test]
    fn recipe_arithmetic() {
        let s = spec(1.0);
        let b = barrier_constants(&s, 3.0, -1.0, grid().nodes()).unwrap();
        assert!((b.b0 - 4.1).abs() < 1e-14);
        assert!((b.a0 - 3.1).abs() < 1e-14);
        assert!(b.c0 <= 0.5);
        assert!(b.b0 > 1.0 && b.c0 < b.big_c0);
        assert!(b.big_c0 >= 4.1);
        let b2 = barrier_constants(&s, 6.0, -1.0, grid().nodes()).unwrap();
        assert!(b2.b0 - 1.0 >= 2.0 * (b.b0 - 1.0) - 0.1 - 1e-12);
    }

    #[test]
    fn barriers_admissible_and_ordered() {
        let s = spec(1.0);
        let g = grid();
        let b = barrier_constants(&s, 3.5, -1.0, g.nodes()).unwrap();
        for &x in g.nodes() {
            let u0 = s.initial.eval(&[x]);
            assert!(b.lower(x, 0.0) < u0 && u0 < b.upper(x, 0.0));
            for t in [0.5, 2.0, 8.0] {
                assert!(b.lower(x, t) < b.upper(x, t));
            }
        }
    }

    #[test]
    fn barrier_time_derivatives_match_differences() {
        let b = barrier_constants(&spec(1.0), 3.5, -1.0, grid().nodes()).unwrap();
        for (x, t) in [(0.3, 0.2), (5.0, 1.0), (40.0, 2.5)] {
            let e = 1e-6;
            let fu = (b.upper(x, t + e) - b.upper(x, t - e)) / (2.0 * e);
            let fl = (b.lower(x, t + e) - b.lower(x, t - e)) / (2.0 * e);
            assert!((fu - b.upper_dt(x, t)).abs() < 1e-6 * fu.abs().max(1.0));
            assert!((fl - b.lower_dt(x, t)).abs() < 1e-6 * fl.abs().max(1e-3));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = spec(1.0);
        assert!(matches!(barrier_constants(&s, 3.0, 0.5, &[0.0]), Err(BoundsError::NotInvading(_))));
        assert!(matches!(barrier_constants(&s, 0.0, -1.0, &[0.0]), Err(BoundsError::InvalidDecay(_))));
        let k = KernelSpec::homogeneous(1, 1.0).unwrap();
        assert!(matches!(acc_constant(&k, 0.0, &grid(), &[0.0]), Err(BoundsError::InvalidRate(_))));
        assert!(matches!(acc_constant(&k, 1.0, &grid(), &[]), Err(BoundsError::InvalidTimes)));
    }

    #[test]
    fn tiny_initial_data_has_no_lower_barrier() {
        let k = KernelSpec::homogeneous(1, 1.0).unwrap();
        let init = InitialData::algebraic(1e-9, &k).unwrap();
        let s = ProblemSpec::new(k, ReactionSpec::logistic(1.0, 0.0).unwrap(), init).unwrap();
        assert!(matches!(barrier_constants(&s, 3.0, -1.0, grid().nodes()), Err(BoundsError::InitialData)));
    }

    #[test]
    fn sample_nodes_cover_centre_and_both_tails() {
        let g = grid();
        let p = sample_nodes(&g, 64);
        assert!(p.len() >= 60 && p.len() <= 64);
        assert!(p.contains(&g.center_index()));
        assert!(p.contains(&0) && p.contains(&(g.len() - 1)));
        assert!(p.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn undersized_constants_break_residual_signs() {
        let s = spec(1.0);
        let g = grid();
        let k = KernelSpec::homogeneous(1, 1.0).unwrap();
        let acc = acc_constant(&k, 1.0, &g, &[0.0, 1.0, 2.0]).unwrap();
        let b = barrier_constants(&s, acc.d_hat, -1.0, g.nodes()).unwrap();
        let times = [0.0, 0.5, 1.0];
        assert!(barrier_residuals(&b, &s, &g, &times, 64).unwrap().passed());
        let r = barrier_residuals(&b.with_a0(0.5 * b.a0), &s, &g, &times, 64).unwrap();
        assert!(r.sub_violations > 0 && r.super_violations == 0);
        let r = barrier_residuals(&b.with_b0(0.5 * b.b0), &s, &g, &times, 64).unwrap();
        assert!(r.super_violations > 0 && r.sub_violations == 0);
        assert!(r.note.is_some());
    }

    #[test]
    fn decay_constant_is_stable_for_the_cauchy_kernel() {
        let k = KernelSpec::homogeneous(1, 1.0).unwrap();
        let acc = acc_constant(&k, 1.0, &grid(), &[0.0, 1.0, 2.0, 4.0]).unwrap();
        assert!(!acc.truncation_suspect);
        assert!(acc.d_hat >= std::f64::consts::PI * 0.99);
        assert!((acc.slope + 0.5).abs() < 0.075);
    }
}
