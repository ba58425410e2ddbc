//! Front extraction, rate fits and Hopf–Cole rescaling of line trajectories.
//!
//! Everything here is post-processing of an already computed
//! [`Trajectory`]; nothing is re-solved.

use crate::discretize::{io, DiscretizeError, Field, Grid};
use crate::evolve::Trajectory;
use crate::plot::{line_plot, Series};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsymptoticsError {
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error("level {level} must lie in (0, sup u = {sup})")]
    Level { level: f64, sup: f64 },
    #[error("no crossing of level {level} at t = {time}")]
    NoCrossing { level: f64, time: f64 },
    #[error("rescaling window needs {what}")]
    Range { what: String },
    #[error("{have} trace points in the fit window, need at least {need}")]
    TooFewPoints { have: usize, need: usize },
    #[error("fit window must start after T/2 = {half}, got {t1}")]
    EarlyWindow { t1: f64, half: f64 },
    #[error("fit quality r² = {r2:.6} below 0.99 (slope {slope})")]
    PoorFit { r2: f64, slope: f64 },
    #[error("inner region at t = {time} holds {nodes} nodes, need at least 10")]
    EmptyRegion { time: f64, nodes: usize },
    #[error("expected a {0} grid")]
    WrongGrid(&'static str),
}

pub const MIN_FIT_POINTS: usize = 10;
pub const MIN_R2: f64 = 0.99;

/// `min(0, |λ1| t - (d+α) log|x|)`; `0` at `x = 0`.
pub fn limit_profile(x_abs: f64, t: f64, lambda1: f64, tail_exponent: f64) -> f64 {
    if x_abs <= 1.0 {
        return 0.0;
    }
    (lambda1.abs() * t - tail_exponent * x_abs.ln()).min(0.0)
}

/// Outermost `|x|` where `u - h` changes sign.
///
/// The crossing is interpolated linearly in `(log|x|, log u)`, or in
/// `(x, log u)` when the bracket touches the origin.
pub fn level_set_radius(u: &Field, h: f64) -> Result<f64, AsymptoticsError> {
    let sup = u.max();
    if !(h > 0.0 && h < sup) {
        return Err(AsymptoticsError::Level { level: h, sup });
    }
    let x = u.nodes();
    let v = u.values();
    let n = x.len();
    let none = || AsymptoticsError::NoCrossing { level: h, time: u.time() };
    if v[0] >= h || v[n - 1] >= h {
        return Err(none());
    }
    // outermost node at or above h on each side, scanning inward
    let right = (0..n).rev().find(|&i| v[i] >= h).ok_or_else(none)?;
    let left = (0..n).find(|&i| v[i] >= h).ok_or_else(none)?;
    let r_right = crossing(x[right], v[right], x[right + 1], v[right + 1], h);
    let r_left = crossing(x[left], v[left], x[left - 1], v[left - 1], h);
    Ok(r_right.max(r_left))
}

fn crossing(x_in: f64, u_in: f64, x_out: f64, u_out: f64, h: f64) -> f64 {
    let (a, b) = (x_in.abs(), x_out.abs());
    if u_out <= 0.0 {
        // log interpolation undefined; linear in u
        return a + (b - a) * (u_in - h) / (u_in - u_out);
    }
    let s = (h.ln() - u_in.ln()) / (u_out.ln() - u_in.ln());
    if a > 0.0 && x_in * x_out > 0.0 {
        (a.ln() + s * (b.ln() - a.ln())).exp()
    } else {
        a + s * (b - a)
    }
}

/// `(t, r_h(t))` for every snapshot where the level set exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontTrace {
    pub level: f64,
    pub points: Vec<(f64, f64)>,
    /// Snapshot times without a crossing.
    pub missing: Vec<f64>,
    pub interpolation: String,
}

impl FrontTrace {
    pub fn from_trajectory(traj: &Trajectory, level: f64) -> Self {
        let mut points = Vec::new();
        let mut missing = Vec::new();
        for s in &traj.snapshots {
            match level_set_radius(s, level) {
                Ok(r) => points.push((s.time(), r)),
                Err(_) => missing.push(s.time()),
            }
        }
        Self { level, points, missing, interpolation: "log-log".into() }
    }

    /// Whether `r_h` is nondecreasing from `t0` on.
    pub fn monotone_after(&self, t0: f64) -> bool {
        let tail: Vec<f64> = self.points.iter().filter(|p| p.0 >= t0).map(|p| p.1).collect();
        tail.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DiscretizeError> {
        let t: Vec<f64> = self.points.iter().map(|p| p.0).collect();
        let r: Vec<f64> = self.points.iter().map(|p| p.1).collect();
        let lr: Vec<f64> = r.iter().map(|r| r.ln()).collect();
        io::write_columns_csv(path, &["t", "r", "log_r"], &[&t, &r, &lr])
    }
}

/// Least-squares line through `(t, log r_h(t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub points: usize,
}

impl RateFit {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "r2": self.r2,
            "window": [self.window.0, self.window.1],
            "points": self.points,
        })
    }
}

/// Fit over `window`, which must start no earlier than `horizon / 2`.
pub fn fit_front_rate(trace: &FrontTrace, window: (f64, f64), horizon: f64) -> Result<RateFit, AsymptoticsError> {
    let (t1, t2) = window;
    let half = 0.5 * horizon;
    if t1 < half * (1.0 - 1e-12) {
        return Err(AsymptoticsError::EarlyWindow { t1, half });
    }
    let pts: Vec<(f64, f64)> =
        trace.points.iter().filter(|(t, _)| *t >= t1 - 1e-12 && *t <= t2 + 1e-12).map(|&(t, r)| (t, r.ln())).collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(AsymptoticsError::TooFewPoints { have: pts.len(), need: MIN_FIT_POINTS });
    }
    let fit = least_squares(&pts, window);
    if !(fit.r2 >= MIN_R2) {
        return Err(AsymptoticsError::PoorFit { r2: fit.r2, slope: fit.slope });
    }
    Ok(fit)
}

fn least_squares(pts: &[(f64, f64)], window: (f64, f64)) -> RateFit {
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let stderr = if pts.len() > 2 { (sse / (n - 2.0) / stt).sqrt() } else { f64::NAN };
    RateFit { slope, intercept, stderr, r2, window, points: pts.len() }
}

/// `u` at `x` by linear interpolation of `log u` against `log|x|` between
/// bracketing nodes, so power laws are reproduced exactly; against `x` when
/// the bracket touches the origin, and plain linear where a value is not
/// positive. `None` outside the grid.
pub fn sample_field(u: &Field, x: f64) -> Option<f64> {
    let xs = u.nodes();
    let vs = u.values();
    if !(x >= xs[0] && x <= xs[xs.len() - 1]) {
        return None;
    }
    let j = xs.partition_point(|&p| p <= x);
    if j == xs.len() {
        return Some(vs[xs.len() - 1]);
    }
    let i = j - 1;
    let s = if xs[i] * xs[j] > 0.0 {
        (x.abs().ln() - xs[i].abs().ln()) / (xs[j].abs().ln() - xs[i].abs().ln())
    } else {
        (x - xs[i]) / (xs[j] - xs[i])
    };
    Some(blend(vs[i], vs[j], s))
}

fn blend(a: f64, b: f64, s: f64) -> f64 {
    if s == 0.0 {
        a
    } else if a > 0.0 && b > 0.0 {
        (a.ln() + s * (b.ln() - a.ln())).exp()
    } else {
        a + s * (b - a)
    }
}

/// Rectangular `(x, t)` sample of the rescaled problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileWindow {
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
}

impl ProfileWindow {
    /// `nx` points in `[x0, x1]` and `nt` in `[t0, t1]`, endpoints included.
    pub fn uniform(x: (f64, f64), nx: usize, t: (f64, f64), nt: usize) -> Self {
        let lin = |a: f64, b: f64, n: usize| -> Vec<f64> {
            if n == 1 {
                return vec![a];
            }
            (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
        };
        Self { xs: lin(x.0, x.1, nx), ts: lin(t.0, t.1, nt) }
    }
}

/// `v^ε(x, t) = ε log u(x̂ |x|^{1/ε}, t/ε)`, row per time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledProfile {
    pub eps: f64,
    pub window: ProfileWindow,
    pub v: Vec<Vec<f64>>,
}

/// Snapshot at `t`, log-linearly interpolated in time between neighbours
/// when no snapshot lies within `1e-9` of `t`.
fn field_at(traj: &Trajectory, t: f64) -> Result<Field, AsymptoticsError> {
    let snaps = &traj.snapshots;
    let tol = 1e-9 * t.abs().max(1.0);
    if let Some(s) = snaps.iter().find(|s| (s.time() - t).abs() <= tol) {
        return Ok(s.clone());
    }
    let j = snaps.partition_point(|s| s.time() < t);
    if j == 0 || j == snaps.len() {
        let last = snaps.last().map_or(0.0, |s| s.time());
        return Err(AsymptoticsError::Range { what: format!("T ≥ {t} (trajectory ends at {last})") });
    }
    let (a, b) = (&snaps[j - 1], &snaps[j]);
    let s = (t - a.time()) / (b.time() - a.time());
    let vals = a.values().iter().zip(b.values()).map(|(&p, &q)| blend(p, q, s)).collect();
    Ok(Field::new(a.grid().clone(), vals)?.with_time(t))
}

pub fn hopf_cole_rescale(
    traj: &Trajectory,
    eps: f64,
    window: &ProfileWindow,
) -> Result<RescaledProfile, AsymptoticsError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(AsymptoticsError::Range { what: format!("ε in (0, 1], got {eps}") });
    }
    let grid = traj.snapshots[0].grid().as_line().ok_or(AsymptoticsError::WrongGrid("line"))?;
    let r_max = grid.r_max();
    let far = window.xs.iter().fold(0.0f64, |m, x| m.max(x.abs())).powf(1.0 / eps);
    if far > r_max {
        return Err(AsymptoticsError::Range { what: format!("R_max ≥ {far:e} (grid has {r_max:e})") });
    }
    let mut v = Vec::with_capacity(window.ts.len());
    for &t in &window.ts {
        let u = field_at(traj, t / eps)?;
        let row = window
            .xs
            .iter()
            .map(|&x| {
                let y = x.signum() * x.abs().powf(1.0 / eps);
                eps * sample_field(&u, y).expect("point inside R_max").ln()
            })
            .collect();
        v.push(row);
    }
    Ok(RescaledProfile { eps, window: window.clone(), v })
}

/// Sup over the window of `|v^ε - limit_profile|`.
pub fn profile_deviation(p: &RescaledProfile, lambda1: f64, tail_exponent: f64) -> f64 {
    let mut worst = 0.0f64;
    for (row, &t) in p.v.iter().zip(&p.window.ts) {
        for (v, &x) in row.iter().zip(&p.window.xs) {
            let d = (v - limit_profile(x.abs(), t, lambda1, tail_exponent)).abs();
            worst = if d.is_nan() { f64::INFINITY } else { worst.max(d) };
        }
    }
    worst
}

impl RescaledProfile {
    pub fn write_csv(&self, path: &Path, lambda1: f64, tail_exponent: f64) -> Result<(), DiscretizeError> {
        let mut cols: [Vec<f64>; 4] = Default::default();
        for (row, &t) in self.v.iter().zip(&self.window.ts) {
            for (v, &x) in row.iter().zip(&self.window.xs) {
                cols[0].push(t);
                cols[1].push(x);
                cols[2].push(*v);
                cols[3].push(limit_profile(x.abs(), t, lambda1, tail_exponent));
            }
        }
        io::write_columns_csv(path, &["t", "x", "v", "limit"], &[&cols[0], &cols[1], &cols[2], &cols[3]])
    }
}

/// `u⁺` at `x mod 1` by periodic linear interpolation.
pub fn periodic_sample(u_plus: &Field, x: f64) -> Result<f64, AsymptoticsError> {
    let g = u_plus.grid().as_torus().ok_or(AsymptoticsError::WrongGrid("torus"))?;
    let n = g.len();
    let s = x.rem_euclid(1.0) * n as f64;
    let i = (s.floor() as usize).min(n - 1);
    let w = s - i as f64;
    let v = u_plus.values();
    Ok(v[i] * (1.0 - w) + v[(i + 1) % n] * w)
}

fn region_nodes(u: &Field, pred: impl Fn(f64) -> bool) -> Vec<usize> {
    (0..u.len()).filter(|&i| pred(u.nodes()[i].abs())).collect()
}

/// Sup over `{|x|^{d+α} ≤ e^{(1-δ)|λ1|t}}` of `|u(x,t)/u⁺(x mod 1) - 1|`.
pub fn inner_ratio(
    traj: &Trajectory,
    u_plus: &Field,
    t: f64,
    delta: f64,
    lambda1: f64,
    tail_exponent: f64,
) -> Result<f64, AsymptoticsError> {
    let u = traj.nearest(t);
    let bound = (1.0 - delta) * lambda1.abs() * u.time() / tail_exponent;
    let idx = region_nodes(u, |a| a == 0.0 || a.ln() <= bound);
    if idx.len() < 10 {
        return Err(AsymptoticsError::EmptyRegion { time: u.time(), nodes: idx.len() });
    }
    let mut worst = 0.0f64;
    for i in idx {
        let up = periodic_sample(u_plus, u.nodes()[i])?;
        worst = worst.max((u.values()[i] / up - 1.0).abs());
    }
    Ok(worst)
}

/// Sup of `u` over `{|x|^{d+α} ≥ e^{(1+δ)|λ1|t}}` (`0` if empty).
pub fn outer_sup(u: &Field, delta: f64, lambda1: f64, tail_exponent: f64) -> f64 {
    let bound = (1.0 + delta) * lambda1.abs() * u.time() / tail_exponent;
    region_nodes(u, |a| a > 0.0 && a.ln() >= bound).into_iter().map(|i| u.values()[i]).fold(0.0, f64::max)
}

/// Trapezoid average of `u` over the inner region `{|x| ≤ r}`,
/// `r = e^{(1-δ)|λ1|t/(d+α)}`.
pub fn inner_average(u: &Field, delta: f64, lambda1: f64, tail_exponent: f64) -> Result<f64, AsymptoticsError> {
    if !matches!(**u.grid(), Grid::Line(_)) {
        return Err(AsymptoticsError::WrongGrid("line"));
    }
    let r = ((1.0 - delta) * lambda1.abs() * u.time() / tail_exponent).exp();
    let x = u.nodes();
    let v = u.values();
    let (mut mass, mut len) = (0.0, 0.0);
    for i in 0..x.len() - 1 {
        let (a, b) = (x[i].max(-r), x[i + 1].min(r));
        if b <= a {
            continue;
        }
        let ua = sample_linear(x[i], v[i], x[i + 1], v[i + 1], a);
        let ub = sample_linear(x[i], v[i], x[i + 1], v[i + 1], b);
        mass += 0.5 * (ua + ub) * (b - a);
        len += b - a;
    }
    if len == 0.0 {
        return Err(AsymptoticsError::EmptyRegion { time: u.time(), nodes: 0 });
    }
    Ok(mass / len)
}

fn sample_linear(x0: f64, v0: f64, x1: f64, v1: f64, x: f64) -> f64 {
    v0 + (v1 - v0) * (x - x0) / (x1 - x0)
}

/// `log r_h` against `t`, the fitted line and the `|λ1|/(d+α)` reference.
pub fn front_svg(traces: &[FrontTrace], fit: Option<&RateFit>, predicted_slope: f64) -> String {
    const COLORS: [&str; 4] = ["#1f5fa8", "#b8461b", "#2e8540", "#6b3fa0"];
    let mut series: Vec<Series> = traces
        .iter()
        .enumerate()
        .map(|(k, tr)| {
            Series::new(
                format!("h = {:e}", tr.level),
                tr.points.iter().map(|&(t, r)| (t, r.ln())).collect(),
                COLORS[k % COLORS.len()],
            )
        })
        .collect();
    if let Some(f) = fit {
        let (t1, t2) = f.window;
        series.push(
            Series::new(
                format!("predicted slope {predicted_slope:.4}"),
                vec![(t1, f.intercept + predicted_slope * t1), (t2, f.intercept + predicted_slope * t2)],
                "#000",
            )
            .dashed(),
        );
    }
    line_plot("front radius", "t", "log r_h", &series)
}

/// `v^ε(·, t)` at the last window time for each profile, against the limit.
pub fn profile_svg(profiles: &[RescaledProfile], lambda1: f64, tail_exponent: f64) -> String {
    const COLORS: [&str; 4] = ["#1f5fa8", "#b8461b", "#2e8540", "#6b3fa0"];
    let mut series = Vec::new();
    for (k, p) in profiles.iter().enumerate() {
        if let (Some(row), Some(&t)) = (p.v.last(), p.window.ts.last()) {
            series.push(Series::new(
                format!("ε = {} (t = {t})", p.eps),
                p.window.xs.iter().copied().zip(row.iter().copied()).collect(),
                COLORS[k % COLORS.len()],
            ));
            if k + 1 == profiles.len() {
                series.push(
                    Series::new(
                        "limit",
                        p.window.xs.iter().map(|&x| (x, limit_profile(x.abs(), t, lambda1, tail_exponent))).collect(),
                        "#000",
                    )
                    .dashed(),
                );
            }
        }
    }
    line_plot("rescaled profile", "x", "v", &series)
}
