//! Time stepping for `u_t + L[u] = f(x, u)`.
//!
//! The default scheme is IMEX Euler, `(I + dt L) u^{n+1} = u^n + dt f(u^n)`,
//! with `I + dt L` factorized once. Explicit Euler is available for small
//! problems and as a cross-check.

use crate::discretize::{
    assemble_line_operator_with, io, DiscretizeError, Field, Grid, LineGrid, OperatorMatrix, TailModel,
};
use crate::exec::Execution;
use crate::model::{ProblemSpec, ReactionSpec};
use nalgebra::{DVector, Dyn, LU};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolveError {
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("horizon must be nonnegative and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("explicit step dt = {dt} exceeds the positivity bound {bound}")]
    Cfl { dt: f64, bound: f64 },
    #[error("negative value {value:e} at node {node} (t = {time}); the scheme lost positivity")]
    Negative { time: f64, node: usize, value: f64 },
    #[error("front reached |x| = {radius:e} ≥ 0.5·R_max at t = {time}; enlarge R_max")]
    Truncation { time: f64, radius: f64, r_max: f64 },
    #[error("I + dt·L is singular")]
    Singular,
    #[error("snapshot writer failed: {0}")]
    Sink(String),
}

/// Negative values of at most this magnitude are rounding and are clipped.
pub const CLIP: f64 = 1e-14;
/// Level watched by the front-proximity monitor.
pub const MONITOR_LEVEL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Explicit,
    #[default]
    Imex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DtPolicy {
    /// `min(0.01, 0.5/μ₊)`.
    #[default]
    Default,
    Fixed(f64),
}

impl DtPolicy {
    pub fn resolve(self, reaction: &ReactionSpec) -> f64 {
        match self {
            DtPolicy::Default => {
                let mp = reaction.mu_plus();
                if mp > 0.0 {
                    (0.5 / mp).min(0.01)
                } else {
                    0.01
                }
            }
            DtPolicy::Fixed(dt) => dt,
        }
    }
}

/// One linear factorization plus the explicit reaction.
pub struct Stepper<'a> {
    op: &'a OperatorMatrix,
    reaction: Option<&'a ReactionSpec>,
    scheme: Scheme,
    dt: f64,
    lu: Option<LU<f64, Dyn, Dyn>>,
    exec: Execution,
}

impl<'a> Stepper<'a> {
    /// `reaction = None` switches the reaction off (`f ≡ 0`).
    pub fn new(
        op: &'a OperatorMatrix,
        reaction: Option<&'a ReactionSpec>,
        scheme: Scheme,
        dt: f64,
    ) -> Result<Self, EvolveError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(EvolveError::InvalidStep(dt));
        }
        let lu = match scheme {
            Scheme::Imex => Some(op.to_dmatrix(dt, &vec![1.0; op.len()]).lu()),
            Scheme::Explicit => {
                let bound = explicit_bound(op);
                if dt > bound {
                    return Err(EvolveError::Cfl { dt, bound });
                }
                None
            }
        };
        Ok(Self { op, reaction, scheme, dt, lu, exec: Execution::default() })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Advance by one step; returns the new field and the number of clipped nodes.
    pub fn step(&self, u: &Field) -> Result<(Field, usize), EvolveError> {
        self.op.check_field(u)?;
        let dt = self.dt;
        let nodes = u.nodes();
        let mut rhs: Vec<f64> = u.values().to_vec();
        if let Some(r) = self.reaction {
            for ((v, &x), &old) in rhs.iter_mut().zip(nodes).zip(u.values()) {
                *v += dt * r.eval_unchecked(&[x], old);
            }
        }
        let mut next = match &self.lu {
            Some(lu) => {
                let b = DVector::from_vec(rhs);
                lu.solve(&b).ok_or(EvolveError::Singular)?.as_slice().to_vec()
            }
            None => {
                let lu_vals = self.op.apply_slice(u.values(), self.exec);
                rhs.iter().zip(&lu_vals).map(|(r, l)| r - dt * l).collect()
            }
        };
        let time = u.time() + dt;
        let mut clipped = 0;
        for (node, v) in next.iter_mut().enumerate() {
            if *v < 0.0 {
                if *v < -CLIP {
                    return Err(EvolveError::Negative { time, node, value: *v });
                }
                *v = 0.0;
                clipped += 1;
            }
        }
        Ok((Field::new(u.grid().clone(), next)?.with_time(time), clipped))
    }
}

/// `0.9 / max diagonal`: the explicit step keeps positivity below this.
pub fn explicit_bound(op: &OperatorMatrix) -> f64 {
    let d = op.diagonal().into_iter().fold(0.0, f64::max);
    if d > 0.0 {
        0.9 / d
    } else {
        f64::INFINITY
    }
}

/// Single step with a fresh factorization.
pub fn step(
    state: &Field,
    dt: f64,
    spec: &ProblemSpec,
    op: &OperatorMatrix,
    scheme: Scheme,
) -> Result<Field, EvolveError> {
    Stepper::new(op, Some(&spec.reaction), scheme, dt)?.step(state).map(|(f, _)| f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    pub dt: f64,
    pub min: f64,
    pub max: f64,
    pub clipped: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<Field>,
    pub scheme: Scheme,
    pub dt: f64,
    pub steps: Vec<StepRecord>,
    /// `max(‖u₀‖∞, M)`: the comparison-principle cap.
    pub cap: f64,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time()).collect()
    }

    pub fn final_state(&self) -> &Field {
        self.snapshots.last().expect("trajectory has at least the initial snapshot")
    }

    pub fn sup_norm(&self) -> f64 {
        self.steps.iter().map(|s| s.max).chain(self.snapshots.iter().map(|s| s.max())).fold(0.0, f64::max)
    }

    pub fn cap_respected(&self) -> bool {
        self.sup_norm() <= self.cap + 1e-8
    }

    /// Snapshot whose time is closest to `t`.
    pub fn nearest(&self, t: f64) -> &Field {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.time() - t).abs().total_cmp(&(b.time() - t).abs()))
            .expect("trajectory has at least the initial snapshot")
    }

    pub fn manifest(&self, files: &[PathBuf]) -> serde_json::Value {
        let clipped: usize = self.steps.iter().map(|s| s.clipped).sum();
        serde_json::json!({
            "scheme": self.scheme,
            "dt": self.dt,
            "steps": self.steps.len(),
            "times": self.times(),
            "files": files.iter().map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned())).collect::<Vec<_>>(),
            "diagnostics": {
                "min": self.steps.iter().map(|s| s.min).fold(f64::INFINITY, f64::min),
                "max": self.sup_norm(),
                "cap": self.cap,
                "cap_respected": self.cap_respected(),
                "clipped_total": clipped,
            },
        })
    }
}

/// Writes snapshots on a background thread as `snap_NNNNN.csv` (`x,u`).
pub struct SnapshotWriter {
    tx: Option<mpsc::Sender<(usize, Field)>>,
    handle: Option<JoinHandle<Result<Vec<PathBuf>, DiscretizeError>>>,
}

impl SnapshotWriter {
    pub fn new(dir: &Path) -> Self {
        let (tx, rx) = mpsc::channel::<(usize, Field)>();
        let dir = dir.to_path_buf();
        let handle = std::thread::spawn(move || {
            let mut paths = Vec::new();
            for (k, f) in rx {
                let path = dir.join(format!("snap_{k:05}.csv"));
                io::write_columns_csv(&path, &["x", "u"], &[f.nodes(), f.values()])?;
                paths.push(path);
            }
            Ok(paths)
        });
        Self { tx: Some(tx), handle: Some(handle) }
    }

    fn send(&self, k: usize, f: Field) -> Result<(), EvolveError> {
        self.tx.as_ref().expect("writer is open").send((k, f)).map_err(|e| EvolveError::Sink(e.to_string()))
    }

    /// Wait for all pending writes.
    pub fn finish(mut self) -> Result<Vec<PathBuf>, EvolveError> {
        drop(self.tx.take());
        let handle = self.handle.take().expect("writer is open");
        handle
            .join()
            .map_err(|_| EvolveError::Sink("writer thread panicked".into()))?
            .map_err(|e| EvolveError::Sink(e.to_string()))
    }
}

impl Drop for SnapshotWriter {
    fn drop(&mut self) {
        drop(self.tx.take());
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

#[derive(Default)]
pub struct IntegrateOptions<'w> {
    pub scheme: Scheme,
    /// Abort once the level-`MONITOR_LEVEL` set reaches `0.5·R_max` (line grids).
    pub monitor: bool,
    pub sink: Option<&'w SnapshotWriter>,
}

/// Integrate from `u0` to `horizon`; `dt` is shrunk so that it divides the
/// horizon, and snapshot times are snapped to the nearest step.
pub fn integrate(
    op: &OperatorMatrix,
    reaction: Option<&ReactionSpec>,
    u0: Field,
    horizon: f64,
    dt: f64,
    snapshot_times: &[f64],
    opts: IntegrateOptions<'_>,
) -> Result<Trajectory, EvolveError> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(EvolveError::InvalidHorizon(horizon));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(EvolveError::InvalidStep(dt));
    }
    let n_steps = if horizon == 0.0 { 0 } else { (horizon / dt - 1e-9).ceil().max(1.0) as usize };
    let dt = if n_steps == 0 { dt } else { horizon / n_steps as f64 };
    let mut marks: Vec<usize> = snapshot_times
        .iter()
        .filter(|t| **t >= 0.0 && **t <= horizon * (1.0 + 1e-12))
        .map(|t| ((t / dt).round() as usize).min(n_steps))
        .collect();
    marks.push(0);
    marks.sort_unstable();
    marks.dedup();

    let cap = u0.max().max(reaction.map_or(0.0, |r| r.saturation()));
    let r_max = match &**op.grid() {
        Grid::Line(g) if opts.monitor => Some(g.r_max()),
        _ => None,
    };
    let stepper = Stepper::new(op, reaction, opts.scheme, dt)?;
    let mut snapshots = Vec::with_capacity(marks.len());
    let mut steps = Vec::with_capacity(n_steps);
    let mut u = u0.with_time(0.0);
    let mut next_mark = 0;
    let record = |k: usize, u: &Field, snapshots: &mut Vec<Field>| -> Result<(), EvolveError> {
        if let Some(sink) = opts.sink {
            sink.send(k, u.clone())?;
        }
        snapshots.push(u.clone());
        Ok(())
    };
    if marks[0] == 0 {
        record(0, &u, &mut snapshots)?;
        next_mark = 1;
    }
    for n in 1..=n_steps {
        let (mut next, clipped) = stepper.step(&u)?;
        // times from the step count, not by accumulation
        next = next.with_time(n as f64 * dt);
        steps.push(StepRecord { time: next.time(), dt, min: next.min(), max: next.max(), clipped });
        if let Some(r) = r_max {
            let radius = outer_radius(&next, MONITOR_LEVEL);
            if radius >= 0.5 * r {
                return Err(EvolveError::Truncation { time: next.time(), radius, r_max: r });
            }
        }
        u = next;
        if next_mark < marks.len() && marks[next_mark] == n {
            record(next_mark, &u, &mut snapshots)?;
            next_mark += 1;
        }
    }
    Ok(Trajectory { snapshots, scheme: opts.scheme, dt, steps, cap })
}

/// Largest `|x_i|` with `u_i ≥ level`, or 0.
fn outer_radius(u: &Field, level: f64) -> f64 {
    u.nodes().iter().zip(u.values()).filter(|(_, v)| **v >= level).map(|(x, _)| x.abs()).fold(0.0, f64::max)
}

/// Cauchy problem on a truncated line grid with initial data from `spec`.
pub fn solve_cauchy(
    spec: &ProblemSpec,
    grid: &LineGrid,
    horizon: f64,
    dt_policy: DtPolicy,
    snapshot_times: &[f64],
    tail: TailModel,
    sink: Option<&SnapshotWriter>,
) -> Result<Trajectory, EvolveError> {
    let op = assemble_line_operator_with(&spec.kernel, grid, tail, Execution::default())?;
    let u0 = initial_field(spec, op.grid());
    let dt = dt_policy.resolve(&spec.reaction);
    integrate(
        &op,
        Some(&spec.reaction),
        u0,
        horizon,
        dt,
        snapshot_times,
        IntegrateOptions { scheme: Scheme::Imex, monitor: true, sink },
    )
}

pub fn initial_field(spec: &ProblemSpec, grid: &Arc<Grid>) -> Field {
    Field::from_fn(grid.clone(), |x| spec.initial.eval(&[x]))
}
