use crate::evolve::DtPolicy;
use crate::model::ProblemDoc;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

use super::PipelineError;

/// The problem either inline or as a path relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemRef {
    Path(PathBuf),
    Inline(ProblemDoc),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineConfig {
    pub core_half_width: f64,
    pub core_cells: usize,
    pub outer_nodes: usize,
    pub r_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub eigen: f64,
    pub steady: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { eigen: 1e-10, steady: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub x: (f64, f64),
    pub nx: usize,
    pub t: (f64, f64),
    pub nt: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { x: (1.2, 2.0), nx: 17, t: (0.5, 1.0), nt: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsConfig {
    /// Times at which the decay constant is sampled (with `λ = 1`).
    pub acc_times: Vec<f64>,
    /// Times of the barrier residual sample.
    pub residual_times: Vec<f64>,
    pub residual_samples: usize,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            acc_times: vec![0.0, 1.0, 2.0, 4.0],
            residual_times: (0..8).map(|k| 0.5 * k as f64).collect(),
            residual_samples: 64,
        }
    }
}

fn default_seed() -> u64 {
    0
}

fn default_snapshot_every() -> f64 {
    0.25
}

fn default_delta() -> f64 {
    0.1
}

/// One experiment: problem, grids, tolerances, schedule and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub problem: ProblemRef,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub torus_nodes: usize,
    pub line: LineConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub horizon: f64,
    #[serde(default)]
    pub dt: DtPolicy,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: f64,
    /// Explicit snapshot times; when empty, every `snapshot_every` up to the horizon.
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub window: WindowConfig,
    pub levels: Vec<f64>,
    pub fit_level: f64,
    /// Shrink factor `δ` of the two-region diagnostics.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Acceptance rows that decide the verdict; empty means all of them.
    /// Rows not listed are still reported.
    #[serde(default)]
    pub checks: Vec<String>,
}

impl ExperimentConfig {
    /// Read a config and inline its problem file.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        if let ProblemRef::Path(p) = &cfg.problem {
            let full = path.parent().unwrap_or(Path::new(".")).join(p);
            let doc =
                fs::read_to_string(&full).map_err(|e| PipelineError::Config(format!("{}: {e}", full.display())))?;
            let doc: ProblemDoc =
                serde_json::from_str(&doc).map_err(|e| PipelineError::Config(format!("{}: {e}", full.display())))?;
            cfg.problem = ProblemRef::Inline(doc);
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn problem_doc(&self) -> Result<&ProblemDoc, PipelineError> {
        match &self.problem {
            ProblemRef::Inline(d) => Ok(d),
            ProblemRef::Path(p) => Err(PipelineError::Config(format!("problem file {} was not resolved", p.display()))),
        }
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let t = self.tolerances;
        if !(t.eigen > 0.0 && t.steady > 0.0) {
            return bad(format!("tolerances must be positive, got {t:?}"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if let DtPolicy::Fixed(dt) = self.dt {
            if !(dt > 0.0) {
                return bad(format!("dt must be positive, got {dt}"));
            }
        }
        if !(self.snapshot_every > 0.0) {
            return bad(format!("snapshot_every must be positive, got {}", self.snapshot_every));
        }
        if self.snapshots.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("snapshots must be strictly increasing".into());
        }
        for (name, list) in [("levels", &self.levels), ("eps", &self.eps)] {
            if list.windows(2).any(|w| !(w[0] > w[1])) {
                return bad(format!("{name} must be strictly decreasing"));
            }
        }
        if self.eps.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return bad("eps values must lie in (0, 1]".into());
        }
        if self.levels.is_empty() || self.levels.iter().any(|h| !(*h > 0.0 && *h < 1.0)) {
            return bad("levels must be nonempty and lie in (0, 1)".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if let Some(c) = self.checks.iter().find(|c| !super::report::ROW_IDS.contains(&c.as_str())) {
            return bad(format!("unknown check {c:?}"));
        }
        if !(self.fit_level > 0.0) {
            return bad("fit_level must be positive".into());
        }
        Ok(())
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        if !self.snapshots.is_empty() {
            return self.snapshots.clone();
        }
        let n = (self.horizon / self.snapshot_every + 1e-9).floor() as usize;
        let mut t: Vec<f64> = (0..=n).map(|k| k as f64 * self.snapshot_every).collect();
        if t.last().is_some_and(|l| (l - self.horizon).abs() > 1e-12) {
            t.push(self.horizon);
        }
        t
    }

    /// SHA-256 of the canonical JSON form (problem inlined).
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
