//! Configuration-driven runs: validate → eigen → steady → evolve → fronts →
//! bounds → report, each stage writing under its own subdirectory.

mod config;
pub mod report;

pub use config::{BoundsConfig, ExperimentConfig, LineConfig, ProblemRef, Tolerances, WindowConfig};

use crate::asymptotics::{
    fit_front_rate, front_svg, hopf_cole_rescale, inner_average, inner_ratio, outer_sup, profile_deviation,
    profile_svg, FrontTrace, ProfileWindow, RescaledProfile,
};
use crate::bounds::{
    acc_constant_on, barrier_constants, barrier_residuals_on, sandwich_check, BarrierSet, ResidualReport,
    SandwichReport,
};
use crate::discretize::{
    assemble_line_operator_with, assemble_torus_operator, io, DiscretizeError, Field, LineGrid, LineGridParams,
    OperatorMatrix, TailModel, TorusGrid,
};
use crate::evolve::{initial_field, integrate, IntegrateOptions, Scheme, SnapshotWriter, Trajectory};
use crate::exec::Execution;
use crate::model::{validate_assumptions, DerivedConstants, ProblemSpec};
use crate::spectral::{eigen_residual, principal_eigenpair, EigenPair};
use crate::steady::{positive_steady_state, steady_residual, steady_state_from_above, SteadyState};
use config::hex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("report: missing artifacts {0:?}")]
    MissingArtifacts(Vec<String>),
    #[error("report: {0}")]
    Report(String),
}

impl From<DiscretizeError> for PipelineError {
    fn from(e: DiscretizeError) -> Self {
        PipelineError::Io(e.to_string())
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Validate,
    Eigen,
    Steady,
    Evolve,
    Fronts,
    Bounds,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Validate, Stage::Eigen, Stage::Steady, Stage::Evolve, Stage::Fronts, Stage::Bounds, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Eigen => "eigen",
            Stage::Steady => "steady",
            Stage::Evolve => "evolve",
            Stage::Fronts => "fronts",
            Stage::Bounds => "bounds",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Completed,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub wall_seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub stages: Vec<StageRecord>,
    pub artifacts: Vec<Artifact>,
    pub verdict: Option<report::Verdict>,
}

impl RunManifest {
    pub fn stage(&self, s: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == s)
    }

    pub fn completed(&self, s: Stage) -> bool {
        self.stage(s).is_some_and(|r| r.status == StageStatus::Completed)
    }

    pub fn load(out: &Path) -> Result<Self, PipelineError> {
        let path = out.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| io_err(&path, e))
    }

    pub fn save(&self, out: &Path) -> Result<(), PipelineError> {
        let value = serde_json::to_value(self).map_err(|e| PipelineError::Io(e.to_string()))?;
        io::write_json(&out.join("manifest.json"), &value)?;
        Ok(())
    }

    /// Paths whose file is missing or whose checksum no longer matches.
    pub fn verify(&self, out: &Path) -> Vec<String> {
        self.artifacts
            .iter()
            .filter(|a| match fs::read(out.join(&a.path)) {
                Ok(bytes) => hex(&Sha256::digest(&bytes)) != a.sha256,
                Err(_) => true,
            })
            .map(|a| a.path.clone())
            .collect()
    }
}

/// In-memory results handed from stage to stage.
struct Run<'c> {
    cfg: &'c ExperimentConfig,
    out: PathBuf,
    spec: Option<ProblemSpec>,
    torus_op: Option<OperatorMatrix>,
    pair: Option<EigenPair>,
    steady: Option<SteadyState>,
    line_op: Option<OperatorMatrix>,
    traj: Option<Trajectory>,
}

type StageResult = Result<(), String>;

impl Run<'_> {
    fn dir(&self, s: Stage) -> Result<PathBuf, String> {
        let d = self.out.join(s.name());
        fs::create_dir_all(&d).map_err(|e| format!("{}: {e}", d.display()))?;
        Ok(d)
    }

    fn spec(&self) -> &ProblemSpec {
        self.spec.as_ref().expect("validate stage ran")
    }

    fn lambda1(&self) -> f64 {
        self.pair.as_ref().expect("eigen stage ran").lambda1
    }

    fn line_grid(&self) -> Result<LineGrid, String> {
        let l = self.cfg.line;
        LineGrid::new(LineGridParams {
            core_half_width: l.core_half_width,
            core_cells: l.core_cells,
            outer_nodes: l.outer_nodes,
            r_max: l.r_max,
        })
        .map_err(|e| e.to_string())
    }

    fn validate(&mut self) -> StageResult {
        let dir = self.dir(Stage::Validate)?;
        let doc = self.cfg.problem_doc().map_err(|e| e.to_string())?;
        let spec = doc.to_spec().map_err(|e| e.to_string())?;
        if spec.dim() != 1 {
            return Err(format!("numerics are implemented for d = 1, got d = {}", spec.dim()));
        }
        let report = validate_assumptions(&spec, doc.validation.samples, self.cfg.seed);
        let mut value = serde_json::to_value(&report).map_err(|e| e.to_string())?;
        value["passed"] = report.all_passed().into();
        io::write_json(&dir.join("validation.json"), &value).map_err(|e| e.to_string())?;
        if !report.all_passed() {
            let names: Vec<&str> = report.failures().iter().map(|c| c.name.as_str()).collect();
            return Err(format!("assumption checks failed: {}", names.join(", ")));
        }
        self.spec = Some(spec);
        Ok(())
    }

    fn eigen(&mut self) -> StageResult {
        let dir = self.dir(Stage::Eigen)?;
        let spec = self.spec();
        let grid = TorusGrid::new(self.cfg.torus_nodes).map_err(|e| e.to_string())?;
        let op = assemble_torus_operator(&spec.kernel, &grid).map_err(|e| e.to_string())?;
        let mu = Field::from_fn(op.grid().clone(), |x| spec.reaction.mu_1d(x));
        let pair = principal_eigenpair(&op, &mu, self.cfg.tolerances.eigen).map_err(|e| e.to_string())?;
        pair.write(&dir).map_err(|e| e.to_string())?;
        let summary = serde_json::json!({
            "lambda1": pair.lambda1,
            "residual": eigen_residual(&op, &mu, &pair).map_err(|e| e.to_string())?,
            "iterations": pair.iterations,
            "min_eigenfunction": pair.eigenfunction().min(),
            "nodes": op.len(),
        });
        io::write_json(&dir.join("eigen.json"), &summary).map_err(|e| e.to_string())?;
        self.torus_op = Some(op);
        self.pair = Some(pair);
        Ok(())
    }

    fn steady(&mut self) -> StageResult {
        let dir = self.dir(Stage::Steady)?;
        let spec = self.spec();
        let op = self.torus_op.as_ref().expect("eigen stage ran");
        let pair = self.pair.as_ref().expect("eigen stage ran");
        let tol = self.cfg.tolerances.steady;
        let below = positive_steady_state(spec, op, pair, tol).map_err(|e| e.to_string())?;
        let above = steady_state_from_above(spec, op, tol).map_err(|e| e.to_string())?;
        let gap =
            below.u_plus.values().iter().zip(above.u_plus.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        below.write(&dir).map_err(|e| e.to_string())?;
        let mut summary = below.summary();
        summary["residual_recomputed"] = steady_residual(op, spec, &below.u_plus).map_err(|e| e.to_string())?.into();
        summary["two_sided_gap"] = gap.into();
        summary["min"] = below.u_plus.min().into();
        summary["max"] = below.u_plus.max().into();
        summary["nondecreasing"] = below.increments.iter().all(|d| *d >= -below.slack).into();
        io::write_json(&dir.join("steady.json"), &summary).map_err(|e| e.to_string())?;
        self.steady = Some(below);
        Ok(())
    }

    fn evolve(&mut self) -> StageResult {
        let dir = self.dir(Stage::Evolve)?;
        let snaps = dir.join("snapshots");
        fs::create_dir_all(&snaps).map_err(|e| e.to_string())?;
        let spec = self.spec();
        let grid = self.line_grid()?;
        let op = assemble_line_operator_with(&spec.kernel, &grid, TailModel::Algebraic, Execution::default())
            .map_err(|e| e.to_string())?;
        let u0 = initial_field(spec, op.grid());
        let dt = self.cfg.dt.resolve(&spec.reaction);
        let writer = SnapshotWriter::new(&snaps);
        let traj = integrate(
            &op,
            Some(&spec.reaction),
            u0,
            self.cfg.horizon,
            dt,
            &self.cfg.snapshot_times(),
            IntegrateOptions { scheme: Scheme::Imex, monitor: true, sink: Some(&writer) },
        )
        .map_err(|e| e.to_string())?;
        let files = writer.finish().map_err(|e| e.to_string())?;
        io::write_json(&dir.join("trajectory.json"), &traj.manifest(&files)).map_err(|e| e.to_string())?;
        self.line_op = Some(op);
        self.traj = Some(traj);
        Ok(())
    }

    fn fronts(&mut self) -> StageResult {
        let dir = self.dir(Stage::Fronts)?;
        let cfg = self.cfg;
        let traj = self.traj.as_ref().expect("evolve stage ran");
        let spec = self.spec();
        let p = spec.kernel.tail_exponent();
        let l1 = self.lambda1();
        let predicted = l1.abs() / p;
        let horizon = traj.final_state().time();
        let window = (0.5 * horizon, 0.9 * horizon);

        let mut fits = Vec::new();
        let mut traces = Vec::new();
        for (k, &h) in cfg.levels.iter().enumerate() {
            let trace = FrontTrace::from_trajectory(traj, h);
            trace.write_csv(&dir.join(format!("front_{k:02}.csv"))).map_err(|e| e.to_string())?;
            let entry = match fit_front_rate(&trace, window, horizon) {
                Ok(f) => {
                    serde_json::json!({"level": h, "fit": f.to_json(), "monotone": trace.monotone_after(window.0)})
                }
                Err(e) => serde_json::json!({"level": h, "error": e.to_string()}),
            };
            fits.push(entry);
            traces.push(trace);
        }
        let main_trace = FrontTrace::from_trajectory(traj, cfg.fit_level);
        let main_fit = fit_front_rate(&main_trace, window, horizon);
        fs::write(dir.join("front.svg"), front_svg(&traces, main_fit.as_ref().ok(), predicted))
            .map_err(|e| e.to_string())?;

        let win = ProfileWindow::uniform(cfg.window.x, cfg.window.nx, cfg.window.t, cfg.window.nt);
        let mut profiles: Vec<RescaledProfile> = Vec::new();
        let mut profile_rows = Vec::new();
        for (k, &eps) in cfg.eps.iter().enumerate() {
            match hopf_cole_rescale(traj, eps, &win) {
                Ok(pr) => {
                    pr.write_csv(&dir.join(format!("profile_{k:02}.csv")), l1, p).map_err(|e| e.to_string())?;
                    profile_rows.push(serde_json::json!({"eps": eps, "deviation": profile_deviation(&pr, l1, p)}));
                    profiles.push(pr);
                }
                Err(e) => profile_rows.push(serde_json::json!({"eps": eps, "error": e.to_string()})),
            }
        }
        if !profiles.is_empty() {
            fs::write(dir.join("profile.svg"), profile_svg(&profiles, l1, p)).map_err(|e| e.to_string())?;
        }

        let fin = traj.final_state();
        let u_plus = &self.steady.as_ref().expect("steady stage ran").u_plus;
        let late = serde_json::json!({
            "t": fin.time(),
            "outer_sup": outer_sup(fin, cfg.delta, l1, p),
            "inner_ratio": inner_ratio(traj, u_plus, fin.time(), cfg.delta, l1, p).map_err(|e| e.to_string()).ok(),
            "inner_average": inner_average(fin, cfg.delta, l1, p).ok(),
            "weak_mean": crate::steady::weak_mean(u_plus),
        });
        let summary = serde_json::json!({
            "predicted_slope": predicted,
            "fit_level": cfg.fit_level,
            "window": [window.0, window.1],
            "fit": match &main_fit { Ok(f) => f.to_json(), Err(e) => serde_json::json!({"error": e.to_string()}) },
            "levels": fits,
            "profiles": profile_rows,
            "late": late,
        });
        io::write_json(&dir.join("summary.json"), &summary).map_err(|e| e.to_string())
    }

    fn bounds(&mut self) -> StageResult {
        let dir = self.dir(Stage::Bounds)?;
        let cfg = &self.cfg.bounds;
        let traj = self.traj.as_ref().expect("evolve stage ran");
        let op = self.line_op.as_ref().expect("evolve stage ran");
        let l1 = self.lambda1();
        let spec = self.spec.as_ref().expect("validate stage ran");
        let acc = acc_constant_on(op, &spec.kernel, 1.0, &cfg.acc_times).map_err(|e| e.to_string())?;
        let b = barrier_constants(spec, acc.d_hat, l1, op.grid().nodes()).map_err(|e| e.to_string())?;
        let check = |b: &BarrierSet| -> Result<(SandwichReport, ResidualReport), String> {
            let s = sandwich_check(traj, b);
            let r = barrier_residuals_on(op, b, spec, &cfg.residual_times, cfg.residual_samples)
                .map_err(|e| e.to_string())?;
            Ok((s, r))
        };
        let (sandwich, residuals) = check(&b)?;
        let (half_a_s, half_a_r) = check(&b.with_a0(0.5 * b.a0))?;
        let (half_b_s, half_b_r) = check(&b.with_b0(0.5 * b.b0))?;

        io::write_columns_csv(&dir.join("acc.csv"), &["t", "max_scaled_image"], &[&acc.times, &acc.per_time])
            .map_err(|e| e.to_string())?;
        let mut wit: [Vec<f64>; 5] = Default::default();
        for (kind, w) in [(0.0, sandwich.worst_lower), (1.0, sandwich.worst_upper)] {
            if let Some(w) = w {
                for (col, v) in wit.iter_mut().zip([kind, w.t, w.x, w.u, w.barrier]) {
                    col.push(v);
                }
            }
        }
        io::write_columns_csv(
            &dir.join("witnesses.csv"),
            &["kind", "t", "x", "u", "barrier"],
            &[&wit[0], &wit[1], &wit[2], &wit[3], &wit[4]],
        )
        .map_err(|e| e.to_string())?;
        let control = |s: &SandwichReport, r: &ResidualReport| {
            serde_json::json!({
                "sandwich_lower": s.lower_total,
                "sandwich_upper": s.upper_total,
                "sub_violations": r.sub_violations,
                "super_violations": r.super_violations,
            })
        };
        let value = serde_json::json!({
            "constants": b.to_json(),
            "acc": {
                "lambda": acc.lambda,
                "times": acc.times,
                "per_time": acc.per_time,
                "slope": acc.slope,
                "predicted_slope": acc.predicted_slope(spec.kernel.order(), spec.kernel.tail_exponent()),
                "truncation_suspect": acc.truncation_suspect,
            },
            "violations": {
                "lower": sandwich.lower_total,
                "upper": sandwich.upper_total,
                "snapshots": sandwich.snapshots.len(),
            },
            "residual_extremes": residuals,
            "controls": {
                "half_a0": control(&half_a_s, &half_a_r),
                "half_b0": control(&half_b_s, &half_b_r),
            },
        });
        io::write_json(&dir.join("bounds.json"), &value).map_err(|e| e.to_string())?;
        if let Some(s) = self.spec.as_mut() {
            s.derived = Some(DerivedConstants { d_hat: b.d_hat, a0: b.a0, b0: b.b0, c0: b.c0, big_c0: b.big_c0 });
        }
        Ok(())
    }
}

/// Files under `dir`, sorted, as paths relative to `root`.
fn list_files(root: &Path, dir: &Path, acc: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            list_files(root, &p, acc)?;
        } else {
            acc.push(p.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

fn artifacts(out: &Path, stage: Stage) -> Result<Vec<Artifact>, PipelineError> {
    let mut files = Vec::new();
    list_files(out, &out.join(stage.name()), &mut files).map_err(|e| io_err(out, e))?;
    files
        .into_iter()
        .map(|rel| {
            let bytes = fs::read(out.join(&rel)).map_err(|e| io_err(&rel, e))?;
            let path = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            Ok(Artifact { path, sha256: hex(&Sha256::digest(&bytes)), bytes: bytes.len() as u64 })
        })
        .collect()
}

/// Run stages in order up to and including `last`, short-circuiting on the
/// first failure. The manifest is written to `out/manifest.json` either way.
pub fn run_stages(cfg: &ExperimentConfig, out: &Path, last: Stage) -> Result<RunManifest, PipelineError> {
    cfg.check()?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut manifest = RunManifest {
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        stages: Vec::new(),
        artifacts: Vec::new(),
        verdict: None,
    };
    io::write_json(
        &out.join("config.json"),
        &serde_json::to_value(cfg).map_err(|e| PipelineError::Config(e.to_string()))?,
    )?;
    let mut run = Run {
        cfg,
        out: out.to_path_buf(),
        spec: None,
        torus_op: None,
        pair: None,
        steady: None,
        line_op: None,
        traj: None,
    };
    let mut failure: Option<(Stage, String)> = None;
    for stage in Stage::ALL.into_iter().filter(|s| *s <= last) {
        if failure.is_some() {
            manifest.stages.push(StageRecord { stage, status: StageStatus::Skipped, wall_seconds: 0.0, error: None });
            continue;
        }
        let start = Instant::now();
        log::info!("stage {stage}");
        let result = match stage {
            Stage::Validate => run.validate(),
            Stage::Eigen => run.eigen(),
            Stage::Steady => run.steady(),
            Stage::Evolve => run.evolve(),
            Stage::Fronts => run.fronts(),
            Stage::Bounds => run.bounds(),
            Stage::Report => {
                manifest.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
                report::write_report(&manifest, out).map(|v| manifest.verdict = Some(v)).map_err(|e| e.to_string())
            }
        };
        let wall = start.elapsed().as_secs_f64();
        let (status, error) = match result {
            Ok(()) => (StageStatus::Completed, None),
            Err(e) => {
                log::error!("stage {stage}: {e}");
                failure = Some((stage, e.clone()));
                (StageStatus::Failed, Some(e))
            }
        };
        manifest.stages.push(StageRecord { stage, status, wall_seconds: wall, error });
        manifest.artifacts.extend(artifacts(out, stage)?);
        log::info!("stage {stage} {status:?} in {wall:.2}s");
    }
    manifest.save(out)?;
    match failure {
        Some((stage, message)) => Err(PipelineError::Stage { stage, message }),
        None => Ok(manifest),
    }
}

pub fn run_pipeline(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest, PipelineError> {
    run_stages(cfg, out, Stage::Report)
}

/// Re-grade a finished run: check every recorded checksum, then rewrite the
/// report and the manifest.
pub fn regrade(out: &Path) -> Result<RunManifest, PipelineError> {
    let mut manifest = RunManifest::load(out)?;
    let changed = manifest.verify(out);
    if !changed.is_empty() {
        return Err(PipelineError::MissingArtifacts(changed));
    }
    let prefix = format!("{}/", Stage::Report.name());
    manifest.verdict = Some(report::write_report(&manifest, out)?);
    manifest.artifacts.retain(|a| !a.path.starts_with(&prefix));
    manifest.artifacts.extend(artifacts(out, Stage::Report)?);
    manifest.save(out)?;
    Ok(manifest)
}
