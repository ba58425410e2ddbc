//! End-to-end acceptance suite. Runs every criterion in sequence, prints one
//! PASS/FAIL line each and exits non-zero if any fails.

use levyfront::discretize::{assemble_torus_operator, Field, TorusGrid};
use levyfront::model::{InitialData, KernelSpec, ProblemSpec, ReactionSpec};
use levyfront::pipeline::report::{RowStatus, Verdict};
use levyfront::pipeline::{run_pipeline, ExperimentConfig, RunManifest, Stage};
use levyfront::spectral::principal_eigenpair;
use levyfront::steady::{positive_steady_state, steady_residual, steady_state_from_above};
use nalgebra::SymmetricEigen;
use serde_json::Value;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

struct Run {
    name: &'static str,
    out: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn json(&self, rel: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.out.join(rel)).unwrap()).unwrap()
    }

    fn verdict(&self) -> &Verdict {
        self.manifest.verdict.as_ref().unwrap()
    }

    fn row(&self, id: &str) -> (bool, String) {
        match self.verdict().row(id) {
            Some(r) => (r.status == RowStatus::Pass, format!("{}={}", id, r.value)),
            None => (false, format!("{id} missing")),
        }
    }

    fn seconds(&self, stages: &[Stage]) -> f64 {
        stages.iter().filter_map(|s| self.manifest.stage(*s)).map(|r| r.wall_seconds).sum()
    }
}

fn run_config(name: &'static str, root: &Path) -> Result<Run, String> {
    let cfg = ExperimentConfig::load(&configs().join(format!("{name}.json"))).map_err(|e| e.to_string())?;
    let out = root.join(name);
    let _ = fs::remove_dir_all(&out);
    let manifest = run_pipeline(&cfg, &out).map_err(|e| format!("{name}: {e}"))?;
    Ok(Run { name, out, manifest })
}

fn rayleigh(op: &levyfront::discretize::OperatorMatrix, m: f64) -> f64 {
    let c = Field::from_fn(op.grid().clone(), |x| (2.0 * PI * m * x).cos());
    op.apply(&c).unwrap().inner(&c) / c.inner(&c)
}

fn operator_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst_ratio = 0.0f64;
    let mut worst_const = 0.0f64;
    for alpha in [0.5, 1.0, 1.5] {
        let k = KernelSpec::homogeneous(1, alpha).unwrap();
        let op = assemble_torus_operator(&k, &TorusGrid::new(2048).unwrap()).unwrap();
        for m in [1.0, 2.0, 4.0] {
            let r = rayleigh(&op, 2.0 * m) / rayleigh(&op, m);
            worst_ratio = worst_ratio.max((r / 2f64.powf(alpha) - 1.0).abs());
        }
        worst_const = worst_const.max(op.apply(&Field::constant(op.grid().clone(), 1.0)).unwrap().sup_norm());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_ratio <= 1e-3 && worst_const <= 1e-10 && secs < 30.0,
        format!("max |ratio/2^α - 1| = {worst_ratio:.2e}, max |L[1]| = {worst_const:.2e}, {secs:.1}s"),
    )
}

fn eigen_solver() -> Outcome {
    let start = Instant::now();
    let n = 1024;
    let k = KernelSpec::homogeneous(1, 1.0).unwrap();
    let op = assemble_torus_operator(&k, &TorusGrid::new(n).unwrap()).unwrap();
    let constant = Field::constant(op.grid().clone(), 1.3);
    let c = principal_eigenpair(&op, &constant, 1e-12).unwrap();
    let err_const = (c.lambda1 + 1.3).abs();

    let mu = Field::from_fn(op.grid().clone(), |x| 1.0 + 0.5 * (2.0 * PI * x).cos());
    let p = principal_eigenpair(&op, &mu, 1e-12).unwrap();
    let dense = op.to_dmatrix(1.0, &mu.values().iter().map(|m| -m).collect::<Vec<_>>());
    let sym = (&dense + dense.transpose()) * 0.5;
    let oracle = SymmetricEigen::new(sym).eigenvalues.min();
    let err_periodic = (p.lambda1 - oracle).abs();
    let positive = c.eigenfunction().min() > 0.0 && p.eigenfunction().min() > 0.0;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        err_const <= 1e-8 && err_periodic <= 1e-6 && positive && secs < 60.0,
        format!(
            "constant err {err_const:.2e}, periodic λ1 {:.10} vs dense {oracle:.10}, positive {positive}, {secs:.1}s",
            p.lambda1
        ),
    )
}

fn steady_state() -> Outcome {
    let k = KernelSpec::homogeneous(1, 1.0).unwrap();
    let op = assemble_torus_operator(&k, &TorusGrid::new(512).unwrap()).unwrap();
    let tol = 1e-12;
    let mut details = Vec::new();
    let mut pass = true;
    for amp in [0.0, 0.5] {
        let r = ReactionSpec::logistic(1.0, amp).unwrap();
        let spec = ProblemSpec::new(k.clone(), r.clone(), InitialData::algebraic(1.0, &k).unwrap()).unwrap();
        let mu = Field::from_fn(op.grid().clone(), |x| r.mu_1d(x));
        let pair = principal_eigenpair(&op, &mu, 1e-12).unwrap();
        let below = positive_steady_state(&spec, &op, &pair, tol).unwrap();
        let above = steady_state_from_above(&spec, &op, tol).unwrap();
        let residual = steady_residual(&op, &spec, &below.u_plus).unwrap();
        let monotone = below.increments.iter().all(|d| *d >= -below.slack);
        let gap =
            below.u_plus.values().iter().zip(above.u_plus.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if amp == 0.0 {
            let dev = below.u_plus.values().iter().map(|u| (u - 1.0).abs()).fold(0.0, f64::max);
            pass &= dev <= 1e-8;
            details.push(format!("constant |u⁺-1| {dev:.2e}"));
        } else {
            pass &= residual < 1e-6;
            details.push(format!("periodic residual {residual:.2e}"));
        }
        pass &= monotone && gap <= 1e-5;
        details.push(format!("monotone {monotone}, two-sided gap {gap:.2e}"));
    }
    outcome(pass, details.join(", "))
}

fn front_exponent(runs: &[Run]) -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for run in runs {
        let s = run.json("fronts/summary.json");
        let (rate, rate_text) = run.row("front_rate");
        let (quality, _) = run.row("front_fit_quality");
        let (levels, level_text) = run.row("level_independence");
        let cfg: ExperimentConfig = serde_json::from_value(run.json("config.json")).unwrap();
        let radius = final_radius(run, &cfg);
        let within = radius.is_some_and(|r| r <= 0.5 * cfg.line.r_max);
        let secs = run.seconds(&[Stage::Evolve, Stage::Fronts]);
        pass &= rate && quality && levels && within && secs < 600.0;
        details.push(format!(
            "{}: slope {:.4} r² {:.5} {rate_text} {level_text} r(T) {:.2e} {secs:.0}s",
            run.name,
            s["fit"]["slope"].as_f64().unwrap_or(f64::NAN),
            s["fit"]["r2"].as_f64().unwrap_or(f64::NAN),
            radius.unwrap_or(f64::NAN)
        ));
    }
    outcome(pass, details.join("; "))
}

/// Last recorded radius of the fit level.
fn final_radius(run: &Run, cfg: &ExperimentConfig) -> Option<f64> {
    let k = cfg.levels.iter().position(|h| *h == cfg.fit_level)?;
    let text = fs::read_to_string(run.out.join(format!("fronts/front_{k:02}.csv"))).ok()?;
    text.lines().last()?.split(',').nth(1)?.parse().ok()
}

fn homogenized_profile(runs: &[Run]) -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for run in runs {
        let (ok, text) = run.row("profile_decrease");
        pass &= ok;
        details.push(format!("{}: {text}", run.name));
    }
    outcome(pass, details.join("; "))
}

fn dichotomy(run: &Run) -> Outcome {
    let rows: Vec<(bool, String)> =
        ["outer_sup", "inner_ratio", "inner_average"].iter().map(|id| run.row(id)).collect();
    let t = run.json("fronts/summary.json")["late"]["t"].as_f64().unwrap_or(f64::NAN);
    outcome(
        rows.iter().all(|r| r.0),
        format!("{} at t = {t}: {}", run.name, rows.iter().map(|r| r.1.as_str()).collect::<Vec<_>>().join(", ")),
    )
}

fn barriers(runs: &[Run]) -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for run in runs {
        let rows: Vec<(bool, String)> =
            ["sandwich", "acc_slope", "negative_controls"].iter().map(|id| run.row(id)).collect();
        pass &= rows.iter().all(|r| r.0);
        details.push(format!("{}: {}", run.name, rows.iter().map(|r| r.1.as_str()).collect::<Vec<_>>().join(", ")));
    }
    outcome(pass, details.join("; "))
}

fn csv_files(root: &Path, dir: &Path, acc: &mut Vec<PathBuf>) {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            csv_files(root, &p, acc);
        } else if p.extension().is_some_and(|e| e == "csv") {
            acc.push(p.strip_prefix(root).unwrap().to_path_buf());
        }
    }
}

fn determinism(root: &Path) -> Outcome {
    let (a, b) = match (run_config("smoke", &root.join("first")), run_config("smoke", &root.join("second"))) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e),
    };
    let (mut fa, mut fb) = (Vec::new(), Vec::new());
    csv_files(&a.out, &a.out, &mut fa);
    csv_files(&b.out, &b.out, &mut fb);
    let differing: Vec<String> = fa
        .iter()
        .filter(|f| fs::read(a.out.join(f)).ok() != fs::read(b.out.join(f)).ok())
        .map(|f| f.display().to_string())
        .collect();
    outcome(
        fa == fb && !fa.is_empty() && differing.is_empty(),
        format!("{} CSV files compared, {} differ {:?}", fa.len(), differing.len(), differing),
    )
}

fn main() -> ExitCode {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut record = |name: &'static str, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };
    record("1 operator correctness", operator_correctness());
    record("2 eigen solver", eigen_solver());
    record("3 steady state", steady_state());

    let names = ["constant-logistic-a05", "constant-logistic-a1", "constant-logistic-a15"];
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for name in names {
        match run_config(name, &root) {
            Ok(r) => runs.push(r),
            Err(e) => failures.push(e),
        }
    }
    if failures.is_empty() {
        record("4 front exponent", front_exponent(&runs));
        record("5 homogenized profile", homogenized_profile(&runs));
        record("6 dichotomy and invasion", dichotomy(&runs[1]));
        record("7 barriers and decay constant", barriers(&runs));
    } else {
        let msg = failures.join("; ");
        for name in
            ["4 front exponent", "5 homogenized profile", "6 dichotomy and invasion", "7 barriers and decay constant"]
        {
            record(name, outcome(false, msg.clone()));
        }
    }
    record("8 determinism", determinism(&root.join("determinism")));

    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
