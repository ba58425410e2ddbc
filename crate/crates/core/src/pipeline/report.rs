//! Acceptance verdict and the self-contained HTML report.

use super::{ExperimentConfig, PipelineError, RunManifest, Stage, StageStatus};
use crate::plot::escape;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub const ROW_IDS: [&str; 18] = [
    "assumptions",
    "eigen_residual",
    "eigen_positive",
    "invasion",
    "steady_residual",
    "steady_monotone",
    "steady_two_sided",
    "front_rate",
    "front_fit_quality",
    "level_independence",
    "profile_decrease",
    "outer_sup",
    "inner_ratio",
    "inner_average",
    "sandwich",
    "barrier_residuals",
    "acc_slope",
    "negative_controls",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Pass,
    Fail,
    /// Evaluated but not graded by this config.
    Info,
    /// The producing stage did not complete.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub id: String,
    pub value: String,
    pub threshold: String,
    pub status: RowStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub rows: Vec<Row>,
    pub passed: bool,
}

impl Verdict {
    pub fn row(&self, id: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.id == id)
    }
}

/// Stage outputs read back from disk; `None` where the stage did not complete.
struct Inputs {
    validation: Option<Value>,
    eigen: Option<Value>,
    steady: Option<Value>,
    fronts: Option<Value>,
    bounds: Option<Value>,
}

fn load(out: &Path, manifest: &RunManifest, stage: Stage, file: &str, missing: &mut Vec<String>) -> Option<Value> {
    if !manifest.completed(stage) {
        return None;
    }
    let rel = format!("{}/{file}", stage.name());
    match fs::read_to_string(out.join(&rel)).ok().and_then(|t| serde_json::from_str(&t).ok()) {
        Some(v) => Some(v),
        None => {
            missing.push(rel);
            None
        }
    }
}

fn num(v: &Value, path: &[&str]) -> Option<f64> {
    path.iter().try_fold(v, |v, k| v.get(k))?.as_f64()
}

fn fmt(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

fn rows(inp: &Inputs) -> Vec<(String, Option<(String, bool)>, String)> {
    let mut rows = Vec::new();
    let mut push = |id: &str, eval: Option<(String, bool)>, threshold: &str| {
        rows.push((id.to_string(), eval, threshold.to_string()))
    };

    let v = inp.validation.as_ref();
    push("assumptions", v.and_then(|v| v["passed"].as_bool()).map(|p| (p.to_string(), p)), "all checks pass");

    let e = inp.eigen.as_ref();
    push("eigen_residual", e.and_then(|e| num(e, &["residual"])).map(|r| (fmt(r), r <= 1e-6)), "≤ 1e-6");
    push("eigen_positive", e.and_then(|e| num(e, &["min_eigenfunction"])).map(|m| (fmt(m), m > 0.0)), "> 0");
    let lambda1 = e.and_then(|e| num(e, &["lambda1"]));
    push("invasion", lambda1.map(|l| (fmt(l), l < 0.0)), "λ1 < 0");

    let s = inp.steady.as_ref();
    push("steady_residual", s.and_then(|s| num(s, &["residual_recomputed"])).map(|r| (fmt(r), r < 1e-6)), "< 1e-6");
    push("steady_monotone", s.and_then(|s| s["nondecreasing"].as_bool()).map(|m| (m.to_string(), m)), "nondecreasing");
    push("steady_two_sided", s.and_then(|s| num(s, &["two_sided_gap"])).map(|g| (fmt(g), g <= 1e-5)), "≤ 1e-5");

    let f = inp.fronts.as_ref();
    let predicted = f.and_then(|f| num(f, &["predicted_slope"]));
    let slope = f.and_then(|f| num(f, &["fit", "slope"]));
    push(
        "front_rate",
        f.map(|_| match (slope, predicted) {
            (Some(s), Some(p)) => (format!("{} vs {}", fmt(s), fmt(p)), (s / p - 1.0).abs() <= 0.10),
            _ => ("no fit".into(), false),
        }),
        "within 10%",
    );
    push(
        "front_fit_quality",
        f.map(|f| num(f, &["fit", "r2"]).map_or(("no fit".into(), false), |r2| (fmt(r2), r2 >= 0.99))),
        "r² ≥ 0.99",
    );
    push(
        "level_independence",
        f.map(|f| {
            let slopes: Vec<Option<f64>> =
                f["levels"].as_array().into_iter().flatten().map(|l| num(l, &["fit", "slope"])).collect();
            match (slopes.first().copied().flatten(), slopes.last().copied().flatten()) {
                (Some(a), Some(b)) if slopes.len() >= 2 => {
                    let rel = (a - b).abs() / (0.5 * (a + b)).abs();
                    (fmt(rel), rel <= 0.05)
                }
                _ => ("fewer than two fitted levels".into(), false),
            }
        }),
        "extreme levels within 5%",
    );
    let profiles = f.and_then(|f| f["profiles"].as_array().filter(|p| !p.is_empty()));
    push(
        "profile_decrease",
        profiles.map(|p| {
            let d: Vec<Option<f64>> = p.iter().map(|r| num(r, &["deviation"])).collect();
            let text = d.iter().map(|x| x.map_or("-".into(), fmt)).collect::<Vec<_>>().join(", ");
            let ok = d.iter().all(Option::is_some) && d.windows(2).all(|w| w[1] < w[0]);
            (text, ok)
        }),
        "strictly decreasing in ε",
    );
    push("outer_sup", f.and_then(|f| num(f, &["late", "outer_sup"])).map(|v| (fmt(v), v < 1e-3)), "< 1e-3");
    push(
        "inner_ratio",
        f.map(|f| num(f, &["late", "inner_ratio"]).map_or(("empty region".into(), false), |v| (fmt(v), v < 0.05))),
        "< 0.05",
    );
    push(
        "inner_average",
        f.map(|f| match (num(f, &["late", "inner_average"]), num(f, &["late", "weak_mean"])) {
            (Some(a), Some(m)) => (format!("{} vs {}", fmt(a), fmt(m)), (a / m - 1.0).abs() <= 0.02),
            _ => ("empty region".into(), false),
        }),
        "within 2% of weak mean",
    );

    let b = inp.bounds.as_ref();
    push(
        "sandwich",
        b.map(|b| {
            let (lo, hi) = (
                num(b, &["violations", "lower"]).unwrap_or(f64::NAN),
                num(b, &["violations", "upper"]).unwrap_or(f64::NAN),
            );
            (format!("{lo} lower, {hi} upper"), lo == 0.0 && hi == 0.0)
        }),
        "no violations (tol 1e-8)",
    );
    push(
        "barrier_residuals",
        b.map(|b| {
            let sub = num(b, &["residual_extremes", "sub_violations"]).unwrap_or(f64::NAN);
            let sup = num(b, &["residual_extremes", "super_violations"]).unwrap_or(f64::NAN);
            (format!("{sub} sub, {sup} super"), sub == 0.0 && sup == 0.0)
        }),
        "correct signs",
    );
    push(
        "acc_slope",
        b.map(|b| match (num(b, &["acc", "slope"]), num(b, &["acc", "predicted_slope"])) {
            (Some(s), Some(p)) => (format!("{} vs {}", fmt(s), fmt(p)), (s / p - 1.0).abs() <= 0.15),
            _ => ("not available".into(), false),
        }),
        "within 15%",
    );
    push(
        "negative_controls",
        b.map(|b| {
            let c = &b["controls"];
            let a = num(c, &["half_a0", "sub_violations"]).unwrap_or(0.0)
                + num(c, &["half_a0", "sandwich_lower"]).unwrap_or(0.0);
            let bb = num(c, &["half_b0", "super_violations"]).unwrap_or(0.0)
                + num(c, &["half_b0", "sandwich_upper"]).unwrap_or(0.0);
            (format!("A0/2: {a}, B0/2: {bb}"), a > 0.0 && bb > 0.0)
        }),
        "both detected",
    );
    rows
}

fn grade(cfg: &ExperimentConfig, manifest: &RunManifest, out: &Path) -> Result<(Verdict, Inputs), PipelineError> {
    let mut missing = Vec::new();
    let inp = Inputs {
        validation: load(out, manifest, Stage::Validate, "validation.json", &mut missing),
        eigen: load(out, manifest, Stage::Eigen, "eigen.json", &mut missing),
        steady: load(out, manifest, Stage::Steady, "steady.json", &mut missing),
        fronts: load(out, manifest, Stage::Fronts, "summary.json", &mut missing),
        bounds: load(out, manifest, Stage::Bounds, "bounds.json", &mut missing),
    };
    if !missing.is_empty() {
        return Err(PipelineError::MissingArtifacts(missing));
    }
    let graded = |id: &str| cfg.checks.is_empty() || cfg.checks.iter().any(|c| c == id);
    let rows: Vec<Row> = rows(&inp)
        .into_iter()
        .filter(|(id, eval, _)| !(id == "profile_decrease" && eval.is_none() && cfg.eps.is_empty()))
        .map(|(id, eval, threshold)| {
            let (value, status) = match eval {
                None => ("stage did not complete".to_string(), RowStatus::Missing),
                Some((v, _)) if !graded(&id) => (v, RowStatus::Info),
                Some((v, true)) => (v, RowStatus::Pass),
                Some((v, false)) => (v, RowStatus::Fail),
            };
            Row { id, value, threshold, status }
        })
        .collect();
    let passed = rows.iter().all(|r| match r.status {
        RowStatus::Pass | RowStatus::Info => true,
        RowStatus::Fail => false,
        RowStatus::Missing => !graded(&r.id),
    });
    Ok((Verdict { rows, passed }, inp))
}

fn svg(out: &Path, rel: &str) -> Option<String> {
    fs::read_to_string(out.join(rel)).ok()
}

fn gap(html: &mut String, manifest: &RunManifest, stage: Stage) {
    let status = manifest.stage(stage).map_or("not run".to_string(), |r| match r.status {
        StageStatus::Failed => format!("failed: {}", r.error.as_deref().unwrap_or("")),
        StageStatus::Skipped => "skipped after an earlier failure".into(),
        StageStatus::Completed => "completed".into(),
    });
    let _ = write!(html, r#"<p class="gap">Stage {stage} {}</p>"#, escape(&status));
}

fn kv_table(html: &mut String, rows: &[(&str, String)]) {
    html.push_str("<table>");
    for (k, v) in rows {
        let _ = write!(html, "<tr><th>{}</th><td>{}</td></tr>", escape(k), escape(v));
    }
    html.push_str("</table>");
}

fn render(cfg: &ExperimentConfig, manifest: &RunManifest, out: &Path, verdict: &Verdict, inp: &Inputs) -> String {
    let mut h = String::new();
    let _ = write!(
        h,
        "<!DOCTYPE html><html><head><meta charset=\"utf-8\"><title>{0}</title><style>\
         body{{font-family:sans-serif;max-width:960px;margin:2em auto}}table{{border-collapse:collapse;margin:1em 0}}\
         td,th{{border:1px solid #ccc;padding:3px 8px;text-align:left}}.pass{{color:#161}}.fail{{color:#b11}}\
         .missing,.gap{{color:#a60}}.info{{color:#666}}</style></head><body><h1>{0}</h1>",
        escape(&cfg.name)
    );
    kv_table(
        &mut h,
        &[
            ("config hash", manifest.config_hash.clone()),
            ("seed", manifest.seed.to_string()),
            ("version", manifest.version.clone()),
            ("verdict", if verdict.passed { "PASS".into() } else { "FAIL".into() }),
        ],
    );

    h.push_str("<h2>Stages</h2><table><tr><th>stage</th><th>status</th><th>wall time (s)</th></tr>");
    for r in &manifest.stages {
        let _ = write!(h, "<tr><td>{}</td><td>{:?}</td><td>{:.2}</td></tr>", r.stage, r.status, r.wall_seconds);
    }
    h.push_str("</table>");

    h.push_str("<h2>Principal eigenvalue and steady state</h2>");
    match (&inp.eigen, &inp.steady) {
        (Some(e), Some(s)) => kv_table(
            &mut h,
            &[
                ("λ1", fmt(num(e, &["lambda1"]).unwrap_or(f64::NAN))),
                ("eigen residual", fmt(num(e, &["residual"]).unwrap_or(f64::NAN))),
                ("u⁺ min", fmt(num(s, &["min"]).unwrap_or(f64::NAN))),
                ("u⁺ max", fmt(num(s, &["max"]).unwrap_or(f64::NAN))),
                ("weak mean of u⁺", fmt(num(s, &["weak_mean"]).unwrap_or(f64::NAN))),
                ("steady residual", fmt(num(s, &["residual_recomputed"]).unwrap_or(f64::NAN))),
            ],
        ),
        (None, _) => gap(&mut h, manifest, Stage::Eigen),
        (_, None) => gap(&mut h, manifest, Stage::Steady),
    }

    h.push_str("<h2>Front propagation</h2>");
    match &inp.fronts {
        Some(f) => {
            h.push_str("<table><tr><th>level h</th><th>slope</th><th>r²</th><th>predicted</th></tr>");
            let predicted = fmt(num(f, &["predicted_slope"]).unwrap_or(f64::NAN));
            for l in f["levels"].as_array().into_iter().flatten() {
                let cell =
                    |k: &str| num(l, &["fit", k]).map_or_else(|| l["error"].as_str().unwrap_or("-").to_string(), fmt);
                let _ = write!(
                    h,
                    "<tr><td>{}</td><td>{}</td><td>{}</td><td>{predicted}</td></tr>",
                    fmt(num(l, &["level"]).unwrap_or(f64::NAN)),
                    escape(&cell("slope")),
                    escape(&cell("r2"))
                );
            }
            h.push_str("</table>");
            if let Some(s) = svg(out, "fronts/front.svg") {
                h.push_str(&s);
            }
            if cfg.eps.is_empty() {
                h.push_str("<p>No ε values configured; the rescaled-profile section is omitted.</p>");
            } else {
                h.push_str("<h2>Rescaled profiles</h2><table><tr><th>ε</th><th>sup deviation</th></tr>");
                for p in f["profiles"].as_array().into_iter().flatten() {
                    let dev =
                        num(p, &["deviation"]).map_or_else(|| p["error"].as_str().unwrap_or("-").to_string(), fmt);
                    let _ = write!(
                        h,
                        "<tr><td>{}</td><td>{}</td></tr>",
                        fmt(num(p, &["eps"]).unwrap_or(f64::NAN)),
                        escape(&dev)
                    );
                }
                h.push_str("</table>");
                if let Some(s) = svg(out, "fronts/profile.svg") {
                    h.push_str(&s);
                }
            }
        }
        None => gap(&mut h, manifest, Stage::Fronts),
    }

    h.push_str("<h2>Barriers</h2>");
    match &inp.bounds {
        Some(b) => {
            let c = &b["constants"];
            let mut rows: Vec<(&str, String)> =
                ["d_hat", "A0", "B0", "c0", "C0"].iter().map(|k| (*k, num(c, &[k]).map_or("-".into(), fmt))).collect();
            rows.push(("ACC slope", num(b, &["acc", "slope"]).map_or("-".into(), fmt)));
            rows.push(("sandwich violations", format!("{} / {}", b["violations"]["lower"], b["violations"]["upper"])));
            kv_table(&mut h, &rows);
        }
        None => gap(&mut h, manifest, Stage::Bounds),
    }

    h.push_str("<h2>Acceptance</h2><table><tr><th>check</th><th>value</th><th>threshold</th><th>status</th></tr>");
    for r in &verdict.rows {
        let class = format!("{:?}", r.status).to_lowercase();
        let _ = write!(
            h,
            "<tr><td>{}</td><td>{}</td><td>{}</td><td class=\"{class}\">{}</td></tr>",
            r.id,
            escape(&r.value),
            escape(&r.threshold),
            class.to_uppercase()
        );
    }
    h.push_str("</table></body></html>\n");
    h
}

/// Grade the run and write `report/report.html` and `report/acceptance.json`.
pub fn write_report(manifest: &RunManifest, out: &Path) -> Result<Verdict, PipelineError> {
    let path = out.join("config.json");
    let text = fs::read_to_string(&path).map_err(|e| PipelineError::Report(format!("{}: {e}", path.display())))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| PipelineError::Report(e.to_string()))?;
    let (v, inputs) = grade(&cfg, manifest, out)?;
    let dir = out.join("report");
    fs::create_dir_all(&dir).map_err(|e| PipelineError::Report(e.to_string()))?;
    fs::write(dir.join("report.html"), render(&cfg, manifest, out, &v, &inputs))
        .map_err(|e| PipelineError::Report(e.to_string()))?;
    let value = serde_json::to_value(&v).map_err(|e| PipelineError::Report(e.to_string()))?;
    crate::discretize::io::write_json(&dir.join("acceptance.json"), &value)?;
    Ok(v)
}
