use levyfront::pipeline::report::RowStatus;
use levyfront::pipeline::{regrade, run_pipeline, ExperimentConfig, PipelineError, ProblemRef, Stage, StageStatus};
use std::fs;
use std::path::{Path, PathBuf};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn smoke() -> ExperimentConfig {
    ExperimentConfig::load(&configs().join("smoke.json")).unwrap()
}

fn csv_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn smoke_run_completes_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_pipeline(&smoke(), dir.path()).unwrap();
    assert_eq!(m.stages.len(), 7);
    assert!(m.stages.iter().all(|s| s.status == StageStatus::Completed));
    assert!(m.verify(dir.path()).is_empty());
    assert!(m.verdict.as_ref().unwrap().passed);
    let html = fs::read_to_string(dir.path().join("report/report.html")).unwrap();
    assert!(html.contains("<svg"));
    assert!(html.contains("rescaled-profile section is omitted"));
}

#[test]
fn reruns_reproduce_csv_payloads_bitwise() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(&smoke(), a.path()).unwrap();
    run_pipeline(&smoke(), b.path()).unwrap();
    let files = csv_files(a.path());
    assert!(files.len() > 10);
    assert_eq!(files, csv_files(b.path()));
    for f in files {
        assert_eq!(fs::read(a.path().join(&f)).unwrap(), fs::read(b.path().join(&f)).unwrap(), "{}", f.display());
    }
}

#[test]
fn order_outside_range_is_rejected_at_validation() {
    let mut cfg = smoke();
    let ProblemRef::Inline(doc) = &mut cfg.problem else { panic!("problem is inlined on load") };
    doc.alpha = 2.5;
    let dir = tempfile::tempdir().unwrap();
    match run_pipeline(&cfg, dir.path()) {
        Err(PipelineError::Stage { stage: Stage::Validate, message }) => {
            assert!(message.contains("order α must lie in (0,2)"), "{message}")
        }
        other => panic!("expected a validation failure, got {other:?}"),
    }
}

#[test]
fn failed_evolve_stage_leaves_a_partial_report() {
    let mut cfg = smoke();
    // The front reaches half the window well before the horizon.
    cfg.line.r_max = 40.0;
    cfg.line.outer_nodes = 32;
    let dir = tempfile::tempdir().unwrap();
    let err = run_pipeline(&cfg, dir.path()).unwrap_err();
    assert!(matches!(err, PipelineError::Stage { stage: Stage::Evolve, .. }), "{err}");

    let m = regrade(dir.path()).unwrap();
    assert_eq!(m.stage(Stage::Evolve).unwrap().status, StageStatus::Failed);
    assert_eq!(m.stage(Stage::Bounds).unwrap().status, StageStatus::Skipped);
    let v = m.verdict.unwrap();
    assert!(!v.passed);
    assert_eq!(v.row("steady_residual").unwrap().status, RowStatus::Pass);
    assert_eq!(v.row("sandwich").unwrap().status, RowStatus::Missing);
    let html = fs::read_to_string(dir.path().join("report/report.html")).unwrap();
    assert!(html.contains("Stage fronts skipped"));
}

#[test]
fn tampered_artifacts_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&smoke(), dir.path()).unwrap();
    fs::write(dir.path().join("eigen/eigen.csv"), "x,g,exp_g\n").unwrap();
    fs::remove_file(dir.path().join("steady/steady.csv")).unwrap();
    match regrade(dir.path()) {
        Err(PipelineError::MissingArtifacts(paths)) => {
            assert_eq!(paths, vec!["eigen/eigen.csv".to_string(), "steady/steady.csv".to_string()])
        }
        other => panic!("expected missing artifacts, got {other:?}"),
    }
}

#[test]
fn invalid_schedules_are_rejected() {
    let mut cfg = smoke();
    cfg.eps = vec![0.25, 0.5];
    assert!(matches!(cfg.check(), Err(PipelineError::Config(_))));
    let mut cfg = smoke();
    cfg.tolerances.eigen = 0.0;
    assert!(matches!(cfg.check(), Err(PipelineError::Config(_))));
    let mut cfg = smoke();
    cfg.checks = vec!["no_such_row".into()];
    assert!(matches!(cfg.check(), Err(PipelineError::Config(_))));
}

#[test]
fn missing_problem_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("smoke.json")).unwrap().replace("constant-logistic-a1", "absent");
    let path = dir.path().join("cfg.json");
    fs::write(&path, text).unwrap();
    assert!(matches!(ExperimentConfig::load(&path), Err(PipelineError::Config(_))));
}

#[test]
fn config_hash_tracks_content() {
    let a = smoke();
    let mut b = smoke();
    assert_eq!(a.hash(), b.hash());
    b.seed += 1;
    assert_ne!(a.hash(), b.hash());
}
