use std::path::Path;
use std::process::Command;

use ctraj_cli::pipeline::{run_pipeline, Method, RunDir};
use ctraj_cli::{Config, PipelineError, Stage};
use ctraj_core::geometry::Vec3;

fn tiny() -> Config {
    let mut c = Config::desk();
    c.phantom.dims = [24, 24, 24];
    c.phantom.voxel_size = 0.5;
    c.trajectory.n_candidates = 40;
    c.trajectory.radius = 60.0;
    c.trajectory.sdd = 120.0;
    c.detector.rows = 24;
    c.detector.cols = 24;
    c.detector.pitch = 2.0;
    c.voi.half_extent = Vec3::new(2.0, 2.0, 2.0);
    c.background.rows = 4;
    c.background.cols = 4;
    c.m_hemisphere = 32;
    c.k = 5;
    c.alpha = 0.0;
    c.selector.hidden_size = 8;
    c.selector.layers = 1;
    c.selector.max_loops = 5;
    c.reconstruction.dims = [12, 12, 12];
    c.reconstruction.sweeps = 3;
    c.evaluation.cnr_roi.half_extent = Vec3::new(2.0, 2.0, 2.0);
    c.evaluation.cnr_background.center = Vec3::new(-4.5, 4.5, 4.5);
    c.evaluation.cnr_background.half_extent = Vec3::new(1.0, 1.0, 1.0);
    c.validate().unwrap();
    c
}

fn write_config(dir: &Path, cfg: &Config) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    path
}

fn ctraj() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ctraj"))
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::new(dir.path().join("run"));
    run_pipeline(&tiny(), &run, &Stage::ALL, &[Method::Gru, Method::Greedy]).unwrap();
    for stage in Stage::ALL {
        assert!(run.stage_dir(stage).join("stage.json").exists(), "{stage}");
    }
    let csv = std::fs::read_to_string(run.report_csv()).unwrap();
    let names: Vec<&str> = csv.lines().skip(1).filter_map(|l| l.split(',').next()).collect();
    for n in ["circular", "greedy", "gru", "reference"] {
        assert!(names.contains(&n), "{n} missing from {csv}");
    }
    assert!(run.root.join("config.json").exists());
}

#[test]
fn stages_rerun_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny();
    let run = RunDir::new(dir.path());
    run_pipeline(&cfg, &run, &[Stage::Simulate, Stage::Metrics, Stage::Completeness], &[]).unwrap();
    run_pipeline(&cfg, &run, &[Stage::Optimize], &[Method::Greedy]).unwrap();
    assert!(run.selection(Method::Greedy).exists());
    assert!(!run.selection(Method::Gru).exists());
}

#[test]
fn missing_inputs_name_the_failing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_pipeline(&tiny(), &RunDir::new(dir.path()), &[Stage::Optimize], &[Method::Greedy]).unwrap_err();
    assert_eq!(err.stage(), Some(Stage::Optimize));
    assert!(err.to_string().starts_with("stage optimize:"), "{err}");
}

#[test]
fn k_above_survivors_is_an_optimize_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny();
    cfg.alpha = 0.9;
    cfg.k = 40;
    let err = run_pipeline(&cfg, &RunDir::new(dir.path()), &Stage::ALL, &[Method::Greedy]).unwrap_err();
    assert!(matches!(err, PipelineError::Stage { stage: Stage::Optimize, .. }), "{err}");
}

#[test]
fn binary_runs_stages_and_prints_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &tiny());
    let out = dir.path().join("run");
    let status = ctraj()
        .args(["pipeline", "--stages", "simulate,metrics,completeness,optimize", "--method", "greedy", "--threads", "2"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let o = ctraj().args(["reconstruct", "--config"]).arg(&config).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = ctraj().args(["evaluate", "--config"]).arg(&config).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("greedy"));
    assert!(!stdout.contains("gru"));
}

#[test]
fn binary_rejects_bad_usage() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &tiny());
    let o = ctraj().args(["optimize", "--method", "simplex", "--config"]).arg(&config).output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    let mut v: serde_json::Value = serde_json::from_str(&tiny().to_json()).unwrap();
    v["extra"] = serde_json::json!(true);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let o = ctraj().args(["simulate", "--config"]).arg(&bad).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid config"));

    let o = ctraj().args(["metrics", "--config"]).arg(&config).arg("--out").arg(dir.path().join("empty")).output().unwrap();
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: stage metrics:"));
}

#[test]
fn seeded_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: u64| {
        let mut cfg = tiny();
        cfg.override_seed(seed);
        let r = RunDir::new(dir.path().join(name));
        run_pipeline(&cfg, &r, &Stage::ALL, &[Method::Gru]).unwrap();
        let sel = std::fs::read(r.selection(Method::Gru)).unwrap();
        (sel, std::fs::read(r.report_csv()).unwrap())
    };
    let a = run("a", 11);
    assert_eq!(a, run("b", 11));
    assert_ne!(a.1, run("c", 12).1);
}
