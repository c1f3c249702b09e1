use std::path::Path;
use std::process::Command as Process;

use axum::body::Body;
use axum::http::Request;
use clap::Parser;
use engagecast_cli::stages::Envelope;
use engagecast_cli::{run, service_config, Cli, Layout};
use engagecast_core::eval::{EvalReport, Target};
use engagecast_core::predictors::PredictorKind;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

fn cli(out: &Path, args: &[&str]) -> Result<Value, engagecast_cli::CliError> {
    let mut argv = vec!["engagecast", "--out-dir", out.to_str().unwrap()];
    argv.extend_from_slice(args);
    run(&Cli::parse_from(argv))
}

fn small_pipeline(out: &Path, seed: &str) {
    cli(out, &["--seed", seed, "synth", "--students", "40", "--weeks", "14"]).unwrap();
    cli(out, &["--seed", seed, "ingest"]).unwrap();
    cli(out, &["--seed", seed, "benchmark", "--replicates", "200"]).unwrap();
}

fn report(out: &Path) -> EvalReport {
    let text = std::fs::read_to_string(out.join("reports/benchmark.json")).unwrap();
    serde_json::from_str::<Envelope<EvalReport>>(&text).unwrap().report
}

#[test]
fn every_stage_runs_and_the_benchmark_covers_all_predictors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    small_pipeline(out, "7");
    let r = report(out);
    assert_eq!(r.results.len(), 14 * 2);
    assert!(r.results.iter().all(|x| x.kind != PredictorKind::Lstm && x.mae.is_finite()));
    for t in Target::ALL {
        for k in PredictorKind::implemented() {
            assert!(Layout::new(out).model(t, k).exists(), "{t:?} {k}");
        }
    }
    let table2 = std::fs::read_to_string(out.join("reports/table2.csv")).unwrap();
    assert_eq!(table2.lines().count(), 1 + 28);

    cli(out, &["fit-afm"]).unwrap();
    cli(out, &["features"]).unwrap();
    cli(out, &["importance"]).unwrap();
    cli(out, &["trends"]).unwrap();
    cli(out, &["ablate", "--targets", "minutes", "--replicates", "100"]).unwrap();
    for f in [
        "afm_fits.json",
        "reports/features.json",
        "reports/importance_agreement.json",
        "reports/importance_minutes_gradient_boost.svg",
        "reports/trends_skills.svg",
        "reports/ablation_minutes.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let agreement: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("reports/importance_agreement.json")).unwrap()).unwrap();
    // five attributable kinds per target
    assert_eq!(agreement["report"].as_array().unwrap().len(), 2 * 10);
}

#[test]
fn same_seed_gives_byte_identical_artifacts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    small_pipeline(a.path(), "11");
    small_pipeline(b.path(), "11");
    for f in ["reports/benchmark.json", "reports/table2.csv", "reports/forecasts.csv", "models/skills.gradient_boost.model.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let c = tempfile::tempdir().unwrap();
    small_pipeline(c.path(), "12");
    assert_ne!(std::fs::read(a.path().join("reports/benchmark.json")).unwrap(), std::fs::read(c.path().join("reports/benchmark.json")).unwrap());
}

#[test]
fn last_value_on_a_hand_panel() {
    // every student shares one series, so the holdout MAE does not depend on the split
    let minutes = [10.0, 20.0, 0.0, 30.0, 30.0, 5.0, 15.0, 15.0];
    let skills = [1, 2, 0, 3, 3, 1, 2, 2];
    let mut csv = String::from("student_id,week,minutes,problems,opportunities,y_min,y_skill,excluded\n");
    for s in 0..10 {
        for w in 0..8 {
            csv.push_str(&format!("S{s},2011-W{:02},{},3,6,{},{},false\n", w + 1, minutes[w], minutes[w], skills[w]));
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("hand.csv");
    std::fs::write(&panel, csv).unwrap();
    cli(dir.path(), &["benchmark", "--panel", panel.to_str().unwrap(), "--predictors", "last_value", "--replicates", "50"]).unwrap();
    let r = report(dir.path());
    // |Δ| along the series: 10 20 30 0 25 10 0 and 1 2 3 0 2 1 0
    let m = r.result(PredictorKind::LastValue, Target::Minutes).unwrap().mae;
    let s = r.result(PredictorKind::LastValue, Target::Skills).unwrap().mae;
    assert!((m - 95.0 / 7.0).abs() < 1e-12, "{m}");
    assert!((s - 9.0 / 7.0).abs() < 1e-12, "{s}");
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"seed": 3, "synth": {"n_students": 9, "n_weeks": 6}}"#).unwrap();
    let v = cli(dir.path(), &["--config", cfg.to_str().unwrap(), "synth", "--weeks", "5"]).unwrap();
    assert_eq!(v["summary"]["students"], 9);
    assert_eq!(v["summary"]["weeks"], 5);
}

#[test]
fn errors_are_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_engagecast");
    let out = Process::new(bin).args(["--out-dir", dir.path().to_str().unwrap(), "ingest"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["code"], "missing_input");

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"synth": {"n_students": 0}}"#).unwrap();
    let out = Process::new(bin)
        .args(["--out-dir", dir.path().to_str().unwrap(), "synth"])
        .env("ENGAGECAST_CONFIG", &bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["code"], "invalid_config");

    let panel = dir.path().join("panel.csv");
    std::fs::write(&panel, "a,b\n1,2\n").unwrap();
    let out = Process::new(bin)
        .args(["--out-dir", dir.path().to_str().unwrap(), "benchmark", "--panel", panel.to_str().unwrap()])
        .output()
        .unwrap();
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["code"], "schema_mismatch");
}

#[test]
fn binary_prints_a_json_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = Process::new(env!("CARGO_BIN_EXE_engagecast"))
        .args(["synth", "--students", "3", "--weeks", "4"])
        .env("ENGAGECAST_OUT_DIR", dir.path())
        .env("ENGAGECAST_SEED", "5")
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["command"], "synth");
    assert!(dir.path().join("events.csv").exists());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn service_loads_benchmark_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_path_buf();
    tokio::task::spawn_blocking({
        let out = out.clone();
        move || {
            cli(&out, &["synth", "--students", "30", "--weeks", "12"]).unwrap();
            cli(&out, &["ingest"]).unwrap();
            cli(&out, &["benchmark", "--predictors", "adams_p50,ridge", "--replicates", "50"]).unwrap();
        }
    })
    .await
    .unwrap();
    let cfg = engagecast_cli::RunConfig::default().resolve().unwrap();
    let svc = service_config(&cfg, &Layout::new(&out), PredictorKind::Ridge);
    let state = engagecast_service::build_state(&svc).unwrap();
    let app = engagecast_service::router(state, None);
    let res = app.oneshot(Request::get("/health").body(Body::empty()).unwrap()).await.unwrap();
    let body: Value = serde_json::from_slice(&res.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(body["models"]["minutes"], "RIDGE");
    assert_eq!(body["students"], 30);
}
