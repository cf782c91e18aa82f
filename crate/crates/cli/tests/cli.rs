use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn zis(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zis"))
        .args(args)
        .current_dir(cwd)
        .env("ZIS_THREADS", "2")
        .output()
        .expect("spawn zis")
}

fn ok(args: &[&str], cwd: &Path) {
    let o = zis(args, cwd);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn no_arguments_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = zis(&[], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn help_and_version_succeed() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(zis(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(zis(&["--version"], dir.path()).status.code(), Some(0));
    assert_eq!(zis(&["evaluate", "--bogus"], dir.path()).status.code(), Some(1));
}

#[test]
fn empty_input_reports_no_records() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.csv"), "").unwrap();
    fs::write(dir.path().join("truth.json"), "{\"groups\":[]}").unwrap();
    for scheme in ["karapanos", "truong"] {
        let o = zis(
            &["evaluate", "--scheme", scheme, "--input", "empty.csv", "--truth", "truth.json", "--out", "ev"],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(2), "{scheme}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains("no records"), "{scheme}: {err}");
    }
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_zis"))
        .args(["datagen", "--out", "ds"])
        .current_dir(dir.path())
        .env("ZIS_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

fn pipeline(cwd: &Path) {
    ok(&["datagen", "--out", "ds", "--duration-s", "60", "--seed", "7"], cwd);
    ok(&["features", "--scheme", "karapanos", "--dataset", "ds", "--out", "k.csv", "--t", "5,10"], cwd);
    ok(&["evaluate", "--scheme", "karapanos", "--input", "k.csv", "--dataset", "ds", "--out", "ev_k"], cwd);
    ok(&["features", "--scheme", "schurmann", "--dataset", "ds", "--out", "s.csv"], cwd);
    ok(&["evaluate", "--scheme", "schurmann", "--input", "s.csv", "--dataset", "ds", "--out", "ev_s"], cwd);
    ok(&["fingerprint-randomness", "--input", "s.csv", "--out", "rand.json", "--split", "31"], cwd);
    fs::write(cwd.join("ml.toml"), "grid = \"quick\"\nfolds = 3\n").unwrap();
    ok(&["features", "--scheme", "truong", "--dataset", "ds", "--out", "t.csv"], cwd);
    ok(
        &["--config", "ml.toml", "evaluate", "--scheme", "truong", "--input", "t.csv", "--dataset", "ds", "--out", "ev_t"],
        cwd,
    );
    ok(
        &["robustness", "--scheme", "karapanos", "--source", "ev_k/results.csv", "--input", "k.csv", "--dataset", "ds", "--out", "rob.csv"],
        cwd,
    );
}

#[test]
fn full_pipeline_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let results = fs::read_to_string(dir.path().join("ev_k/results.csv")).unwrap();
    let mut lines = results.lines();
    assert_eq!(lines.next(), Some("scheme,scenario,subscenario,t,eer,starred,threshold,availability"));
    let rows: Vec<&str> = lines.collect();
    // two interval lengths, each over the full run and two halves
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.starts_with("karapanos,")));
    assert!(dir.path().join("ev_k/curves/karapanos_full_t5.csv").exists());
    assert!(dir.path().join("ev_t/model_t10.json").exists());
    assert!(fs::read_to_string(dir.path().join("ev_t/metrics.csv")).unwrap().starts_with("model_id,auc,eer,accuracy"));
    assert!(fs::read_to_string(dir.path().join("rob.csv")).unwrap().lines().count() == 3);
}

#[test]
fn runs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    for f in ["ds/audio/dev00.wav", "ds/ground_truth.json", "k.csv", "s.csv", "t.csv", "rand.json", "ev_k/results.csv", "ev_t/results.csv", "ev_t/model_t10.json", "rob.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
