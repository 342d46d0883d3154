//! End-to-end checks of the `ctxboot` binary.

use std::path::Path;
use std::process::{Command, Output};

use ctxboot::sequences::VlmcModel;

fn ctxboot(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxboot"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn simulate_and_fit(cwd: &Path) {
    let sim = ctxboot(&["simulate", "--reference", "order3", "--n", "2000", "--seed", "1", "--out", "sim"], cwd);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let fit = ctxboot(&["fit", "--input", "sim/sequence.txt", "--B", "200", "--seed", "2", "--out", "run"], cwd);
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
}

#[test]
fn missing_input_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctxboot(&["fit", "--input", "absent.txt", "--seed", "1", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn bad_config_exits_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x.txt"), "0 1 1 0 1 0 0 1 1 1 0 1").unwrap();
    for args in [
        vec!["--delta", "1.5"],
        vec!["--B", "10"],
        vec!["--c", "1.0"],
        vec!["--h-star", "0"],
        vec!["--tn", "often"],
        vec!["--alphabet", "0,0"],
    ] {
        let mut full = vec!["fit", "--input", "x.txt", "--seed", "1", "--out", "run"];
        full.extend(args.iter().copied());
        let out = ctxboot(&full, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!dir.path().join("run").exists(), "{args:?}");
    }
}

#[test]
fn unknown_symbol_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x.txt"), "abcab").unwrap();
    let out = ctxboot(
        &["fit", "--input", "x.txt", "--alphabet", "a,b", "--seed", "1", "--out", "run"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn figures_cover_every_node() {
    let dir = tempfile::tempdir().unwrap();
    simulate_and_fit(dir.path());
    let out = ctxboot(&["figures", "--run", "run", "--out", "figs"], dir.path());
    assert!(out.status.success());
    let tree: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/tree.json")).unwrap()).unwrap();
    let nodes = tree["nodes"].as_array().unwrap().len();
    for f in ["figure1_penalties.csv", "figure2_ratios.csv"] {
        let text = std::fs::read_to_string(dir.path().join("figs").join(f)).unwrap();
        assert!(text.starts_with("# manifest: "));
        assert_eq!(text.lines().count(), nodes + 2, "{f}");
    }
}

#[test]
fn figures_without_run_reports_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let out = ctxboot(&["figures", "--run", "empty", "--out", "figs"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn estimate_round_trips_as_a_model() {
    let dir = tempfile::tempdir().unwrap();
    simulate_and_fit(dir.path());
    let text = std::fs::read_to_string(dir.path().join("run/estimate.json")).unwrap();
    let model = VlmcModel::from_json(&text).unwrap();
    assert_eq!(model.alphabet().len(), 2);
    let again = VlmcModel::from_json(&model.to_json()).unwrap();
    assert_eq!(model.to_json(), again.to_json());
    let out = ctxboot(
        &["simulate", "--model", "run/estimate.json", "--n", "300", "--seed", "4", "--out", "resim"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn tampered_manifest_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    simulate_and_fit(dir.path());
    let path = dir.path().join("run/manifest.json");
    let text = std::fs::read_to_string(&path).unwrap().replace("\"seed\": 2", "\"seed\": 3");
    std::fs::write(&path, text).unwrap();
    let out = ctxboot(&["replay", "--manifest", "run/manifest.json", "--out", "again"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn changed_input_blocks_replay() {
    let dir = tempfile::tempdir().unwrap();
    simulate_and_fit(dir.path());
    std::fs::write(dir.path().join("sim/sequence.txt"), "0 1 0 1").unwrap();
    let out = ctxboot(&["replay", "--manifest", "run/manifest.json", "--out", "again"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bands_rejects_ragged_panel() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.csv"), "a,b\n1,2\n3\n").unwrap();
    let out = ctxboot(&["bands", "--input", "p.csv", "--seed", "1", "--out", "b"], dir.path());
    assert!(!out.status.success());
    assert!(!dir.path().join("b").exists());
}
