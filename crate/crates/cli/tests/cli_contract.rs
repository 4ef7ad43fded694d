//! Contract tests for the `trion` binary: help surfaces, exit codes,
//! validation messages and the reproduce id listing.

use std::path::{Path, PathBuf};
use std::process::Command;

fn trion() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trion"))
}

fn tmpdir(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn help_on_every_subcommand() {
    for args in [
        vec!["--help"],
        vec!["simulate", "--help"],
        vec!["fit", "--help"],
        vec!["reproduce", "--help"],
        vec!["validate", "--help"],
    ] {
        let out = trion().args(&args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {out:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn invalid_flags_exit_nonzero_without_outputs() {
    let dir = tmpdir("cli_invalid_flag");
    let out = trion()
        .args(["simulate", "pumping", "--bogus-flag"])
        .env("TRION_OUT_DIR", &dir)
        .output()
        .unwrap();
    assert!(!out.status.success());
    // no partial outputs
    assert_eq!(std::fs::read_dir(&dir).unwrap().count(), 0);

    let out = trion()
        .args(["simulate", "frobnicate", "--config", "x.toml"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn validate_accepts_bundled_and_rejects_broken() {
    let dir = tmpdir("cli_validate");
    let good = write_config(
        &dir,
        "good.toml",
        trion_cli::config::bundled("xm_pumping").unwrap(),
    );
    let out = trion().args(["validate"]).arg(&good).output().unwrap();
    assert!(out.status.success(), "{out:?}");

    let broken = trion_cli::config::bundled("xm_pumping")
        .unwrap()
        .replace("gx_wg = \"0.12857 ns^-1\"", "gx_wg = \"-1 ns^-1\"");
    let bad = write_config(&dir, "bad.toml", &broken);
    let out = trion().args(["validate"]).arg(&bad).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("gx_wg"), "{stderr}");
}

#[test]
fn kind_mismatch_is_rejected() {
    let dir = tmpdir("cli_kind");
    let cfg = write_config(
        &dir,
        "pumping.toml",
        trion_cli::config::bundled("xm_pumping").unwrap(),
    );
    let out = trion()
        .args(["simulate", "ramsey", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("does not match"), "{stderr}");
}

#[test]
fn unknown_reproduce_id_lists_known_ids() {
    let out = trion().args(["reproduce", "fig9"]).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    for id in ["fig2", "fig3a", "fig3b", "fig4b", "fig4c"] {
        assert!(stderr.contains(id), "{stderr}");
    }
}

#[test]
fn reproduce_spectroscopy_targets_pass() {
    // the fast reference targets run end to end with all rows in tolerance
    // (the sweep-heavy ones are covered by the acceptance suite)
    for id in ["fig3a", "fig3b"] {
        let dir = tmpdir(&format!("cli_reproduce_{id}"));
        let out = trion()
            .args(["reproduce", id, "--out"])
            .arg(&dir)
            .output()
            .unwrap();
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(out.status.success(), "{id}: {stdout}");
        assert!(stdout.contains("ok"), "{id}: {stdout}");
        assert!(!stdout.contains("FAIL"), "{id}: {stdout}");
    }
}

#[test]
fn simulate_writes_manifest_and_deterministic_csv() {
    let dir_a = tmpdir("cli_det_a");
    let dir_b = tmpdir("cli_det_b");
    let cfg = write_config(
        &dir_a,
        "cfg.toml",
        trion_cli::config::bundled("xm_pumping").unwrap(),
    );
    for dir in [&dir_a, &dir_b] {
        let out = trion()
            .args(["simulate", "pumping", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir)
            .args(["--seed", "5", "--threads", "2"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(dir_a.join("xm_pumping_histogram.csv")).unwrap();
    let b = std::fs::read(dir_b.join("xm_pumping_histogram.csv")).unwrap();
    assert_eq!(a, b);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir_a.join("xm_pumping_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["rng_algorithm"], "philox4x64-10");
    assert_eq!(manifest["master_seed"], 5);
    assert!(manifest["config_sha256"].as_str().unwrap().len() == 64);

    // json format emits the table as json instead
    let out = trion()
        .args(["simulate", "pumping", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir_a)
        .args(["--format", "json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir_a.join("xm_pumping_histogram.json").exists());
}

#[test]
fn fit_subcommand_round_trips_simulated_data() {
    let dir = tmpdir("cli_fit");
    let cfg = write_config(
        &dir,
        "cfg.toml",
        trion_cli::config::bundled("xm_pumping").unwrap(),
    );
    let out = trion()
        .args(["simulate", "pumping", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = trion()
        .args(["fit", "exponential", "--data"])
        .arg(dir.join("xm_pumping_histogram.csv"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let gamma = v["fit"]["params"]["gamma_osp"]["value"].as_f64().unwrap();
    assert!(gamma > 0.0 && gamma < 1.0, "gamma = {gamma}");
    assert!(v["fidelity_lower_bound"].as_f64().unwrap() > 0.98);
}
