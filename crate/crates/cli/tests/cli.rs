//! End-to-end tests against the built binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ringtx_core::config::{validate_config, ModulationMode};
use ringtx_core::oscillator::RingModel;
use ringtx_core::scenario::Scenario;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ringtx"))
}

fn repo_config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

/// A fast phase-domain scenario config written into `dir`.
fn small_config(dir: &Path) -> PathBuf {
    let sim = validate_config(ringtx_core::profiles::paper()).unwrap();
    let mut scn = Scenario::new(sim, ModulationMode::Dpsk16, 64, RingModel::PhaseDomain);
    scn.outputs = [
        ringtx_core::scenario::OutputKind::Summary,
        ringtx_core::scenario::OutputKind::Constellation,
        ringtx_core::scenario::OutputKind::Spectrum,
    ]
    .into_iter()
    .collect();
    let path = dir.join("small.conf");
    fs::write(&path, scn.to_config_text()).unwrap();
    path
}

fn run_ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}, stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn simulate_writes_artifacts_and_reports_clean_loopback() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out_dir = tmp.path().join("out");
    let out = bin()
        .args(["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .arg("simulate")
        .output()
        .unwrap();
    let stdout = run_ok(&out);
    assert!(stdout.contains("ser=0"), "stdout: {stdout}");
    for f in ["run_summary", "constellation.csv", "spectrum.csv"] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn simulate_summary_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let mut outputs = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = tmp.path().join(sub);
        let out = bin()
            .args(["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
            .arg("simulate")
            .output()
            .unwrap();
        run_ok(&out);
        outputs.push(fs::read(out_dir.join("run_summary")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "summaries differ between runs");
}

#[test]
fn seed_flag_changes_the_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let mut stdouts = Vec::new();
    for seed in ["7", "8"] {
        let out = bin()
            .args([
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                tmp.path().join(seed).to_str().unwrap(),
                "--seed",
                seed,
            ])
            .arg("simulate")
            .output()
            .unwrap();
        stdouts.push(run_ok(&out));
    }
    assert!(stdouts[0].contains("seed=7"));
    assert!(stdouts[1].contains("seed=8"));
}

#[test]
fn malformed_config_exits_2_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.conf");
    fs::write(&cfg, "osc.n_stages = banana\n").unwrap();
    let out = bin()
        .args(["--config", cfg.to_str().unwrap()])
        .arg("simulate")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("osc.n_stages"), "stderr: {stderr}");
}

#[test]
fn missing_config_flag_exits_2() {
    let out = bin().arg("simulate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn calibrate_is_deterministic_and_cross_model_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = repo_config("scaled.conf");
    let mut stdouts = Vec::new();
    for sub in ["a", "b"] {
        let out = bin()
            .args([
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                tmp.path().join(sub).to_str().unwrap(),
            ])
            .arg("calibrate")
            .output()
            .unwrap();
        stdouts.push(run_ok(&out));
    }
    assert_eq!(stdouts[0], stdouts[1], "calibrate output not deterministic");
    let parse = |key: &str| -> f64 {
        stdouts[0]
            .lines()
            .find_map(|l| l.strip_prefix(key))
            .unwrap()
            .parse()
            .unwrap()
    };
    let circuit = parse("circuit_cdis_farad=");
    let phase = parse("phase_cdis_farad=");
    assert!(
        ((circuit - phase) / circuit).abs() < 0.2,
        "models disagree: {circuit:e} vs {phase:e}"
    );
    let fragment = tmp.path().join("a/cdis_fragment.conf");
    let text = fs::read_to_string(fragment).unwrap();
    assert!(text.starts_with("osc.c_dis = "), "fragment: {text}");
}

#[test]
fn calibrate_rejects_zero_target() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "--config",
            repo_config("scaled.conf").to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
        ])
        .args(["calibrate", "--target-lsb-deg", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sweep_drift_rows_stay_error_free() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = bin()
        .args(["--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()])
        .args([
            "sweep",
            "--axis",
            "impairments.freq_drift_ppm",
            "--values",
            "-200,-100,0,100,200",
        ])
        .output()
        .unwrap();
    let stdout = run_ok(&out);
    let rows: Vec<&str> = stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[2], "0", "ser column in row '{row}'");
    }
    assert!(tmp.path().join("sweep.csv").is_file());
}

#[test]
fn sweep_unknown_axis_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = bin()
        .args(["--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()])
        .args(["sweep", "--axis", "osc.nonsense", "--values", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("osc.nonsense"));
}

#[test]
fn spectrum_subcommand_reports_suppression() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = bin()
        .args(["--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()])
        .arg("spectrum")
        .output()
        .unwrap();
    let stdout = run_ok(&out);
    assert!(stdout.contains("suppression_db@+"), "stdout: {stdout}");
    assert!(tmp.path().join("spectrum.csv").is_file());
}

#[test]
fn model_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    // scaled.conf declares circuit mode; force phase mode and shrink runtime
    let text = fs::read_to_string(repo_config("scaled.conf")).unwrap();
    let text = text.replace("scenario.n_symbols = 200", "scenario.n_symbols = 32");
    let cfg = tmp.path().join("scaled_small.conf");
    fs::write(&cfg, text).unwrap();
    let out = bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            tmp.path().join("o").to_str().unwrap(),
            "--model",
            "phase",
        ])
        .arg("simulate")
        .output()
        .unwrap();
    let stdout = run_ok(&out);
    assert!(stdout.contains("model=phase"), "stdout: {stdout}");
}
