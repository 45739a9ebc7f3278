//! The `lr-ergo` binary: exit codes, error documents, manifests, determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lr_ergo_cli::{parse_config, run::Experiment};
use lr_ergo_core::ergodic::{ray_average, RaySpec};
use lr_ergo_core::QuadratureSpec;
use serde_json::Value;

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.toml"))
}

fn lr_ergo(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lr-ergo"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("LR_ERGO_DIM_CAP")
        .output()
        .expect("binary runs")
}

fn error_doc(o: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&o.stderr);
    let line = stderr
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .unwrap_or_else(|| panic!("no JSON on stderr: {stderr}"));
    serde_json::from_str(line).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn kms_check_succeeds_and_writes_manifest() {
    let out = tempfile::tempdir().unwrap();
    let cfg = golden("kms-check");
    let o = lr_ergo(
        &["kms-check", "--config", cfg.to_str().unwrap()],
        out.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["tool"], "lr-ergo");
    assert_eq!(manifest["command"], "kms-check");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"][0]["file"], "kms.csv");
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
    let csv = fs::read_to_string(out.path().join("kms.csv")).unwrap();
    for row in csv.lines().skip(1) {
        let residual: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(residual <= 1e-9);
    }
}

#[test]
fn misspelled_command_is_a_config_error() {
    let out = tempfile::tempdir().unwrap();
    let cfg = golden("moments");
    let o = lr_ergo(&["moment", "--config", cfg.to_str().unwrap()], out.path());
    assert_eq!(o.status.code(), Some(2));
    let doc = error_doc(&o);
    assert_eq!(doc["error"]["kind"], "config");
    let msg = doc["error"]["message"].as_str().unwrap();
    assert!(
        msg.contains("mean-square") && msg.contains("spacelike-probe"),
        "{msg}"
    );

    // valid command, but not the one in the file
    let o = lr_ergo(&["hydro", "--config", cfg.to_str().unwrap()], out.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_report_lines_and_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(golden("moments"))
        .unwrap()
        .replace("extent = [2]", "extent = [30]");
    let cfg = write_config(dir.path(), &text);
    let o = lr_ergo(
        &["moments", "--config", cfg.to_str().unwrap()],
        &dir.path().join("out"),
    );
    assert_eq!(o.status.code(), Some(2));
    let doc = error_doc(&o);
    assert!(doc["error"]["message"]
        .as_str()
        .unwrap()
        .contains("1073741824"));
    assert_eq!(doc["error"]["line"], 2);
}

#[test]
fn dim_cap_override_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = golden("moments");
    let o = Command::new(env!("CARGO_BIN_EXE_lr-ergo"))
        .args(["moments", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(dir.path())
        .env("LR_ERGO_DIM_CAP", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(error_doc(&o)["error"]["message"]
        .as_str()
        .unwrap()
        .contains("Hilbert dimension 4"));
}

#[test]
fn numerical_guard_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(golden("kms-check"))
        .unwrap()
        .replace("beta = 0.5", "beta = 1000.0");
    let cfg = write_config(dir.path(), &text);
    let o = lr_ergo(
        &["kms-check", "--config", cfg.to_str().unwrap()],
        &dir.path().join("out"),
    );
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_doc(&o)["error"]["kind"], "numerical_guard");
}

#[test]
fn failed_check_exits_4_after_writing_outputs() {
    let dir = tempfile::tempdir().unwrap();
    // the tracial state is not KMS at beta = 1 for a non-trivial Hamiltonian
    let text = fs::read_to_string(golden("kms-check"))
        .unwrap()
        .replace("kind = \"gibbs\"\nbeta = 0.5", "kind = \"tracial\"")
        .replace("name = \"kms-check\"", "name = \"kms-check\"\nbeta = 1.0");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = lr_ergo(&["kms-check", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_doc(&o)["error"]["kind"], "violation");
    assert!(out.join("kms.csv").exists() && out.join("manifest.json").exists());
}

#[test]
fn sweep_with_one_cell_equals_the_scalar_average() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(golden("ergodic-sweep"))
        .unwrap()
        .replace("v = [0.0, 0.5]", "v = [0.7]")
        .replace("T = [1.0, 2.0]", "T = [2.5]");
    let cfg_path = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = lr_ergo(
        &["ergodic-sweep", "--config", cfg_path.to_str().unwrap()],
        &out,
    );
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    let cells: Vec<f64> = rows[0]
        .split(',')
        .skip(1)
        .map(|c| c.parse().unwrap())
        .collect();

    let cfg = parse_config(&text).unwrap();
    let exp = Experiment::build(&cfg).unwrap();
    let r = ray_average(
        &exp.state,
        &exp.ops["Z0"],
        &exp.ops["Z1"],
        &RaySpec::chain(0.7),
        2.5,
        &QuadratureSpec::default(),
        &exp.engine,
    )
    .unwrap();
    assert_eq!(cells[2], r.value.re);
    assert_eq!(cells[3], r.value.im);
}

/// CSV bodies with the timing column removed.
fn numeric_outputs(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            let skip = text
                .lines()
                .next()
                .unwrap()
                .split(',')
                .position(|c| c == "wall_ms");
            let body: Vec<String> = text
                .lines()
                .map(|l| {
                    l.split(',')
                        .enumerate()
                        .filter(|(j, _)| Some(*j) != skip)
                        .map(|(_, c)| c)
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                body.join("\n"),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    for command in ["ergodic-sweep", "hydro", "lr-certify", "localize"] {
        let cfg = golden(command);
        let mut seen = Vec::new();
        for workers in ["1", "3", "1"] {
            let out = tempfile::tempdir().unwrap();
            let o = lr_ergo(
                &[
                    command,
                    "--config",
                    cfg.to_str().unwrap(),
                    "--workers",
                    workers,
                ],
                out.path(),
            );
            assert_eq!(o.status.code(), Some(0));
            seen.push(numeric_outputs(out.path()));
        }
        assert!(!seen[0].is_empty());
        assert_eq!(seen[0], seen[1], "{command}: workers 1 vs 3");
        assert_eq!(seen[0], seen[2], "{command}: rerun");
    }
}
