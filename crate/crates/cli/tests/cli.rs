use std::path::Path;
use std::process::{Command, Output};

fn molgate(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_molgate"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value_after(text: &str, prefix: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(prefix))
        .unwrap_or_else(|| panic!("no `{prefix}` line in:\n{text}"))
        .trim()
        .parse()
        .unwrap()
}

fn manifest(dir: &Path, command: &str) -> serde_json::Value {
    let entry = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| {
            p.file_name()
                .unwrap()
                .to_string_lossy()
                .starts_with(&format!("manifest_{command}_"))
        })
        .expect("manifest written");
    serde_json::from_str(&std::fs::read_to_string(entry).unwrap()).unwrap()
}

#[test]
fn propagate_defaults_give_high_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let o = molgate(&["propagate"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let f = value_after(&text, "F = ");
    assert!(f > 0.9999 && f <= 1.0, "F = {f}");
    let infidelity = value_after(&text, "1-F = ");
    assert!((infidelity - (1.0 - f)).abs() < 1e-9);
}

#[test]
fn zero_coupling_requires_override() {
    let dir = tempfile::tempdir().unwrap();
    let refused = molgate(&["propagate", "--J", "0"], dir.path());
    assert_eq!(refused.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("--no-ddi-check"));

    let forced = molgate(&["propagate", "--J", "0", "--no-ddi-check"], dir.path());
    assert!(forced.status.success());
    let f = value_after(&stdout(&forced), "F = ");
    assert!(
        f < 0.5,
        "uncoupled molecules cannot realise CZ, got F = {f}"
    );
}

#[test]
fn malformed_config_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "pulse_width = \"wide\"\n").unwrap();
    let o = molgate(
        &["propagate", "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());

    std::fs::write(&cfg, "pulse_width = 1.5\n").unwrap();
    let o = molgate(
        &["propagate", "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));

    let o = molgate(&["propagate", "--motional-state", "squeezed"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "coupling = 2.0\n").unwrap();
    let o = molgate(
        &["propagate", "--config", cfg.to_str().unwrap(), "--J", "4.5"],
        dir.path(),
    );
    assert!(o.status.success());
    assert!(stdout(&o).contains("J/Omega = 4.5"));
    assert_eq!(manifest(dir.path(), "propagate")["config"]["coupling"], 4.5);
}

#[test]
fn manifest_lists_every_output_with_its_hash() {
    let dir = tempfile::tempdir().unwrap();
    let o = molgate(&["phase-scan"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path(), "phase-scan");
    let files = m["files"].as_array().unwrap();
    assert_eq!(files.len(), 2);
    for f in files {
        let path = Path::new(f["path"].as_str().unwrap());
        let bytes = std::fs::read(path).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap(), bytes.len() as u64);
        let hex = f["sha256"].as_str().unwrap();
        assert_eq!(hex.len(), 64);
        assert!(stdout(&o).contains(path.to_str().unwrap()));
    }
    assert!(m["summary"]["min_fidelity"].as_f64().unwrap() > 0.9999);
}

#[test]
fn composite_tier_propagates_one_input() {
    let dir = tempfile::tempdir().unwrap();
    let o = molgate(
        &[
            "propagate",
            "--tier",
            "composite",
            "--n-max",
            "8",
            "--ell-over-L",
            "0.04",
            "--motional-state",
            "one",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let f = value_after(&stdout(&o), "F = ");
    assert!(f > 0.999, "F = {f}");
}

#[test]
fn certify_passes_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = molgate(&["certify"], dir.path());
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(!text.contains("FAIL"));
    assert_eq!(manifest(dir.path(), "certify")["summary"]["passed"], true);
}
