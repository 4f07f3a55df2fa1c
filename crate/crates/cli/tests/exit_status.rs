use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use slowbond::config::{ExperimentConfig, ExperimentKind};
use slowbond::harness::RunManifest;

fn slowbond(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slowbond")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, cfg: &ExperimentConfig) -> String {
    let p = dir.join(name);
    fs::write(&p, cfg.to_toml().unwrap()).unwrap();
    p.to_str().unwrap().to_owned()
}

fn folding(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(ExperimentKind::Folding);
    c.out_dir = out.to_path_buf();
    c
}

#[test]
fn empty_sweep_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = folding(dir.path());
    c.n_sweep.clear();
    let text = c.to_toml().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, text).unwrap();
    let o = slowbond(&["localtime", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("n_sweep"));
}

#[test]
fn unknown_tolerance_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = folding(dir.path());
    cfg.tolerances.insert("discrepency".into(), 1e-9);
    let p = write_config(dir.path(), "t.toml", &cfg);
    let o = slowbond(&["localtime", "--config", &p]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("discrepency"));
}

#[test]
fn malformed_and_unknown_keys_are_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.toml");
    fs::write(&p, "kind = \"folding\"\nalpha = [").unwrap();
    let o = slowbond(&["localtime", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let base = folding(dir.path()).to_toml().unwrap();
    fs::write(&p, format!("speed = 3\n{base}")).unwrap();
    let o = slowbond(&["localtime", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("speed"));

    // The profile table comes last, so this lands inside it.
    fs::write(&p, format!("{base}\nsteepness = 3\n")).unwrap();
    let o = slowbond(&["localtime", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("steepness"));

    let o = slowbond(&["localtime", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn folding_passes_and_manifest_lists_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), "f.toml", &folding(&out));
    let o = slowbond(&["localtime", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let mut rdr = csv::Reader::from_path(out.join("folding.csv")).unwrap();
    let col = rdr.headers().unwrap().iter().position(|h| h == "discrepancy").unwrap();
    let mut rows = 0;
    for rec in rdr.records() {
        let d: f64 = rec.unwrap()[col].parse().unwrap();
        assert!(d < 1e-9);
        rows += 1;
    }
    assert_eq!(rows, 41 * 41 * 9);

    let m: RunManifest = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert!(m.passed());
    let mut listed = m.artifacts.clone();
    listed.push("manifest.json".into());
    listed.sort();
    let mut found: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    found.sort();
    assert_eq!(listed, found);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for run in ["a", "b"] {
        let mut c = ExperimentConfig::preset(ExperimentKind::Qv);
        c.replicas = 20;
        c.n_sweep = vec![32];
        c.out_dir = dir.path().join(run);
        let p = write_config(dir.path(), &format!("{run}.toml"), &c);
        let o = slowbond(&["fluctuations", "--config", &p]);
        assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
        bytes.push((fs::read(c.out_dir.join("martingale.csv")).unwrap(), fs::read(c.out_dir.join("report.json")).unwrap()));
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn failed_criterion_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = folding(&dir.path().join("run"));
    c.tolerances.insert("discrepancy".into(), 1e-300);
    let p = write_config(dir.path(), "strict.toml", &c);
    let o = slowbond(&["localtime", "--config", &p]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL criterion  5"));
}

#[test]
fn wrong_subcommand_and_tier_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "f.toml", &folding(dir.path()));
    let o = slowbond(&["moments", "--config", &p]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("kind"));

    let o = slowbond(&["verify", "--tier", "medium", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("tier"));
}

#[test]
fn overrides_reach_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sg");
    let o = slowbond(&["semigroup", "--out", out.to_str().unwrap(), "--seed", "11"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let c = ExperimentConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!(c.seed, 11);
}
