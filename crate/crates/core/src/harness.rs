//! Running experiments from config files and writing their artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::criteria::{run_criterion, CriterionReport};
use crate::error::{Error, Result};
use crate::io::{write_atomic, Table};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Exit statuses of the command line tool.
pub mod status {
    pub const PASS: i32 = 0;
    pub const CRITERION_FAILED: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const VALIDATION: i32 = 3;
}

/// Status for a run that stopped with `err`. Anything raised after the
/// config validated counts as a failed criterion.
pub fn exit_status(err: &Error) -> i32 {
    match err {
        Error::Parse(_) => status::PARSE,
        Error::Validation { .. } | Error::InvalidParameter { .. } => status::VALIDATION,
        _ => status::CRITERION_FAILED,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionStatus {
    pub criterion: u8,
    pub kind: ExperimentKind,
    pub passed: bool,
    pub summary: String,
    pub metrics: BTreeMap<String, f64>,
    pub elapsed_secs: f64,
}

impl From<&CriterionReport> for CriterionStatus {
    fn from(r: &CriterionReport) -> Self {
        CriterionStatus {
            criterion: r.criterion,
            kind: r.kind,
            passed: r.passed,
            summary: r.summary.clone(),
            metrics: r.metrics.clone(),
            elapsed_secs: r.elapsed_secs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub criteria: Vec<CriterionStatus>,
    /// Paths relative to the output directory, manifest excluded.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn exit_status(&self) -> i32 {
        if self.passed() {
            status::PASS
        } else {
            status::CRITERION_FAILED
        }
    }
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(o) = &self.out {
            cfg.out_dir.clone_from(o);
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.replicas {
            cfg.replicas = m;
        }
    }
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    s.push(b'\n');
    Ok(s)
}

fn relative(dir: &Path, p: &Path) -> String {
    p.strip_prefix(dir).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

/// Writes the tables, the report and the resolved config under `dir`;
/// returns the written paths relative to `dir`.
fn write_report(dir: &Path, cfg: &ExperimentConfig, report: &CriterionReport) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for t in &report.tables {
        out.push(relative(dir, &t.write(dir)?));
    }
    // The report minus wall-clock time, so reruns are byte-identical.
    let mut stable = report.clone();
    stable.elapsed_secs = 0.0;
    let path = dir.join("report.json");
    write_atomic(&path, &json(&stable)?)?;
    out.push(relative(dir, &path));
    let path = dir.join("config.toml");
    write_atomic(&path, cfg.to_toml()?.as_bytes())?;
    out.push(relative(dir, &path));
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    pub report: CriterionReport,
}

/// Runs one validated config and writes its artifacts to `cfg.out_dir`.
pub fn run_config(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let started = now();
    let report = run_criterion(cfg)?;
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir)?;
    let artifacts = write_report(dir, cfg, &report)?;
    let manifest = RunManifest {
        config_hash: cfg.hash()?,
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        started_unix: started,
        finished_unix: now(),
        criteria: vec![CriterionStatus::from(&report)],
        artifacts,
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    write_atomic(&manifest_path, &json(&manifest)?)?;
    Ok(RunOutcome { manifest, manifest_path, report })
}

/// Loads a config file, applies overrides and runs it.
pub fn run_experiment(path: &Path, overrides: &Overrides) -> Result<RunOutcome> {
    let mut cfg = ExperimentConfig::load(path)?;
    overrides.apply(&mut cfg);
    run_config(&cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Fast,
    Full,
}

impl std::str::FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Tier::Fast),
            "full" => Ok(Tier::Full),
            _ => Err(Error::Validation { field: "tier".into(), reason: format!("unknown tier `{s}`, expected fast or full") }),
        }
    }
}

impl Tier {
    pub fn kinds(self) -> Vec<ExperimentKind> {
        ExperimentKind::ALL.iter().copied().filter(|k| self == Tier::Full || k.is_deterministic()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct VerifySummary {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    /// Criteria that failed or raised, with the reason.
    pub failures: Vec<(ExperimentKind, String)>,
}

impl VerifySummary {
    pub fn exit_status(&self) -> i32 {
        if self.failures.is_empty() {
            status::PASS
        } else {
            status::CRITERION_FAILED
        }
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        for c in &self.manifest.criteria {
            s.push_str(&format!(
                "{:>2}  {:<20} {:<4}  {:>7.1}s  {}\n",
                c.criterion,
                c.kind.name(),
                if c.passed { "PASS" } else { "FAIL" },
                c.elapsed_secs,
                c.summary
            ));
        }
        s
    }
}

/// Runs the preset of every experiment in `tier`, one subdirectory each,
/// plus `summary.csv` and a combined manifest in `out`.
pub fn verify_all(tier: &str, out: &Path, overrides: &Overrides) -> Result<VerifySummary> {
    verify_kinds(&tier.parse::<Tier>()?.kinds(), out, overrides)
}

/// [`verify_all`] restricted to the given experiments.
pub fn verify_kinds(kinds: &[ExperimentKind], out: &Path, overrides: &Overrides) -> Result<VerifySummary> {
    let started = now();
    std::fs::create_dir_all(out)?;
    let mut statuses = Vec::new();
    let mut artifacts = Vec::new();
    let mut failures = Vec::new();
    let mut hashes = Vec::new();
    for &kind in kinds {
        let mut cfg = ExperimentConfig::preset(kind);
        Overrides { out: None, ..overrides.clone() }.apply(&mut cfg);
        cfg.out_dir = out.join(kind.name());
        hashes.push(cfg.hash()?);
        match cfg.validate().and_then(|_| run_criterion(&cfg)) {
            Ok(report) => {
                std::fs::create_dir_all(&cfg.out_dir)?;
                for a in write_report(&cfg.out_dir, &cfg, &report)? {
                    artifacts.push(format!("{}/{a}", kind.name()));
                }
                if !report.passed {
                    failures.push((kind, report.summary.clone()));
                }
                statuses.push(CriterionStatus::from(&report));
            }
            Err(e) => {
                failures.push((kind, e.to_string()));
                statuses.push(CriterionStatus {
                    criterion: kind.criterion(),
                    kind,
                    passed: false,
                    summary: format!("error: {e}"),
                    metrics: BTreeMap::new(),
                    elapsed_secs: 0.0,
                });
            }
        }
    }
    let mut t = Table::new("summary", &["criterion", "kind", "passed", "summary"]);
    for c in &statuses {
        t.push([c.criterion.to_string(), c.kind.name().to_owned(), c.passed.to_string(), c.summary.clone()]);
    }
    artifacts.push(relative(out, &t.write(out)?));
    use sha2::{Digest, Sha256};
    let combined = Sha256::digest(hashes.join("\n").as_bytes());
    let manifest = RunManifest {
        config_hash: combined.iter().map(|b| format!("{b:02x}")).collect(),
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        started_unix: started,
        finished_unix: now(),
        criteria: statuses,
        artifacts,
    };
    let manifest_path = out.join(MANIFEST_FILE);
    write_atomic(&manifest_path, &json(&manifest)?)?;
    Ok(VerifySummary { manifest, manifest_path, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statuses_follow_error_kind() {
        assert_eq!(exit_status(&Error::Parse("x".into())), 2);
        assert_eq!(exit_status(&Error::Validation { field: "n_sweep".into(), reason: String::new() }), 3);
        assert_eq!(exit_status(&Error::MissingSnapshot(1.0)), 1);
    }

    #[test]
    fn unknown_tier_is_a_validation_error() {
        let e = verify_all("medium", Path::new("/nonexistent"), &Overrides::default()).unwrap_err();
        assert!(matches!(e, Error::Validation { ref field, .. } if field == "tier"));
        assert!(Tier::Fast.kinds().iter().all(|k| k.is_deterministic()));
        assert_eq!(Tier::Full.kinds().len(), 13);
    }

    #[test]
    fn overrides_replace_fields() {
        let mut c = ExperimentConfig::preset(ExperimentKind::Qv);
        Overrides { out: Some("elsewhere".into()), seed: Some(9), replicas: Some(3) }.apply(&mut c);
        assert_eq!((c.out_dir.to_str().unwrap(), c.seed, c.replicas), ("elsewhere", 9, 3));
    }
}
