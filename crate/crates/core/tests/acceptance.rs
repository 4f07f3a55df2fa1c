//! Runs every acceptance experiment at its reference parameters and prints
//! one PASS/FAIL line per criterion. `ACCEPTANCE_ONLY=5,11` restricts the
//! run to the listed criteria.

use std::process::ExitCode;

use slowbond::config::{ExperimentConfig, ExperimentKind};
use slowbond::criteria::run_criterion;

fn selected() -> Vec<ExperimentKind> {
    let only: Option<Vec<u8>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    ExperimentKind::ALL
        .iter()
        .copied()
        .filter(|k| only.as_ref().is_none_or(|o| o.contains(&k.criterion())))
        .collect()
}

fn main() -> ExitCode {
    let mut failed = 0;
    for kind in selected() {
        let cfg = ExperimentConfig::preset(kind);
        match run_criterion(&cfg) {
            Ok(r) => {
                println!("{}", r.line());
                failed += usize::from(!r.passed);
            }
            Err(e) => {
                println!("FAIL criterion {:>2} [{}]: error: {e}", kind.criterion(), kind.name());
                failed += 1;
            }
        }
    }
    println!("acceptance: {failed} failing");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
