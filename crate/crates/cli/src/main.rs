use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slowbond::config::{ExperimentConfig, ExperimentKind};
use slowbond::harness::{exit_status, run_config, status, verify_all, Overrides};
use slowbond::{Error, Result};

/// Slow-bond exclusion laboratory.
#[derive(Parser)]
#[command(name = "slowbond", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Particle simulation checked against the moment solvers.
    Simulate(RunArgs),
    /// Mean and correlation solvers: gradient and correlation scaling.
    Moments(RunArgs),
    /// Random-walk local times, folding, lumping and occupation integrals.
    Localtime(RunArgs),
    /// Robin heat semigroup checks.
    Semigroup(RunArgs),
    /// Fluctuation field: initial CLT, martingale, conditional law, remainder.
    Fluctuations(RunArgs),
    /// Run the reference presets and print a summary table.
    Verify(VerifyArgs),
    /// Print the reference config of an experiment as TOML.
    Preset { kind: String },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML). Without it the reference preset is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment to run from its preset when no config is given.
    #[arg(long)]
    kind: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "fast")]
    tier: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { out: self.out.clone(), seed: self.seed, replicas: self.replicas }
    }
}

fn group(cmd: &str) -> &'static [ExperimentKind] {
    use ExperimentKind::*;
    match cmd {
        "simulate" => &[Consistency],
        "moments" => &[MeanScaling, CorrelationScaling, LowerBound],
        "localtime" => &[LocalTimes, Folding, Lumping, Occupation],
        "semigroup" => &[Semigroup],
        _ => &[Clt, Qv, Fluctuations, Remainder],
    }
}

/// Prints to stdout, ignoring a closed pipe.
fn say(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn resolve(cmd: &str, args: &RunArgs) -> Result<ExperimentConfig> {
    let allowed = group(cmd);
    let mut cfg = match (&args.config, &args.kind) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(k)) => ExperimentConfig::preset(k.parse()?),
        (None, None) => ExperimentConfig::preset(allowed[0]),
    };
    if !allowed.contains(&cfg.kind) {
        let names: Vec<_> = allowed.iter().map(|k| k.name()).collect();
        return Err(Error::Validation {
            field: "kind".into(),
            reason: format!("`{}` is not run by `{cmd}`; expected one of {}", cfg.kind.name(), names.join(", ")),
        });
    }
    args.common.overrides().apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cmd: &str, args: &RunArgs) -> Result<i32> {
    let cfg = resolve(cmd, args)?;
    let out = run_config(&cfg)?;
    say(&format!("{}\nmanifest: {}\n", out.report.line(), out.manifest_path.display()));
    Ok(out.manifest.exit_status())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => run("simulate", a),
        Command::Moments(a) => run("moments", a),
        Command::Localtime(a) => run("localtime", a),
        Command::Semigroup(a) => run("semigroup", a),
        Command::Fluctuations(a) => run("fluctuations", a),
        Command::Verify(a) => {
            let out = a.common.out.clone().unwrap_or_else(|| PathBuf::from("out/verify"));
            verify_all(&a.tier, &out, &a.common.overrides()).map(|s| {
                say(&s.table());
                for (k, why) in &s.failures {
                    eprintln!("failed: criterion {} [{}]: {why}", k.criterion(), k.name());
                }
                say(&format!("manifest: {}\n", s.manifest_path.display()));
                s.exit_status()
            })
        }
        Command::Preset { kind } => kind
            .parse::<ExperimentKind>()
            .and_then(|k| ExperimentConfig::preset(k).to_toml())
            .map(|t| {
                say(&t);
                status::PASS
            }),
    };
    let code = result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_status(&e)
    });
    ExitCode::from(code as u8)
}
