use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use oneshot_core::harness::{self, CampaignConfig, HarnessError, Mode};
use oneshot_core::mwmr::Mutant;
use oneshot_core::object::object_by_name;
use oneshot_core::snapshot::SnapshotImpl;
use oneshot_core::task::{validate_output_tuple, OpexRecord, PendingRecord};
use serde::Deserialize;

const EXIT_FAILURES: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "oneshot", version, about = "Check one-shot object implementations as tasks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an exhaustive or random checking campaign.
    Check(CheckArgs),
    /// Re-execute a failure from a report and print its trace.
    Replay {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 0)]
        failure: usize,
    },
    /// Validate one output tuple read from a JSON file.
    Validate {
        #[arg(long, default_value = "mwmr")]
        object: String,
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exhaustive,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum SnapshotArg {
    Primitive,
    Collect,
}

#[derive(clap::Args)]
struct CheckArgs {
    /// Campaign configuration as JSON; replaces the other campaign flags.
    #[arg(long, conflicts_with_all = ["writers", "readers", "mode", "crash", "snapshot", "trials", "seed", "mutant"])]
    config: Option<PathBuf>,
    #[arg(long, default_value = "mwmr")]
    object: String,
    #[arg(long, default_value_t = 2)]
    writers: usize,
    #[arg(long, default_value_t = 1)]
    readers: usize,
    #[arg(long, value_enum, default_value = "exhaustive")]
    mode: ModeArg,
    /// Also explore every per-processor truncation (crashes).
    #[arg(long)]
    crash: bool,
    #[arg(long, value_enum, default_value = "primitive")]
    snapshot: SnapshotArg,
    #[arg(long, default_value_t = 0)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// writer-skips-early | reader-lowest-tie | reader-late-first
    #[arg(long)]
    mutant: Option<Mutant>,
    #[arg(long)]
    allow_duplicate_values: bool,
    #[arg(long, default_value_t = harness::DEFAULT_RUN_CAP)]
    run_cap: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CheckArgs {
    fn campaign(&self) -> anyhow::Result<CampaignConfig> {
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            return serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()));
        }
        let mut cfg = CampaignConfig::mwmr(self.writers, self.readers)
            .with_crash(self.crash)
            .with_mutant(self.mutant)
            .with_snapshot(match self.snapshot {
                SnapshotArg::Primitive => SnapshotImpl::Primitive,
                SnapshotArg::Collect => SnapshotImpl::Collect,
            });
        if let ModeArg::Random = self.mode {
            cfg = cfg.random(self.trials, self.seed);
        }
        cfg.object = self.object.clone();
        cfg.allow_duplicate_values = self.allow_duplicate_values;
        cfg.run_cap = self.run_cap;
        Ok(cfg)
    }
}

#[derive(Deserialize)]
struct TupleInput {
    completed: Vec<OpexRecord>,
    #[serde(default)]
    pending: Vec<PendingRecord>,
}

fn check(args: &CheckArgs) -> anyhow::Result<ExitCode> {
    let config = match args.campaign() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return Ok(ExitCode::from(EXIT_USAGE));
        }
    };
    let report = match harness::run_campaign(&config) {
        Ok(r) => r,
        Err(e @ HarnessError::Config(_)) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(EXIT_USAGE));
        }
        Err(e) => return Err(e.into()),
    };
    let mode = match config.mode {
        Mode::Exhaustive => "exhaustive",
        Mode::Random => "random",
    };
    println!(
        "{mode}: {} runs, {} valid, {} invalid, {} with pending adoption ({} ms)",
        report.runs_executed,
        report.verdicts.valid,
        report.verdicts.invalid,
        report.pending_adoptions,
        report.wall_time_ms
    );
    for (k, f) in report.failures.iter().take(3).enumerate() {
        println!("failure {k}: run {} [{}]: {}", f.run, f.schedule, f.violation);
    }
    if let Some(out) = &args.out {
        std::fs::write(out, report.to_json()).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(if report.all_valid() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURES)
    })
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Cmd::Check(args) => check(&args),
        Cmd::Replay { report, failure } => match harness::replay_failure(&report, failure) {
            Ok(replay) => {
                print!("{replay}");
                Ok(ExitCode::SUCCESS)
            }
            Err(e @ (HarnessError::NoFailures | HarnessError::FailureIndex { .. })) => {
                eprintln!("error: {e}");
                Ok(ExitCode::from(EXIT_USAGE))
            }
            Err(e) => Err(e.into()),
        },
        Cmd::Validate { object, input } => {
            let spec = match object_by_name(&object) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return Ok(ExitCode::from(EXIT_USAGE));
                }
            };
            let text = std::fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let tuple: TupleInput = serde_json::from_str(&text)?;
            let verdict = validate_output_tuple(spec.as_ref(), &tuple.completed, &tuple.pending)?;
            println!("{}", serde_json::to_string_pretty(&verdict)?);
            Ok(if verdict.valid {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILURES)
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
