use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use unigroup::acceptance;
use unigroup::config::{ExperimentConfig, Overrides};
use unigroup::experiments::{describe, run_experiment};
use unigroup::suite::{bundled, load_dir, run_suite};

/// Unitary Padé propagation experiments for discretized Schrödinger equations.
#[derive(Parser)]
#[command(name = "unigroup", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run every `*.conf` in a directory.
    Suite {
        dir: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run the acceptance criteria and the bundled experiment suite.
    Verify {
        /// Directory for the bundled suite's outputs.
        #[arg(long, default_value = "unigroup-verify")]
        out: PathBuf,
        /// Only run the acceptance criteria.
        #[arg(long)]
        criteria_only: bool,
    },
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    m: Option<u32>,
    /// Padé order, or a comma list for sweeps.
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl From<OverrideArgs> for Overrides {
    fn from(a: OverrideArgs) -> Self {
        Self {
            experiment: a.experiment,
            m: a.m,
            p: a.p,
            tau: a.tau,
            steps: a.steps,
            out: a.out,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or("warn,unigroup_core::propagator=error"),
    )
    .init();
    match Cli::parse().command {
        Command::Run { config, overrides } => {
            let cfg = match ExperimentConfig::from_file(&config, &overrides.into()) {
                Ok(c) => c,
                Err(e) => return fail(&e.to_string()),
            };
            match run_experiment(&cfg) {
                Ok(report) => {
                    print!("{}", report.summary());
                    exit(report.passed())
                }
                Err(e) => fail(&describe(&e)),
            }
        }
        Command::Suite { dir, overrides } => {
            let summary = load_dir(&dir, &overrides.into()).and_then(|configs| run_suite(&configs));
            match summary {
                Ok(s) => {
                    print!("{}", s.table());
                    exit(s.passed())
                }
                Err(e) => fail(&e.to_string()),
            }
        }
        Command::Verify { out, criteria_only } => {
            let mut ok = true;
            for id in acceptance::criterion_ids() {
                let outcome = acceptance::run(id).expect("listed criterion");
                println!("{}", outcome.line());
                ok &= outcome.passed;
            }
            if !criteria_only {
                match bundled(&out).and_then(|configs| run_suite(&configs)) {
                    Ok(s) => {
                        print!("{}", s.table());
                        ok &= s.passed();
                    }
                    Err(e) => return fail(&e.to_string()),
                }
            }
            exit(ok)
        }
    }
}

fn exit(passed: bool) -> ExitCode {
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn fail(message: &str) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(2)
}
