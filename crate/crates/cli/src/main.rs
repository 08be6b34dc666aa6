use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use intersection_cli::commands::{self, exit_code, parse_comparison, Options};
use intersection_cli::report::Report;
use intersection_cli::scenario::{CheckName, Overrides};

/// Simulate and check knowledge-based intersection protocols.
#[derive(Parser)]
#[command(name = "intersection", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate every run and write one trace per protocol.
    Simulate(Common),
    /// Run property checks on each protocol and on the policy.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated check names; defaults to the scenario's list.
        #[arg(long, value_delimiter = ',', value_parser = parse_check)]
        checks: Option<Vec<CheckName>>,
    },
    /// Compare two protocols by domination and lexicographic domination.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Fail unless both comparisons have this outcome.
        #[arg(long, value_parser = parse_outcome)]
        expect: Option<intersection_cli::core::verify::Comparison>,
    },
    /// Tabulate the unique implementation of the scenario's program.
    Synthesize(Common),
    /// Extract the policy a protocol follows.
    Extract(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file.
    scenario: PathBuf,
    #[arg(long)]
    horizon: Option<u32>,
    #[arg(long)]
    liveness_bound: Option<u32>,
    /// Maximum number of adversaries to enumerate.
    #[arg(long)]
    caps: Option<usize>,
    /// Treat inconclusive results as passing.
    #[arg(long)]
    allow_inconclusive: bool,
    /// Quantify the V_i condition over every permitted move.
    #[arg(long)]
    strict_vi: bool,
    /// Comma-separated protocol labels to run, in order.
    #[arg(long, value_delimiter = ',')]
    protocols: Option<Vec<String>>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_check(s: &str) -> Result<CheckName, String> {
    CheckName::parse(s).ok_or_else(|| {
        let names: Vec<&str> = CheckName::ALL.iter().map(|c| c.name()).collect();
        format!("unknown check `{s}`; expected one of {}", names.join(", "))
    })
}

fn parse_outcome(s: &str) -> Result<intersection_cli::core::verify::Comparison, String> {
    parse_comparison(s).ok_or_else(|| format!("unknown outcome `{s}`"))
}

impl Common {
    fn options(&self) -> Options {
        Options {
            overrides: Overrides {
                horizon: self.horizon,
                liveness_bound: self.liveness_bound,
                max_adversaries: self.caps,
                strict_vi: self.strict_vi,
            },
            out: self.out.clone(),
            checks: None,
            protocols: self.protocols.clone(),
            expect: None,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, result): (&Common, anyhow::Result<Report>) = match &cli.command {
        Command::Simulate(c) => (c, commands::simulate(&c.scenario, &c.options())),
        Command::Verify { common, checks } => {
            let opts = Options {
                checks: checks.clone(),
                ..common.options()
            };
            (common, commands::verify(&common.scenario, &opts))
        }
        Command::Compare { common, expect } => {
            let opts = Options {
                expect: *expect,
                ..common.options()
            };
            (common, commands::compare(&common.scenario, &opts))
        }
        Command::Synthesize(c) => (c, commands::synthesize(&c.scenario, &c.options())),
        Command::Extract(c) => (c, commands::extract(&c.scenario, &c.options())),
    };
    match result {
        Ok(report) => {
            print!("{}", report.summary());
            ExitCode::from(exit_code(report.status, common.allow_inconclusive) as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
