use std::path::PathBuf;
use std::process::ExitCode;

use addeq::scenario::{RegimeConfig, Scenario, Suite};
use addeq::suites::{run_regime, run_scenario, RunOutcome};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "addeq", version, about = "Additive regression and white-noise equivalence experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites listed in the config (or those given with --suite).
    Run(Common),
    /// Check the smoothness/dimension regime; reads only beta and alpha.
    Regime(Common),
    /// Discretized operator, its square root and compressions.
    Operator(Common),
    /// Pilot risk rates over a sample-size schedule.
    Risk(Common),
    /// Distribution tests between pipeline output and sheet scores.
    Equivalence(Common),
    /// Print a config with every default filled in.
    Defaults,
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Suite to run; repeatable. Only used by `run`.
    #[arg(long)]
    suite: Vec<String>,
}

const EXIT_VIOLATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_CONFIG)
}

fn finish(outcome: RunOutcome) -> ExitCode {
    let bad: Vec<_> = outcome.reports.iter().filter(|r| !r.satisfied).collect();
    for r in &bad {
        eprintln!("bound violated: {} (lhs {} > rhs {} + 2·{})", r.name, r.lhs, r.rhs, r.se);
    }
    for f in &outcome.files {
        println!("{}", f.display());
    }
    if bad.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VIOLATION)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, fixed) = match cli.command {
        Command::Defaults => {
            println!("{}", serde_json::to_string_pretty(&Scenario::defaults()).expect("defaults serialize"));
            return ExitCode::SUCCESS;
        }
        Command::Run(c) => (c, None),
        Command::Regime(c) => (c, Some(Suite::Regime)),
        Command::Operator(c) => (c, Some(Suite::Operator)),
        Command::Risk(c) => (c, Some(Suite::Risk)),
        Command::Equivalence(c) => (c, Some(Suite::Equivalence)),
    };
    if let Some(t) = common.threads {
        if let Err(e) = rayon_threads(t) {
            return fail(e);
        }
    }
    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => return fail(format!("cannot read {}: {e}", common.config.display())),
    };
    if fixed == Some(Suite::Regime) {
        return match RegimeConfig::from_json(&text).and_then(|c| run_regime(c.beta, c.alpha, &common.out)) {
            Ok(o) => finish(o),
            Err(e) => fail(e),
        };
    }
    let mut scenario = match Scenario::from_json(&text) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    if let Some(seed) = common.seed {
        scenario = scenario.with_seed(seed);
    }
    let suites = match fixed {
        Some(s) => vec![s],
        None if common.suite.is_empty() => scenario.suites.clone(),
        None => match common.suite.iter().map(|s| Suite::parse(s)).collect() {
            Ok(v) => v,
            Err(e) => return fail(e),
        },
    };
    match run_scenario(&scenario, &suites, &common.out) {
        Ok(o) => finish(o),
        Err(e) => fail(e),
    }
}

fn rayon_threads(threads: usize) -> Result<(), String> {
    addeq::set_threads(threads).map_err(|e| e.to_string())
}
