use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use exchange_cutoff::harness::{run_experiment, Command, ConfigOverrides, HarnessError};

/// Monte Carlo experiments for the SRM, SEM and GAM exchange models.
#[derive(Debug, Parser)]
#[command(name = "exchange-cutoff", version)]
struct Cli {
    /// constants | simulate | piles | identity | contraction | stationary | profile | monotonicity
    #[arg(value_parser = command_name)]
    command: Option<String>,
    /// srm | sem | gam
    #[arg(long)]
    model: Option<String>,
    /// point-half | beta:A | two-point:A | discrete:x,w;x,w;...
    #[arg(long)]
    law: Option<String>,
    #[arg(long)]
    n: Option<String>,
    /// Comma-separated ascending observation times.
    #[arg(long)]
    t: Option<String>,
    /// Comma-separated window offsets for `profile`.
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<String>,
    #[arg(long)]
    replicas: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output path; stdout if omitted.
    #[arg(long)]
    out: Option<String>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    oracle_samples: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    floor_log: Option<String>,
    /// Cap on total simulated steps.
    #[arg(long)]
    budget: Option<String>,
    /// `profile` only: both | coupling | piles
    #[arg(long)]
    statistic: Option<String>,
    /// Plain `key = value` file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn command_name(s: &str) -> Result<String, String> {
    s.parse::<Command>().map(|c| c.name().to_string()).map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let file = match &cli.config {
        Some(path) => ConfigOverrides::parse_file(&std::fs::read_to_string(path)?)?,
        None => ConfigOverrides::default(),
    };
    let mut flags = ConfigOverrides::default();
    flags.command = cli.command;
    flags.model = cli.model;
    flags.law = cli.law;
    flags.n = cli.n;
    flags.t = cli.t;
    flags.beta = cli.beta;
    flags.gamma = cli.gamma;
    flags.replicas = cli.replicas;
    flags.seed = cli.seed;
    flags.out = cli.out;
    flags.format = cli.format;
    flags.oracle_samples = cli.oracle_samples;
    flags.floor_log = cli.floor_log;
    flags.budget = cli.budget;
    flags.statistic = cli.statistic;
    let cfg = flags.over(file).resolve()?;
    run_experiment(&cfg)?.write(&cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("exchange-cutoff: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
