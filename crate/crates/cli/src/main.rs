//! `p2pgrid` command-line front end: run a scenario, compare runs with and
//! without the market, or run the invariant battery.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use p2pgrid::check::run_checks;
use p2pgrid::netmodel::load_scenario;
use p2pgrid::report::comparison_table;
use p2pgrid::sim::{compare_runs, run_simulation};
use p2pgrid::{Error, Network, Profiles, RunReport, ScenarioConfig};

#[derive(Parser)]
#[command(name = "p2pgrid", version, about = "Peer-to-peer energy market and resilience simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write the report files.
    Run(RunArgs),
    /// Simulate with and without the market and write the paired table.
    Compare(CompareArgs),
    /// Simulate and run the invariant battery; exits 5 on any failure.
    Check(CheckArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario TOML file.
    scenario: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Disable peer-to-peer trading.
    #[arg(long)]
    no_p2p: bool,
    /// Output directory; defaults to `out/<scenario name>`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Run the invariant battery after the simulation.
    #[arg(long)]
    check: bool,
    /// Nodes sampled for the finite-difference price oracle in check mode.
    #[arg(long, default_value_t = 6)]
    fd_oracle_sample: usize,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output directory; defaults to `out/<scenario name>`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Disable peer-to-peer trading.
    #[arg(long)]
    no_p2p: bool,
    /// Nodes sampled for the finite-difference price oracle.
    #[arg(long, default_value_t = 6)]
    fd_oracle_sample: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Check(args) => cmd_check(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load(args: &ScenarioArgs) -> Result<(Network, Profiles, ScenarioConfig), Error> {
    let (net, profiles, mut config) = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok((net, profiles, config))
}

fn out_dir(explicit: Option<PathBuf>, config: &ScenarioConfig) -> PathBuf {
    explicit.unwrap_or_else(|| Path::new("out").join(&config.name))
}

fn write_files<'a>(dir: &Path, files: impl IntoIterator<Item = (&'a str, String)>) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Write { path: dir.to_path_buf(), source })?;
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|source| Error::Write { path, source })?;
    }
    Ok(())
}

fn check(
    net: &Network,
    profiles: &Profiles,
    config: &ScenarioConfig,
    report: &RunReport,
    fd: usize,
) -> Result<(), Error> {
    let rep = run_checks(net, profiles, config, &report.records, fd)?;
    print!("{}", rep.to_text());
    if rep.passed() {
        Ok(())
    } else {
        Err(Error::CheckFailed(rep.failures().iter().map(|r| r.name.to_string()).collect()))
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Error> {
    let (net, profiles, mut config) = load(&args.scenario)?;
    if args.no_p2p {
        config.p2p = false;
    }
    let records = run_simulation(&net, &profiles, &config)?;
    let report = RunReport::new(&config, records);
    let dir = out_dir(args.out_dir, &config);
    write_files(&dir, report.files(&net))?;
    print!("{}", report.summary.to_text());
    println!("wrote {}", dir.display());
    if args.check {
        check(&net, &profiles, &config, &report, args.fd_oracle_sample)?;
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), Error> {
    let (net, profiles, mut config) = load(&args.scenario)?;
    config.p2p = true;
    let with = run_simulation(&net, &profiles, &config)?;
    let mut off = config.clone();
    off.p2p = false;
    let without = run_simulation(&net, &profiles, &off)?;
    let cmp = compare_runs(&with, &without)?;
    let table = comparison_table(&cmp);
    let dir = out_dir(args.out_dir, &config);
    write_files(&dir, [("comparison.tsv", table.clone())])?;
    write_files(&dir.join("with-p2p"), RunReport::new(&config, with).files(&net))?;
    write_files(&dir.join("without-p2p"), RunReport::new(&off, without).files(&net))?;
    print!("{table}");
    println!("wrote {}", dir.display());
    if cmp.holds() {
        Ok(())
    } else {
        Err(Error::CheckFailed(cmp.violations.iter().map(|t| format!("ri_monotonicity t={t}")).collect()))
    }
}

fn cmd_check(args: CheckArgs) -> Result<(), Error> {
    let (net, profiles, mut config) = load(&args.scenario)?;
    if args.no_p2p {
        config.p2p = false;
    }
    let records = run_simulation(&net, &profiles, &config)?;
    let report = RunReport::new(&config, records);
    check(&net, &profiles, &config, &report, args.fd_oracle_sample)
}
