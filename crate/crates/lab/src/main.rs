use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adascale_lab::commands::{
    cmd_gain_compare, cmd_sweep, cmd_train, cmd_verify, out_dir, resolve_seeds,
};
use adascale_lab::config::ExperimentSpec;
use adascale_lab::parallel::Parallel;
use adascale_lab::suites::Suite;
use adascale_lab::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "adascale",
    version,
    about = "Desk-scale AdaScale SGD experiments"
)]
struct Cli {
    /// Worker threads (default: one per core)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed and write traces plus a summary
    Train(RunArgs),
    /// Train every point of the config's sweep axis and write a matrix CSV
    Sweep(RunArgs),
    /// Run verification suites; exit 1 if any check fails
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        /// Also write the report to this file
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare online, oracle and analytic gains along an AdaScale run
    GainCompare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use seeds 1..=N
    #[arg(long)]
    seeds: Option<u64>,
    /// Comma-separated seeds
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
}

type RunCommand = fn(&ExperimentSpec, &Path, &[u64], &Parallel) -> Result<i32>;

fn dispatch(cli: Cli) -> Result<i32> {
    let exec = Parallel::new(cli.threads)?;
    let (args, command): (RunArgs, RunCommand) = match cli.command {
        Command::Verify { suite, out } => {
            return cmd_verify(suite.parse::<Suite>()?, &exec, out.as_deref())
        }
        Command::Train(a) => (a, cmd_train),
        Command::Sweep(a) => (a, cmd_sweep),
        Command::GainCompare(a) => (a, cmd_gain_compare),
    };
    let spec = ExperimentSpec::load(&args.config)?;
    let dir = out_dir(&spec, args.out.as_deref())?;
    let seeds = resolve_seeds(&spec, args.seeds, args.seed_list.as_deref())?;
    command(&spec, &dir, &seeds, &exec)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
