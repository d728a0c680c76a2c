use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mlpbsde::config::{ExperimentConfig, DEFAULT_BUDGET};
use mlpbsde::experiments::{cmd_convergence, cmd_cost_table, cmd_dim_sweep, cmd_solve_path, cmd_validate, CommandOutput};
use mlpbsde::validate::Faults;
use mlpbsde::{Error, VERSION};

#[derive(Parser, Debug)]
#[command(name = "mlpbsde", version = VERSION, about = "Multilevel Picard approximation of BSDE solution paths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// TOML experiment configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overrides `output.directory`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads
    #[arg(long)]
    threads: Option<usize>,
    /// Operation budget; commands predicted to exceed it refuse to start
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Fault {
    CeilGridOffByOne,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One path estimate with counters and bound report
    Solve(Common),
    /// Error against a reference solution across n = M
    Converge(Common),
    /// Measured costs against the cost recursion and closed forms
    Cost(Common),
    /// Cost and error against dimension
    Dimsweep(Common),
    /// Run the built-in property suites
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
}

fn configure_threads(threads: Option<usize>) -> Result<(), Error> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(())
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config FILE is required".into()))?;
    ExperimentConfig::load(path)
}

fn write_outputs(dir: &Path, out: &CommandOutput) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    for a in &out.artifacts {
        std::fs::write(dir.join(&a.name), &a.contents)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, Error> {
    let (common, faults) = match &cli.command {
        Command::Solve(c) | Command::Converge(c) | Command::Cost(c) | Command::Dimsweep(c) => (c.clone(), Faults::default()),
        Command::Validate { common, inject_fault } => (
            common.clone(),
            Faults {
                ceil_grid_off_by_one: *inject_fault == Some(Fault::CeilGridOffByOne),
            },
        ),
    };
    configure_threads(common.threads)?;

    let cfg = match (&cli.command, &common.config) {
        (Command::Validate { .. }, None) => None,
        _ => Some(load(&common)?),
    };
    let budget = common
        .budget
        .or(cfg.as_ref().and_then(|c| c.method.budget))
        .unwrap_or(DEFAULT_BUDGET);

    let out = match (&cli.command, &cfg) {
        (Command::Solve(_), Some(c)) => cmd_solve_path(c, budget)?,
        (Command::Converge(_), Some(c)) => cmd_convergence(c, budget)?.0,
        (Command::Cost(_), Some(c)) => cmd_cost_table(c, budget)?.0,
        (Command::Dimsweep(_), Some(c)) => cmd_dim_sweep(c, budget)?.0,
        (Command::Validate { .. }, c) => cmd_validate(c.as_ref(), faults),
        _ => unreachable!("configuration is loaded for every other command"),
    };

    let dir = common
        .out
        .clone()
        .or_else(|| cfg.as_ref().map(|c| c.output.directory.clone()));
    if let Some(dir) = dir {
        write_outputs(&dir, &out)?;
    }
    print!("{}", out.summary);
    for note in &out.notes {
        eprintln!("{note}");
    }
    Ok(out.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
