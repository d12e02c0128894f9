use std::path::PathBuf;
use std::process::ExitCode;

use arlequin_cli::commands::{
    check_conditions_cmd, objective_cmd, optimize_cmd, oracle_cmd, parse_kbar, report_cmd, solve_cmd, sweep_cmd,
};
use arlequin_cli::StudyConfig;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arlequin", version, about = "Homogenized coefficient identification by Arlequin coupling")]
struct Cli {
    /// Study configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the sweep.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reference k* from the periodic cell problems.
    Oracle,
    /// One coupled solve at a given coefficient.
    Solve {
        /// `k` or `k11,k22,k12`.
        #[arg(long)]
        kbar: String,
        /// Defaults to the first eps of the config.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// J and its derivatives at a given coefficient.
    Objective {
        #[arg(long)]
        kbar: String,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Minimize J at one eps and print the iterate trace.
    Optimize {
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Run every eps of the config and write results, timings and manifest.
    Sweep,
    /// Existence-condition diagnostics at the optimum.
    CheckConditions {
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Convergence report from a results CSV.
    Report {
        #[arg(long)]
        results: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut out = std::io::stdout().lock();
    let config = || -> anyhow::Result<StudyConfig> {
        let path = cli.config.as_ref().ok_or_else(|| anyhow::anyhow!("--config is required"))?;
        StudyConfig::load(path)
    };
    let out_dir = cli.out.as_deref();
    match &cli.command {
        Command::Oracle => oracle_cmd(&config()?, out_dir, &mut out),
        Command::Solve { kbar, eps } => solve_cmd(&config()?, parse_kbar(kbar)?, *eps, out_dir, &mut out),
        Command::Objective { kbar, eps } => objective_cmd(&config()?, parse_kbar(kbar)?, *eps, &mut out),
        Command::Optimize { eps } => optimize_cmd(&config()?, *eps, out_dir, &mut out),
        Command::Sweep => {
            let dir = out_dir.ok_or_else(|| anyhow::anyhow!("sweep needs --out"))?;
            sweep_cmd(&config()?, cli.workers, dir, &mut out)
        }
        Command::CheckConditions { eps } => check_conditions_cmd(&config()?, *eps, &mut out),
        Command::Report { results } => report_cmd(results, &mut out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
