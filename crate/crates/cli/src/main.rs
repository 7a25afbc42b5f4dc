use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use nevlab_cli::experiment::read_report;
use nevlab_cli::summary::summary_lines;
use nevlab_cli::{Experiment, ExperimentConfig, Overrides, RunReport};

#[derive(Parser)]
#[command(name = "nevlab", version, about = "Nevanlinna functionals and theorem checks on model Kähler manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute tables, run every configured suite, write charts.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run one suite (by id or kind) and write report.json.
    Verify {
        suite: String,
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Print a one-line-per-check summary of a report.
    Report { report: PathBuf },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long = "quadrature-tol")]
    quadrature_tol: Option<f64>,
}

impl Common {
    fn setup(&self, config: &Path) -> Result<Experiment> {
        if let Some(n) = self.threads {
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
        }
        let cfg = ExperimentConfig::load(config)?;
        Experiment::new(cfg, &Overrides { seed: self.seed, out: self.out.clone(), quadrature_tol: self.quadrature_tol })
    }
}

fn print(report: &RunReport) -> ExitCode {
    for line in summary_lines(report) {
        println!("{line}");
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, common } => common.setup(&config).and_then(|e| {
            let r = e.run()?;
            eprintln!("artifacts in {}", e.out.display());
            Ok(r)
        }),
        Command::Verify { suite, config, common } => common.setup(&config).and_then(|e| e.verify(&suite)),
        Command::Report { report } => read_report(&report),
    };
    match result {
        Ok(r) => print(&r),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
