use std::path::PathBuf;
use std::process::ExitCode;

use acfe::driver::{self, EXIT_OK};
use acfe::estimators::ConstantsConfig;
use acfe::Error;
use clap::{Parser, Subcommand};

/// Adaptive finite elements for the Allen–Cahn equation with a posteriori error bounds.
#[derive(Parser)]
#[command(name = "acfe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and estimate; writes report.csv, fields_NNNN.vtk and checkpoints.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overriding the config file.
        #[arg(long, env = driver::OUTPUT_DIR_ENV)]
        output: Option<PathBuf>,
    },
    /// Recompute the estimators of a finished run from its checkpoints.
    Estimate {
        #[arg(long)]
        dir: PathBuf,
        /// TOML file with a [constants] section replacing the run's constants.
        #[arg(long)]
        constants: Option<PathBuf>,
    },
    /// Principal eigenvalue of the operator linearized about a checkpointed state.
    Eigen {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        safety: Option<f64>,
    },
    /// Residual estimator study on the Poisson problem with a known solution.
    PoissonBench {
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long)]
        c_omega: Option<f64>,
        #[arg(long)]
        c_sz: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, output } => {
            let cfg = driver::load_config(&config)?;
            let dir = output.unwrap_or_else(|| driver::output_dir(&cfg));
            println!("{}", cfg.to_toml());
            log::info!("writing to {}", dir.display());
            let report = driver::cmd_run(&cfg, &dir)?;
            print!("{}", driver::format_summary(&report));
        }
        Command::Estimate { dir, constants } => {
            let report = driver::cmd_estimate(&dir, constants.as_deref())?;
            print!("{}", driver::format_summary(&report));
        }
        Command::Eigen {
            state,
            epsilon,
            safety,
        } => {
            print!("{}", driver::cmd_eigen(&state, epsilon, safety)?);
        }
        Command::PoissonBench {
            levels,
            c_omega,
            c_sz,
        } => {
            let c = ConstantsConfig {
                c_omega: c_omega.unwrap_or(1.0),
                c_sz: c_sz.unwrap_or(1.0),
                ..ConstantsConfig::for_domain(&acfe::mesh::Rect::UNIT)
            };
            let rows = driver::cmd_poisson_bench(levels, &c)?;
            print!("{}", driver::render_bench_csv(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(driver::exit_code(&e))
        }
    }
}
