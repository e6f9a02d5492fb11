use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use rbsmc_cli::{run, HarnessError, Run};

#[derive(Parser)]
#[command(name = "rbsmc", version, about = "Material parameter inversion by Rao-Blackwellised tempered SMC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a truth, a fitted metamodel and measurements.
    Generate(Common),
    /// Fit the linear metamodel (and bootstrap spread) from a training file.
    Fit(Common),
    /// Run the sampler and write posterior summaries.
    Invert(Common),
    /// Compare the dense-Gaussian likelihood with the Kalman filters at one ρ.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Comma-separated ρ components; a single value is broadcast.
        #[arg(long, value_delimiter = ',', required = true)]
        rho: Vec<f64>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool, HarnessError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(HarnessError::Config("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| HarnessError::Config(format!("thread pool: {e}")))
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    let (common, rho) = match &cli.command {
        Command::Generate(c) | Command::Fit(c) | Command::Invert(c) => (c, None),
        Command::Oracle { common, rho } => (common, Some(rho.clone())),
    };
    let run = Run::from_file(&common.config, common.seed, &common.out)?;
    let exec = run.config.smc.execution;
    pool(common.threads)?.install(|| match cli.command {
        Command::Generate(_) => {
            run::generate(&run)?;
            info!("wrote synthetic case to {}", run.out.display());
            Ok(())
        }
        Command::Fit(_) => {
            let models = run::fit(&run, exec)?;
            info!("fitted {} frequencies", models.len());
            Ok(())
        }
        Command::Invert(_) => {
            let result = run::invert(&run, |d| {
                info!("generation {} alpha {:.4} ess {:.1} acceptance {:.2}", d.generation, d.alpha, d.ess, d.acceptance)
            })?;
            if let Some((prior, post)) = result.rmse {
                info!("prior RMSE {prior:.4}, posterior RMSE {post:.4}");
            }
            Ok(())
        }
        Command::Oracle { .. } => {
            let r = run::oracle(&run, &rho.unwrap_or_default())?;
            println!("dense    {}\nkalman   {}\nwhitened {}", r.dense, r.kalman, r.whitened);
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
