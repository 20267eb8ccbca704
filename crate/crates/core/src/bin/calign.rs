use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use calign::cli::{self, RunConfig};
use calign::error::exit_code;
use calign::io::read_logits_jsonl;
use calign::metrics;
use calign::{CalibError, Objective, OptimizerConfig, Shape};

#[derive(Parser)]
#[command(
    name = "calign",
    version,
    about = "Post-hoc confidence calibration by agreement-aware alignment"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct OptimizerArgs {
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 400)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl OptimizerArgs {
    fn config(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit scaling parameters on a validation file and evaluate on a test file.
    Calibrate {
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value = "daca")]
        objective: Objective,
        #[arg(long, default_value = "scalar")]
        shape: Shape,
        #[arg(long, default_value_t = metrics::DEFAULT_BINS)]
        bins: usize,
        /// Comma-separated selective-accuracy thresholds.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opt: OptimizerArgs,
    },
    /// Apply stored parameters to a labelled test file.
    Evaluate {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = metrics::DEFAULT_BINS)]
        bins: usize,
    },
    /// Generate a synthetic mixture and run the divergence/alignment checks.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the Adam temperature against an exhaustive grid search.
    OracleCheck {
        #[arg(long)]
        val: PathBuf,
        #[arg(long, default_value = "daca")]
        objective: Objective,
        #[command(flatten)]
        opt: OptimizerArgs,
    },
}

fn run(args: Args) -> Result<i32, CalibError> {
    match args.command {
        Command::Calibrate {
            val,
            test,
            objective,
            shape,
            bins,
            thresholds,
            out,
            opt,
        } => {
            let mut cfg = RunConfig::new(val, test, out);
            cfg.objective = objective;
            cfg.shape = shape;
            cfg.bins = bins;
            cfg.optimizer = opt.config();
            if let Some(t) = thresholds {
                cfg.thresholds = t;
            }
            let report = cli::run_calibrate(&cfg)?;
            println!(
                "{} {}: ECE {:.4} -> {:.4}, params {}",
                cfg.objective,
                cfg.shape,
                report.pre.metrics.ece,
                report.post.metrics.ece,
                serde_json::to_string(&report.params)?
            );
            if report.optimizer.diverged {
                eprintln!("temperature diverged; see {}", cfg.out.display());
                return Ok(exit_code::DIVERGED);
            }
        }
        Command::Evaluate {
            test,
            params,
            out,
            bins,
        } => {
            let report =
                cli::run_evaluate(&test, &params, &out, bins, &metrics::default_thresholds())?;
            println!(
                "ECE {:.4} -> {:.4}",
                report.pre.metrics.ece, report.post.metrics.ece
            );
        }
        Command::Simulate { config, out } => {
            let cfg = cli::load_simulation_config(&config)?;
            let report = cli::run_simulate(&cfg, &out)?;
            for p in &report.checks {
                println!(
                    "{}: measured {:.6} predicted {:.6} gap {:.6} [{}]",
                    p.name,
                    p.measured,
                    p.predicted,
                    p.gap,
                    if p.passed { "pass" } else { "FAIL" }
                );
            }
        }
        Command::OracleCheck {
            val,
            objective,
            opt,
        } => {
            let ds = read_logits_jsonl(&val)?;
            let check = cli::run_oracle_check(&ds, objective, &opt.config(), &cli::oracle_grid())?;
            println!("{}", serde_json::to_string_pretty(&check)?);
        }
    }
    Ok(exit_code::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CALIB_LOG", "warn")).init();
    let code = match run(Args::parse()) {
        Ok(code) => code,
        Err(e) => {
            if let CalibError::AllDisagree { total } = &e {
                eprintln!(
                    "error: {e}\nvalidation records: {total}, agreement: 0, disagreement: {total}"
                );
            } else {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
