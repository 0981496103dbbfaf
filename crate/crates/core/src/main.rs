use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hspec::harness::{self, config::parse_lambda_grid, ExperimentConfig, Setting, Summary};
use hspec::model::{sample_instance, write_dump};
use hspec::Result;

#[derive(Parser)]
#[command(name = "hspec", version, about = "Rank-one denoising under doubly heteroscedastic noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo sweep over the lambda grid, written as CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated lambda values, overriding the config.
        #[arg(long, value_name = "a,b,c")]
        lambda_grid: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV; stdout when neither this nor `out` in the config is set.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Theory curves over the lambda grid, without sampling.
    Theory {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prints the weak-recovery threshold of the configured setting.
    Threshold {
        #[arg(long)]
        config: PathBuf,
    },
    /// Full singular spectra of A and A* at one lambda, as CSV.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        /// Signal strength, on the config's lambda scale.
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Samples one instance and writes it in the binary dump format.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn print_summary(summary: &Summary) {
    println!("threshold lambda* = {:.6}", summary.threshold);
    println!(
        "{:>12} {:>9} {:>6} {:>21} {:>21} {:>21}",
        "lambda", "estimator", "count", "overlap_u", "overlap_v", "mse_uv"
    );
    for (lambda, theory) in summary.lambdas.iter().zip(&summary.theory) {
        println!(
            "{:>12.6} {:>9} {:>6} {:>21.4} {:>21.4} {:>21.4}",
            lambda,
            "theory",
            "",
            theory.eta_u,
            theory.eta_v,
            theory.mse_uv()
        );
        for agg in summary.aggregates.iter().filter(|a| a.lambda == *lambda) {
            let pm = |(m, s): (f64, f64)| format!("{m:.4} ± {s:.4}");
            println!(
                "{:>12.6} {:>9} {:>6} {:>21} {:>21} {:>21}",
                lambda,
                agg.estimator.name(),
                agg.count,
                pm(agg.overlap_u),
                pm(agg.overlap_v),
                pm(agg.mse_uv)
            );
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Run { config, lambda_grid, trials, seed, out } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(grid) = lambda_grid {
                cfg.lambda_grid = parse_lambda_grid(&grid)?;
            }
            if let Some(trials) = trials {
                cfg.trials = trials;
            }
            if let Some(seed) = seed {
                cfg.base_seed = seed;
            }
            if out.is_some() {
                cfg.output_path = out;
            }
            let summary = harness::run_experiment(&cfg)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            match &cfg.output_path {
                Some(path) => {
                    let mut w = create(path)?;
                    summary.write_csv(&mut w)?;
                    w.flush()?;
                    print_summary(&summary);
                }
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    summary.write_csv(&mut lock)?;
                }
            }
        }
        Command::Theory { config, out } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let mut w = create(&out)?;
            let warnings = harness::theory_table(&cfg, &mut w)?;
            w.flush()?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Threshold { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            println!("{}", harness::format_g(Setting::new(&cfg)?.threshold, 12));
        }
        Command::Spectrum { config, lambda, trials, out } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(trials) = trials {
                cfg.trials = trials;
            }
            let mut w = create(&out)?;
            harness::spectrum_table(&cfg, lambda, &mut w)?;
            w.flush()?;
        }
        Command::Sample { config, lambda, seed, out } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let setting = Setting::new(&cfg)?;
            let inst = sample_instance(&setting.xi, &setting.sigma, lambda, cfg.prior, seed)?;
            let mut w = create(&out)?;
            write_dump(&mut w, &inst, &setting.xi, &setting.sigma)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
