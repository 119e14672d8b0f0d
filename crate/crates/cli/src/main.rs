mod config;
mod report;
mod train;
mod verify;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hevfl::approx::fit_sigmoid_poly;
use hevfl::dataset::{make_circles, make_moons, write_csv};

#[derive(Parser)]
#[command(name = "hevfl", version, about = "Vertical federated LR/KLR over simulated homomorphic encryption")]
#[command(allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV.
    GenData(GenDataArgs),
    /// Fit a polynomial to the logistic function and write it as JSON.
    FitSigmoid(FitSigmoidArgs),
    /// Train one model, or a whole accuracy grid with --grid.
    Train(Box<train::TrainArgs>),
    /// Check per-entry exchange costs and training depths.
    Verify(verify::VerifyArgs),
    /// Render saved results as accuracy tables.
    Report(report::ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    Circles,
    Moons,
}

#[derive(clap::Args)]
struct GenDataArgs {
    generator: Generator,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Inner radius for circles.
    #[arg(long, default_value_t = 0.5)]
    factor: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct FitSigmoidArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=7))]
    degree: u32,
    #[arg(long, default_value_t = -8.0)]
    lo: f64,
    #[arg(long, default_value_t = 8.0)]
    hi: f64,
    #[arg(long, default_value_t = 1024)]
    points: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// A verification check did not hold.
#[derive(Debug)]
pub struct VerificationFailed(pub String);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl std::error::Error for VerificationFailed {}

/// Bad flags or config file contents.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_VERIFY: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<VerificationFailed>() {
            return EXIT_VERIFY;
        }
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<hevfl::Error>() {
            use hevfl::Error::*;
            return match e {
                BudgetExhausted { .. } => EXIT_BUDGET,
                InvalidInput(_) | UnknownCombination(_) | UnknownProtocol(_) | FitFailure(_) | InvalidLabel(_)
                | MissingColumn(_) | Parse { .. } | DimensionMismatch(_) | Alignment { .. } => EXIT_CONFIG,
                _ => EXIT_OTHER,
            };
        }
    }
    EXIT_OTHER
}

fn gen_data(args: &GenDataArgs) -> Result<()> {
    let data = match args.generator {
        Generator::Circles => make_circles(args.n, args.noise, args.factor, args.seed)?,
        Generator::Moons => make_moons(args.n, args.noise, args.seed)?,
    };
    write_csv(&data, &args.out)?;
    let (neg, pos) = data.class_counts();
    println!(
        "wrote {}: N={} D={} labels -1:{neg} +1:{pos}",
        args.out.display(),
        data.n(),
        data.d()
    );
    Ok(())
}

fn fit_sigmoid(args: &FitSigmoidArgs) -> Result<()> {
    let p = fit_sigmoid_poly(args.degree, (args.lo, args.hi), args.points)?;
    for (k, a) in p.coefficients.iter().enumerate() {
        println!("a{k} = {a:+.12e}");
    }
    println!("residual rms  = {:.6e}", p.residual_rms);
    println!(
        "max deviation = {:.6} on [{}, {}]",
        p.max_deviation(args.lo, args.hi, 10_001),
        args.lo,
        args.hi
    );
    if let Some(out) = &args.out {
        fs::write(out, p.to_json()?).with_context(|| format!("writing {}", out.display()))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::FitSigmoid(a) => fit_sigmoid(a),
        Command::Train(a) => train::run(a),
        Command::Verify(a) => verify::run(a),
        Command::Report(a) => report::run(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
