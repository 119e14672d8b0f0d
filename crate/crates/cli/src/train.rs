use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{ArgAction, Args, ValueEnum};
use hevfl::approx::KernelSpec;
use hevfl::experiment::{
    accuracy_grid, default_learning_rate, run_experiment, DatasetSpec, ExperimentConfig, ExperimentRun, GridPreset,
};
use hevfl::ledger::depth_law;
use hevfl::{ExperimentResult, ModelKind, ResultsTable, TrainConfig};

use crate::config::{FileConfig, KernelArg, ModelArg, SigmoidArg};
use crate::ConfigError;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GridArg {
    Circles,
    Moons,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML file with default values for the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run the twelve-configuration accuracy grid for a synthetic dataset.
    #[arg(long, value_enum)]
    grid: Option<GridArg>,
    /// Directory for per-run result files in grid mode.
    #[arg(long)]
    out_dir: Option<PathBuf>,

    /// `circles`, `moons` or a CSV path.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    factor: Option<f64>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    positive_label: Option<String>,
    #[arg(long, action = ArgAction::SetTrue, overrides_with = "no_standardize")]
    standardize: bool,
    #[arg(long, action = ArgAction::SetTrue)]
    no_standardize: bool,

    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long, value_enum)]
    kernel: Option<KernelArg>,
    /// Polynomial kernel degree.
    #[arg(long)]
    dpoly: Option<u32>,
    /// Polynomial kernel offset.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_enum)]
    sigmoid: Option<SigmoidArg>,
    #[arg(long)]
    sigmoid_degree: Option<u32>,
    #[arg(long, action = ArgAction::SetTrue, overrides_with = "plain")]
    secure: bool,
    #[arg(long, action = ArgAction::SetTrue)]
    plain: bool,

    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    iterations: Option<u32>,
    #[arg(long)]
    lambda_reg: Option<f64>,
    /// Eve's depth budget; defaults to exactly what training needs.
    #[arg(long)]
    budget: Option<u32>,
    #[arg(long)]
    alice_features: Option<usize>,
    /// Fraction of rows held out for evaluation (plaintext only).
    #[arg(long)]
    holdout: Option<f64>,

    /// Result JSON path.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Message log as JSON lines (secure runs).
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Embed payloads in the transcript, not just digests.
    #[arg(long)]
    record_payloads: bool,
}

fn flag_pair(on: bool, off: bool) -> Option<bool> {
    match (on, off) {
        (true, _) => Some(true),
        (_, true) => Some(false),
        _ => None,
    }
}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Flags over file values over defaults.
fn resolve(args: &TrainArgs, file: &FileConfig) -> Result<(ExperimentConfig, Option<PathBuf>, Option<PathBuf>)> {
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let n = args.n.or(file.n).unwrap_or(500);
    let noise = args.noise.or(file.noise).unwrap_or(0.05);
    let dataset_name = args
        .dataset
        .clone()
        .or_else(|| file.dataset.clone())
        .ok_or_else(|| config_err("no dataset given (use --dataset circles|moons|<file.csv>)"))?;
    let dataset = match dataset_name.as_str() {
        "circles" => DatasetSpec::Circles {
            n,
            noise,
            factor: args.factor.or(file.factor).unwrap_or(0.5),
            seed,
        },
        "moons" => DatasetSpec::Moons { n, noise, seed },
        path => DatasetSpec::Csv {
            path: path.into(),
            label_column: args
                .label_column
                .clone()
                .or_else(|| file.label_column.clone())
                .unwrap_or_else(|| "label".into()),
            positive_label: args
                .positive_label
                .clone()
                .or_else(|| file.positive_label.clone())
                .unwrap_or_else(|| "1".into()),
        },
    };

    let model = match args.model.or(file.model).unwrap_or(ModelArg::Lr) {
        ModelArg::Lr => ModelKind::Lr,
        ModelArg::Klr => ModelKind::Klr,
    };
    let kernel_arg = args.kernel.or(file.kernel);
    let gamma = args.gamma.or(file.gamma).unwrap_or(1.0);
    let kernel = match (model, kernel_arg) {
        (ModelKind::Lr, None) => None,
        (ModelKind::Lr, Some(_)) => return Err(config_err("--kernel only applies to --model klr")),
        (ModelKind::Klr, None) => return Err(config_err("--model klr needs --kernel")),
        (ModelKind::Klr, Some(k)) => Some(match k {
            KernelArg::Linear => KernelSpec::Linear,
            KernelArg::Poly => KernelSpec::Polynomial {
                c: args.c.or(file.c).unwrap_or(1.0),
                degree: args.dpoly.or(file.dpoly).unwrap_or(3),
            },
            KernelArg::Rbf => KernelSpec::RbfExact { gamma },
            KernelArg::RbfTaylor2 => KernelSpec::RbfTaylor2 { gamma },
        }),
    };

    let secure = flag_pair(args.secure, args.plain).or(file.secure).unwrap_or(false);
    let degree_given = args.sigmoid_degree.or(file.sigmoid_degree);
    let sigmoid_degree = match args.sigmoid.or(file.sigmoid) {
        Some(SigmoidArg::Exact) if args.sigmoid_degree.is_some() => {
            return Err(config_err("--sigmoid exact conflicts with --sigmoid-degree"))
        }
        Some(SigmoidArg::Exact) => None,
        Some(SigmoidArg::Poly) => Some(degree_given.unwrap_or(3)),
        None if secure => Some(degree_given.unwrap_or(3)),
        None => degree_given,
    };

    let learning_rate = args
        .lr
        .or(file.learning_rate)
        .unwrap_or_else(|| default_learning_rate(model, kernel.as_ref(), sigmoid_degree));
    let cfg = ExperimentConfig {
        dataset,
        standardize: flag_pair(args.standardize, args.no_standardize)
            .or(file.standardize)
            .unwrap_or(false),
        model,
        kernel,
        sigmoid_degree,
        secure,
        train: TrainConfig {
            learning_rate,
            iterations: args.iterations.or(file.iterations).unwrap_or(20),
            sigmoid_degree: sigmoid_degree.unwrap_or(3),
            lambda_reg: args.lambda_reg.or(file.lambda_reg).unwrap_or(0.0),
            seed,
        },
        budget: args.budget.or(file.budget),
        alice_features: args.alice_features.or(file.alice_features).unwrap_or(1),
        holdout: args.holdout.or(file.holdout),
    };
    let out = args.out.clone().or_else(|| file.out.clone());
    let transcript = args.transcript.clone().or_else(|| file.transcript.clone());
    Ok((cfg, out, transcript))
}

fn describe(cfg: &ExperimentConfig) -> String {
    format!(
        "{}, sigmoid {}, {}",
        cfg.column(),
        cfg.row(),
        if cfg.secure { "secure" } else { "plaintext" }
    )
}

fn print_summary(run: &ExperimentRun) {
    let r = &run.result;
    let rep = &r.report;
    println!("dataset   {} (N={}, D={})", r.dataset_name, r.n, r.d);
    println!("model     {}", describe(&r.config));
    println!("accuracy  {:.4}", r.accuracy);
    match rep.depth_budget {
        Some(b) => println!("depth     {} of budget {b}", rep.max_depth_reached),
        None => println!("depth     - (plaintext)"),
    }
    if let Some(check) = &r.depth_check {
        let note = check.note.as_deref().map(|n| format!("; {n}")).unwrap_or_default();
        println!(
            "          published {} ({:?}{note})",
            check.published, check.verdict
        );
    }
    let l = &rep.ledger;
    if rep.secure {
        println!(
            "ledger    adds={} ct_ct_mults={} ct_pt_mults={} rotations={}",
            l.adds, l.ct_ct_mults, l.ct_pt_mults, l.rotations
        );
    }
    if let Some(a) = &run.audit {
        println!(
            "audit     {} ({} messages, {} gradient messages whitelisted)",
            if a.passed() { "passed" } else { "FAILED" },
            a.messages_checked,
            a.whitelisted.len()
        );
    }
    println!("time      {:.3} s", rep.wall_time_secs);
}

fn budget_hint(cfg: &ExperimentConfig) -> String {
    match depth_law(cfg.model, cfg.kernel.as_ref(), cfg.sigmoid_degree.unwrap_or(1)) {
        Ok(need) => format!("this run needs a depth budget of {need}; raise --budget or lower --sigmoid-degree"),
        Err(_) => "raise --budget or lower --sigmoid-degree".into(),
    }
}

fn run_one(cfg: &ExperimentConfig, out: Option<&Path>, transcript: Option<&Path>, payloads: bool) -> Result<()> {
    let run = run_experiment(cfg).map_err(|e| {
        let hint = matches!(e, hevfl::Error::BudgetExhausted { .. }).then(|| budget_hint(cfg));
        let err = anyhow::Error::from(e);
        match hint {
            Some(h) => err.context(h),
            None => err,
        }
    })?;
    print_summary(&run);
    if let Some(path) = out {
        run.result.save(path)?;
        println!("wrote {}", path.display());
    }
    if let Some(path) = transcript {
        let t = run
            .transcript
            .as_ref()
            .ok_or_else(|| config_err("--transcript needs a secure run"))?;
        t.write_jsonl(path, payloads)?;
        println!("wrote {}", path.display());
    }
    if run.audit.as_ref().is_some_and(|a| !a.passed()) {
        anyhow::bail!(crate::VerificationFailed("transcript audit found plaintext leaks".into()));
    }
    Ok(())
}

fn run_grid(preset: GridArg, args: &TrainArgs, file: &FileConfig) -> Result<()> {
    let n = args.n.or(file.n).unwrap_or(500);
    let seed = args.seed.or(file.seed).unwrap_or(7);
    let preset = match preset {
        GridArg::Circles => GridPreset::Circles,
        GridArg::Moons => GridPreset::Moons,
    };
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut results: Vec<ExperimentResult> = Vec::new();
    for cfg in accuracy_grid(preset, n, seed) {
        let run = run_experiment(&cfg)?;
        let r = run.result;
        println!(
            "{:<34} accuracy {:.4}  depth {:>2}  {:.2}s",
            describe(&cfg),
            r.accuracy,
            r.report.max_depth_reached,
            r.report.wall_time_secs
        );
        if let Some(dir) = &args.out_dir {
            let name = format!(
                "{}_{}_{}.json",
                r.dataset_name,
                cfg.row(),
                cfg.column().replace(' ', "_").to_lowercase()
            );
            r.save(dir.join(name))?;
        }
        results.push(r);
    }
    println!();
    print!("{}", ResultsTable::from_results(&results)?.to_text());
    Ok(())
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(g) = args.grid {
        return run_grid(g, args, &file);
    }
    let (cfg, out, transcript) = resolve(args, &file)?;
    run_one(&cfg, out.as_deref(), transcript.as_deref(), args.record_payloads)
}
