use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use hevfl::approx::KernelSpec;
use hevfl::dataset::{make_circles, vertical_split};
use hevfl::ledger::{depth_law, verify_depth, verify_table1, DepthReport, DepthVerdict, Table1Report};
use hevfl::protocol::Federation;
use hevfl::training::{secure_train_klr, secure_train_lr};
use hevfl::{ExperimentResult, ModelKind, TrainConfig};
use serde::Serialize;

use crate::VerificationFailed;

const VERIFY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Samples in the micro-runs.
    #[arg(long, default_value_t = 6)]
    n: usize,
    /// Polynomial kernel degrees to check.
    #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2, 3, 5])]
    dpoly: Vec<u32>,
    /// Sigmoid degrees for the depth grid.
    #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2, 3, 4, 5])]
    degrees: Vec<u32>,
    /// Also check the depth and audit outcome of saved results in this directory.
    #[arg(long)]
    results: Option<PathBuf>,
    /// Write the full verification report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Serialize)]
struct VerifyReport {
    schema_version: u32,
    exchange_costs: Vec<Table1Report>,
    depths: Vec<DepthReport>,
    saved_results_checked: usize,
    passed: bool,
}

fn exchange_costs(n: usize, dpolys: &[u32]) -> Result<Vec<Table1Report>> {
    let data = make_circles(n, 0.05, 0.5, 1)?;
    let split = vertical_split(&data, 1)?;
    let max_dpoly = dpolys.iter().copied().max().unwrap_or(1);
    let fed = Federation::setup(&split, max_dpoly.max(1))?;
    let mut out = vec![verify_table1(&fed.exchange_features()?.ledger, "data_exchange", 1)?];
    out.push(verify_table1(&fed.exchange_linear_kernel()?.entry_cost, "linear_kernel", 1)?);
    for &d in dpolys {
        out.push(verify_table1(&fed.exchange_poly_kernel(1.0, d)?.entry_cost, "polynomial_kernel", d)?);
    }
    out.push(verify_table1(&fed.exchange_rbf_kernel(1.0)?.entry_cost, "rbf_kernel", 1)?);
    Ok(out)
}

fn depths(n: usize, dpolys: &[u32], degrees: &[u32]) -> Result<Vec<DepthReport>> {
    let data = make_circles(n, 0.05, 0.5, 1)?;
    let split = vertical_split(&data, 1)?;
    let mut combos: Vec<(ModelKind, Option<KernelSpec>)> = vec![
        (ModelKind::Lr, None),
        (ModelKind::Klr, Some(KernelSpec::Linear)),
    ];
    combos.extend(
        dpolys
            .iter()
            .map(|&d| (ModelKind::Klr, Some(KernelSpec::Polynomial { c: 1.0, degree: d }))),
    );
    combos.push((ModelKind::Klr, Some(KernelSpec::RbfTaylor2 { gamma: 1.0 })));

    let mut out = Vec::new();
    for (model, kernel) in &combos {
        for &degree in degrees {
            let cfg = TrainConfig {
                learning_rate: 0.01,
                iterations: 1,
                sigmoid_degree: degree,
                ..TrainConfig::default()
            };
            let budget = depth_law(*model, kernel.as_ref(), degree)?;
            let report = match kernel {
                None => secure_train_lr(&split, &cfg, budget)?,
                Some(k) => secure_train_klr(&split, &cfg, k, budget)?,
            };
            out.push(verify_depth(report.max_depth_reached, *model, kernel.as_ref(), degree)?);
        }
    }
    Ok(out)
}

fn check_saved(dir: &PathBuf) -> Result<(usize, Vec<String>)> {
    let mut problems = Vec::new();
    let mut count = 0;
    let entries = fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let r = ExperimentResult::load(&path)?;
        count += 1;
        if r.depth_check.as_ref().is_some_and(|d| !d.passed()) {
            problems.push(format!("{}: depth check failed", path.display()));
        }
        if r.audit_passed == Some(false) {
            problems.push(format!("{}: audit failed", path.display()));
        }
    }
    if count == 0 {
        bail!(crate::ConfigError(format!("{}: no result files", dir.display())));
    }
    Ok((count, problems))
}

fn kernel_label(model: ModelKind, kernel: Option<&KernelSpec>) -> String {
    match kernel {
        None => model.to_string(),
        Some(KernelSpec::Polynomial { degree, .. }) => format!("{model} poly d_poly={degree}"),
        Some(k) => format!("{model} {}", k.name()),
    }
}

pub fn run(args: &VerifyArgs) -> Result<()> {
    if args.n < 2 || args.n % 2 == 1 {
        bail!(crate::ConfigError("--n must be even and at least 2".into()));
    }
    let costs = exchange_costs(args.n, &args.dpoly)?;
    println!("per-entry exchange cost (adds, mults)");
    println!("{:<28} {:>10} {:>10}  result", "protocol", "measured", "expected");
    for r in &costs {
        let name = match r.d_poly {
            Some(d) => format!("{} (d_poly={d})", r.protocol),
            None => r.protocol.to_string(),
        };
        println!(
            "{name:<28} {:>10} {:>10}  {}",
            format!("({}, {})", r.measured_adds, r.measured_mults),
            format!("({}, {})", r.expected_adds, r.expected_mults),
            if r.passed { "pass" } else { "FAIL" }
        );
    }

    let depth_rows = depths(args.n, &args.dpoly, &args.degrees)?;
    println!();
    println!("training depth by sigmoid degree (measured / published)");
    print!("{:<24}", "model");
    for d in &args.degrees {
        print!(" {:>8}", format!("d={d}"));
    }
    println!();
    let mut notes = Vec::new();
    for row in depth_rows.chunks(args.degrees.len().max(1)) {
        print!("{:<24}", kernel_label(row[0].model, row[0].kernel.as_ref()));
        for r in row {
            let mark = match r.verdict {
                DepthVerdict::PassExact => "",
                DepthVerdict::PassUpperBound => "*",
                DepthVerdict::Fail => "!",
            };
            print!(" {:>8}", format!("{}/{}{mark}", r.measured, r.published));
            if let Some(n) = &r.note {
                if !notes.contains(n) {
                    notes.push(n.clone());
                }
            }
        }
        println!();
    }
    for n in &notes {
        println!("  note: {n}");
    }

    let (saved, mut problems) = match &args.results {
        Some(dir) => check_saved(dir)?,
        None => (0, Vec::new()),
    };
    if saved > 0 {
        println!();
        println!("checked {saved} saved results");
    }
    problems.extend(costs.iter().filter(|r| !r.passed).map(|r| format!("{} cost mismatch", r.protocol)));
    problems.extend(
        depth_rows
            .iter()
            .filter(|r| !r.passed())
            .map(|r| format!("{} depth {} at degree {}", kernel_label(r.model, r.kernel.as_ref()), r.measured, r.sigmoid_degree)),
    );

    if let Some(path) = &args.json {
        let report = VerifyReport {
            schema_version: VERIFY_SCHEMA_VERSION,
            exchange_costs: costs,
            depths: depth_rows,
            saved_results_checked: saved,
            passed: problems.is_empty(),
        };
        fs::write(path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if !problems.is_empty() {
        bail!(VerificationFailed(problems.join("; ")));
    }
    println!();
    println!("all checks passed");
    Ok(())
}
