use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use hevfl::{ExperimentResult, ResultsTable};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory of result JSON files written by `train`.
    dir: PathBuf,
    /// Write the table in long CSV form.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the aligned text table.
    #[arg(long)]
    text: Option<PathBuf>,
}

pub fn run(args: &ReportArgs) -> Result<()> {
    let mut paths: Vec<PathBuf> = fs::read_dir(&args.dir)
        .with_context(|| format!("reading {}", args.dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    if paths.is_empty() {
        bail!("{}: no result files", args.dir.display());
    }
    let results = paths
        .iter()
        .map(ExperimentResult::load)
        .collect::<hevfl::Result<Vec<_>>>()?;
    let table = ResultsTable::from_results(&results)?;
    let text = table.to_text();
    print!("{text}");
    if let Some(p) = &args.text {
        fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &args.csv {
        fs::write(p, table.to_csv()?).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}
