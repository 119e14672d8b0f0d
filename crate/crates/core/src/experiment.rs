//! End-to-end experiment runs and the accuracy tables built from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::approx::{cross_gram, default_sigmoid_poly, gram_matrix, KernelSpec, Sigmoid};
use crate::dataset::{
    load_csv, make_circles, make_moons, standardize, train_test_split, vertical_split, Dataset,
};
use crate::error::{Error, Result};
use crate::ledger::{depth_law, verify_depth, DepthReport, ModelKind};
use crate::protocol::{audit_transcript, AuditContext, AuditReport, ProtocolTranscript};
use crate::training::{
    evaluate, plaintext_trace_klr, plaintext_trace_lr, secure_train_klr_with_transcript,
    secure_train_lr_with_transcript, TrainConfig, TrainReport, MAX_SIGMOID_DEGREE,
};

pub const RESULT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum DatasetSpec {
    Circles { n: usize, noise: f64, factor: f64, seed: u64 },
    Moons { n: usize, noise: f64, seed: u64 },
    Csv { path: PathBuf, label_column: String, positive_label: String },
}

impl DatasetSpec {
    pub fn circles(n: usize, seed: u64) -> Self {
        DatasetSpec::Circles {
            n,
            noise: 0.05,
            factor: 0.5,
            seed,
        }
    }

    pub fn moons(n: usize, seed: u64) -> Self {
        DatasetSpec::Moons { n, noise: 0.05, seed }
    }

    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSpec::Circles { n, noise, factor, seed } => make_circles(*n, *noise, *factor, *seed),
            DatasetSpec::Moons { n, noise, seed } => make_moons(*n, *noise, *seed),
            DatasetSpec::Csv {
                path,
                label_column,
                positive_label,
            } => load_csv(path, label_column, positive_label),
        }
    }

    pub fn name(&self) -> String {
        match self {
            DatasetSpec::Circles { .. } => "circles".into(),
            DatasetSpec::Moons { .. } => "moons".into(),
            DatasetSpec::Csv { path, .. } => path
                .file_stem()
                .map_or_else(|| "csv".into(), |s| s.to_string_lossy().into_owned()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub standardize: bool,
    pub model: ModelKind,
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    /// `None` selects the exact sigmoid.
    #[serde(default)]
    pub sigmoid_degree: Option<u32>,
    pub secure: bool,
    pub train: TrainConfig,
    /// Eve's depth budget; defaults to what the depth law requires.
    #[serde(default)]
    pub budget: Option<u32>,
    /// Number of leading columns Alice holds.
    #[serde(default = "one")]
    pub alice_features: usize,
    /// Fraction held out for evaluation (plaintext runs only).
    #[serde(default)]
    pub holdout: Option<f64>,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        match (self.model, &self.kernel) {
            (ModelKind::Lr, Some(k)) => {
                return Err(Error::InvalidInput(format!("LR takes no kernel, got {k}")))
            }
            (ModelKind::Klr, None) => return Err(Error::InvalidInput("KLR needs a kernel".into())),
            (_, Some(k)) => k.validate()?,
            _ => {}
        }
        if let Some(d) = self.sigmoid_degree {
            if !(1..=MAX_SIGMOID_DEGREE).contains(&d) {
                return Err(Error::InvalidInput(format!(
                    "sigmoid degree must be in 1..={MAX_SIGMOID_DEGREE}, got {d}"
                )));
            }
        }
        if self.secure {
            if self.sigmoid_degree.is_none() {
                return Err(Error::InvalidInput(
                    "secure training needs a polynomial sigmoid".into(),
                ));
            }
            if matches!(self.kernel, Some(KernelSpec::RbfExact { .. })) {
                return Err(Error::InvalidInput(
                    "secure training cannot use the exact RBF kernel; use rbf_taylor2".into(),
                ));
            }
            if self.holdout.is_some() {
                return Err(Error::InvalidInput(
                    "holdout evaluation is only available for plaintext runs".into(),
                ));
            }
            if self.train.iterations == 0 {
                return Err(Error::InvalidInput("secure training needs at least one iteration".into()));
            }
        }
        Ok(())
    }

    /// Budget used for a secure run.
    pub fn effective_budget(&self) -> Result<u32> {
        match self.budget {
            Some(b) => Ok(b),
            None => depth_law(
                self.model,
                self.kernel.as_ref(),
                self.sigmoid_degree.unwrap_or(1),
            ),
        }
    }

    pub fn sigmoid(&self) -> Result<Sigmoid> {
        match self.sigmoid_degree {
            None => Ok(Sigmoid::Exact),
            Some(d) => Ok(Sigmoid::Poly(default_sigmoid_poly(d)?)),
        }
    }

    /// Column label in result tables.
    pub fn column(&self) -> String {
        column_label(self.model, self.kernel.as_ref())
    }

    pub fn row(&self) -> String {
        row_label(self.sigmoid_degree)
    }
}

fn column_label(model: ModelKind, kernel: Option<&KernelSpec>) -> String {
    match (model, kernel) {
        (ModelKind::Lr, _) => "LR".into(),
        (ModelKind::Klr, Some(KernelSpec::Linear)) => "KLR linear".into(),
        (ModelKind::Klr, Some(KernelSpec::Polynomial { degree, .. })) => format!("KLR poly-{degree}"),
        (ModelKind::Klr, Some(KernelSpec::RbfExact { .. } | KernelSpec::RbfTaylor2 { .. })) => {
            "KLR rbf".into()
        }
        (ModelKind::Klr, None) => "KLR".into(),
    }
}

fn row_label(degree: Option<u32>) -> String {
    match degree {
        None => "exact".into(),
        Some(d) => format!("poly{d}"),
    }
}

/// Learning rate used when none is given. Tuned on the synthetic datasets;
/// the polynomial-kernel values are per sigmoid degree because the usable
/// window there is narrow.
pub fn default_learning_rate(model: ModelKind, kernel: Option<&KernelSpec>, sigmoid_degree: Option<u32>) -> f64 {
    match (model, kernel) {
        (ModelKind::Lr, _) => 5.0,
        (ModelKind::Klr, Some(KernelSpec::Polynomial { .. })) => match sigmoid_degree {
            None => 0.0064,
            Some(1 | 2) => 0.0153,
            Some(3 | 4) => 0.0096,
            Some(5 | 6) => 0.0076,
            Some(_) => 0.0069,
        },
        (ModelKind::Klr, Some(KernelSpec::RbfExact { .. })) => 2.0,
        (ModelKind::Klr, Some(KernelSpec::RbfTaylor2 { .. })) => 0.015,
        (ModelKind::Klr, _) => 0.01,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub dataset_name: String,
    pub config: ExperimentConfig,
    pub n: usize,
    pub d: usize,
    /// On the training set, or on the held-out rows when a holdout is set.
    pub accuracy: f64,
    pub report: TrainReport,
    pub depth_check: Option<DepthReport>,
    pub audit_passed: Option<bool>,
}

impl ExperimentResult {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let r: ExperimentResult = serde_json::from_str(&text)?;
        if r.schema_version != RESULT_SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "{}: unsupported schema version {}",
                path.display(),
                r.schema_version
            )));
        }
        Ok(r)
    }

    /// Same run ignoring wall time.
    pub fn same_outcome(&self, other: &ExperimentResult) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.report.wall_time_secs = 0.0;
        b.report.wall_time_secs = 0.0;
        a == b
    }
}

pub struct ExperimentRun {
    pub result: ExperimentResult,
    pub transcript: Option<ProtocolTranscript>,
    pub audit: Option<AuditReport>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let mut data = cfg.dataset.load()?;
    if cfg.standardize {
        data = standardize(&data)?;
    }
    let (train, test) = match cfg.holdout {
        Some(frac) => {
            let (a, b) = train_test_split(&data, frac, cfg.train.seed)?;
            (a, Some(b))
        }
        None => (data, None),
    };
    let sigma = cfg.sigmoid()?;
    let mut train_cfg = cfg.train.clone();
    if let Some(d) = cfg.sigmoid_degree {
        train_cfg.sigmoid_degree = d;
    }
    let started = Instant::now();

    let (report, transcript, audit) = if cfg.secure {
        let split = vertical_split(&train, cfg.alice_features)?;
        let budget = cfg.effective_budget()?;
        let (report, transcript) = match &cfg.kernel {
            None => secure_train_lr_with_transcript(&split, &train_cfg, budget)?,
            Some(k) => secure_train_klr_with_transcript(&split, &train_cfg, k, budget)?,
        };
        let audit = audit_transcript(&transcript, &AuditContext::from_split(&split));
        (report, Some(transcript), Some(audit))
    } else {
        let trace = match &cfg.kernel {
            None => plaintext_trace_lr(&train, &train_cfg, &sigma)?,
            Some(spec) => {
                let k = gram_matrix(spec, &train.x)?;
                plaintext_trace_klr(&k, &train.y, &train_cfg, &sigma)?
            }
        };
        (trace.into_report(started), None, None)
    };

    let model = &report.final_model;
    let eval_set = test.as_ref().unwrap_or(&train);
    let accuracy = match &model.kernel {
        None => evaluate(model, eval_set, None)?,
        Some(spec) => {
            let k = cross_gram(spec, &eval_set.x, &train.x)?;
            evaluate(model, eval_set, Some(&k))?
        }
    };

    let depth_check = match (cfg.secure, cfg.sigmoid_degree) {
        (true, Some(deg)) if deg <= 5 => Some(verify_depth(
            report.max_depth_reached,
            cfg.model,
            cfg.kernel.as_ref(),
            deg,
        )?),
        _ => None,
    };

    let result = ExperimentResult {
        schema_version: RESULT_SCHEMA_VERSION,
        dataset_name: cfg.dataset.name(),
        config: cfg.clone(),
        n: train.n(),
        d: train.d(),
        accuracy,
        depth_check,
        audit_passed: audit.as_ref().map(AuditReport::passed),
        report,
    };
    Ok(ExperimentRun {
        result,
        transcript,
        audit,
    })
}

/// Which synthetic dataset a grid is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridPreset {
    Circles,
    Moons,
}

/// The twelve runs of an accuracy table: rows exact / poly3 / poly7 sigmoid,
/// columns LR, KLR linear, KLR poly-3, KLR rbf. The exact row trains in
/// plaintext (with the exact RBF kernel); the polynomial rows train securely
/// (with the Taylor-2 RBF kernel). Moons are standardized, circles are not.
pub fn accuracy_grid(preset: GridPreset, n: usize, seed: u64) -> Vec<ExperimentConfig> {
    let (dataset, standardize, rbf_gamma_t2, rbf_lr_t2) = match preset {
        GridPreset::Circles => (DatasetSpec::circles(n, seed), false, 1.0, 0.015),
        GridPreset::Moons => (DatasetSpec::moons(n, seed), true, 0.2, 0.01),
    };
    // the cubic kernel on standardized moons has much larger entries
    let poly_lr_override = (preset == GridPreset::Moons).then_some(1e-4);
    let mut out = Vec::new();
    for degree in [None, Some(3), Some(7)] {
        let secure = degree.is_some();
        let columns: [(ModelKind, Option<KernelSpec>); 4] = [
            (ModelKind::Lr, None),
            (ModelKind::Klr, Some(KernelSpec::Linear)),
            (ModelKind::Klr, Some(KernelSpec::Polynomial { c: 1.0, degree: 3 })),
            (
                ModelKind::Klr,
                Some(if secure {
                    KernelSpec::RbfTaylor2 { gamma: rbf_gamma_t2 }
                } else {
                    KernelSpec::RbfExact { gamma: 1.0 }
                }),
            ),
        ];
        for (model, kernel) in columns {
            let mut lr = default_learning_rate(model, kernel.as_ref(), degree);
            if model == ModelKind::Lr && standardize {
                lr = 1.0;
            }
            if matches!(kernel, Some(KernelSpec::RbfTaylor2 { .. })) {
                lr = rbf_lr_t2;
            }
            if let (Some(KernelSpec::Polynomial { .. }), Some(v)) = (&kernel, poly_lr_override) {
                lr = v;
            }
            out.push(ExperimentConfig {
                dataset: dataset.clone(),
                standardize,
                model,
                kernel,
                sigmoid_degree: degree,
                secure,
                train: TrainConfig {
                    learning_rate: lr,
                    sigmoid_degree: degree.unwrap_or(3),
                    seed,
                    ..TrainConfig::default()
                },
                budget: None,
                alice_features: 1,
                holdout: None,
            });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Result tables
// ---------------------------------------------------------------------------

const COLUMN_ORDER: [&str; 4] = ["LR", "KLR linear", "KLR poly-3", "KLR rbf"];

/// Published accuracies for the two synthetic datasets, for side-by-side
/// display only.
pub fn reference_accuracy(dataset: &str, row: &str, column: &str) -> Option<f64> {
    const CIRCLES: [[f64; 4]; 3] = [
        [0.5036, 0.4976, 1.00, 1.00],
        [0.5036, 0.4976, 1.00, 0.994],
        [0.5036, 0.4976, 1.00, 0.9984],
    ];
    const MOONS: [[f64; 4]; 3] = [
        [0.882, 0.8704, 0.842, 1.00],
        [0.8696, 0.81, 0.8016, 0.928],
        [0.876, 0.8304, 0.8144, 0.97],
    ];
    let table = match dataset {
        "circles" => &CIRCLES,
        "moons" => &MOONS,
        _ => return None,
    };
    let r = ["exact", "poly3", "poly7"].iter().position(|&x| x == row)?;
    let c = COLUMN_ORDER.iter().position(|&x| x == column)?;
    Some(table[r][c])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub dataset: String,
    pub sigmoid: String,
    pub column: String,
    pub accuracy: f64,
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultsTable {
    pub cells: Vec<TableCell>,
}

fn row_rank(row: &str) -> (u32, String) {
    match row.strip_prefix("poly").and_then(|d| d.parse().ok()) {
        Some(d) => (d, String::new()),
        None if row == "exact" => (0, String::new()),
        None => (u32::MAX, row.to_string()),
    }
}

fn column_rank(col: &str) -> (usize, String) {
    let i = COLUMN_ORDER.iter().position(|&c| c == col).unwrap_or(COLUMN_ORDER.len());
    (i, col.to_string())
}

impl ResultsTable {
    /// One cell per result; a later result for the same cell replaces an earlier one.
    pub fn from_results(results: &[ExperimentResult]) -> Result<Self> {
        if results.is_empty() {
            return Err(Error::InvalidInput("no results to tabulate".into()));
        }
        let mut map: BTreeMap<(String, String, String), f64> = BTreeMap::new();
        for r in results {
            if !(0.0..=1.0).contains(&r.accuracy) {
                return Err(Error::InvalidInput(format!("accuracy {} out of range", r.accuracy)));
            }
            map.insert((r.dataset_name.clone(), r.config.row(), r.config.column()), r.accuracy);
        }
        let cells = map
            .into_iter()
            .map(|((dataset, sigmoid, column), accuracy)| TableCell {
                reference: reference_accuracy(&dataset, &sigmoid, &column),
                dataset,
                sigmoid,
                column,
                accuracy,
            })
            .collect();
        Ok(ResultsTable { cells })
    }

    pub fn datasets(&self) -> Vec<String> {
        let mut v: Vec<String> = self.cells.iter().map(|c| c.dataset.clone()).collect();
        v.dedup();
        v.sort();
        v.dedup();
        v
    }

    fn cell(&self, dataset: &str, row: &str, col: &str) -> Option<&TableCell> {
        self.cells
            .iter()
            .find(|c| c.dataset == dataset && c.sigmoid == row && c.column == col)
    }

    /// Rows and columns present for `dataset`, in display order.
    pub fn layout(&self, dataset: &str) -> (Vec<String>, Vec<String>) {
        let mut rows: Vec<String> = Vec::new();
        let mut cols: Vec<String> = Vec::new();
        for c in self.cells.iter().filter(|c| c.dataset == dataset) {
            if !rows.contains(&c.sigmoid) {
                rows.push(c.sigmoid.clone());
            }
            if !cols.contains(&c.column) {
                cols.push(c.column.clone());
            }
        }
        rows.sort_by_key(|r| row_rank(r));
        cols.sort_by_key(|c| column_rank(c));
        (rows, cols)
    }

    /// Aligned text, one matrix per dataset. Published figures follow in
    /// brackets where they exist.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for ds in self.datasets() {
            let (rows, cols) = self.layout(&ds);
            let _ = writeln!(out, "dataset: {ds}   (accuracy [published])");
            let w0 = rows.iter().map(String::len).max().unwrap_or(0).max(7);
            let width = 18;
            let _ = write!(out, "{:<w0$}", "sigmoid");
            for c in &cols {
                let _ = write!(out, "  {c:>width$}");
            }
            out.push('\n');
            for r in &rows {
                let _ = write!(out, "{r:<w0$}");
                for c in &cols {
                    let text = match self.cell(&ds, r, c) {
                        Some(cell) => match cell.reference {
                            Some(p) => format!("{:.4} [{p:.4}]", cell.accuracy),
                            None => format!("{:.4}", cell.accuracy),
                        },
                        None => "-".into(),
                    };
                    let _ = write!(out, "  {text:>width$}");
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }

    /// Long-format CSV: one line per cell.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.cells {
            w.serialize(c)?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?)
            .expect("csv output is utf-8");
        Ok(format!("# schema_version: {RESULT_SCHEMA_VERSION}\n{body}"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let cells = r.deserialize().collect::<std::result::Result<Vec<TableCell>, _>>()?;
        Ok(ResultsTable { cells })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetSpec::moons(40, 1),
            standardize: true,
            model: ModelKind::Lr,
            kernel: None,
            sigmoid_degree: Some(3),
            secure: true,
            train: TrainConfig {
                iterations: 3,
                ..TrainConfig::default()
            },
            budget: None,
            alice_features: 1,
            holdout: None,
        }
    }

    #[test]
    fn validation_rules() {
        assert!(cfg().validate().is_ok());
        let mut c = cfg();
        c.sigmoid_degree = None;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.model = ModelKind::Klr;
        c.kernel = Some(KernelSpec::RbfExact { gamma: 1.0 });
        assert!(c.validate().is_err());
        c.secure = false;
        assert!(c.validate().is_ok());
        let mut c = cfg();
        c.kernel = Some(KernelSpec::Linear);
        assert!(c.validate().is_err());
    }

    #[test]
    fn secure_run_records_depth_and_audit() {
        let run = run_experiment(&cfg()).unwrap();
        assert_eq!(run.result.report.max_depth_reached, 5);
        assert!(run.result.depth_check.as_ref().unwrap().passed());
        assert_eq!(run.result.audit_passed, Some(true));
        assert!(run.transcript.is_some());
    }

    #[test]
    fn holdout_run() {
        let mut c = cfg();
        c.secure = false;
        c.holdout = Some(0.25);
        let run = run_experiment(&c).unwrap();
        assert_eq!(run.result.n, 30);
        assert!(run.result.audit_passed.is_none());
    }

    #[test]
    fn grid_shape() {
        let g = accuracy_grid(GridPreset::Circles, 100, 0);
        assert_eq!(g.len(), 12);
        assert!(g.iter().all(|c| c.validate().is_ok()));
        let cols: std::collections::BTreeSet<String> = g.iter().map(ExperimentConfig::column).collect();
        assert_eq!(cols.len(), 4);
    }

    #[test]
    fn reference_lookup() {
        assert_eq!(reference_accuracy("circles", "exact", "LR"), Some(0.5036));
        assert_eq!(reference_accuracy("moons", "poly3", "KLR rbf"), Some(0.928));
        assert_eq!(reference_accuracy("moons", "poly5", "KLR rbf"), None);
    }
}
