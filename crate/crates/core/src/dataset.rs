//! Synthetic generators, CSV input/output, standardization and the vertical
//! split into Alice's and Bob's feature shares.

use std::f64::consts::PI;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::approx::check_labels;
use crate::error::{Error, Result};

pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    /// Labels in {-1, +1}.
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "dataset must be non-empty, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if feature_names.len() != x.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns but {} feature names",
                x.ncols(),
                feature_names.len()
            )));
        }
        check_labels(&y)?;
        Ok(Dataset {
            x,
            y,
            feature_names,
        })
    }

    /// Builds a dataset with generated names `x0, x1, ...`.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Dataset::new(x, y, default_names(d))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    /// (count of -1 labels, count of +1 labels)
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.y.iter().filter(|&&v| v > 0.0).count();
        (self.y.len() - pos, pos)
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Result<Dataset> {
        if n == 0 || n > self.n() {
            return Err(Error::InvalidInput(format!(
                "cannot take {n} rows of {}",
                self.n()
            )));
        }
        Dataset::new(
            self.x.rows(0, n).into_owned(),
            self.y[..n].to_vec(),
            self.feature_names.clone(),
        )
    }

    fn select(&self, idx: &[usize]) -> Result<Dataset> {
        let x = DMatrix::from_fn(idx.len(), self.d(), |i, j| self.x[(idx[i], j)]);
        let y = idx.iter().map(|&i| self.y[i]).collect();
        Dataset::new(x, y, self.feature_names.clone())
    }
}

fn default_names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

/// Standard normal draws by the Box-Muller transform.
struct Gaussian {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl Gaussian {
    fn new(seed: u64) -> Self {
        Gaussian {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite
        let u1: f64 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

fn check_even(n: usize) -> Result<()> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "sample count must be a positive even number, got {n}"
        )));
    }
    Ok(())
}

fn check_noise(noise: f64) -> Result<()> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidInput(format!("noise must be >= 0, got {noise}")));
    }
    Ok(())
}

/// Adds noise, shuffles rows and packs the result.
fn finish(mut points: Vec<([f64; 2], f64)>, noise: f64, mut g: Gaussian) -> Result<Dataset> {
    if noise > 0.0 {
        for (p, _) in points.iter_mut() {
            p[0] += noise * g.sample();
            p[1] += noise * g.sample();
        }
    }
    points.shuffle(&mut g.rng);
    let x = DMatrix::from_fn(points.len(), 2, |i, j| points[i].0[j]);
    let y = points.iter().map(|p| p.1).collect();
    Dataset::new(x, y, default_names(2))
}

/// Two concentric circles: radius 1 labelled -1, radius `factor` labelled +1.
pub fn make_circles(n: usize, noise: f64, factor: f64, seed: u64) -> Result<Dataset> {
    check_even(n)?;
    check_noise(noise)?;
    if !(factor > 0.0 && factor < 1.0) {
        return Err(Error::InvalidInput(format!("factor must lie in (0, 1), got {factor}")));
    }
    let half = n / 2;
    let mut points = Vec::with_capacity(n);
    for i in 0..half {
        let t = 2.0 * PI * i as f64 / half as f64;
        points.push(([t.cos(), t.sin()], -1.0));
    }
    for i in 0..half {
        let t = 2.0 * PI * i as f64 / half as f64;
        points.push(([factor * t.cos(), factor * t.sin()], 1.0));
    }
    finish(points, noise, Gaussian::new(seed))
}

/// Two interleaving half circles: the upper arc labelled -1, the lower +1.
pub fn make_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    check_even(n)?;
    check_noise(noise)?;
    let half = n / 2;
    let step = if half > 1 { PI / (half - 1) as f64 } else { 0.0 };
    let mut points = Vec::with_capacity(n);
    for i in 0..half {
        let t = step * i as f64;
        points.push(([t.cos(), t.sin()], -1.0));
    }
    for i in 0..half {
        let t = step * i as f64;
        points.push(([1.0 - t.cos(), 0.5 - t.sin()], 1.0));
    }
    finish(points, noise, Gaussian::new(seed))
}

/// Seeded shuffle split into (train, test); `test_fraction` in (0, 1).
pub fn train_test_split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n_test = ((d.n() as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test >= d.n() {
        return Err(Error::InvalidInput(format!(
            "test fraction {test_fraction} leaves an empty side for {} rows",
            d.n()
        )));
    }
    let mut idx: Vec<usize> = (0..d.n()).collect();
    idx.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let (test, train) = idx.split_at(n_test);
    Ok((d.select(train)?, d.select(test)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerticalSplit {
    pub alice_x: DMatrix<f64>,
    pub bob_x: DMatrix<f64>,
    pub bob_y: Vec<f64>,
    pub alice_names: Vec<String>,
    pub bob_names: Vec<String>,
}

impl VerticalSplit {
    pub fn n(&self) -> usize {
        self.bob_y.len()
    }

    /// `[alice_x | bob_x]` with Bob's labels.
    pub fn concat(&self) -> Result<Dataset> {
        if self.alice_x.nrows() != self.bob_x.nrows() {
            return Err(Error::Alignment {
                alice: self.alice_x.nrows(),
                bob: self.bob_x.nrows(),
            });
        }
        let da = self.alice_x.ncols();
        let x = DMatrix::from_fn(self.alice_x.nrows(), da + self.bob_x.ncols(), |i, j| {
            if j < da {
                self.alice_x[(i, j)]
            } else {
                self.bob_x[(i, j - da)]
            }
        });
        let mut names = self.alice_names.clone();
        names.extend(self.bob_names.iter().cloned());
        Dataset::new(x, self.bob_y.clone(), names)
    }
}

/// First `d_a` columns to Alice, the rest and the labels to Bob.
pub fn vertical_split(d: &Dataset, d_a: usize) -> Result<VerticalSplit> {
    if d_a == 0 || d_a >= d.d() {
        return Err(Error::InvalidInput(format!(
            "alice's share must be between 1 and {} columns, got {d_a}",
            d.d() - 1
        )));
    }
    Ok(VerticalSplit {
        alice_x: d.x.columns(0, d_a).into_owned(),
        bob_x: d.x.columns(d_a, d.d() - d_a).into_owned(),
        bob_y: d.y.clone(),
        alice_names: d.feature_names[..d_a].to_vec(),
        bob_names: d.feature_names[d_a..].to_vec(),
    })
}

fn label_is_positive(raw: &str, positive: &str) -> bool {
    let raw = raw.trim();
    let positive = positive.trim();
    if raw == positive {
        return true;
    }
    matches!((raw.parse::<f64>(), positive.parse::<f64>()), (Ok(a), Ok(b)) if a == b)
}

/// Reads a header-row CSV. Every column other than `label_column` must be
/// numeric; labels equal to `positive_label` map to +1, everything else to -1.
/// Lines starting with `#` are ignored.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, positive_label: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingColumn(label_column.to_string()))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    if names.is_empty() {
        return Err(Error::InvalidInput("no feature columns".into()));
    }

    let mut values = Vec::new();
    let mut y = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: row + 1,
                column: headers.get(j).unwrap_or("?").to_string(),
                reason: format!("`{cell}` is not a number"),
            })?;
            values.push(v);
        }
        y.push(if label_is_positive(&record[label_idx], positive_label) {
            1.0
        } else {
            -1.0
        });
    }
    let x = DMatrix::from_row_slice(y.len(), names.len(), &values);
    Dataset::new(x, y, names)
}

/// Writes the dataset with a trailing `label` column in {-1, 1}. The first
/// line is a `# schema_version` comment that `load_csv` skips.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "# schema_version: {CSV_SCHEMA_VERSION}").map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = d.feature_names.clone();
    header.push("label".into());
    w.write_record(&header)?;
    for i in 0..d.n() {
        let mut rec: Vec<String> = d.x.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(format!("{}", d.y[i] as i64));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn standardize_matrix(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd <= f64::EPSILON * mean.abs().max(1.0) {
            col.fill(0.0);
        } else {
            col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
        }
    }
    out
}

/// Zero mean, unit population variance per column. Constant columns become 0.
pub fn standardize(d: &Dataset) -> Result<Dataset> {
    if d.n() < 2 {
        return Err(Error::InvalidInput("standardize needs at least two rows".into()));
    }
    Dataset::new(standardize_matrix(&d.x), d.y.clone(), d.feature_names.clone())
}

/// Standardizes each party's columns locally. Column statistics never mix
/// parties, so this equals splitting the standardized dataset.
pub fn standardize_split(s: &VerticalSplit) -> Result<VerticalSplit> {
    if s.n() < 2 {
        return Err(Error::InvalidInput("standardize needs at least two rows".into()));
    }
    Ok(VerticalSplit {
        alice_x: standardize_matrix(&s.alice_x),
        bob_x: standardize_matrix(&s.bob_x),
        ..s.clone()
    })
}
