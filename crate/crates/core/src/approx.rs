//! Sigmoid, its polynomial surrogate, kernel functions and the reference
//! loss/gradient formulas for LR and KLR.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SIGMOID_SCHEMA_VERSION: u32 = 1;

/// Default fit interval and sample count for the polynomial sigmoid.
pub const DEFAULT_FIT_INTERVAL: (f64, f64) = (-8.0, 8.0);
pub const DEFAULT_FIT_POINTS: usize = 1024;

pub fn sigmoid_exact(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^s)` without overflow.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmoidPoly {
    pub schema_version: u32,
    pub degree: u32,
    /// `a_0 ..= a_d`, lowest order first.
    pub coefficients: Vec<f64>,
    pub interval: (f64, f64),
    pub fit_points: usize,
    pub residual_rms: f64,
}

impl SigmoidPoly {
    /// Polynomial from explicit coefficients (no fit metadata).
    pub fn from_coefficients(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() < 2 {
            return Err(Error::InvalidInput(
                "a sigmoid polynomial needs at least two coefficients".into(),
            ));
        }
        Ok(SigmoidPoly {
            schema_version: SIGMOID_SCHEMA_VERSION,
            degree: (coefficients.len() - 1) as u32,
            coefficients,
            interval: DEFAULT_FIT_INTERVAL,
            fit_points: 0,
            residual_rms: f64::NAN,
        })
    }

    pub fn eval(&self, s: f64) -> f64 {
        eval_poly(self, s)
    }

    /// Largest `|p(s) - sigmoid(s)|` over `grid` equally spaced points on `[lo, hi]`.
    pub fn max_deviation(&self, lo: f64, hi: f64, grid: usize) -> f64 {
        linspace(lo, hi, grid)
            .map(|s| (self.eval(s) - sigmoid_exact(s)).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: SigmoidPoly = serde_json::from_str(s)?;
        if p.coefficients.len() != p.degree as usize + 1 {
            return Err(Error::InvalidInput(format!(
                "degree {} with {} coefficients",
                p.degree,
                p.coefficients.len()
            )));
        }
        Ok(p)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| if i + 1 == n { hi } else { lo + step * i as f64 })
}

/// Least-squares polynomial fit of the logistic function on `num_points`
/// equally spaced samples of `interval`.
///
/// The normal equations are solved in the variable `z = (s - mid) / half`,
/// which keeps the Gram matrix well conditioned, and the result is mapped
/// back to powers of `s`.
pub fn fit_sigmoid_poly(degree: u32, interval: (f64, f64), num_points: usize) -> Result<SigmoidPoly> {
    let (lo, hi) = interval;
    if degree == 0 {
        return Err(Error::FitFailure("degree must be at least 1".into()));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::FitFailure(format!("degenerate interval [{lo}, {hi}]")));
    }
    let cols = degree as usize + 1;
    if num_points < cols {
        return Err(Error::FitFailure(format!(
            "{num_points} points cannot determine {cols} coefficients"
        )));
    }

    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let samples: Vec<f64> = linspace(lo, hi, num_points).collect();
    let v = DMatrix::from_fn(num_points, cols, |r, c| ((samples[r] - mid) / half).powi(c as i32));
    let target = DVector::from_iterator(num_points, samples.iter().map(|&s| sigmoid_exact(s)));

    let gram = v.transpose() * &v;
    let rhs = v.transpose() * &target;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::FitFailure("normal equations are singular".into()))?;
    let b = chol.solve(&rhs);

    // p(s) = sum_j b_j ((s - mid)/half)^j, expanded by binomial coefficients
    let mut coefficients = vec![0.0; cols];
    for (j, &bj) in b.iter().enumerate() {
        let scale = bj / half.powi(j as i32);
        let mut binom = 1.0;
        for k in 0..=j {
            coefficients[k] += scale * binom * (-mid).powi((j - k) as i32);
            binom = binom * (j - k) as f64 / (k + 1) as f64;
        }
    }

    let residual = &v * &b - &target;
    let residual_rms = (residual.norm_squared() / num_points as f64).sqrt();

    Ok(SigmoidPoly {
        schema_version: SIGMOID_SCHEMA_VERSION,
        degree,
        coefficients,
        interval,
        fit_points: num_points,
        residual_rms,
    })
}

/// Fit on the default interval and sample count.
pub fn default_sigmoid_poly(degree: u32) -> Result<SigmoidPoly> {
    fit_sigmoid_poly(degree, DEFAULT_FIT_INTERVAL, DEFAULT_FIT_POINTS)
}

/// Horner evaluation.
pub fn eval_poly(p: &SigmoidPoly, s: f64) -> f64 {
    p.coefficients.iter().rev().fold(0.0, |acc, &a| acc * s + a)
}

/// Sigmoid used by a trainer: the logistic function itself or a fitted polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Sigmoid {
    Exact,
    Poly(SigmoidPoly),
}

impl Sigmoid {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Sigmoid::Exact => sigmoid_exact(s),
            Sigmoid::Poly(p) => eval_poly(p, s),
        }
    }

    pub fn degree(&self) -> Option<u32> {
        match self {
            Sigmoid::Exact => None,
            Sigmoid::Poly(p) => Some(p.degree),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Sigmoid::Exact => "exact".into(),
            Sigmoid::Poly(p) => format!("poly{}", p.degree),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    Polynomial { c: f64, degree: u32 },
    RbfExact { gamma: f64 },
    RbfTaylor2 { gamma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { c, degree } => {
                if degree == 0 {
                    Err(Error::InvalidInput("polynomial kernel degree must be >= 1".into()))
                } else if !c.is_finite() {
                    Err(Error::InvalidInput("polynomial kernel offset must be finite".into()))
                } else {
                    Ok(())
                }
            }
            KernelSpec::RbfExact { gamma } | KernelSpec::RbfTaylor2 { gamma } => {
                if gamma > 0.0 && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")))
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Polynomial { .. } => "poly",
            KernelSpec::RbfExact { .. } => "rbf",
            KernelSpec::RbfTaylor2 { .. } => "rbf_taylor2",
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Polynomial { c, degree } => write!(f, "poly(c={c}, d={degree})"),
            KernelSpec::RbfExact { gamma } => write!(f, "rbf(gamma={gamma})"),
            KernelSpec::RbfTaylor2 { gamma } => write!(f, "rbf_taylor2(gamma={gamma})"),
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Second-order Taylor surrogate of `exp(u)`.
pub fn taylor2_exp(u: f64) -> f64 {
    1.0 + u + u * u / 2.0
}

pub fn kernel_entry(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "kernel arguments of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(match *spec {
        KernelSpec::Linear => dot(x, y),
        KernelSpec::Polynomial { c, degree } => (dot(x, y) + c).powi(degree as i32),
        KernelSpec::RbfExact { gamma } => (-gamma * sq_dist(x, y)).exp(),
        KernelSpec::RbfTaylor2 { gamma } => taylor2_exp(-gamma * sq_dist(x, y)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Plaintext,
    SecureExchange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMatrix {
    pub n: usize,
    pub entries: DMatrix<f64>,
    pub spec: KernelSpec,
    pub provenance: Provenance,
}

impl KernelMatrix {
    /// Column `K(:, i)`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.entries.column(i).iter().copied().collect()
    }

    pub fn max_asymmetry(&self) -> f64 {
        (&self.entries - self.entries.transpose()).amax()
    }
}

fn rows_of(data: &DMatrix<f64>) -> Vec<Vec<f64>> {
    data.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Gram matrix of the rows of `data`. Entries are computed independently and
/// mirrored across the diagonal, so the result is exactly symmetric.
pub fn gram_matrix(spec: &KernelSpec, data: &DMatrix<f64>) -> Result<KernelMatrix> {
    spec.validate()?;
    let n = data.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("gram matrix of an empty dataset".into()));
    }
    let rows = rows_of(data);
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let k = kernel_entry(spec, &rows[i], &rows[j])?;
            entries[(i, j)] = k;
            entries[(j, i)] = k;
        }
    }
    Ok(KernelMatrix {
        n,
        entries,
        spec: spec.clone(),
        provenance: Provenance::Plaintext,
    })
}

/// `out[(i, j)] = k(eval_i, train_j)`, used to score points outside the
/// training set with a plaintext model.
pub fn cross_gram(spec: &KernelSpec, eval: &DMatrix<f64>, train: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if eval.ncols() != train.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} evaluation features vs {} training features",
            eval.ncols(),
            train.ncols()
        )));
    }
    let e = rows_of(eval);
    let t = rows_of(train);
    let mut out = DMatrix::zeros(e.len(), t.len());
    for (i, ei) in e.iter().enumerate() {
        for (j, tj) in t.iter().enumerate() {
            out[(i, j)] = kernel_entry(spec, ei, tj)?;
        }
    }
    Ok(out)
}

pub(crate) fn check_labels(y: &[f64]) -> Result<()> {
    match y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        Some(&bad) => Err(Error::InvalidLabel(bad)),
        None => Ok(()),
    }
}

/// Mean logistic loss `(1/N) sum ln(1 + exp(-y_n w.x_n))`.
pub fn lr_loss(w: &[f64], x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    check_lr_dims(w, x, y)?;
    let n = x.nrows();
    let total: f64 = (0..n)
        .map(|i| softplus(-y[i] * row_dot(x, i, w)))
        .sum();
    Ok(total / n as f64)
}

fn row_dot(x: &DMatrix<f64>, i: usize, w: &[f64]) -> f64 {
    x.row(i).iter().zip(w).map(|(a, b)| a * b).sum()
}

fn check_lr_dims(w: &[f64], x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if w.len() != x.ncols() || y.len() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "w has {} entries, X is {}x{}, y has {}",
            w.len(),
            x.nrows(),
            x.ncols(),
            y.len()
        )));
    }
    check_labels(y)
}

/// Full-batch logistic-regression gradient
/// `(1/N) sum sigma(-y_n w.x_n) (-y_n x_n)`.
pub fn lr_gradient(w: &[f64], x: &DMatrix<f64>, y: &[f64], sigma: &Sigmoid) -> Result<Vec<f64>> {
    check_lr_dims(w, x, y)?;
    let n = x.nrows();
    let mut g = vec![0.0; x.ncols()];
    for i in 0..n {
        let coeff = sigma.eval(-y[i] * row_dot(x, i, w)) * -y[i];
        for (gj, xj) in g.iter_mut().zip(x.row(i).iter()) {
            *gj += coeff * xj;
        }
    }
    let inv = 1.0 / n as f64;
    g.iter_mut().for_each(|v| *v *= inv);
    Ok(g)
}

fn check_klr_dims(beta: &[f64], k: &KernelMatrix, y: &[f64]) -> Result<()> {
    if beta.len() != k.n || y.len() != k.n {
        return Err(Error::DimensionMismatch(format!(
            "beta has {}, K is {}x{}, y has {}",
            beta.len(),
            k.n,
            k.n,
            y.len()
        )));
    }
    check_labels(y)
}

fn kernel_score(k: &KernelMatrix, beta: &[f64], i: usize) -> f64 {
    k.entries.column(i).iter().zip(beta).map(|(a, b)| a * b).sum()
}

/// Regularized KLR loss `(lambda/N) b'Kb + (1/N) sum ln(1 + exp(-y_n b'K(:,n)))`.
pub fn klr_loss(beta: &[f64], k: &KernelMatrix, y: &[f64], lambda_reg: f64) -> Result<f64> {
    check_klr_dims(beta, k, y)?;
    let n = k.n;
    let b = DVector::from_column_slice(beta);
    let quad = b.dot(&(&k.entries * &b));
    let data: f64 = (0..n).map(|i| softplus(-y[i] * kernel_score(k, beta, i))).sum();
    Ok((lambda_reg * quad + data) / n as f64)
}

/// KLR gradient `(2 lambda/N) K'b + (1/N) sum sigma(-y_n b'K(:,n)) (-y_n K(:,n))`.
pub fn klr_gradient(
    beta: &[f64],
    k: &KernelMatrix,
    y: &[f64],
    sigma: &Sigmoid,
    lambda_reg: f64,
) -> Result<Vec<f64>> {
    check_klr_dims(beta, k, y)?;
    if lambda_reg < 0.0 {
        return Err(Error::InvalidInput("lambda_reg must be non-negative".into()));
    }
    let n = k.n;
    let mut g = vec![0.0; n];
    for i in 0..n {
        let coeff = sigma.eval(-y[i] * kernel_score(k, beta, i)) * -y[i];
        for (gj, kj) in g.iter_mut().zip(k.entries.column(i).iter()) {
            *gj += coeff * kj;
        }
    }
    if lambda_reg != 0.0 {
        let b = DVector::from_column_slice(beta);
        let reg = k.entries.transpose() * b;
        for (gj, r) in g.iter_mut().zip(reg.iter()) {
            *gj += 2.0 * lambda_reg * r;
        }
    }
    let inv = 1.0 / n as f64;
    g.iter_mut().for_each(|v| *v *= inv);
    Ok(g)
}
