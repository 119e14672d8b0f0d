//! Secure LR/KLR training over the federation, plaintext baselines and
//! accuracy evaluation.
//!
//! In the secure loop Eve holds the model. Each iteration she encrypts it and
//! sends it to Bob, Bob evaluates the polynomial-sigmoid gradient over his
//! encrypted rows and returns the encrypted aggregate together with the
//! learning rate, and Eve decrypts it and takes the step.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::approx::{
    check_labels, default_sigmoid_poly, gram_matrix, klr_gradient, lr_gradient, KernelMatrix,
    KernelSpec, Sigmoid, SigmoidPoly,
};
use crate::dataset::{Dataset, VerticalSplit};
use crate::error::{Error, Result};
use crate::he::{LeveledHe, PlainVector, TrackedCiphertext};
use crate::ledger::{depth_law, CostLedger, ModelKind};
use crate::protocol::{Federation, MessageKind, PartyId, Payload, ProtocolTranscript};

pub const MAX_SIGMOID_DEGREE: u32 = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: u32,
    pub sigmoid_degree: u32,
    /// Only read by the plaintext KLR trainer.
    pub lambda_reg: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1.0,
            iterations: 20,
            sigmoid_degree: 3,
            lambda_reg: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(1..=MAX_SIGMOID_DEGREE).contains(&self.sigmoid_degree) {
            return Err(Error::InvalidInput(format!(
                "sigmoid degree must be in 1..={MAX_SIGMOID_DEGREE}, got {}",
                self.sigmoid_degree
            )));
        }
        if !(self.lambda_reg >= 0.0) {
            return Err(Error::InvalidInput("lambda_reg must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: ModelKind,
    /// `w` over the aggregated features for LR, `beta` over the training
    /// samples for KLR.
    pub weights: Vec<f64>,
    pub kernel: Option<KernelSpec>,
    pub sigmoid: Sigmoid,
}

impl Model {
    /// Score of sample `i`: `w.x_i` for LR, `sum_j beta_j K[i, j]` for KLR
    /// where `k` holds evaluation rows against training columns.
    fn score(&self, data: &Dataset, k: Option<&DMatrix<f64>>, i: usize) -> f64 {
        match (self.kind, k) {
            (ModelKind::Lr, _) => data.x.row(i).iter().zip(&self.weights).map(|(a, b)| a * b).sum(),
            (ModelKind::Klr, Some(k)) => k.row(i).iter().zip(&self.weights).map(|(a, b)| a * b).sum(),
            (ModelKind::Klr, None) => unreachable!("checked by evaluate"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub final_model: Model,
    /// Model after each iteration.
    pub weight_history: Vec<Vec<f64>>,
    /// Euclidean norm of the gradient used at each iteration.
    pub grad_norms: Vec<f64>,
    pub ledger: CostLedger,
    pub max_depth_reached: u32,
    pub depth_budget: Option<u32>,
    pub secure: bool,
    /// Informational only.
    pub wall_time_secs: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// Secure training
// ---------------------------------------------------------------------------

/// Bob's side of one iteration: `[T] = sum_i sum_k alpha_k [t_i^k] [x_i]`
/// with `t_i = <[w], [x_i]>` and `alpha_k = a_k (-y_i)^(k+1) / N`.
fn bob_gradient(fed: &Federation, rows: &[TrackedCiphertext], poly: &SigmoidPoly, lr: f64) -> Result<()> {
    let be = fed.backend();
    let msg = fed.channel.recv(PartyId::Bob, MessageKind::EncryptedModel)?;
    let w = msg
        .ciphertexts()?
        .first()
        .ok_or_else(|| Error::Protocol("empty model message".into()))?;
    let n = rows.len() as f64;
    let y = fed.labels();
    let d = poly.degree;

    let mut total: Option<TrackedCiphertext> = None;
    for (x, &yi) in rows.iter().zip(y) {
        let alpha = |k: u32| poly.coefficients[k as usize] * (-yi).powi(k as i32 + 1) / n;
        let t = be.sum_slots(&be.mul(w, x)?)?;
        let powers = be.power_tree(&t, d)?;
        let mut term = be.mul_plain(x, &PlainVector::scalar(alpha(0)))?;
        for k in 1..=d {
            let scaled = be.mul_plain(&powers[k as usize - 1], &PlainVector::scalar(alpha(k)))?;
            term = be.add(&term, &be.mul(&scaled, x)?)?;
        }
        total = Some(match total {
            None => term,
            Some(acc) => be.add(&acc, &term)?,
        });
    }
    let total = total.ok_or_else(|| Error::InvalidInput("no training rows".into()))?;
    fed.channel.send(
        PartyId::Bob,
        PartyId::Eve,
        MessageKind::EncryptedGradient,
        Payload::Ciphertexts(vec![total]),
    );
    fed.channel.send(
        PartyId::Bob,
        PartyId::Eve,
        MessageKind::Params,
        Payload::params([("learning_rate", lr)]),
    );
    Ok(())
}

fn eve_send_model(fed: &Federation, w: &[f64]) -> Result<()> {
    let ct = fed
        .backend()
        .encrypt(&fed.eve_public_key(), &PlainVector::new(w.to_vec())?)?;
    fed.channel.send(
        PartyId::Eve,
        PartyId::Bob,
        MessageKind::EncryptedModel,
        Payload::Ciphertexts(vec![ct]),
    );
    Ok(())
}

/// Eve decrypts `[T]`, applies `w <- w - lr T` and returns `T`.
fn eve_update(fed: &Federation, w: &mut [f64]) -> Result<Vec<f64>> {
    let msg = fed.channel.recv(PartyId::Eve, MessageKind::EncryptedGradient)?;
    let ct = msg
        .ciphertexts()?
        .first()
        .ok_or_else(|| Error::Protocol("empty gradient message".into()))?;
    let grad = fed.eve_decrypt(ct)?.into_values();
    let lr = fed.channel.recv(PartyId::Eve, MessageKind::Params)?.param("learning_rate")?;
    for (wi, gi) in w.iter_mut().zip(&grad) {
        *wi -= lr * gi;
    }
    Ok(grad)
}

struct LoopOutput {
    weights: Vec<f64>,
    history: Vec<Vec<f64>>,
    grad_norms: Vec<f64>,
}

fn secure_loop(fed: &Federation, rows: &[TrackedCiphertext], poly: &SigmoidPoly, cfg: &TrainConfig) -> Result<LoopOutput> {
    let dim = rows.first().map_or(0, TrackedCiphertext::len);
    let mut w = vec![0.0; dim];
    let mut history = Vec::with_capacity(cfg.iterations as usize);
    let mut grad_norms = Vec::with_capacity(cfg.iterations as usize);
    for _ in 0..cfg.iterations {
        eve_send_model(fed, &w)?;
        bob_gradient(fed, rows, poly, cfg.learning_rate)?;
        let g = eve_update(fed, &mut w)?;
        grad_norms.push(norm(&g));
        history.push(w.clone());
    }
    Ok(LoopOutput {
        weights: w,
        history,
        grad_norms,
    })
}

fn check_secure_cfg(cfg: &TrainConfig) -> Result<SigmoidPoly> {
    cfg.validate()?;
    if cfg.iterations == 0 {
        return Err(Error::InvalidInput("secure training needs at least one iteration".into()));
    }
    default_sigmoid_poly(cfg.sigmoid_degree)
}

fn finish_report(
    fed: &Federation,
    out: LoopOutput,
    kind: ModelKind,
    kernel: Option<KernelSpec>,
    poly: SigmoidPoly,
    started: Instant,
) -> TrainReport {
    let ledger = fed.backend().ledger().total();
    TrainReport {
        final_model: Model {
            kind,
            weights: out.weights,
            kernel,
            sigmoid: Sigmoid::Poly(poly),
        },
        weight_history: out.history,
        grad_norms: out.grad_norms,
        max_depth_reached: ledger.max_depth,
        ledger,
        depth_budget: Some(fed.depth_budget()),
        secure: true,
        wall_time_secs: started.elapsed().as_secs_f64(),
    }
}

pub fn secure_train_lr(split: &VerticalSplit, cfg: &TrainConfig, budget: u32) -> Result<TrainReport> {
    secure_train_lr_with_transcript(split, cfg, budget).map(|(r, _)| r)
}

pub fn secure_train_lr_with_transcript(
    split: &VerticalSplit,
    cfg: &TrainConfig,
    budget: u32,
) -> Result<(TrainReport, ProtocolTranscript)> {
    let poly = check_secure_cfg(cfg)?;
    let started = Instant::now();
    let fed = Federation::setup(split, budget)?;
    let features = fed.exchange_features()?;
    let out = secure_loop(&fed, &features.rows, &poly, cfg)?;
    let report = finish_report(&fed, out, ModelKind::Lr, None, poly, started);
    Ok((report, fed.transcript("secure_lr_training")))
}

pub fn secure_train_klr(
    split: &VerticalSplit,
    cfg: &TrainConfig,
    kernel: &KernelSpec,
    budget: u32,
) -> Result<TrainReport> {
    secure_train_klr_with_transcript(split, cfg, kernel, budget).map(|(r, _)| r)
}

pub fn secure_train_klr_with_transcript(
    split: &VerticalSplit,
    cfg: &TrainConfig,
    kernel: &KernelSpec,
    budget: u32,
) -> Result<(TrainReport, ProtocolTranscript)> {
    let poly = check_secure_cfg(cfg)?;
    let started = Instant::now();
    let fed = Federation::setup(split, budget)?;
    let k = fed.exchange_kernel(kernel)?;
    let columns = fed.pack_kernel_columns(&k)?;
    let out = secure_loop(&fed, &columns, &poly, cfg)?;
    let report = finish_report(&fed, out, ModelKind::Klr, Some(kernel.clone()), poly, started);
    Ok((report, fed.transcript("secure_klr_training")))
}

/// Smallest budget secure training of this combination fits in.
pub fn required_budget(model: ModelKind, kernel: Option<&KernelSpec>, sigmoid_degree: u32) -> Result<u32> {
    depth_law(model, kernel, sigmoid_degree)
}

// ---------------------------------------------------------------------------
// Plaintext baselines
// ---------------------------------------------------------------------------

/// Weights after each iteration of a plaintext run.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainTrace {
    pub model: Model,
    pub weight_history: Vec<Vec<f64>>,
    pub grad_norms: Vec<f64>,
}

impl PlainTrace {
    pub fn into_report(self, started: Instant) -> TrainReport {
        TrainReport {
            final_model: self.model,
            weight_history: self.weight_history,
            grad_norms: self.grad_norms,
            ledger: CostLedger::new("plaintext"),
            max_depth_reached: 0,
            depth_budget: None,
            secure: false,
            wall_time_secs: started.elapsed().as_secs_f64(),
        }
    }
}

fn descend(
    dim: usize,
    cfg: &TrainConfig,
    grad: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    let mut w = vec![0.0; dim];
    let mut history = Vec::with_capacity(cfg.iterations as usize);
    let mut norms = Vec::with_capacity(cfg.iterations as usize);
    for _ in 0..cfg.iterations {
        let g = grad(&w)?;
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= cfg.learning_rate * gi;
        }
        norms.push(norm(&g));
        history.push(w.clone());
    }
    Ok((w, history, norms))
}

fn check_plain_cfg(cfg: &TrainConfig) -> Result<()> {
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "learning rate must be positive, got {}",
            cfg.learning_rate
        )));
    }
    if !(cfg.lambda_reg >= 0.0) {
        return Err(Error::InvalidInput("lambda_reg must be non-negative".into()));
    }
    Ok(())
}

/// Full-batch gradient descent from `w = 0`. Zero iterations return the zero model.
pub fn plaintext_train_lr(data: &Dataset, cfg: &TrainConfig, sigma: &Sigmoid) -> Result<Model> {
    plaintext_trace_lr(data, cfg, sigma).map(|t| t.model)
}

pub fn plaintext_trace_lr(data: &Dataset, cfg: &TrainConfig, sigma: &Sigmoid) -> Result<PlainTrace> {
    check_plain_cfg(cfg)?;
    check_labels(&data.y)?;
    let (w, weight_history, grad_norms) =
        descend(data.d(), cfg, |w| lr_gradient(w, &data.x, &data.y, sigma))?;
    Ok(PlainTrace {
        model: Model {
            kind: ModelKind::Lr,
            weights: w,
            kernel: None,
            sigmoid: sigma.clone(),
        },
        weight_history,
        grad_norms,
    })
}

pub fn plaintext_train_klr(
    data: &Dataset,
    cfg: &TrainConfig,
    kernel: &KernelSpec,
    sigma: &Sigmoid,
) -> Result<Model> {
    let k = gram_matrix(kernel, &data.x)?;
    plaintext_trace_klr(&k, &data.y, cfg, sigma).map(|t| t.model)
}

/// KLR descent on a precomputed Gram matrix.
pub fn plaintext_trace_klr(k: &KernelMatrix, y: &[f64], cfg: &TrainConfig, sigma: &Sigmoid) -> Result<PlainTrace> {
    check_plain_cfg(cfg)?;
    check_labels(y)?;
    let (beta, weight_history, grad_norms) =
        descend(k.n, cfg, |b| klr_gradient(b, k, y, sigma, cfg.lambda_reg))?;
    Ok(PlainTrace {
        model: Model {
            kind: ModelKind::Klr,
            weights: beta,
            kernel: Some(k.spec.clone()),
            sigmoid: sigma.clone(),
        },
        weight_history,
        grad_norms,
    })
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Fraction of correctly classified rows. Predictions are the sign of the
/// score with ties going to +1. KLR needs `k` with one row per evaluation
/// point and one column per training point.
pub fn evaluate(model: &Model, data: &Dataset, k: Option<&DMatrix<f64>>) -> Result<f64> {
    check_labels(&data.y)?;
    match model.kind {
        ModelKind::Lr => {
            if model.weights.len() != data.d() {
                return Err(Error::DimensionMismatch(format!(
                    "model has {} weights, data has {} features",
                    model.weights.len(),
                    data.d()
                )));
            }
        }
        ModelKind::Klr => {
            let k = k.ok_or_else(|| Error::InvalidInput("KLR evaluation needs a kernel matrix".into()))?;
            if k.nrows() != data.n() || k.ncols() != model.weights.len() {
                return Err(Error::DimensionMismatch(format!(
                    "kernel is {}x{}, expected {}x{}",
                    k.nrows(),
                    k.ncols(),
                    data.n(),
                    model.weights.len()
                )));
            }
        }
    }
    let correct = (0..data.n())
        .filter(|&i| {
            let pred = if model.score(data, k, i) >= 0.0 { 1.0 } else { -1.0 };
            pred == data.y[i]
        })
        .count();
    Ok(correct as f64 / data.n() as f64)
}

/// Training-set accuracy; builds the plaintext Gram matrix for KLR models.
pub fn evaluate_training(model: &Model, data: &Dataset) -> Result<f64> {
    match (&model.kind, &model.kernel) {
        (ModelKind::Lr, _) => evaluate(model, data, None),
        (ModelKind::Klr, Some(spec)) => {
            let k = gram_matrix(spec, &data.x)?;
            evaluate(model, data, Some(&k.entries))
        }
        (ModelKind::Klr, None) => Err(Error::InvalidInput("KLR model without a kernel".into())),
    }
}
