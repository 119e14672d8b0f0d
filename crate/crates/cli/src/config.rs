//! Optional TOML run file. Every key is optional and is overridden by the
//! matching command-line flag.
//!
//! ```toml
//! dataset = "circles"      # circles | moons | path to a CSV file
//! n = 500
//! seed = 7
//! model = "klr"            # lr | klr
//! kernel = "poly"          # linear | poly | rbf | rbf-taylor2
//! dpoly = 3
//! sigmoid_degree = 3       # omit, or sigmoid = "exact", for the exact sigmoid
//! secure = true
//! learning_rate = 0.0096
//! iterations = 20
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::Deserialize;

use crate::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Lr,
    Klr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelArg {
    Linear,
    Poly,
    /// Exact RBF kernel, plaintext only.
    Rbf,
    /// Second-order Taylor RBF kernel.
    RbfTaylor2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmoidArg {
    Exact,
    Poly,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<String>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub noise: Option<f64>,
    pub factor: Option<f64>,
    pub label_column: Option<String>,
    pub positive_label: Option<String>,
    pub standardize: Option<bool>,
    pub model: Option<ModelArg>,
    pub kernel: Option<KernelArg>,
    pub dpoly: Option<u32>,
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub sigmoid: Option<SigmoidArg>,
    pub sigmoid_degree: Option<u32>,
    pub secure: Option<bool>,
    pub learning_rate: Option<f64>,
    pub iterations: Option<u32>,
    pub lambda_reg: Option<f64>,
    pub budget: Option<u32>,
    pub alice_features: Option<usize>,
    pub holdout: Option<f64>,
    pub out: Option<PathBuf>,
    pub transcript: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))
            .map_err(Into::into)
    }
}
