use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::optimizers::Algorithm;

/// Reads a JSON document; missing fields take their defaults.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Where the logistic-regression records come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    Synthetic { n: usize, d: usize, u_max: f64, seed: u64 },
    File { path: PathBuf },
}

impl Default for DataSource {
    fn default() -> Self {
        Self::Synthetic {
            n: 10_000,
            d: 20,
            u_max: 20.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObjectiveSpec {
    Logistic {
        #[serde(default)]
        data: DataSource,
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    /// Finite-sum quadratic; each entry of `records` is one record's linear term.
    Quadratic {
        q: Vec<Vec<f64>>,
        records: Vec<Vec<f64>>,
        #[serde(default)]
        b: f64,
        s1: f64,
    },
}

fn default_lambda() -> f64 {
    0.01
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        Self::Logistic {
            data: DataSource::default(),
            lambda: default_lambda(),
        }
    }
}

/// The comparison grid: every algorithm at every `(m, T, c)`, replicated over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSpec,
    pub algorithms: Vec<Algorithm>,
    pub batch_sizes: Vec<usize>,
    pub horizons: Vec<usize>,
    /// Stepsize factors `c` in `α = c/L`.
    pub step_factors: Vec<f64>,
    pub epsilon: f64,
    pub replicates: usize,
    /// Explicit seeds; when absent, `seed_base, seed_base + 1, …` are used.
    pub seeds: Option<Vec<u64>>,
    pub seed_base: u64,
    /// Guess of `F(x₀) - F*` used to pick the horizon of the optimized variants.
    pub e0_guess: f64,
    pub masg_p: u32,
    /// Length of the first multi-stage stage; defaults to one stage unit.
    pub masg_first_stage: Option<usize>,
    pub reference_iterations: usize,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    pub write_traces: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            objective: ObjectiveSpec::default(),
            algorithms: Algorithm::ALL.to_vec(),
            batch_sizes: vec![1_000, 10_000],
            horizons: vec![100, 200, 500, 1000],
            step_factors: vec![0.1, 1.0],
            epsilon: 1.0,
            replicates: 20,
            seeds: None,
            seed_base: 0,
            e0_guess: 10.0,
            masg_p: 1,
            masg_first_stage: None,
            reference_iterations: 1000,
            workers: 0,
            write_traces: true,
        }
    }
}

impl ExperimentConfig {
    pub fn seed_list(&self) -> Vec<u64> {
        match &self.seeds {
            Some(seeds) => seeds.clone(),
            None => (0..self.replicates as u64).map(|i| self.seed_base + i).collect(),
        }
    }

    /// Checks everything that does not need the dataset.
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.seed_list().is_empty() {
            return Err(invalid("at least one replicate is required"));
        }
        if self.algorithms.is_empty() || self.batch_sizes.is_empty() || self.horizons.is_empty() {
            return Err(invalid("algorithms, batch sizes and horizons must be non-empty"));
        }
        if self.step_factors.is_empty() || self.step_factors.iter().any(|c| !(*c > 0.0)) {
            return Err(invalid("step factors must be positive and non-empty"));
        }
        if self.batch_sizes.contains(&0) || self.horizons.contains(&0) {
            return Err(invalid("batch sizes and horizons must be at least 1"));
        }
        if !(self.e0_guess >= 0.0) {
            return Err(invalid("e0_guess must be non-negative"));
        }
        Ok(())
    }
}

/// Synthetic dataset generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenDataConfig {
    pub n: usize,
    pub d: usize,
    pub u_max: f64,
    pub seed: u64,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            d: 20,
            u_max: 20.0,
            seed: 0,
        }
    }
}

/// Noise schedules for one `(method, m, T)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AllocateConfig {
    pub algorithm: Algorithm,
    pub mu: f64,
    pub l: f64,
    pub c: f64,
    pub s1: f64,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub epsilon: f64,
    pub horizon: usize,
    /// Re-select the horizon in `1..=horizon` from the bound.
    pub select_horizon: bool,
    pub e0_guess: f64,
    pub masg_p: u32,
    pub masg_first_stage: Option<usize>,
}

impl Default for AllocateConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::MasgOpt,
            mu: 1.0,
            l: 20.0,
            c: 1.0,
            s1: 40.0,
            n: 10_000,
            m: 10_000,
            d: 20,
            epsilon: 1.0,
            horizon: 500,
            select_horizon: false,
            e0_guess: 10.0,
            masg_p: 1,
            masg_first_stage: None,
        }
    }
}

/// Certificate search plus the resulting bound curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertifyConfig {
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub l: f64,
    pub grid: crate::certification::CertificateGrid,
    /// `V_{P,c}(ξ₀)`, supplied by the caller in analysis mode.
    pub psi0: f64,
    pub s1: f64,
    pub d: usize,
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
    pub horizon: usize,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.2,
            mu: 0.5,
            l: 1.0,
            grid: Default::default(),
            psi0: 1.0,
            s1: 40.0,
            d: 20,
            n: 10_000,
            m: 10_000,
            epsilon: 1.0,
            horizon: 200,
        }
    }
}

/// Rate and bound of heavy ball on a quadratic over a `(α, β)` sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadraticAnalysisConfig {
    pub eigenvalues: Vec<f64>,
    /// Stepsizes as fractions of `1/L`.
    pub alpha_factors: Vec<f64>,
    pub betas: Vec<f64>,
    /// Noise levels `σ_T² = (T c_w)²`.
    pub noise_levels: Vec<f64>,
    pub horizon: usize,
    pub v0_norm: f64,
    pub ct_scale: f64,
}

impl Default for QuadraticAnalysisConfig {
    fn default() -> Self {
        Self {
            eigenvalues: vec![0.5, 1.0],
            alpha_factors: vec![0.25, 0.5, 1.0],
            betas: (0..100).map(|i| i as f64 / 100.0).collect(),
            noise_levels: vec![1e-4, 1e-2],
            horizon: 100,
            v0_norm: 1.0,
            ct_scale: 1.0,
        }
    }
}
