//! Experiment orchestration: configuration, the comparison grid, summaries
//! and the analysis commands behind the CLI.

mod commands;
mod config;
mod grid;
mod summary;
pub mod svg;

pub use commands::{
    allocate, analyze_quadratic, certify, AllocationReport, CertifyReport, QuadraticSweepRow,
};
pub use config::{
    load_json, AllocateConfig, CertifyConfig, DataSource, ExperimentConfig, GenDataConfig, ObjectiveSpec,
    QuadraticAnalysisConfig,
};
pub use grid::{plan_run, run_grid, trace_file_stem, FailedRun, GridOutput, RunPlan};
pub use summary::{load_trace, load_traces, summarize, BestRecord, Summary, SummaryRecord, LOG_FLOOR};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::objectives::{generate_synthetic, Dataset, LogisticObjective, Objective, QuadraticObjective};
use crate::optimizers::{dp_nag_step, nesterov_momentum, OptimizerState};
use crate::privacy::{LaplaceScale, RngStream};

/// Materialises the objective described by `spec`.
pub fn build_objective(spec: &ObjectiveSpec) -> Result<Box<dyn Objective>> {
    Ok(match spec {
        ObjectiveSpec::Logistic { data, lambda } => {
            let dataset = match data {
                DataSource::Synthetic { n, d, u_max, seed } => generate_synthetic(*d, *n, *u_max, *seed)?,
                DataSource::File { path } => Dataset::load(path)?,
            };
            Box::new(LogisticObjective::new(dataset, *lambda)?)
        }
        ObjectiveSpec::Quadratic { q, records, b, s1 } => {
            Box::new(QuadraticObjective::with_records(q.clone(), records.clone(), *b)?.with_sensitivity(*s1))
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOptimum {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub gradient_norm: f64,
}

/// Minimiser found by noise-free full-gradient NAG with `α = 1/L` from the origin.
pub fn reference_optimum<O: Objective + ?Sized>(obj: &O, iterations: usize) -> Result<ReferenceOptimum> {
    let alpha = 1.0 / obj.smoothness();
    let beta = nesterov_momentum(alpha, obj.strong_convexity());
    let mut state = OptimizerState::new(vec![0.0; obj.dim()]);
    let mut rng = RngStream::new(0);
    for _ in 0..iterations {
        dp_nag_step(&mut state, obj, alpha, beta, obj.num_records(), LaplaceScale::off(), &mut rng)?;
    }
    let x_star = state.x().to_vec();
    let gradient_norm = obj.full_gradient(&x_star).iter().map(|g| g * g).sum::<f64>().sqrt();
    Ok(ReferenceOptimum {
        f_star: obj.value(&x_star),
        x_star,
        gradient_norm,
    })
}
