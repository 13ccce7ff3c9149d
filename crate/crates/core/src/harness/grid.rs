use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::summary::{summarize, Summary};
use super::{build_objective, reference_optimum, ReferenceOptimum};
use crate::allocation::{
    masg_coefficients, nag_coefficients, optimal_schedule, rescale_for_subsampling, select_horizon, HorizonChoice,
};
use crate::error::{invalid, Result};
use crate::objectives::Objective;
use crate::optimizers::{run, Algorithm, Method, RunOptions, StageSchedule, Trace};
use crate::privacy::{fmt_f64, uniform_scale, NoiseSchedule, PrivacyAccount, RngStream};

/// Everything about a run that does not depend on the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub algorithm: Algorithm,
    pub batch_size: usize,
    pub horizon: usize,
    pub c: f64,
    pub method: Method,
    pub schedule: NoiseSchedule,
    /// Present for the optimized variants, whose horizon comes from the bound.
    pub horizon_choice: Option<HorizonChoice>,
}

impl RunPlan {
    pub fn t_effective(&self) -> usize {
        self.schedule.len()
    }
}

/// Builds the update rule and the noise schedule. Uniform schedules spend
/// `ε/T` per iteration; the optimized variants first pick `T* ≤ T` from the
/// bound, then allocate `ε` across `T*` iterations and rescale for subsampling.
#[allow(clippy::too_many_arguments)]
pub fn plan_run<O: Objective + ?Sized>(
    obj: &O,
    algorithm: Algorithm,
    batch_size: usize,
    horizon: usize,
    c: f64,
    epsilon: f64,
    e0_guess: f64,
    masg_p: u32,
    masg_first_stage: Option<usize>,
) -> Result<RunPlan> {
    let (mu, l, s1) = (obj.strong_convexity(), obj.smoothness(), obj.sensitivity_bound());
    let (n, d) = (obj.num_records(), obj.dim());
    if batch_size == 0 || batch_size > n {
        return Err(invalid(format!("batch size {batch_size} must lie in 1..={n}")));
    }
    let stages = |t| StageSchedule::multistage(mu, l, c, masg_p, masg_first_stage, t);
    let (method, schedule, horizon_choice) = match algorithm {
        Algorithm::NagOpt | Algorithm::MasgOpt => {
            let alpha = c / l;
            let build = |t: usize| {
                if algorithm == Algorithm::NagOpt {
                    nag_coefficients(mu, l, alpha, t)
                } else {
                    masg_coefficients(mu, l, &stages(t)?)
                }
            };
            let choice = select_horizon(build, e0_guess, s1, n, epsilon, d, horizon)?;
            let coeffs = build(choice.horizon)?;
            let schedule = rescale_for_subsampling(
                &optimal_schedule(&coeffs, s1, n, epsilon)?,
                s1,
                n,
                batch_size,
                epsilon,
            )?;
            let method = algorithm.method(c, mu, l, masg_p, choice.horizon)?;
            let method = match method {
                Method::MultiStage { mu, .. } => Method::MultiStage {
                    stages: coeffs.stages().clone(),
                    mu,
                },
                other => other,
            };
            (method, schedule, Some(choice))
        }
        _ => {
            let method = match algorithm {
                Algorithm::Masg => Method::MultiStage { stages: stages(horizon)?, mu },
                _ => algorithm.method(c, mu, l, masg_p, horizon)?,
            };
            (method, uniform_scale(s1, epsilon, horizon, n, batch_size)?, None)
        }
    };
    if let Method::MultiStage { stages, .. } = &method {
        stages.check_stepsizes(l)?;
    }
    Ok(RunPlan {
        algorithm,
        batch_size,
        horizon,
        c,
        method,
        schedule,
        horizon_choice,
    })
}

/// `<algo>_<m>_<T>_<c>_<seed>`.
pub fn trace_file_stem(algorithm: &str, m: usize, horizon: usize, c: Option<f64>, seed: u64) -> String {
    let c = c.map_or_else(|| "na".to_string(), fmt_f64);
    format!("{algorithm}_{m}_{horizon}_{c}_{seed}")
}

/// A grid point that could not be planned or run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub algorithm: Algorithm,
    pub batch_size: usize,
    pub horizon: usize,
    pub c: f64,
    pub seed: Option<u64>,
    pub error: String,
}

#[derive(Clone, Debug)]
pub struct GridOutput {
    pub reference: ReferenceOptimum,
    pub plans: Vec<RunPlan>,
    pub traces: Vec<Trace>,
    pub failures: Vec<FailedRun>,
    pub summary: Summary,
}

/// Runs every `(algorithm, m, T, c, seed)` of the grid. Runs are spread over
/// `config.workers` threads; results are collected and written in config order.
pub fn run_grid(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<GridOutput> {
    config.validate()?;
    let obj = build_objective(&config.objective)?;
    let n = obj.num_records();
    if let Some(m) = config.batch_sizes.iter().find(|m| **m > n) {
        return Err(invalid(format!("batch size {m} exceeds the {n} records")));
    }
    let reference = reference_optimum(obj.as_ref(), config.reference_iterations)?;
    let seeds = config.seed_list();

    let mut plans = Vec::new();
    let mut failures = Vec::new();
    for &algorithm in &config.algorithms {
        for &m in &config.batch_sizes {
            for &horizon in &config.horizons {
                for &c in &config.step_factors {
                    match plan_run(
                        obj.as_ref(),
                        algorithm,
                        m,
                        horizon,
                        c,
                        config.epsilon,
                        config.e0_guess,
                        config.masg_p,
                        config.masg_first_stage,
                    ) {
                        Ok(plan) => plans.push(plan),
                        Err(e) => failures.push(FailedRun {
                            algorithm,
                            batch_size: m,
                            horizon,
                            c,
                            seed: None,
                            error: e.to_string(),
                        }),
                    }
                }
            }
        }
    }

    let jobs: Vec<(usize, u64)> = (0..plans.len())
        .flat_map(|p| seeds.iter().map(move |s| (p, *s)))
        .collect();
    let execute = |&(p, seed): &(usize, u64)| -> Result<Trace> {
        let plan = &plans[p];
        let mut account = PrivacyAccount::new(config.epsilon, plan.t_effective(), n, plan.batch_size)?;
        let options = RunOptions {
            algorithm: plan.algorithm.name().to_string(),
            batch_size: plan.batch_size,
            f_star: reference.f_star,
            horizon: Some(plan.horizon),
            c: Some(plan.c),
            keep_iterates: false,
        };
        let x0 = vec![0.0; obj.dim()];
        run(
            &plan.method,
            obj.as_ref(),
            &plan.schedule,
            &mut account,
            &mut RngStream::new(seed),
            &x0,
            &options,
        )
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<Trace>> = pool.install(|| jobs.par_iter().map(execute).collect());

    let mut traces = Vec::with_capacity(results.len());
    for ((p, seed), result) in jobs.iter().zip(results) {
        match result {
            Ok(trace) => traces.push(trace),
            Err(e) => {
                let plan = &plans[*p];
                failures.push(FailedRun {
                    algorithm: plan.algorithm,
                    batch_size: plan.batch_size,
                    horizon: plan.horizon,
                    c: plan.c,
                    seed: Some(*seed),
                    error: e.to_string(),
                });
            }
        }
    }
    let summary = summarize(&traces)?;
    let output = GridOutput {
        reference,
        plans,
        traces,
        failures,
        summary,
    };
    if let Some(dir) = out_dir {
        write_outputs(&output, obj.as_ref(), config, dir)?;
    }
    Ok(output)
}

fn write_outputs<O: Objective + ?Sized>(
    output: &GridOutput,
    obj: &O,
    config: &ExperimentConfig,
    dir: &Path,
) -> Result<()> {
    let traces_dir = dir.join("traces");
    let schedules_dir = dir.join("schedules");
    fs::create_dir_all(&traces_dir)?;
    fs::create_dir_all(&schedules_dir)?;
    let (s1, n) = (obj.sensitivity_bound(), obj.num_records());
    for plan in &output.plans {
        let stem = format!(
            "{}_{}_{}_{}",
            plan.algorithm.name(),
            plan.batch_size,
            plan.horizon,
            fmt_f64(plan.c)
        );
        let file = BufWriter::new(File::create(schedules_dir.join(format!("{stem}.csv")))?);
        plan.schedule.write_csv(file, s1, n, plan.batch_size)?;
    }
    if config.write_traces {
        for trace in &output.traces {
            let m = &trace.meta;
            let stem = trace_file_stem(&m.algorithm, m.batch_size, m.horizon, m.c, m.seed);
            trace.write_csv(BufWriter::new(File::create(traces_dir.join(format!("{stem}.csv")))?))?;
            serde_json::to_writer_pretty(File::create(traces_dir.join(format!("{stem}.json")))?, m)?;
        }
    }
    serde_json::to_writer_pretty(File::create(dir.join("reference.json"))?, &output.reference)?;
    serde_json::to_writer_pretty(File::create(dir.join("summary.json"))?, &output.summary)?;
    serde_json::to_writer_pretty(File::create(dir.join("failures.json"))?, &output.failures)?;
    serde_json::to_writer_pretty(File::create(dir.join("config.json"))?, config)?;
    Ok(())
}
