use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{AllocateConfig, CertifyConfig, QuadraticAnalysisConfig};
use crate::allocation::{
    masg_coefficients, nag_coefficients, optimal_schedule, rescale_for_subsampling, select_horizon,
    BoundCoefficients, HorizonChoice,
};
use crate::certification::{
    eval_shb_bound, noise_bound, quadratic_bound, quadratic_rate, search_certificate, Certificate, NoiseBound,
};
use crate::error::{invalid, Result};
use crate::objectives::subsampling_variance_bound;
use crate::optimizers::{Algorithm, StageSchedule};
use crate::privacy::{fmt_f64, per_iteration_epsilon, uniform_scale, NoiseSchedule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub algorithm: Algorithm,
    pub horizon: usize,
    pub horizon_choice: Option<HorizonChoice>,
    pub coefficients: Option<Vec<f64>>,
    pub schedule: NoiseSchedule,
    /// Exact per-iteration leaks of `schedule`.
    pub leaks: Vec<f64>,
    pub total_leak: f64,
    /// Bound value with the uniform schedule, when coefficients exist.
    pub uniform_bound: Option<f64>,
    /// Bound value with `schedule`, when coefficients exist.
    pub schedule_bound: Option<f64>,
}

impl AllocationReport {
    pub fn write_schedule_csv<W: Write>(&self, writer: W, s1: f64, n: usize, m: usize) -> Result<()> {
        self.schedule.write_csv(writer, s1, n, m)
    }
}

/// Builds the noise schedule an algorithm would use, with the bound values of
/// the uniform and the chosen schedule.
pub fn allocate(cfg: &AllocateConfig) -> Result<AllocationReport> {
    let (mu, l, c) = (cfg.mu, cfg.l, cfg.c);
    let alpha = c / l;
    let coefficients = |t: usize| -> Result<Option<BoundCoefficients>> {
        Ok(match cfg.algorithm {
            Algorithm::Nag | Algorithm::NagOpt => Some(nag_coefficients(mu, l, alpha, t)?),
            Algorithm::Masg | Algorithm::MasgOpt => Some(masg_coefficients(
                mu,
                l,
                &StageSchedule::multistage(mu, l, c, cfg.masg_p, cfg.masg_first_stage, t)?,
            )?),
            Algorithm::Gd | Algorithm::Hb => None,
        })
    };
    let horizon_choice = if cfg.select_horizon && coefficients(1)?.is_some() {
        let build = |t| coefficients(t).map(|c| c.expect("coefficients exist for this algorithm"));
        Some(select_horizon(build, cfg.e0_guess, cfg.s1, cfg.n, cfg.epsilon, cfg.d, cfg.horizon)?)
    } else {
        None
    };
    let horizon = horizon_choice.map_or(cfg.horizon, |h| h.horizon);
    let coeffs = coefficients(horizon)?;
    let uniform = uniform_scale(cfg.s1, cfg.epsilon, horizon, cfg.n, cfg.m)?;
    let schedule = match (&coeffs, cfg.algorithm.is_optimized()) {
        (Some(coeffs), true) => rescale_for_subsampling(
            &optimal_schedule(coeffs, cfg.s1, cfg.n, cfg.epsilon)?,
            cfg.s1,
            cfg.n,
            cfg.m,
            cfg.epsilon,
        )?,
        _ => uniform.clone(),
    };
    let sigma_s2 = subsampling_variance_bound(cfg.s1, cfg.n, cfg.m);
    let bound = |s: &NoiseSchedule| -> Result<Option<f64>> {
        coeffs
            .as_ref()
            .map(|c| c.bound_with_schedule(cfg.e0_guess, s.scales(), cfg.d, sigma_s2))
            .transpose()
    };
    let leaks = schedule.leaks(cfg.s1, cfg.n, cfg.m)?;
    Ok(AllocationReport {
        algorithm: cfg.algorithm,
        horizon,
        horizon_choice,
        coefficients: coeffs.as_ref().map(|c| c.values().to_vec()),
        uniform_bound: bound(&uniform)?,
        schedule_bound: bound(&schedule)?,
        total_leak: leaks.iter().sum(),
        leaks,
        schedule,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub certificate: Option<Certificate>,
    pub epsilon0: f64,
    pub noise: NoiseBound,
    pub amplification: Option<f64>,
    /// `(t, bound)` for `t = 0..=T`; empty when no certificate was found.
    pub curve: Vec<(usize, f64)>,
}

impl CertifyReport {
    pub fn write_curve_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["t", "bound"])?;
        for (t, b) in &self.curve {
            csv.write_record([t.to_string(), fmt_f64(*b)])?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Certificate search and the heavy-ball bound curve under the uniform schedule's noise level.
pub fn certify(cfg: &CertifyConfig) -> Result<CertifyReport> {
    let epsilon0 = per_iteration_epsilon(cfg.epsilon, cfg.horizon, cfg.n, cfg.m)?;
    let noise = noise_bound(cfg.s1, cfg.d, cfg.m, cfg.n, epsilon0)?;
    let certificate = search_certificate(cfg.alpha, cfg.beta, cfg.mu, cfg.l, &cfg.grid)?;
    let curve = match &certificate {
        Some(cert) => (0..=cfg.horizon)
            .map(|t| Ok((t, eval_shb_bound(cert, cfg.psi0, t, noise.e_t, cfg.d, cfg.alpha, cfg.l)?)))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    Ok(CertifyReport {
        amplification: certificate.map(|c| c.amplification(cfg.l)),
        certificate,
        epsilon0,
        noise,
        curve,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub noise_level: f64,
    pub sigma_t2: f64,
    pub rho: f64,
    /// Bound at `t = T`, absent outside the contractive regime.
    pub bound: Option<f64>,
}

/// Rate and bound at the horizon over the configured `(α, β, c_w)` sweep.
pub fn analyze_quadratic(cfg: &QuadraticAnalysisConfig) -> Result<Vec<QuadraticSweepRow>> {
    let mut eig = cfg.eigenvalues.clone();
    eig.sort_by(f64::total_cmp);
    let (mu, l) = match (eig.first(), eig.last()) {
        (Some(&mu), Some(&l)) if mu > 0.0 => (mu, l),
        _ => return Err(invalid("eigenvalues must be positive and non-empty")),
    };
    let mut rows = Vec::new();
    for &noise_level in &cfg.noise_levels {
        let sigma_t2 = (cfg.horizon as f64 * noise_level).powi(2);
        for &factor in &cfg.alpha_factors {
            let alpha = factor / l;
            for &beta in &cfg.betas {
                let report = quadratic_rate(alpha, beta, &eig, mu, l)?;
                rows.push(QuadraticSweepRow {
                    alpha,
                    beta,
                    noise_level,
                    sigma_t2,
                    rho: report.rho,
                    bound: quadratic_bound(&report, sigma_t2, cfg.horizon, cfg.v0_norm, cfg.ct_scale).ok(),
                });
            }
        }
    }
    Ok(rows)
}
