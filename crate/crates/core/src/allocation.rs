//! Error-bound coefficients and optimal per-iteration noise schedules.
//!
//! NAG-type methods satisfy `E_T ≤ a_{T,0} E₀ + Σ_{t≥1} a_{T,t} (b_t² d + σ_s²/2)`.
//! Minimising `Σ a_{T,t} b_t²` under the budget `Σ S₁/(n b_t) = ε` gives
//! `b_t ∝ a_{T,t}^{-1/3}`, so iterations with heavier weight get less noise.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::optimizers::{Stage, StageSchedule};
use crate::privacy::{epsilon_of, fmt_f64, NoiseSchedule, ScheduleProvenance, BUDGET_TOLERANCE};

const BISECTION_MAX_ITERS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientSource {
    Nag,
    Masg,
}

/// `a_{T,0}, …, a_{T,T}` together with the parameters that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCoefficients {
    a: Vec<f64>,
    source: CoefficientSource,
    mu: f64,
    l: f64,
    stages: StageSchedule,
}

impl BoundCoefficients {
    pub fn horizon(&self) -> usize {
        self.a.len() - 1
    }

    /// All coefficients, `a_{T,0}` first.
    pub fn values(&self) -> &[f64] {
        &self.a
    }

    /// `a_{T,0}`, the weight of the initial error.
    pub fn initial(&self) -> f64 {
        self.a[0]
    }

    /// `a_{T,1}, …, a_{T,T}`, the weights of the per-iteration noise.
    pub fn noise_weights(&self) -> &[f64] {
        &self.a[1..]
    }

    pub fn source(&self) -> CoefficientSource {
        self.source
    }

    pub fn stages(&self) -> &StageSchedule {
        &self.stages
    }

    pub fn strong_convexity(&self) -> f64 {
        self.mu
    }

    pub fn smoothness(&self) -> f64 {
        self.l
    }

    /// `Σ_{t≥1} a_{T,t}^{1/3}`.
    pub fn cube_root_sum(&self) -> f64 {
        self.noise_weights().iter().map(|a| a.cbrt()).sum()
    }

    /// `Σ_{t≥1} a_{T,t} b_t²`.
    pub fn weighted_noise(&self, scales: &[f64]) -> Result<f64> {
        if scales.len() != self.horizon() {
            return Err(Error::DimensionMismatch {
                expected: self.horizon(),
                got: scales.len(),
            });
        }
        Ok(self.noise_weights().iter().zip(scales).map(|(a, b)| a * b * b).sum())
    }

    /// `a_{T,0} E₀ + Σ_{t≥1} a_{T,t} (b_t² d + σ_s²/2)` for an arbitrary schedule.
    pub fn bound_with_schedule(&self, e0: f64, scales: &[f64], d: usize, sigma_s2: f64) -> Result<f64> {
        let noise = self.weighted_noise(scales)? * d as f64;
        let sampling: f64 = self.noise_weights().iter().sum::<f64>() * sigma_s2 / 2.0;
        Ok(self.initial() * e0 + noise + sampling)
    }

    /// `a_{T,0} E₀ + d S₁²/(n²ε²) (Σ a_{T,j}^{1/3})³`, the bound attained by the
    /// optimal schedule without subsampling.
    pub fn optimal_bound(&self, e0: f64, s1: f64, n: usize, epsilon: f64, d: usize) -> f64 {
        let unit = s1 / (n as f64 * epsilon);
        self.initial() * e0 + d as f64 * unit * unit * self.cube_root_sum().powi(3)
    }
}

fn check_constants(mu: f64, l: f64) -> Result<()> {
    if !(mu > 0.0 && mu <= l && l.is_finite()) {
        return Err(invalid(format!("need 0 < mu <= L, got mu = {mu}, L = {l}")));
    }
    Ok(())
}

/// Backward product over iterations `T, T-1, …, 1`, shared by both builders so
/// that a single-stage schedule reproduces the NAG coefficients bit for bit.
fn accumulate(mu: f64, l: f64, stages: &StageSchedule) -> Vec<f64> {
    let horizon = stages.horizon();
    let last_stage = stages.stage_of(horizon) as i32;
    let mut a = vec![0.0; horizon + 1];
    let mut product = 1.0;
    for t in (1..=horizon).rev() {
        let stage = stages.stage_of(t) as i32;
        let alpha = stages.alpha_at(t);
        a[t] = 2f64.powi(last_stage - stage) * product * alpha * (1.0 + alpha * l);
        product *= 1.0 - (mu * alpha).sqrt();
    }
    a[0] = 2f64.powi(last_stage - 1) * product;
    a
}

/// `a_{T,0} = q^T`, `a_{T,t} = q^{T-t} α(1 + αL)` with `q = 1 - √(μα)`.
pub fn nag_coefficients(mu: f64, l: f64, alpha: f64, horizon: usize) -> Result<BoundCoefficients> {
    check_constants(mu, l)?;
    if !(alpha > 0.0) {
        return Err(invalid(format!("stepsize must be positive, got {alpha}")));
    }
    if alpha > 1.0 / l {
        return Err(Error::Precondition(format!("stepsize {alpha} exceeds 1/L = {}", 1.0 / l)));
    }
    let stages = if horizon == 0 {
        StageSchedule::new(Vec::new())?
    } else {
        StageSchedule::new(vec![Stage { length: horizon, alpha }])?
    };
    Ok(BoundCoefficients {
        a: if horizon == 0 { vec![1.0] } else { accumulate(mu, l, &stages) },
        source: CoefficientSource::Nag,
        mu,
        l,
        stages,
    })
}

/// Multi-stage coefficients
/// `a_{T,t} = 2^{s_T - s_t} Π_{i>t} (1 - √(μα^{(s_i)})) α^{(s_t)} (1 + α^{(s_t)} L)`,
/// with `a_{T,0} = 2^{s_T - 1} Π_{i≥1} (1 - √(μα^{(s_i)}))`. The horizon is the
/// total length of `stages`.
pub fn masg_coefficients(mu: f64, l: f64, stages: &StageSchedule) -> Result<BoundCoefficients> {
    check_constants(mu, l)?;
    stages.check_stepsizes(l)?;
    Ok(BoundCoefficients {
        a: if stages.horizon() == 0 { vec![1.0] } else { accumulate(mu, l, stages) },
        source: CoefficientSource::Masg,
        mu,
        l,
        stages: stages.clone(),
    })
}

/// Closed-form minimiser of `Σ a_{T,t} b_t²` subject to `Σ S₁/(n b_t) = ε`:
/// `b_t = (Σ_j a_{T,j}^{1/3} / a_{T,t}^{1/3}) S₁/(nε)`.
pub fn optimal_schedule(coeffs: &BoundCoefficients, s1: f64, n: usize, epsilon: f64) -> Result<NoiseSchedule> {
    if !(s1 > 0.0 && epsilon > 0.0) || n == 0 {
        return Err(invalid(format!("need S1 > 0, epsilon > 0, n >= 1 (got {s1}, {epsilon}, {n})")));
    }
    if let Some(a) = coeffs.noise_weights().iter().find(|a| !(**a > 0.0)) {
        return Err(Error::Precondition(format!(
            "bound coefficients must be positive, found {a}"
        )));
    }
    let total = coeffs.cube_root_sum();
    let unit = s1 / (n as f64 * epsilon);
    let scales = coeffs.noise_weights().iter().map(|a| total / a.cbrt() * unit).collect();
    NoiseSchedule::new(scales, ScheduleProvenance::Optimized)
}

/// Per-iteration budget shares `ε_t = a_{T,t}^{1/3} / Σ_j a_{T,j}^{1/3} · ε`.
pub fn optimal_leaks(coeffs: &BoundCoefficients, epsilon: f64) -> Vec<f64> {
    let total = coeffs.cube_root_sum();
    coeffs.noise_weights().iter().map(|a| a.cbrt() / total * epsilon).collect()
}

/// Scales every `b_t` by one common factor so that the subsampled composed
/// leak equals `ε`; the shape of the schedule is kept. With `m = n` the input
/// is returned unchanged.
pub fn rescale_for_subsampling(
    schedule: &NoiseSchedule,
    s1: f64,
    n: usize,
    m: usize,
    epsilon: f64,
) -> Result<NoiseSchedule> {
    if m == 0 || m > n {
        return Err(invalid(format!("batch size {m} must lie in 1..={n}")));
    }
    if m == n || schedule.is_empty() {
        return Ok(schedule.clone());
    }
    let leak = |k: f64| -> Result<f64> {
        schedule
            .scales()
            .iter()
            .map(|b| epsilon_of(s1, k * b, n, m))
            .sum()
    };
    let (mut lo, mut hi) = (1.0, 1.0);
    while leak(lo)? < epsilon {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(Error::Numeric("cannot bracket the rescaling factor from below".into()));
        }
    }
    while leak(hi)? > epsilon {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Numeric("cannot bracket the rescaling factor from above".into()));
        }
    }
    for _ in 0..BISECTION_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if leak(mid)? > epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let spent = leak(hi)?;
    if (spent - epsilon).abs() > BUDGET_TOLERANCE {
        return Err(Error::Numeric(format!(
            "rescaling did not converge: composed leak {spent} vs budget {epsilon}"
        )));
    }
    let provenance = match schedule.provenance() {
        ScheduleProvenance::Uniform => ScheduleProvenance::Uniform,
        _ => ScheduleProvenance::OptimizedRescaled,
    };
    NoiseSchedule::new(schedule.scales().iter().map(|b| hi * b).collect(), provenance)
}

/// Outcome of the horizon scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonChoice {
    pub horizon: usize,
    pub bound: f64,
}

/// Evaluates [`BoundCoefficients::optimal_bound`] for every `T' ∈ 1..=T_max`,
/// rebuilding the coefficients with `build(T')`, and returns the minimiser
/// (smallest `T'` on ties).
pub fn select_horizon<F>(
    build: F,
    e0: f64,
    s1: f64,
    n: usize,
    epsilon: f64,
    d: usize,
    t_max: usize,
) -> Result<HorizonChoice>
where
    F: Fn(usize) -> Result<BoundCoefficients>,
{
    if !(e0 >= 0.0) {
        return Err(invalid(format!("initial error guess must be non-negative, got {e0}")));
    }
    if t_max == 0 {
        return Err(invalid("horizon scan needs T_max >= 1"));
    }
    let mut best: Option<HorizonChoice> = None;
    for horizon in 1..=t_max {
        let bound = build(horizon)?.optimal_bound(e0, s1, n, epsilon, d);
        if best.map_or(true, |b| bound < b.bound) {
            best = Some(HorizonChoice { horizon, bound });
        }
    }
    Ok(best.expect("t_max >= 1"))
}

/// Writes `t,b_t,eps_t` rows, with `eps_t` the coefficient-implied budget share.
pub fn write_schedule_with_leaks<W: Write>(writer: W, scales: &[f64], leaks: &[f64]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(["t", "b_t", "eps_t"])?;
    for (t, (b, e)) in scales.iter().zip(leaks).enumerate() {
        csv.write_record([(t + 1).to_string(), fmt_f64(*b), fmt_f64(*e)])?;
    }
    csv.flush()?;
    Ok(())
}
