//! DP-GD, DP-(S)HB, DP-NAG and DP-MASG.
//!
//! Every step releases one noisy gradient `∇F_B(p) + η` where `p` is the
//! current iterate (GD, HB) or the extrapolated point (NAG), `B` is a fresh
//! subsample of size `m` (or all records when `m = n`) and `η` has i.i.d.
//! Laplace(b_t) entries. Random draws are taken in a fixed order per step:
//! batch indices first (only when `m < n`), then the `d` noise values.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::objectives::{sample_batch, Objective};
use crate::privacy::{
    fmt_f64, laplace_fill, LaplaceScale, NoiseSchedule, PrivacyAccount, RngStream,
    ScheduleProvenance, BUDGET_TOLERANCE,
};

/// `(x_t, x_{t-1}, t)`. At `t = 0` both iterates coincide.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    x: Vec<f64>,
    x_prev: Vec<f64>,
    t: usize,
}

impl OptimizerState {
    pub fn new(x0: Vec<f64>) -> Self {
        Self {
            x_prev: x0.clone(),
            x: x0,
            t: 0,
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn x_prev(&self) -> &[f64] {
        &self.x_prev
    }

    pub fn t(&self) -> usize {
        self.t
    }

    fn advance(&mut self, next: Vec<f64>) {
        self.x_prev = std::mem::replace(&mut self.x, next);
        self.t += 1;
    }
}

/// Momentum `(1 - √(αμ)) / (1 + √(αμ))` paired with stepsize `α`.
pub fn nesterov_momentum(alpha: f64, mu: f64) -> f64 {
    let r = (alpha * mu).sqrt();
    (1.0 - r) / (1.0 + r)
}

/// `∇F_B(point) + η` with a fresh batch and Laplace noise; noise is skipped
/// when `noise` is the non-private limit.
pub fn noisy_gradient<O: Objective + ?Sized>(
    obj: &O,
    point: &[f64],
    batch_size: usize,
    noise: LaplaceScale,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let n = obj.num_records();
    if batch_size == 0 || batch_size > n {
        return Err(invalid(format!("batch size {batch_size} must lie in 1..={n}")));
    }
    let mut g = if batch_size < n {
        let batch = sample_batch(rng, n, batch_size);
        obj.minibatch_gradient(point, &batch)
    } else {
        obj.full_gradient(point)
    };
    if !noise.is_off() {
        let mut eta = vec![0.0; g.len()];
        laplace_fill(rng, noise, &mut eta)?;
        g.iter_mut().zip(&eta).for_each(|(gi, ei)| *gi += ei);
    }
    Ok(g)
}

fn check_dim<O: Objective + ?Sized>(state: &OptimizerState, obj: &O) -> Result<()> {
    if state.x.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: state.x.len(),
        });
    }
    Ok(())
}

/// `x_{t+1} = x_t - α(∇F_B(x_t) + η_t)`.
pub fn dp_gd_step<O: Objective + ?Sized>(
    state: &mut OptimizerState,
    obj: &O,
    alpha: f64,
    batch_size: usize,
    noise: LaplaceScale,
    rng: &mut RngStream,
) -> Result<()> {
    check_dim(state, obj)?;
    let g = noisy_gradient(obj, &state.x, batch_size, noise, rng)?;
    let next = state.x.iter().zip(&g).map(|(x, g)| x - alpha * g).collect();
    state.advance(next);
    Ok(())
}

/// `x_{t+1} = x_t - α(∇F_B(x_t) + η_t) + β(x_t - x_{t-1})`.
pub fn dp_shb_step<O: Objective + ?Sized>(
    state: &mut OptimizerState,
    obj: &O,
    alpha: f64,
    beta: f64,
    batch_size: usize,
    noise: LaplaceScale,
    rng: &mut RngStream,
) -> Result<()> {
    check_dim(state, obj)?;
    if !(0.0..1.0).contains(&beta) {
        return Err(invalid(format!("momentum must lie in [0, 1), got {beta}")));
    }
    let g = noisy_gradient(obj, &state.x, batch_size, noise, rng)?;
    let next = state
        .x
        .iter()
        .zip(&state.x_prev)
        .zip(&g)
        .map(|((x, xp), g)| x - alpha * g + beta * (x - xp))
        .collect();
    state.advance(next);
    Ok(())
}

/// `z_t = (1+β)x_t - βx_{t-1}`, `x_{t+1} = z_t - α(∇F_B(z_t) + η_t)`.
pub fn dp_nag_step<O: Objective + ?Sized>(
    state: &mut OptimizerState,
    obj: &O,
    alpha: f64,
    beta: f64,
    batch_size: usize,
    noise: LaplaceScale,
    rng: &mut RngStream,
) -> Result<()> {
    check_dim(state, obj)?;
    if !(0.0..1.0).contains(&beta) {
        return Err(invalid(format!("momentum must lie in [0, 1), got {beta}")));
    }
    let z: Vec<f64> = state
        .x
        .iter()
        .zip(&state.x_prev)
        .map(|(x, xp)| (1.0 + beta) * x - beta * xp)
        .collect();
    let g = noisy_gradient(obj, &z, batch_size, noise, rng)?;
    let next = z.iter().zip(&g).map(|(z, g)| z - alpha * g).collect();
    state.advance(next);
    Ok(())
}

/// Heavy ball in averaged-gradient form:
/// `ū_t = βū_{t-1} + (1-β)(∇F_B(x_t) + η_t)`, `x_{t+1} = x_t - α/(1-β) ū_t`,
/// with `ū_{-1} = 0`.
#[derive(Clone, Debug)]
pub struct SmoothedHeavyBall {
    x: Vec<f64>,
    averaged: Vec<f64>,
}

impl SmoothedHeavyBall {
    pub fn new(x0: Vec<f64>) -> Self {
        let d = x0.len();
        Self { x: x0, averaged: vec![0.0; d] }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn step<O: Objective + ?Sized>(
        &mut self,
        obj: &O,
        alpha: f64,
        beta: f64,
        batch_size: usize,
        noise: LaplaceScale,
        rng: &mut RngStream,
    ) -> Result<()> {
        if !(0.0..1.0).contains(&beta) {
            return Err(invalid(format!("momentum must lie in [0, 1), got {beta}")));
        }
        let g = noisy_gradient(obj, &self.x, batch_size, noise, rng)?;
        for (u, g) in self.averaged.iter_mut().zip(&g) {
            *u = beta * *u + (1.0 - beta) * g;
        }
        let step = alpha / (1.0 - beta);
        for (x, u) in self.x.iter_mut().zip(&self.averaged) {
            *x -= step * u;
        }
        Ok(())
    }
}

/// One stage of a multi-stage method.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub length: usize,
    pub alpha: f64,
}

/// Stage lengths and stepsizes; iteration `i` (1-based) runs in stage `s_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    stages: Vec<Stage>,
}

impl StageSchedule {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        if let Some(s) = stages.iter().find(|s| s.length == 0 || !(s.alpha > 0.0)) {
            return Err(invalid(format!("stage {s:?} needs a positive length and stepsize")));
        }
        Ok(Self { stages })
    }

    /// A single stage of `horizon` iterations.
    pub fn single(alpha: f64, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Self::new(Vec::new());
        }
        Self::new(vec![Stage { length: horizon, alpha }])
    }

    /// `⌈√κ · ln(2^{p+2})⌉`, the unit that later stage lengths are multiples of.
    pub fn stage_unit(kappa: f64, p: u32) -> usize {
        (kappa.sqrt() * ((p + 2) as f64 * std::f64::consts::LN_2)).ceil() as usize
    }

    /// Multi-stage schedule truncated to `horizon` iterations:
    /// `α^(1) = c/L`, `n_k = 2^k·unit`, `α^(k) = c/(2^{2k} L)` for `k ≥ 2`.
    /// The first stage length defaults to one unit.
    pub fn multistage(
        mu: f64,
        l: f64,
        c: f64,
        p: u32,
        first_length: Option<usize>,
        horizon: usize,
    ) -> Result<Self> {
        if !(mu > 0.0 && mu <= l) {
            return Err(invalid(format!("need 0 < mu <= L, got mu = {mu}, L = {l}")));
        }
        if p == 0 {
            return Err(invalid("stage exponent p must be at least 1"));
        }
        let unit = Self::stage_unit(l / mu, p);
        let first = first_length.unwrap_or(unit).max(1);
        let mut stages = Vec::new();
        let mut remaining = horizon;
        let mut k: i32 = 1;
        while remaining > 0 {
            let (nominal, alpha) = if k == 1 {
                (first, c / l)
            } else {
                ((1usize << k) * unit, c / (4f64.powi(k) * l))
            };
            let length = nominal.min(remaining);
            stages.push(Stage { length, alpha });
            remaining -= length;
            k += 1;
        }
        Self::new(stages)
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn horizon(&self) -> usize {
        self.stages.iter().map(|s| s.length).sum()
    }

    /// Stage (1-based) containing iteration `i` (1-based); iteration 0 maps to stage 1.
    pub fn stage_of(&self, i: usize) -> usize {
        let mut end = 0;
        for (k, s) in self.stages.iter().enumerate() {
            end += s.length;
            if i <= end {
                return k + 1;
            }
        }
        self.stages.len()
    }

    /// Stepsize in effect at iteration `i` (1-based).
    pub fn alpha_at(&self, i: usize) -> f64 {
        self.stages[self.stage_of(i) - 1].alpha
    }

    /// Fails unless every stage stepsize is at most `1/L`.
    pub fn check_stepsizes(&self, l: f64) -> Result<()> {
        match self.stages.iter().find(|s| s.alpha > 1.0 / l) {
            Some(s) => Err(Error::Precondition(format!(
                "stage stepsize {} exceeds 1/L = {}",
                s.alpha,
                1.0 / l
            ))),
            None => Ok(()),
        }
    }
}

/// Update rule and its constant parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    GradientDescent { alpha: f64 },
    HeavyBall { alpha: f64, beta: f64 },
    Nesterov { alpha: f64, beta: f64 },
    /// Nesterov steps with per-stage `(α^(k), β^(k))`; momentum carries over stage boundaries.
    MultiStage { stages: StageSchedule, mu: f64 },
}

impl Method {
    /// Stepsize of the first iteration, for reporting.
    pub fn leading_alpha(&self) -> f64 {
        match self {
            Self::GradientDescent { alpha } | Self::HeavyBall { alpha, .. } | Self::Nesterov { alpha, .. } => *alpha,
            Self::MultiStage { stages, .. } => stages.stages().first().map_or(0.0, |s| s.alpha),
        }
    }

    pub fn momentum(&self) -> Option<f64> {
        match self {
            Self::HeavyBall { beta, .. } | Self::Nesterov { beta, .. } => Some(*beta),
            _ => None,
        }
    }

    /// Applies iteration `t` (1-based) of the method.
    pub fn step<O: Objective + ?Sized>(
        &self,
        state: &mut OptimizerState,
        obj: &O,
        t: usize,
        batch_size: usize,
        noise: LaplaceScale,
        rng: &mut RngStream,
    ) -> Result<()> {
        match self {
            Self::GradientDescent { alpha } => dp_gd_step(state, obj, *alpha, batch_size, noise, rng),
            Self::HeavyBall { alpha, beta } => dp_shb_step(state, obj, *alpha, *beta, batch_size, noise, rng),
            Self::Nesterov { alpha, beta } => dp_nag_step(state, obj, *alpha, *beta, batch_size, noise, rng),
            Self::MultiStage { stages, mu } => {
                let alpha = stages.alpha_at(t);
                let beta = nesterov_momentum(alpha, *mu);
                dp_nag_step(state, obj, alpha, beta, batch_size, noise, rng)
            }
        }
    }
}

/// The six compared algorithms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "DP-GD")]
    Gd,
    #[serde(rename = "DP-HB")]
    Hb,
    #[serde(rename = "DP-NAG")]
    Nag,
    #[serde(rename = "DP-NAG-opt")]
    NagOpt,
    #[serde(rename = "DP-MASG")]
    Masg,
    #[serde(rename = "DP-MASG-opt")]
    MasgOpt,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Gd,
        Algorithm::Hb,
        Algorithm::Nag,
        Algorithm::NagOpt,
        Algorithm::Masg,
        Algorithm::MasgOpt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gd => "DP-GD",
            Self::Hb => "DP-HB",
            Self::Nag => "DP-NAG",
            Self::NagOpt => "DP-NAG-opt",
            Self::Masg => "DP-MASG",
            Self::MasgOpt => "DP-MASG-opt",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name().eq_ignore_ascii_case(name))
    }

    /// Uses an optimized (non-uniform) noise schedule and a re-selected horizon.
    pub fn is_optimized(self) -> bool {
        matches!(self, Self::NagOpt | Self::MasgOpt)
    }

    pub fn is_multistage(self) -> bool {
        matches!(self, Self::Masg | Self::MasgOpt)
    }

    /// Builds the update rule with `α = c/L`. HB and NAG share the momentum
    /// `(1 - √(αμ))/(1 + √(αμ))`; multi-stage variants scale every stage by `c`.
    pub fn method(self, c: f64, mu: f64, l: f64, p: u32, horizon: usize) -> Result<Method> {
        let alpha = c / l;
        Ok(match self {
            Self::Gd => Method::GradientDescent { alpha },
            Self::Hb => Method::HeavyBall {
                alpha,
                beta: nesterov_momentum(alpha, mu),
            },
            Self::Nag | Self::NagOpt => Method::Nesterov {
                alpha,
                beta: nesterov_momentum(alpha, mu),
            },
            Self::Masg | Self::MasgOpt => Method::MultiStage {
                stages: StageSchedule::multistage(mu, l, c, p, None, horizon)?,
                mu,
            },
        })
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One row of a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub subopt: f64,
    pub eps_cum: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub iterate: Option<Vec<f64>>,
}

/// Run description stored next to the trace CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub algorithm: String,
    pub method: Method,
    pub batch_size: usize,
    pub n: usize,
    pub d: usize,
    /// Requested horizon (grid value).
    pub horizon: usize,
    /// Iterations actually run.
    pub t_effective: usize,
    pub c: Option<f64>,
    pub seed: u64,
    pub epsilon: f64,
    pub provenance: ScheduleProvenance,
    pub f_star: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub meta: TraceMeta,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn final_record(&self) -> &TraceRecord {
        self.records.last().expect("a trace always holds the initial record")
    }

    /// Writes `t,subopt,eps_cum` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["t", "subopt", "eps_cum"])?;
        for r in &self.records {
            csv.write_record([r.t.to_string(), fmt_f64(r.subopt), fmt_f64(r.eps_cum)])?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Parameters of a single run besides the method and the noise schedule.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub algorithm: String,
    pub batch_size: usize,
    pub f_star: f64,
    pub horizon: Option<usize>,
    pub c: Option<f64>,
    pub keep_iterates: bool,
}

/// Runs `method` for `schedule.len()` iterations, charging each iteration's
/// exact leak `ε(S₁, b_t, n, m)` to `account`.
#[allow(clippy::too_many_arguments)]
pub fn run<O: Objective + ?Sized>(
    method: &Method,
    obj: &O,
    schedule: &NoiseSchedule,
    account: &mut PrivacyAccount,
    rng: &mut RngStream,
    x0: &[f64],
    options: &RunOptions,
) -> Result<Trace> {
    let started = Instant::now();
    let n = obj.num_records();
    let m = options.batch_size;
    let horizon = schedule.len();
    if x0.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: x0.len(),
        });
    }
    if account.dataset_size() != n || account.batch_size() != m {
        return Err(invalid(format!(
            "account sizes (n = {}, m = {}) do not match the run (n = {n}, m = {m})",
            account.dataset_size(),
            account.batch_size()
        )));
    }
    if let Method::MultiStage { stages, .. } = method {
        if stages.horizon() != horizon {
            return Err(invalid(format!(
                "stage schedule covers {} iterations but the noise schedule has {horizon}",
                stages.horizon()
            )));
        }
    }
    if account.horizon() < account.spent().len() + horizon {
        return Err(Error::HorizonExceeded(account.spent().len()));
    }
    let s1 = obj.sensitivity_bound();
    let leaks = schedule.leaks(s1, n, m)?;
    let composed: f64 = leaks.iter().sum();
    if account.total_spent() + composed > account.epsilon_total() + BUDGET_TOLERANCE {
        return Err(Error::BudgetExceeded {
            spent: account.total_spent(),
            requested: composed,
            total: account.epsilon_total(),
        });
    }

    let mut state = OptimizerState::new(x0.to_vec());
    let record = |state: &OptimizerState, eps_cum: f64| TraceRecord {
        t: state.t(),
        subopt: obj.value(state.x()) - options.f_star,
        eps_cum,
        iterate: options.keep_iterates.then(|| state.x().to_vec()),
    };
    let mut records = Vec::with_capacity(horizon + 1);
    records.push(record(&state, account.total_spent()));
    for t in 1..=horizon {
        method.step(&mut state, obj, t, m, schedule.scale(t), rng)?;
        account.spend(leaks[t - 1])?;
        records.push(record(&state, account.total_spent()));
    }
    Ok(Trace {
        meta: TraceMeta {
            algorithm: options.algorithm.clone(),
            method: method.clone(),
            batch_size: m,
            n,
            d: obj.dim(),
            horizon: options.horizon.unwrap_or(horizon),
            t_effective: horizon,
            c: options.c,
            seed: rng.seed(),
            epsilon: account.epsilon_total(),
            provenance: schedule.provenance(),
            f_star: options.f_star,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
        records,
    })
}

/// Checks the recorded leak sequence of a trace against a fresh accounting pass.
pub fn audit_trace(trace: &Trace, schedule: &NoiseSchedule, s1: f64) -> Result<f64> {
    let leaks = schedule.leaks(s1, trace.meta.n, trace.meta.batch_size)?;
    let mut total = 0.0;
    for (record, eps) in trace.records.iter().skip(1).zip(&leaks) {
        total += eps;
        if (record.eps_cum - total).abs() > BUDGET_TOLERANCE {
            return Err(Error::Numeric(format!(
                "trace records eps_cum = {} at t = {}, audit gives {total}",
                record.eps_cum, record.t
            )));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::QuadraticObjective;
    use crate::privacy::uniform_scale;

    fn scalar(q: f64) -> QuadraticObjective {
        QuadraticObjective::diagonal(&[q]).unwrap()
    }

    #[test]
    fn gd_single_step_by_hand() {
        let obj = scalar(1.0);
        let mut state = OptimizerState::new(vec![1.0]);
        let mut rng = RngStream::new(0);
        dp_gd_step(&mut state, &obj, 0.5, 1, LaplaceScale::off(), &mut rng).unwrap();
        assert_eq!(state.x(), &[0.5]);
        assert_eq!(state.x_prev(), &[1.0]);
        assert_eq!(state.t(), 1);
    }

    #[test]
    fn shb_hand_recursion() {
        let obj = scalar(1.0);
        let mut state = OptimizerState::new(vec![1.0]);
        let mut rng = RngStream::new(0);
        let mut xs = Vec::new();
        for _ in 0..3 {
            dp_shb_step(&mut state, &obj, 1.0, 0.5, 1, LaplaceScale::off(), &mut rng).unwrap();
            xs.push(state.x()[0]);
        }
        assert_eq!(xs, vec![0.0, -0.5, -0.25]);
    }

    #[test]
    fn nag_hand_recursion() {
        // λ = 1, α = 1, β = 1/3: z_0 = 1, x_1 = 0; z_1 = -1/3, x_2 = 0;
        // z_2 = 0, x_3 = 0.
        let obj = scalar(1.0);
        let mut state = OptimizerState::new(vec![1.0]);
        let mut rng = RngStream::new(0);
        let mut xs = Vec::new();
        for _ in 0..3 {
            dp_nag_step(&mut state, &obj, 1.0, 1.0 / 3.0, 1, LaplaceScale::off(), &mut rng).unwrap();
            xs.push(state.x()[0]);
        }
        assert_eq!(xs, vec![0.0, 0.0, 0.0]);

        // λ = 0.5 gives a non-trivial path: z_0 = 1, x_1 = 0.5; z_1 = 0.5 + (0.5 - 1)/3 = 1/3,
        // x_2 = 1/6; z_2 = 1/6 + (1/6 - 1/2)/3 = 1/18, x_3 = 1/36.
        let obj = scalar(0.5);
        let mut state = OptimizerState::new(vec![1.0]);
        let mut xs = Vec::new();
        for _ in 0..3 {
            dp_nag_step(&mut state, &obj, 1.0, 1.0 / 3.0, 1, LaplaceScale::off(), &mut rng).unwrap();
            xs.push(state.x()[0]);
        }
        let expected = [0.5, 1.0 / 6.0, 1.0 / 36.0];
        for (x, e) in xs.iter().zip(expected) {
            assert!((x - e).abs() < 1e-15, "{xs:?}");
        }
    }

    #[test]
    fn default_nesterov_momentum() {
        assert!((nesterov_momentum(1.0, 0.25) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(nesterov_momentum(1.0, 0.0), 1.0);
    }

    #[test]
    fn gd_contracts_on_quadratics_without_noise() {
        let obj = QuadraticObjective::new(
            vec![vec![1.0, 0.2], vec![0.2, 0.4]],
            vec![0.3, -0.1],
            0.0,
        )
        .unwrap();
        let (mu, l) = (obj.strong_convexity(), obj.smoothness());
        let x_star = obj.minimizer();
        let mut state = OptimizerState::new(vec![2.0, -3.0]);
        let mut rng = RngStream::new(0);
        let dist = |x: &[f64]| x.iter().zip(&x_star).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        for _ in 0..20 {
            let before = dist(state.x());
            dp_gd_step(&mut state, &obj, 1.0 / l, 1, LaplaceScale::off(), &mut rng).unwrap();
            assert!(dist(state.x()) <= (1.0 - mu / l) * before + 1e-15);
        }
    }

    #[test]
    fn stage_schedule_arithmetic() {
        assert_eq!(StageSchedule::stage_unit(20.0, 1), 10);
        let stages = StageSchedule::multistage(1.0, 20.0, 1.0, 1, None, 130).unwrap();
        let lengths: Vec<usize> = stages.stages().iter().map(|s| s.length).collect();
        assert_eq!(lengths, vec![10, 40, 80]);
        assert_eq!(stages.stages()[1].alpha, 1.0 / (16.0 * 20.0));
        assert_eq!(stages.stages()[2].alpha, 1.0 / (64.0 * 20.0));
        assert_eq!(stages.stage_of(10), 1);
        assert_eq!(stages.stage_of(11), 2);
        assert_eq!(stages.stage_of(50), 2);
        assert_eq!(stages.stage_of(51), 3);
        let truncated = StageSchedule::multistage(1.0, 20.0, 0.1, 1, None, 25).unwrap();
        assert_eq!(truncated.horizon(), 25);
        assert_eq!(truncated.stages()[0].alpha, 0.1 / 20.0);
        assert!(StageSchedule::multistage(1.0, 20.0, 1.5, 1, None, 25)
            .unwrap()
            .check_stepsizes(20.0)
            .is_err());
    }

    #[test]
    fn run_with_zero_horizon_keeps_initial_record() {
        let obj = scalar(1.0).with_sensitivity(1.0);
        let schedule = NoiseSchedule::new(Vec::new(), ScheduleProvenance::Uniform).unwrap();
        let mut acct = PrivacyAccount::new(1.0, 0, 1, 1).unwrap();
        let opts = RunOptions {
            algorithm: "DP-GD".into(),
            batch_size: 1,
            f_star: 0.0,
            horizon: None,
            c: None,
            keep_iterates: false,
        };
        let trace = run(
            &Method::GradientDescent { alpha: 0.5 },
            &obj,
            &schedule,
            &mut acct,
            &mut RngStream::new(1),
            &[1.0],
            &opts,
        )
        .unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].subopt, 0.5);
    }

    #[test]
    fn run_refuses_overspending_schedules() {
        let obj = scalar(1.0).with_sensitivity(1.0);
        let schedule = uniform_scale(1.0, 2.0, 4, 1, 1).unwrap();
        let mut acct = PrivacyAccount::new(1.0, 4, 1, 1).unwrap();
        let opts = RunOptions {
            algorithm: "DP-GD".into(),
            batch_size: 1,
            f_star: 0.0,
            horizon: None,
            c: None,
            keep_iterates: false,
        };
        let err = run(
            &Method::GradientDescent { alpha: 0.5 },
            &obj,
            &schedule,
            &mut acct,
            &mut RngStream::new(1),
            &[1.0],
            &opts,
        );
        assert!(matches!(err, Err(Error::BudgetExceeded { .. })));
        assert!(acct.spent().is_empty());
        let wrong_dim = run(
            &Method::GradientDescent { alpha: 0.5 },
            &obj,
            &uniform_scale(1.0, 1.0, 4, 1, 1).unwrap(),
            &mut acct,
            &mut RngStream::new(1),
            &[1.0, 2.0],
            &opts,
        );
        assert!(matches!(wrong_dim, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(Algorithm::from_name(a.name()), Some(a));
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(json, format!("\"{}\"", a.name()));
        }
        assert!(Algorithm::from_name("DP-ADAM").is_none());
    }
}
