//! Laplace mechanism, subsampling amplification and composition accounting.
//!
//! All privacy quantities are pure ε-DP. A single iteration that releases a
//! Laplace-perturbed mini-batch gradient (batch of `m` out of `n` records,
//! sampled without replacement) with scale `b` and L1 sensitivity `S` leaks
//!
//! ```text
//! ε(S, b, n, m) = ln[(exp(S / (b m)) - 1) m / n + 1]
//! ```
//!
//! and leaks of successive iterations add up.

use std::io::Write;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Absolute slack allowed when comparing a composed leak against its budget.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

/// Deterministic random stream identified by a 64-bit seed and a position.
///
/// Backed by ChaCha8 (`rand_chacha`), which is counter based: the stream at
/// `(seed, counter)` is fully determined by those two numbers on every
/// platform. `counter` is the ChaCha word position, i.e. the number of 32-bit
/// words consumed so far.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Recreates the stream positioned at `counter` words past the start.
    pub fn at(seed: u64, counter: u128) -> Self {
        let mut stream = Self::new(seed);
        stream.inner.set_word_pos(counter);
        stream
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Uniform draw on the open interval (-1/2, 1/2), never hitting either end.
    fn open_centered_uniform(&mut self) -> f64 {
        let k = self.inner.next_u64() >> 11;
        (k as f64 + 0.5) * (1.0 / (1u64 << 53) as f64) - 0.5
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// Scale `b` of a zero-mean Laplace law (variance `2 b²`).
///
/// `b = 0` is admitted as the non-private limit; samplers reject it.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LaplaceScale(f64);

impl LaplaceScale {
    pub fn new(b: f64) -> Result<Self> {
        if b.is_nan() || b < 0.0 || b.is_infinite() {
            return Err(Error::InvalidScale(b));
        }
        Ok(Self(b))
    }

    /// The non-private limit, used to switch noise off.
    pub const fn off() -> Self {
        Self(0.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_off(self) -> bool {
        self.0 == 0.0
    }

    pub fn variance(self) -> f64 {
        2.0 * self.0 * self.0
    }
}

/// Draws `d` i.i.d. Laplace(b) values by inverse CDF.
pub fn laplace_sample(rng: &mut RngStream, b: LaplaceScale, d: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; d];
    laplace_fill(rng, b, &mut out)?;
    Ok(out)
}

/// Overwrites `out` with i.i.d. Laplace(b) draws.
pub fn laplace_fill(rng: &mut RngStream, b: LaplaceScale, out: &mut [f64]) -> Result<()> {
    let scale = b.value();
    if !(scale > 0.0) {
        return Err(Error::InvalidScale(scale));
    }
    for slot in out.iter_mut() {
        let u = rng.open_centered_uniform();
        // -b sgn(u) ln(1 - 2|u|)
        let magnitude = -scale * (-2.0 * u.abs()).ln_1p();
        *slot = if u < 0.0 { -magnitude } else { magnitude };
    }
    Ok(())
}

fn check_sizes(n: usize, m: usize) -> Result<()> {
    if m == 0 || m > n {
        return Err(invalid(format!("subsample size m = {m} must satisfy 1 <= m <= n = {n}")));
    }
    Ok(())
}

/// Leak of one subsampled Laplace release: `ln[(e^{S/(bm)} - 1) m/n + 1]`.
///
/// Returns exactly `S / (b n)` when `m == n`.
pub fn epsilon_of(s: f64, b: f64, n: usize, m: usize) -> Result<f64> {
    check_sizes(n, m)?;
    if !(s >= 0.0) || !s.is_finite() {
        return Err(invalid(format!("sensitivity must be finite and non-negative, got {s}")));
    }
    if !(b > 0.0) {
        return Err(Error::InvalidScale(b));
    }
    if m == n {
        return Ok(s / (b * n as f64));
    }
    let x = s / (b * m as f64);
    let ratio = m as f64 / n as f64;
    if x > 700.0 {
        // ln(r e^x + 1 - r) = x + ln r + ln(1 + (1 - r) e^{-x} / r)
        return Ok(x + ratio.ln() + ((1.0 - ratio) * (-x).exp() / ratio).ln_1p());
    }
    Ok((x.exp_m1() * ratio).ln_1p())
}

/// Per-iteration base leak `ε₀ = ln[1 + (e^{ε/T} - 1) n/m]`.
///
/// A Laplace step with scale `S / (m ε₀)` on an `m`-subsample then leaks
/// exactly `ε / T`.
pub fn per_iteration_epsilon(epsilon: f64, horizon: usize, n: usize, m: usize) -> Result<f64> {
    check_sizes(n, m)?;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if horizon == 0 {
        return Err(invalid("horizon T must be at least 1"));
    }
    let per_step = epsilon / horizon as f64;
    if m == n {
        return Ok(per_step);
    }
    Ok((per_step.exp_m1() * (n as f64 / m as f64)).ln_1p())
}

/// How a noise schedule was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleProvenance {
    Uniform,
    Optimized,
    OptimizedRescaled,
}

impl ScheduleProvenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Optimized => "optimized",
            Self::OptimizedRescaled => "optimized-rescaled",
        }
    }
}

/// Laplace scales `b_1..b_T`, one per iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    scales: Vec<f64>,
    provenance: ScheduleProvenance,
}

impl NoiseSchedule {
    pub fn new(scales: Vec<f64>, provenance: ScheduleProvenance) -> Result<Self> {
        if let Some(bad) = scales.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
            return Err(Error::InvalidScale(*bad));
        }
        Ok(Self { scales, provenance })
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn provenance(&self) -> ScheduleProvenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    /// Scale used at iteration `t` (1-based).
    pub fn scale(&self, t: usize) -> LaplaceScale {
        LaplaceScale(self.scales[t - 1])
    }

    /// Per-iteration leaks `ε_t = ε(S, b_t, n, m)`.
    pub fn leaks(&self, s1: f64, n: usize, m: usize) -> Result<Vec<f64>> {
        self.scales.iter().map(|&b| epsilon_of(s1, b, n, m)).collect()
    }

    /// Composed leak `Σ_t ε(S, b_t, n, m)`.
    pub fn total_leak(&self, s1: f64, n: usize, m: usize) -> Result<f64> {
        Ok(self.leaks(s1, n, m)?.iter().sum())
    }

    /// Writes `t,b_t,eps_t` rows.
    pub fn write_csv<W: Write>(&self, writer: W, s1: f64, n: usize, m: usize) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record(["t", "b_t", "eps_t"])?;
        for (i, (b, eps)) in self.scales.iter().zip(self.leaks(s1, n, m)?).enumerate() {
            csv.write_record([(i + 1).to_string(), fmt_f64(*b), fmt_f64(eps)])?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Shortest round-trip representation, so CSV audits see the exact values.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Constant schedule `b_t = S₁ / (m ε₀)` whose composed leak is exactly `ε`.
pub fn uniform_scale(s1: f64, epsilon: f64, horizon: usize, n: usize, m: usize) -> Result<NoiseSchedule> {
    if !(s1 > 0.0) || !s1.is_finite() {
        return Err(invalid(format!("sensitivity S1 must be positive, got {s1}")));
    }
    let eps0 = per_iteration_epsilon(epsilon, horizon, n, m)?;
    let b = s1 / (m as f64 * eps0);
    NoiseSchedule::new(vec![b; horizon], ScheduleProvenance::Uniform)
}

/// Additive composition ledger for one run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrivacyAccount {
    epsilon_total: f64,
    horizon: usize,
    n: usize,
    m: usize,
    spent: Vec<f64>,
    cumulative: f64,
}

impl PrivacyAccount {
    pub fn new(epsilon_total: f64, horizon: usize, n: usize, m: usize) -> Result<Self> {
        check_sizes(n, m)?;
        if !(epsilon_total > 0.0) {
            return Err(invalid(format!("total epsilon must be positive, got {epsilon_total}")));
        }
        Ok(Self {
            epsilon_total,
            horizon,
            n,
            m,
            spent: Vec::with_capacity(horizon),
            cumulative: 0.0,
        })
    }

    /// Records the leak of one iteration.
    pub fn spend(&mut self, eps_t: f64) -> Result<()> {
        if !(eps_t >= 0.0) || !eps_t.is_finite() {
            return Err(invalid(format!("leak must be finite and non-negative, got {eps_t}")));
        }
        if self.spent.len() >= self.horizon {
            return Err(Error::HorizonExceeded(self.spent.len()));
        }
        let next = self.cumulative + eps_t;
        if next > self.epsilon_total + BUDGET_TOLERANCE {
            return Err(Error::BudgetExceeded {
                spent: self.cumulative,
                requested: eps_t,
                total: self.epsilon_total,
            });
        }
        self.spent.push(eps_t);
        self.cumulative = next;
        Ok(())
    }

    pub fn spent(&self) -> &[f64] {
        &self.spent
    }

    pub fn total_spent(&self) -> f64 {
        self.cumulative
    }

    pub fn epsilon_total(&self) -> f64 {
        self.epsilon_total
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dataset_size(&self) -> usize {
        self.n
    }

    pub fn batch_size(&self) -> usize {
        self.m
    }
}
