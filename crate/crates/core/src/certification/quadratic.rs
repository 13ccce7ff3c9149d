//! Exact heavy-ball rate and bound on quadratics via the companion blocks
//! `T_i = [[1+β-αλ_i, -β], [1, 0]]`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexRoot {
    pub re: f64,
    pub im: f64,
}

impl ComplexRoot {
    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Roots of `z² - (1+β-αλ)z + β` for one eigenvalue λ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootPair {
    pub lambda: f64,
    pub plus: ComplexRoot,
    pub minus: ComplexRoot,
}

impl RootPair {
    fn new(alpha: f64, beta: f64, lambda: f64) -> Self {
        let trace = 1.0 + beta - alpha * lambda;
        let disc = trace * trace - 4.0 * beta;
        let (plus, minus) = if disc >= 0.0 {
            let s = disc.sqrt();
            // Larger-magnitude root first, the other through Vieta for accuracy.
            let big = 0.5 * (trace + trace.signum() * s);
            let small = if big != 0.0 { beta / big } else { 0.5 * (trace - s) };
            let (p, m) = if trace >= 0.0 { (big, small) } else { (small, big) };
            (ComplexRoot { re: p, im: 0.0 }, ComplexRoot { re: m, im: 0.0 })
        } else {
            let im = 0.5 * (-disc).sqrt();
            (
                ComplexRoot { re: 0.5 * trace, im },
                ComplexRoot { re: 0.5 * trace, im: -im },
            )
        };
        Self { lambda, plus, minus }
    }

    pub fn spectral_radius(&self) -> f64 {
        self.plus.modulus().max(self.minus.modulus())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticRateReport {
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub l: f64,
    pub eigenvalues: Vec<f64>,
    /// Roots at λ = μ and λ = L.
    pub roots: [RootPair; 2],
    pub rho: f64,
    pub contractive: bool,
    /// `m(α, β)/σ_T²`, absent when some `2 + 2β - αλ_i ≤ 0` or `β ≥ 1`.
    pub m_unit: Option<f64>,
}

/// Rate `ρ = max |roots|` over λ ∈ {μ, L} and the stationary term of the bound.
pub fn quadratic_rate(alpha: f64, beta: f64, eigenvalues: &[f64], mu: f64, l: f64) -> Result<QuadraticRateReport> {
    if !(mu > 0.0 && mu <= l) {
        return Err(invalid(format!("need 0 < mu <= L, got mu = {mu}, L = {l}")));
    }
    let slack = 1e-12 * l;
    if let Some(lam) = eigenvalues.iter().find(|v| **v < mu - slack || **v > l + slack) {
        return Err(invalid(format!("eigenvalue {lam} lies outside [{mu}, {l}]")));
    }
    let roots = [RootPair::new(alpha, beta, mu), RootPair::new(alpha, beta, l)];
    let rho = roots[0].spectral_radius().max(roots[1].spectral_radius());
    let valid = beta < 1.0 && eigenvalues.iter().all(|lam| 2.0 + 2.0 * beta - alpha * lam > 0.0);
    let m_unit = valid.then(|| {
        0.5 * eigenvalues
            .iter()
            .map(|lam| 2.0 * alpha * (1.0 + beta) / ((1.0 - beta) * lam * (2.0 + 2.0 * beta - alpha * lam)))
            .sum::<f64>()
    });
    Ok(QuadraticRateReport {
        alpha,
        beta,
        mu,
        l,
        eigenvalues: eigenvalues.to_vec(),
        roots,
        rho,
        contractive: rho < 1.0,
        m_unit,
    })
}

/// `(V₀ + σ_T²α²/(1-ρ²)) C_t² ρ^{2t} + L m(α, β)` with `C_t = ct_scale · t`.
pub fn quadratic_bound(
    report: &QuadraticRateReport,
    sigma_t2: f64,
    t: usize,
    v0_norm: f64,
    ct_scale: f64,
) -> Result<f64> {
    if !report.contractive {
        return Err(Error::Precondition(format!("rate {} is not below 1", report.rho)));
    }
    let m_unit = report.m_unit.ok_or_else(|| {
        Error::Precondition("stationary term undefined: 2 + 2β - αλ must be positive".into())
    })?;
    let rho2 = report.rho * report.rho;
    let v0 = v0_norm + sigma_t2 * report.alpha * report.alpha / (1.0 - rho2);
    let ct = ct_scale * t as f64;
    Ok(v0 * ct * ct * rho2.powi(t as i32) + report.l * sigma_t2 * m_unit)
}
