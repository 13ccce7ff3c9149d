//! Performance bounds for DP heavy ball.
//!
//! * [`noise_bound`]: the covariance bound `E_T` of the combined DP and subsampling noise.
//! * [`search_certificate`]: grid search for `(ρ, P, c₀, c)` satisfying the 3×3
//!   dissipativity inequality, and [`eval_shb_bound`] for the resulting bound.
//! * [`quadratic_rate`] / [`quadratic_bound`]: exact rate and bound on quadratics.

pub mod linalg;
mod quadratic;

pub use quadratic::{quadratic_bound, quadratic_rate, ComplexRoot, QuadraticRateReport, RootPair};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::objectives::{subsampling_variance_bound, Objective};
use linalg::{symmetric_eigenvalues, Mat3};

/// Default feasibility tolerance on the smallest eigenvalue.
pub const CERTIFICATE_TOLERANCE: f64 = 1e-9;

/// `E_T = σ_s² + 2dS₁²/(m²ε₀²)` and its two parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseBound {
    pub e_t: f64,
    pub sampling: f64,
    pub privacy: f64,
}

pub fn noise_bound(s1: f64, d: usize, m: usize, n: usize, epsilon0: f64) -> Result<NoiseBound> {
    if m == 0 || m > n {
        return Err(invalid(format!("batch size {m} must lie in 1..={n}")));
    }
    if !(epsilon0 > 0.0) {
        return Err(invalid(format!("per-iteration epsilon must be positive, got {epsilon0}")));
    }
    let sampling = subsampling_variance_bound(s1, n, m);
    let privacy = 2.0 * d as f64 * s1 * s1 / ((m * m) as f64 * epsilon0 * epsilon0);
    Ok(NoiseBound {
        e_t: sampling + privacy,
        sampling,
        privacy,
    })
}

/// `ξ_{t+1} = Aξ_t + B u_t`, `y_t = Cξ_t` for heavy ball with state `(x_t, x_{t-1})`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemMatrices {
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
    pub c: [f64; 2],
}

impl SystemMatrices {
    pub fn heavy_ball(alpha: f64, beta: f64) -> Self {
        Self {
            a: [[1.0 + beta, -beta], [1.0, 0.0]],
            b: [alpha, 0.0],
            c: [1.0, 0.0],
        }
    }
}

/// Symmetric 2×2 `[[p11, p12], [p12, p22]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub p11: f64,
    pub p12: f64,
    pub p22: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 { p11: 0.0, p12: 0.0, p22: 0.0 };

    pub fn det(&self) -> f64 {
        self.p11 * self.p22 - self.p12 * self.p12
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let mean = 0.5 * (self.p11 + self.p22);
        let half_gap = (0.25 * (self.p11 - self.p22).powi(2) + self.p12 * self.p12).sqrt();
        mean - half_gap
    }

    fn as_array(&self) -> [[f64; 2]; 2] {
        [[self.p11, self.p12], [self.p12, self.p22]]
    }
}

/// A feasible point of the dissipativity inequality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub rho: f64,
    pub p: Sym2,
    pub c0: f64,
    pub c: f64,
    /// Smallest eigenvalue of the certificate matrix.
    pub slack: f64,
}

impl Certificate {
    /// `1 + 2P₁₂²/(P₂₂cL + 2|P|)` with `0/0 = 0`.
    pub fn amplification(&self, l: f64) -> f64 {
        amplification(&self.p, self.c, l)
    }

    /// `V_{P,c}(ξ₀) = (ξ₀ - ξ*)ᵀ(P ⊗ I)(ξ₀ - ξ*) + c(F(x₀) - F*)` for a start with `x_{-1} = x₀`.
    pub fn lyapunov_value<O: Objective + ?Sized>(&self, obj: &O, x0: &[f64], x_star: &[f64], f_star: f64) -> f64 {
        let dist2: f64 = x0.iter().zip(x_star).map(|(a, b)| (a - b).powi(2)).sum();
        (self.p.p11 + 2.0 * self.p.p12 + self.p.p22) * dist2 + self.c * (obj.value(x0) - f_star)
    }
}

fn amplification(p: &Sym2, c: f64, l: f64) -> f64 {
    let num = 2.0 * p.p12 * p.p12;
    let den = p.p22 * c * l + 2.0 * p.det();
    if num == 0.0 {
        1.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        1.0 + num / den
    }
}

/// `c₀X₀ + c[X₁ + (1-ρ²)X₂] - Φ(A, B, P, ρ)` in the scalar (`d = 1`) reduction.
///
/// The gradient enters the heavy-ball state update with a minus sign, so Φ is
/// assembled with input direction `-B`.
#[allow(clippy::too_many_arguments)]
pub fn certificate_matrix(alpha: f64, beta: f64, mu: f64, l: f64, rho: f64, p: &Sym2, c0: f64, c: f64) -> Mat3 {
    let sys = SystemMatrices::heavy_ball(alpha, beta);
    let a = sys.a;
    let b = [-sys.b[0], -sys.b[1]];
    let pm = p.as_array();

    let mut pa = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            pa[i][j] = pm[i][0] * a[0][j] + pm[i][1] * a[1][j];
        }
    }
    let pb = [pm[0][0] * b[0] + pm[0][1] * b[1], pm[1][0] * b[0] + pm[1][1] * b[1]];
    let rho2 = rho * rho;

    let mut phi = [[0.0; 3]; 3];
    for i in 0..2 {
        for j in 0..2 {
            phi[i][j] = a[0][i] * pa[0][j] + a[1][i] * pa[1][j] - rho2 * pm[i][j];
        }
        phi[i][2] = a[0][i] * pb[0] + a[1][i] * pb[1];
        phi[2][i] = phi[i][2];
    }
    phi[2][2] = b[0] * pb[0] + b[1] * pb[1];

    let x0 = [
        [2.0 * mu * l, 0.0, -(mu + l)],
        [0.0, 0.0, 0.0],
        [-(mu + l), 0.0, 2.0],
    ];
    let lb2 = l * beta * beta;
    let cross = (1.0 - l * alpha) * beta;
    let x1 = [
        [-0.5 * lb2, 0.5 * lb2, -0.5 * cross],
        [0.5 * lb2, -0.5 * lb2, 0.5 * cross],
        [-0.5 * cross, 0.5 * cross, 0.5 * alpha * (2.0 - l * alpha)],
    ];
    let x2 = [[0.5 * mu, 0.0, -0.5], [0.0, 0.0, 0.0], [-0.5, 0.0, 0.0]];

    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = c0 * x0[i][j] + c * (x1[i][j] + (1.0 - rho2) * x2[i][j]) - phi[i][j];
        }
    }
    // Exact symmetry regardless of rounding in the assembly order.
    for i in 0..3 {
        for j in 0..i {
            let avg = 0.5 * (m[i][j] + m[j][i]);
            m[i][j] = avg;
            m[j][i] = avg;
        }
    }
    m
}

/// Feasibility of `M ⪰ 0` up to `tol`, with the smallest eigenvalue as slack.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    pub slack: f64,
}

pub fn check_certificate(m: &Mat3, tol: f64) -> Feasibility {
    let slack = symmetric_eigenvalues(m)[0];
    Feasibility {
        feasible: slack >= -tol,
        slack,
    }
}

fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

/// Candidate values for the certificate search. `P` candidates failing the PSD
/// test are skipped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertificateGrid {
    pub rho: Vec<f64>,
    pub p11: Vec<f64>,
    pub p12: Vec<f64>,
    pub p22: Vec<f64>,
    pub c0: Vec<f64>,
    pub c: Vec<f64>,
    pub tol: f64,
}

impl Default for CertificateGrid {
    /// ρ ∈ {0.50, 0.51, …, 0.99, 0.999}; `P₁₁, P₂₂` log-spaced on `[10⁻², 10²]`;
    /// `P₁₂ ∈ {0} ∪ ±[10⁻³, 10²]`; `c₀ ∈ {0} ∪ [10⁻³, 10³]`. The inequality is
    /// homogeneous in `(P, c₀, c)`, so `c` is fixed to 1.
    fn default() -> Self {
        let mut rho: Vec<f64> = (50..100).map(|i| i as f64 / 100.0).collect();
        rho.push(0.999);
        let side = logspace(1e-3, 1e2, 11);
        let mut p12 = vec![0.0];
        for v in &side {
            p12.push(*v);
            p12.push(-*v);
        }
        let mut c0 = vec![0.0];
        c0.extend(logspace(1e-3, 1e3, 25));
        Self {
            rho,
            p11: logspace(1e-2, 1e2, 17),
            p12,
            p22: logspace(1e-2, 1e2, 17),
            c0,
            c: vec![1.0],
            tol: CERTIFICATE_TOLERANCE,
        }
    }
}

impl CertificateGrid {
    fn validate(&self) -> Result<()> {
        for (name, values) in [
            ("rho", &self.rho),
            ("p11", &self.p11),
            ("p12", &self.p12),
            ("p22", &self.p22),
            ("c0", &self.c0),
            ("c", &self.c),
        ] {
            if values.is_empty() {
                return Err(Error::EmptyGrid(name.into()));
            }
        }
        if let Some(r) = self.rho.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(invalid(format!("rates must lie in (0, 1), got {r}")));
        }
        if self.c0.iter().chain(&self.c).any(|v| !(*v >= 0.0)) {
            return Err(invalid("c0 and c must be non-negative"));
        }
        Ok(())
    }

    fn psd_candidates(&self) -> Vec<Sym2> {
        let mut out = Vec::new();
        for &p11 in &self.p11 {
            for &p22 in &self.p22 {
                for &p12 in &self.p12 {
                    let p = Sym2 { p11, p12, p22 };
                    if p.min_eigenvalue() >= -1e-12 {
                        out.push(p);
                    }
                }
            }
        }
        out
    }
}

/// Searches the grid for the smallest feasible ρ; ties are broken by the noise
/// amplification factor and then by grid position. Returns `None` when no grid
/// point is feasible.
pub fn search_certificate(
    alpha: f64,
    beta: f64,
    mu: f64,
    l: f64,
    grid: &CertificateGrid,
) -> Result<Option<Certificate>> {
    grid.validate()?;
    if !(mu > 0.0 && mu <= l) {
        return Err(invalid(format!("need 0 < mu <= L, got mu = {mu}, L = {l}")));
    }
    let candidates = grid.psd_candidates();
    let per_p = grid.c0.len() * grid.c.len();
    let mut rhos = grid.rho.clone();
    rhos.sort_by(f64::total_cmp);
    rhos.dedup();
    for rho in rhos {
        let best = (0..candidates.len() * per_p)
            .into_par_iter()
            .filter_map(|index| {
                let p = &candidates[index / per_p];
                let rest = index % per_p;
                let c0 = grid.c0[rest / grid.c.len()];
                let c = grid.c[rest % grid.c.len()];
                let m = certificate_matrix(alpha, beta, mu, l, rho, p, c0, c);
                let check = check_certificate(&m, grid.tol);
                check.feasible.then(|| {
                    (
                        amplification(p, c, l),
                        index,
                        Certificate {
                            rho,
                            p: *p,
                            c0,
                            c,
                            slack: check.slack,
                        },
                    )
                })
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((_, _, cert)) = best {
            return Ok(Some(cert));
        }
    }
    Ok(None)
}

/// `ρ^{2t} ψ₀/c + (1-ρ^{2t})/(1-ρ²) · (L d α²/2) · E_T · amplification`.
pub fn eval_shb_bound(cert: &Certificate, psi0: f64, t: usize, e_t: f64, d: usize, alpha: f64, l: f64) -> Result<f64> {
    let decay = cert.rho.powi(2 * t as i32);
    let transient = if psi0 == 0.0 {
        0.0
    } else if cert.c > 0.0 {
        decay * psi0 / cert.c
    } else {
        return Err(Error::Precondition(
            "certificate has c = 0, so the initial term is undefined".into(),
        ));
    };
    let geometric = (1.0 - decay) / (1.0 - cert.rho * cert.rho);
    Ok(transient + geometric * l * d as f64 * alpha * alpha / 2.0 * e_t * cert.amplification(l))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_bound_values() {
        let nb = noise_bound(40.0, 20, 1_000, 100_000, 0.6956523940987756).unwrap();
        assert!((nb.sampling - 0.3960039600396004).abs() < 1e-15);
        assert!((nb.privacy - 0.13224991628129591).abs() < 1e-14);
        assert_eq!(nb.e_t, nb.sampling + nb.privacy);
        let full = noise_bound(40.0, 20, 100, 100, 0.5).unwrap();
        assert_eq!(full.sampling, 0.0);
        assert_eq!(full.e_t, 2.0 * 20.0 * 1600.0 / (1e4 * 0.25));
        assert!(noise_bound(1.0, 1, 2, 1, 1.0).is_err());
    }

    #[test]
    fn zero_certificate_matrix() {
        let m = certificate_matrix(0.3, 0.4, 0.5, 1.0, 0.9, &Sym2::ZERO, 0.0, 0.0);
        assert_eq!(m, [[0.0; 3]; 3]);
    }

    #[test]
    fn identity_check() {
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let f = check_certificate(&id, CERTIFICATE_TOLERANCE);
        assert!(f.feasible);
        assert_eq!(f.slack, 1.0);
        let neg = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
        assert!(!check_certificate(&neg, CERTIFICATE_TOLERANCE).feasible);
    }

    #[test]
    fn empty_grid_is_an_error() {
        let grid = CertificateGrid {
            p12: Vec::new(),
            ..CertificateGrid::default()
        };
        assert!(matches!(search_certificate(1.0, 0.0, 0.5, 1.0, &grid), Err(Error::EmptyGrid(_))));
    }

    #[test]
    fn amplification_conventions() {
        assert_eq!(amplification(&Sym2::ZERO, 0.0, 1.0), 1.0);
        let p = Sym2 { p11: 2.0, p12: 1.0, p22: 1.0 };
        assert_eq!(amplification(&p, 1.0, 1.0), 1.0 + 2.0 / 3.0);
    }

    #[test]
    fn bound_limits() {
        let cert = Certificate {
            rho: 0.8,
            p: Sym2 { p11: 1.0, p12: 0.0, p22: 1.0 },
            c0: 1.0,
            c: 2.0,
            slack: 0.0,
        };
        assert_eq!(eval_shb_bound(&cert, 3.0, 0, 5.0, 2, 0.5, 1.0).unwrap(), 1.5);
        let pure = eval_shb_bound(&cert, 3.0, 4, 0.0, 2, 0.5, 1.0).unwrap();
        assert!((pure - 0.8f64.powi(8) * 1.5).abs() < 1e-15);
        let limit = 1.0 / (1.0 - 0.64) * (1.0 * 2.0 * 0.25 / 2.0) * 5.0;
        let far = eval_shb_bound(&cert, 3.0, 2000, 5.0, 2, 0.5, 1.0).unwrap();
        assert!((far - limit).abs() < 1e-12 * limit);
        let degenerate = Certificate { c: 0.0, ..cert };
        assert!(eval_shb_bound(&degenerate, 1.0, 1, 1.0, 1, 0.5, 1.0).is_err());
        assert!(eval_shb_bound(&degenerate, 0.0, 1, 1.0, 1, 0.5, 1.0).is_ok());
    }
}
