use super::{dot, Dataset, Objective};
use crate::error::{invalid, Error, Result};

const POWER_ITERATION_TOL: f64 = 1e-8;
const POWER_ITERATION_MAX: usize = 100_000;

/// Ridge-regularised logistic loss
/// `F(x) = (1/n) Σ ln(1 + exp(-z_i u_iᵀx)) + λ‖x‖²`.
///
/// Declared constants: `μ = 2λ`, `L` the top eigenvalue of `(1/n)UᵀU + 2λI`,
/// `S₁ = 2 u_max`.
#[derive(Clone, Debug)]
pub struct LogisticObjective {
    data: Dataset,
    lambda: f64,
    smoothness: f64,
}

impl LogisticObjective {
    pub fn new(data: Dataset, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(invalid(format!("ridge coefficient must be positive, got {lambda}")));
        }
        if data.len() == 0 {
            return Err(invalid("dataset is empty"));
        }
        let smoothness = top_eigenvalue(&data.gram_matrix(2.0 * lambda), data.dim())?;
        Ok(Self { data, lambda, smoothness })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Largest eigenvalue of a symmetric PSD `d×d` matrix by power iteration,
/// stopped once the Rayleigh quotient moves by less than 1e-8 relative.
pub(crate) fn top_eigenvalue(matrix: &[f64], d: usize) -> Result<f64> {
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + 0.01 * i as f64).collect();
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATION_MAX {
        let w: Vec<f64> = (0..d).map(|i| dot(&matrix[i * d..(i + 1) * d], &v)).collect();
        let next = dot(&v, &w);
        let w_norm = dot(&w, &w).sqrt();
        if w_norm == 0.0 {
            return Ok(0.0);
        }
        v = w.into_iter().map(|x| x / w_norm).collect();
        if (next - estimate).abs() <= POWER_ITERATION_TOL * next.abs() {
            return Ok(next);
        }
        estimate = next;
    }
    Err(Error::Numeric("power iteration did not converge".into()))
}

impl Objective for LogisticObjective {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn num_records(&self) -> usize {
        self.data.len()
    }

    fn strong_convexity(&self) -> f64 {
        2.0 * self.lambda
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn sensitivity_bound(&self) -> f64 {
        2.0 * self.data.meta().u_max
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.data.len();
        let loss: f64 = (0..n)
            .map(|i| softplus(-self.data.label(i) * dot(self.data.features(i), x)))
            .sum::<f64>()
            / n as f64;
        loss + self.lambda * dot(x, x)
    }

    fn add_record_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let u = self.data.features(i);
        let z = self.data.label(i);
        let weight = -z * sigmoid(-z * dot(u, x));
        let ridge = 2.0 * self.lambda;
        for ((slot, ui), xi) in out.iter_mut().zip(u).zip(x) {
            *slot += weight * ui + ridge * xi;
        }
    }
}
