use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{dot, Objective};
use crate::error::{invalid, Error, Result};

/// `F(x) = ½ xᵀQx + aᵀx + b`, written as a finite sum over records that share
/// `Q` and `b` and carry their own linear term `a_i` (with `a` their mean).
#[derive(Clone, Debug)]
pub struct QuadraticObjective {
    d: usize,
    q: Vec<f64>,
    offsets: Vec<Vec<f64>>,
    a: Vec<f64>,
    b: f64,
    eigenvalues: Vec<f64>,
    s1: f64,
}

impl QuadraticObjective {
    /// Single-record quadratic.
    pub fn new(q: Vec<Vec<f64>>, a: Vec<f64>, b: f64) -> Result<Self> {
        Self::with_records(q, vec![a], b)
    }

    /// `Q = diag(λ_1..λ_d)`, `a = 0`, `b = 0`.
    pub fn diagonal(eigenvalues: &[f64]) -> Result<Self> {
        let d = eigenvalues.len();
        let q = (0..d)
            .map(|i| (0..d).map(|j| if i == j { eigenvalues[i] } else { 0.0 }).collect())
            .collect();
        Self::new(q, vec![0.0; d], 0.0)
    }

    /// Finite-sum quadratic whose i-th record has linear term `records[i]`.
    pub fn with_records(q: Vec<Vec<f64>>, records: Vec<Vec<f64>>, b: f64) -> Result<Self> {
        let d = q.len();
        if d == 0 || q.iter().any(|row| row.len() != d) {
            return Err(invalid("Q must be a non-empty square matrix"));
        }
        if records.is_empty() {
            return Err(invalid("at least one record is required"));
        }
        if let Some(bad) = records.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
        }
        for i in 0..d {
            for j in 0..i {
                let scale = q[i][j].abs().max(q[j][i].abs()).max(1.0);
                if (q[i][j] - q[j][i]).abs() > 1e-12 * scale {
                    return Err(invalid("Q must be symmetric"));
                }
            }
        }
        let flat: Vec<f64> = q.iter().flatten().copied().collect();
        let mut eigenvalues = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &flat))
            .eigenvalues
            .iter()
            .copied()
            .collect::<Vec<_>>();
        eigenvalues.sort_by(f64::total_cmp);
        if !(eigenvalues[0] > 0.0) {
            return Err(invalid(format!(
                "Q must be positive definite, smallest eigenvalue is {}",
                eigenvalues[0]
            )));
        }
        let n = records.len() as f64;
        let mut a = vec![0.0; d];
        for r in &records {
            a.iter_mut().zip(r).for_each(|(acc, v)| *acc += v / n);
        }
        Ok(Self {
            d,
            q: flat,
            offsets: records,
            a,
            b,
            eigenvalues,
            s1: 0.0,
        })
    }

    /// Sets the constant sensitivity bound reported to the privacy layer.
    pub fn with_sensitivity(mut self, s1: f64) -> Self {
        self.s1 = s1;
        self
    }

    /// Eigenvalues of `Q` in ascending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn linear_term(&self) -> &[f64] {
        &self.a
    }

    pub fn hessian_row(&self, i: usize) -> &[f64] {
        &self.q[i * self.d..(i + 1) * self.d]
    }

    /// `x* = -Q⁻¹a` by Cholesky.
    pub fn minimizer(&self) -> Vec<f64> {
        let q = DMatrix::from_row_slice(self.d, self.d, &self.q);
        let rhs = -DVector::from_column_slice(&self.a);
        let chol = q.cholesky().expect("Q is positive definite by construction");
        chol.solve(&rhs).iter().copied().collect()
    }

    pub fn optimal_value(&self) -> f64 {
        self.value(&self.minimizer())
    }

    fn q_times(&self, x: &[f64]) -> Vec<f64> {
        (0..self.d).map(|i| dot(self.hessian_row(i), x)).collect()
    }

    /// `½ (x - x*)ᵀ Q (x - x*)` without cancellation against `F*`.
    pub fn excess(&self, x: &[f64], x_star: &[f64]) -> f64 {
        let diff: Vec<f64> = x.iter().zip(x_star).map(|(a, b)| a - b).collect();
        0.5 * dot(&diff, &self.q_times(&diff))
    }
}

impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.d
    }

    fn num_records(&self) -> usize {
        self.offsets.len()
    }

    fn strong_convexity(&self) -> f64 {
        self.eigenvalues[0]
    }

    fn smoothness(&self) -> f64 {
        self.eigenvalues[self.d - 1]
    }

    fn sensitivity_bound(&self) -> f64 {
        self.s1
    }

    fn value(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.q_times(x)) + dot(&self.a, x) + self.b
    }

    fn add_record_gradient(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let offset = &self.offsets[i];
        for (k, slot) in out.iter_mut().enumerate() {
            *slot += dot(self.hessian_row(k), x) + offset[k];
        }
    }

    fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.q_times(x).iter().zip(&self.a).map(|(qx, a)| qx + a).collect()
    }
}
