//! Finite-sum objectives `F(x) = (1/n) Σ_i f(x; y_i)` that are μ-strongly
//! convex and L-smooth, together with a synthetic data generator.

mod data;
mod logistic;
mod quadratic;

pub use data::{generate_synthetic, Dataset, DatasetMeta};
pub use logistic::LogisticObjective;
pub use quadratic::QuadraticObjective;

use rand::seq::index;

use crate::privacy::RngStream;

/// A strongly convex, smooth empirical risk with per-record gradients.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    /// Number of records `n` in the finite sum.
    fn num_records(&self) -> usize;

    /// Strong-convexity modulus μ.
    fn strong_convexity(&self) -> f64;

    /// Smoothness constant L.
    fn smoothness(&self) -> f64;

    /// State-independent upper bound S₁ on `‖∇f(x; y) - ∇f(x; y')‖₁`.
    fn sensitivity_bound(&self) -> f64;

    fn value(&self, x: &[f64]) -> f64;

    /// Adds `∇f(x; y_i)` into `out`.
    fn add_record_gradient(&self, i: usize, x: &[f64], out: &mut [f64]);

    /// `∇F(x)`, the mean of the per-record gradients.
    fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.num_records();
        let mut g = vec![0.0; self.dim()];
        for i in 0..n {
            self.add_record_gradient(i, x, &mut g);
        }
        let inv = 1.0 / n as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        g
    }

    /// `∇F_B(x) = (1/|B|) Σ_{i∈B} ∇f(x; y_i)`.
    fn minibatch_gradient(&self, x: &[f64], batch: &[usize]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for &i in batch {
            self.add_record_gradient(i, x, &mut g);
        }
        let inv = 1.0 / batch.len() as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        g
    }

    fn condition_number(&self) -> f64 {
        self.smoothness() / self.strong_convexity()
    }
}

/// Draws `m` distinct record indices out of `n`, uniformly without replacement.
pub fn sample_batch(rng: &mut RngStream, n: usize, m: usize) -> Vec<usize> {
    index::sample(rng, n, m).into_vec()
}

/// Subsampled-gradient covariance bound `(S₁²/4)(1/m)(n-m)/(n-1)`.
pub fn subsampling_variance_bound(s1: f64, n: usize, m: usize) -> f64 {
    if m >= n {
        return 0.0;
    }
    s1 * s1 / 4.0 / m as f64 * (n - m) as f64 / (n - 1) as f64
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l1_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}
