use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dpaccel::objectives::{
    generate_synthetic, sample_batch, subsampling_variance_bound, Dataset, LogisticObjective, Objective,
    QuadraticObjective,
};
use dpaccel::privacy::RngStream;

fn logistic(n: usize, d: usize, seed: u64) -> LogisticObjective {
    LogisticObjective::new(generate_synthetic(d, n, 20.0, seed).unwrap(), 0.01).unwrap()
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let obj = logistic(300, 6, 1);
    let x: Vec<f64> = (0..6).map(|i| 0.3 * i as f64 - 0.7).collect();
    let g = obj.full_gradient(&x);
    let h = 1e-6;
    for k in 0..6 {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[k] += h;
        minus[k] -= h;
        let fd = (obj.value(&plus) - obj.value(&minus)) / (2.0 * h);
        assert!((fd - g[k]).abs() < 1e-6, "coordinate {k}: {fd} vs {}", g[k]);
    }
}

#[test]
fn logistic_constants() {
    let data = generate_synthetic(5, 400, 20.0, 2).unwrap();
    let obj = LogisticObjective::new(data.clone(), 0.01).unwrap();
    assert_eq!(obj.strong_convexity(), 0.02);
    assert_eq!(obj.sensitivity_bound(), 40.0);

    let mut u = DMatrix::zeros(400, 5);
    for i in 0..400 {
        for j in 0..5 {
            u[(i, j)] = data.features(i)[j];
        }
    }
    let gram = u.transpose() * &u / 400.0 + DMatrix::identity(5, 5) * 0.02;
    let top = SymmetricEigen::new(gram).eigenvalues.max();
    assert!((obj.smoothness() - top).abs() < 1e-6 * top, "{} vs {top}", obj.smoothness());
}

#[test]
fn record_gradients_respect_the_sensitivity_bound() {
    let obj = logistic(200, 8, 3);
    let x = vec![5.0; 8];
    let s1 = obj.sensitivity_bound();
    let grads: Vec<Vec<f64>> = (0..200)
        .map(|i| {
            let mut g = vec![0.0; 8];
            obj.add_record_gradient(i, &x, &mut g);
            g
        })
        .collect();
    for a in &grads {
        for b in &grads {
            let l1: f64 = a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum();
            assert!(l1 <= s1);
        }
    }
}

#[test]
fn minibatch_of_everything_is_the_full_gradient() {
    let obj = logistic(50, 3, 4);
    let x = [0.1, -0.2, 0.3];
    let all: Vec<usize> = (0..50).collect();
    let a = obj.minibatch_gradient(&x, &all);
    let b = obj.full_gradient(&x);
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() < 1e-14);
    }
}

#[test]
fn quadratic_minimizer_solves_the_normal_equation() {
    let q = vec![vec![2.0, 0.5], vec![0.5, 1.0]];
    let obj = QuadraticObjective::new(q, vec![1.0, -3.0], 0.25).unwrap();
    // Q^{-1} = [[1, -0.5], [-0.5, 2]] / 1.75
    let x = obj.minimizer();
    assert!((x[0] - (-2.5 / 1.75)).abs() < 1e-14);
    assert!((x[1] - 6.5 / 1.75).abs() < 1e-14);
    assert!(obj.full_gradient(&x).iter().all(|g| g.abs() < 1e-13));
    assert!((obj.strong_convexity() - (1.5 - 0.5f64.sqrt())).abs() < 1e-14);
    assert!((obj.smoothness() - (1.5 + 0.5f64.sqrt())).abs() < 1e-14);
}

#[test]
fn quadratic_records_average_to_the_linear_term() {
    let obj = QuadraticObjective::with_records(
        vec![vec![1.0, 0.0], vec![0.0, 2.0]],
        vec![vec![1.0, 0.0], vec![-1.0, 4.0]],
        0.0,
    )
    .unwrap()
    .with_sensitivity(6.0);
    assert_eq!(obj.num_records(), 2);
    assert_eq!(obj.linear_term(), &[0.0, 2.0]);
    assert_eq!(obj.sensitivity_bound(), 6.0);
    let x = [1.0, 1.0];
    assert_eq!(obj.full_gradient(&x), vec![1.0, 4.0]);
}

#[test]
fn invalid_quadratics_are_rejected() {
    assert!(QuadraticObjective::new(vec![vec![1.0, 2.0], vec![0.0, 1.0]], vec![0.0, 0.0], 0.0).is_err());
    assert!(QuadraticObjective::new(vec![vec![1.0, 0.0], vec![0.0, -1.0]], vec![0.0, 0.0], 0.0).is_err());
    assert!(QuadraticObjective::new(vec![vec![1.0]], vec![0.0, 0.0], 0.0).is_err());
}

#[test]
fn dataset_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_synthetic(4, 30, 5.0, 6).unwrap();
    let path = dir.path().join("data.csv");
    data.save(&path).unwrap();
    let back = Dataset::load(&path).unwrap();
    assert_eq!(back.len(), 30);
    assert_eq!(back.dim(), 4);
    for i in 0..30 {
        assert_eq!(back.features(i), data.features(i));
        assert_eq!(back.label(i), data.label(i));
    }
}

#[test]
fn dataset_rejects_oversized_covariates() {
    assert!(Dataset::new(2, vec![3.0, 3.0], vec![1.0], 5.0).is_err());
    assert!(Dataset::new(2, vec![1.0, 1.0], vec![0.5], 5.0).is_err());
}

fn random_point(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn check_curvature_sandwich(obj: &dyn Objective, rng: &mut ChaCha8Rng) {
    let (mu, l) = (obj.strong_convexity(), obj.smoothness());
    for _ in 0..1000 {
        let x = random_point(rng, obj.dim(), 3.0);
        let y = random_point(rng, obj.dim(), 3.0);
        let g = obj.full_gradient(&y);
        let gap = obj.value(&x) - obj.value(&y) - g.iter().zip(&x).zip(&y).map(|((g, a), b)| g * (a - b)).sum::<f64>();
        let dist2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
        let slack = 1e-10 * (1.0 + gap.abs());
        assert!(mu / 2.0 * dist2 <= gap + slack, "strong convexity: {gap} < {}", mu / 2.0 * dist2);
        assert!(gap <= l / 2.0 * dist2 + slack, "smoothness: {gap} > {}", l / 2.0 * dist2);
    }
}

#[test]
fn declared_constants_bound_the_curvature() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    check_curvature_sandwich(&logistic(400, 5, 9), &mut rng);
    let quad = QuadraticObjective::new(
        vec![vec![3.0, 1.0, 0.0], vec![1.0, 2.0, 0.5], vec![0.0, 0.5, 0.7]],
        vec![0.1, 0.2, 0.3],
        1.0,
    )
    .unwrap();
    check_curvature_sandwich(&quad, &mut rng);
}

#[test]
fn gradients_match_finite_differences_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let obj = logistic(100, 4, 12);
    let h = 1e-5;
    for _ in 0..100 {
        let x = random_point(&mut rng, 4, 2.0);
        let g = obj.full_gradient(&x);
        for k in 0..4 {
            let (mut p, mut m) = (x.clone(), x.clone());
            p[k] += h;
            m[k] -= h;
            let fd = (obj.value(&p) - obj.value(&m)) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1.0), "{fd} vs {}", g[k]);
        }
    }
}

#[test]
fn minibatches_are_unbiased_over_all_subsets() {
    let q = vec![vec![1.0, 0.2], vec![0.2, 0.8]];
    let records = vec![vec![1.0, -2.0], vec![0.5, 0.0], vec![-3.0, 1.0], vec![2.0, 4.0]];
    let obj = QuadraticObjective::with_records(q, records, 0.0).unwrap();
    let x = [0.3, -0.7];
    let full = obj.full_gradient(&x);
    let mut mean = [0.0; 2];
    let mut count = 0;
    for i in 0..4 {
        for j in i + 1..4 {
            let g = obj.minibatch_gradient(&x, &[i, j]);
            mean[0] += g[0];
            mean[1] += g[1];
            count += 1;
        }
    }
    assert_eq!(count, 6);
    for k in 0..2 {
        assert!((mean[k] / 6.0 - full[k]).abs() < 1e-12);
    }
}

#[test]
fn batch_variance_respects_the_sampling_bound() {
    let (n, m) = (60, 7);
    let obj = logistic(n, 3, 13);
    let x = [0.4, -0.1, 0.9];
    let bound = subsampling_variance_bound(obj.sensitivity_bound(), n, m);
    let per_record: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut g = vec![0.0; 3];
            obj.add_record_gradient(i, &x, &mut g);
            g
        })
        .collect();
    for k in 0..3 {
        // Exact variance of a without-replacement sample mean.
        let mean = per_record.iter().map(|g| g[k]).sum::<f64>() / n as f64;
        let pop = per_record.iter().map(|g| (g[k] - mean).powi(2)).sum::<f64>() / n as f64;
        let exact = pop / m as f64 * (n - m) as f64 / (n - 1) as f64;
        assert!(exact <= bound, "{exact} > {bound}");
    }
    let mut rng = RngStream::new(1);
    let batch = sample_batch(&mut rng, n, m);
    assert_eq!(batch.len(), m);
    let mut sorted = batch.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), m);
    assert!(batch.iter().all(|i| *i < n));
}

#[test]
fn adversarial_neighbours_stay_within_the_sensitivity() {
    let u_max = 20.0;
    let obj = logistic(50, 6, 14);
    let s1 = obj.sensitivity_bound();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let extreme = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        // All mass on one coordinate is the extreme point of the L1 ball.
        let mut u = vec![0.0; 6];
        u[rng.gen_range(0..6)] = if rng.gen() { u_max } else { -u_max };
        u
    };
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let x = random_point(&mut rng, 6, 5.0);
        let (u, v) = (extreme(&mut rng), extreme(&mut rng));
        let (z, w) = (if rng.gen() { 1.0 } else { -1.0 }, if rng.gen() { 1.0 } else { -1.0 });
        let data = Dataset::new(6, [u, v].concat(), vec![z, w], u_max).unwrap();
        let pair = LogisticObjective::new(data, 0.01).unwrap();
        let (mut g, mut h) = (vec![0.0; 6], vec![0.0; 6]);
        pair.add_record_gradient(0, &x, &mut g);
        pair.add_record_gradient(1, &x, &mut h);
        let l1: f64 = g.iter().zip(&h).map(|(a, b)| (a - b).abs()).sum();
        worst = worst.max(l1);
    }
    assert!(worst <= s1, "{worst}");
    assert!(worst > 0.9 * s1, "search never came close to the bound: {worst}");
}

#[test]
fn zero_covariates_have_zero_sensitivity() {
    let data = Dataset::new(2, vec![0.0; 6], vec![1.0, -1.0, 1.0], 0.0).unwrap();
    let obj = LogisticObjective::new(data, 0.1).unwrap();
    assert_eq!(obj.sensitivity_bound(), 0.0);
}
