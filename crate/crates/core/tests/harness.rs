use dpaccel::harness::{
    allocate, analyze_quadratic, build_objective, certify, load_traces, plan_run, reference_optimum, run_grid,
    summarize, AllocateConfig, CertifyConfig, DataSource, ExperimentConfig, ObjectiveSpec, QuadraticAnalysisConfig,
    LOG_FLOOR,
};
use dpaccel::objectives::{generate_synthetic, LogisticObjective, Objective, QuadraticObjective};
use dpaccel::optimizers::{audit_trace, Algorithm, Method, StageSchedule, Trace, TraceMeta, TraceRecord};
use dpaccel::privacy::{epsilon_of, NoiseSchedule, ScheduleProvenance};

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        objective: ObjectiveSpec::Logistic {
            data: DataSource::Synthetic {
                n: 500,
                d: 4,
                u_max: 20.0,
                seed: 3,
            },
            lambda: 0.01,
        },
        batch_sizes: vec![50, 500],
        horizons: vec![10, 30],
        step_factors: vec![0.1, 1.0],
        replicates: 3,
        reference_iterations: 1000,
        ..ExperimentConfig::default()
    }
}

#[test]
fn grid_traces_have_the_expected_shape() {
    let cfg = small_config();
    let out = run_grid(&cfg, None).unwrap();
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    assert_eq!(out.traces.len(), 6 * 2 * 2 * 2 * 3);
    assert_eq!(out.summary.records.len(), 6 * 2 * 2 * 2);
    for trace in &out.traces {
        let t_eff = trace.meta.t_effective;
        assert_eq!(trace.records.len(), t_eff + 1);
        assert!(t_eff <= trace.meta.horizon);
        assert!((trace.final_record().eps_cum - 1.0).abs() < 1e-9);
        if !Algorithm::from_name(&trace.meta.algorithm).unwrap().is_optimized() {
            assert_eq!(t_eff, trace.meta.horizon);
        }
    }
    for r in &out.summary.records {
        assert_eq!(r.seeds, vec![0, 1, 2]);
        assert_eq!(r.mean_log10_subopt.len(), r.t_effective + 1);
    }
}

#[test]
fn grid_runs_are_bitwise_reproducible() {
    let mut cfg = small_config();
    cfg.algorithms = vec![Algorithm::Hb, Algorithm::MasgOpt];
    cfg.horizons = vec![20];
    let a = run_grid(&cfg, None).unwrap();
    cfg.workers = 1;
    let b = run_grid(&cfg, None).unwrap();
    assert_eq!(a.traces.len(), b.traces.len());
    for (x, y) in a.traces.iter().zip(&b.traces) {
        assert_eq!(x.records, y.records);
    }
    let mut shuffled = a.traces.clone();
    shuffled.reverse();
    assert_eq!(summarize(&shuffled).unwrap(), a.summary);
}

#[test]
fn grid_writes_files_that_reload_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.algorithms = vec![Algorithm::NagOpt, Algorithm::Gd];
    cfg.step_factors = vec![1.0];
    cfg.horizons = vec![30];
    let out = run_grid(&cfg, Some(dir.path())).unwrap();
    for name in ["reference.json", "summary.json", "failures.json", "config.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let loaded = load_traces(&dir.path().join("traces")).unwrap();
    assert_eq!(loaded.len(), out.traces.len());
    assert_eq!(summarize(&loaded).unwrap().records.len(), out.summary.records.len());

    let obj = build_objective(&cfg.objective).unwrap();
    let s1 = obj.sensitivity_bound();
    for trace in &out.traces {
        let plan = out
            .plans
            .iter()
            .find(|p| p.algorithm.name() == trace.meta.algorithm && p.batch_size == trace.meta.batch_size)
            .unwrap();
        let total = audit_trace(trace, &plan.schedule, s1).unwrap();
        assert!((total - 1.0).abs() < 1e-9);
    }
    // The optimized schedule written to disk spends exactly the budget.
    let csv = dir.path().join("schedules").join("DP-NAG-opt_50_30_1.0.csv");
    let mut reader = csv::Reader::from_path(&csv).unwrap();
    let scales: Vec<f64> = reader.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    let spent: f64 = scales.iter().map(|b| epsilon_of(s1, *b, 500, 50).unwrap()).sum();
    assert!((spent - 1.0).abs() < 1e-9, "{spent}");
}

fn synthetic_trace(algorithm: &str, seed: u64, subopts: &[f64]) -> Trace {
    Trace {
        meta: TraceMeta {
            algorithm: algorithm.into(),
            method: Method::GradientDescent { alpha: 0.1 },
            batch_size: 10,
            n: 10,
            d: 1,
            horizon: subopts.len() - 1,
            t_effective: subopts.len() - 1,
            c: Some(1.0),
            seed,
            epsilon: 1.0,
            provenance: ScheduleProvenance::Uniform,
            f_star: 0.0,
            wall_time_s: seed as f64,
        },
        records: subopts
            .iter()
            .enumerate()
            .map(|(t, s)| TraceRecord {
                t,
                subopt: *s,
                eps_cum: t as f64,
                iterate: None,
            })
            .collect(),
    }
}

#[test]
fn summary_means_match_hand_computation() {
    let traces = vec![
        synthetic_trace("DP-GD", 1, &[1.0, 0.01]),
        synthetic_trace("DP-GD", 0, &[100.0, 0.0]),
        synthetic_trace("DP-GD", 2, &[10.0, 1e-3]),
        synthetic_trace("DP-GD-long", 0, &[1.0, 1.0, 1.0]),
    ];
    let s = summarize(&traces).unwrap();
    let r = s.record("DP-GD", 10, 1, 1.0).unwrap();
    assert_eq!(r.seeds, vec![0, 1, 2]);
    assert!((r.mean_log10_subopt[0] - 1.0).abs() < 1e-15);
    // log10 of (1e-16 floor, 1e-2, 1e-3)
    assert!((r.mean_log10_subopt[1] - (-21.0 / 3.0)).abs() < 1e-14);
    assert!((r.final_mean_subopt - 0.011 / 3.0).abs() < 1e-16);
    assert_eq!(r.mean_wall_time_s, 1.0);
    assert!(LOG_FLOOR.log10() == -16.0);
    assert_eq!(s.best("DP-GD", 10, 1.0).unwrap().horizon, 1);
    assert_eq!(s.best_over_horizon.len(), 2);

    let mut short = synthetic_trace("DP-GD", 1, &[1.0, 0.5]);
    short.records.pop();
    assert!(summarize(&[synthetic_trace("DP-GD", 0, &[1.0, 0.5]), short]).is_err());
    let mut other_budget = synthetic_trace("DP-GD", 1, &[1.0, 0.5]);
    other_budget.meta.epsilon = 2.0;
    assert!(summarize(&[synthetic_trace("DP-GD", 0, &[1.0, 0.5]), other_budget]).is_err());
}

#[test]
fn reference_optimum_of_a_quadratic() {
    let obj = QuadraticObjective::new(vec![vec![2.0, 0.3], vec![0.3, 0.4]], vec![1.0, -1.0], 0.0).unwrap();
    let r = reference_optimum(&obj, 1000).unwrap();
    let exact = obj.minimizer();
    for (a, b) in r.x_star.iter().zip(&exact) {
        assert!((a - b).abs() < 1e-10);
    }
    assert!(r.gradient_norm < 1e-10);
}

#[test]
fn heavy_ridge_pulls_the_optimum_to_the_origin() {
    let obj = LogisticObjective::new(generate_synthetic(5, 300, 20.0, 1).unwrap(), 1e4).unwrap();
    let r = reference_optimum(&obj, 1000).unwrap();
    assert!(r.x_star.iter().all(|x| x.abs() < 1e-3), "{:?}", r.x_star);
    assert!(r.gradient_norm < 1e-6);
}

#[test]
fn optimized_plans_spend_the_full_budget() {
    let obj = LogisticObjective::new(generate_synthetic(20, 2_000, 20.0, 0).unwrap(), 0.01).unwrap();
    for algorithm in [Algorithm::NagOpt, Algorithm::MasgOpt] {
        let plan = plan_run(&obj, algorithm, 200, 500, 1.0, 1.0, 10.0, 1, None).unwrap();
        let choice = plan.horizon_choice.unwrap();
        assert_eq!(plan.t_effective(), choice.horizon);
        assert!(choice.horizon <= 500);
        let spent = plan.schedule.total_leak(obj.sensitivity_bound(), 2_000, 200).unwrap();
        assert!((spent - 1.0).abs() < 1e-9);
        assert_eq!(plan.schedule.provenance(), ScheduleProvenance::OptimizedRescaled);
        if let Method::MultiStage { stages, .. } = &plan.method {
            assert_eq!(stages.horizon(), choice.horizon);
        }
    }
    let plan = plan_run(&obj, Algorithm::Masg, 2_000, 100, 1.0, 1.0, 10.0, 1, Some(5)).unwrap();
    match plan.method {
        Method::MultiStage { stages, .. } => {
            assert_eq!(stages.stages()[0].length, 5);
            assert_eq!(stages.horizon(), 100);
        }
        other => panic!("unexpected method {other:?}"),
    }
    assert!(plan_run(&obj, Algorithm::Gd, 3_000, 10, 1.0, 1.0, 10.0, 1, None).is_err());
}

#[test]
fn analysis_commands_produce_consistent_reports() {
    let report = allocate(&AllocateConfig::default()).unwrap();
    assert!((report.total_leak - 1.0).abs() < 1e-9);
    assert_eq!(report.leaks.len(), 500);
    assert!(report.schedule_bound.unwrap() <= report.uniform_bound.unwrap());
    let gd = allocate(&AllocateConfig {
        algorithm: Algorithm::Gd,
        ..AllocateConfig::default()
    })
    .unwrap();
    assert_eq!(gd.coefficients, None);
    assert_eq!(gd.schedule.provenance(), ScheduleProvenance::Uniform);

    let cfg = CertifyConfig::default();
    let cert = certify(&cfg).unwrap();
    let c = cert.certificate.expect("default configuration is certifiable");
    assert!(c.rho < 1.0);
    assert_eq!(cert.curve.len(), cfg.horizon + 1);
    assert_eq!(cert.curve[0], (0, cfg.psi0 / c.c));
    assert!((cert.epsilon0 - cfg.epsilon / cfg.horizon as f64).abs() < 1e-15);

    let qcfg = QuadraticAnalysisConfig::default();
    let rows = analyze_quadratic(&qcfg).unwrap();
    assert_eq!(rows.len(), 2 * 3 * 100);
    for r in &rows {
        if r.rho >= 1.0 {
            assert_eq!(r.bound, None);
        }
        assert_eq!(r.sigma_t2, (100.0 * r.noise_level).powi(2));
    }
    assert!(rows.iter().filter(|r| r.bound.is_some()).count() > 100);
}

#[test]
fn stage_schedule_json_round_trip() {
    let s = StageSchedule::multistage(0.02, 0.8, 1.0, 1, None, 300).unwrap();
    let json = serde_json::to_string(&s).unwrap();
    assert_eq!(serde_json::from_str::<StageSchedule>(&json).unwrap(), s);
    let sched = NoiseSchedule::new(vec![0.5, 0.25], ScheduleProvenance::Optimized).unwrap();
    let json = serde_json::to_string(&sched).unwrap();
    assert_eq!(serde_json::from_str::<NoiseSchedule>(&json).unwrap(), sched);
}
