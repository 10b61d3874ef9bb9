use rcmdp::bench::{self, ConfigLayer, ExperimentConfig, Mode, TraceMode};
use rcmdp::envs::{build_counterexample, riverswim};
use rcmdp::estimation::l1_distance;
use rcmdp::rcvi::{exact_mode, rcvi, RcviOptions};
use rcmdp::{robust_policy_eval, AugPolicy, BudgetGrid, EmpiricalModel, Support, TabularCmdp, UncertaintySpec};

fn small_instance() -> TabularCmdp {
    let kernel = [
        0.4, 0.3, 0.2, 0.1, //
        0.1, 0.2, 0.3, 0.4, //
        0.25, 0.25, 0.25, 0.25, //
        0.5, 0.2, 0.2, 0.1, //
        0.1, 0.6, 0.2, 0.1, //
        0.3, 0.1, 0.1, 0.5, //
        0.2, 0.2, 0.5, 0.1, //
        0.15, 0.15, 0.15, 0.55,
    ];
    let reward = [0.1, 0.5, 0.9, 0.2, 0.4, 0.7, 0.3, 1.0];
    let utility = [0.5, -0.2, 0.1, 0.3, -0.4, 0.6, 0.0, -0.1];
    TabularCmdp::stationary(4, 4, 2, &kernel, &reward, &utility, -0.5, 0).unwrap()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    sxy / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>()
}

#[test]
fn policy_document_round_trip_keeps_evaluation() {
    let mdp = small_instance();
    let spec = UncertaintySpec::kl(0.1);
    let grid = BudgetGrid::with_bins(4, 16).unwrap();
    let sol = rcvi(&mdp, &spec, &grid, &RcviOptions { slack_eps: 0.05, samples: 500, seed: 3 }).unwrap();
    let restored = AugPolicy::from_json(&sol.policy.to_json()).unwrap();
    let a = robust_policy_eval(&mdp, &sol.policy, &spec).unwrap();
    let b = robust_policy_eval(&mdp, &restored, &spec).unwrap();
    assert_eq!(a.robust_reward_value, b.robust_reward_value);
    assert_eq!(a.violation, b.violation);
}

#[test]
fn model_document_round_trip_is_exact() {
    let mdp = small_instance();
    let back = TabularCmdp::from_json(&mdp.to_json()).unwrap();
    assert_eq!(back.kernel(), mdp.kernel());
    assert_eq!(back.budget(), mdp.budget());
}

#[test]
fn sampled_solution_approaches_exact_solution() {
    let mdp = small_instance();
    let spec = UncertaintySpec::chi2(0.2);
    let grid = BudgetGrid::with_bins(4, 16).unwrap();
    let exact = exact_mode(&mdp, &spec, &grid, 0.05).unwrap().initial_values(&mdp);
    let sampled = rcvi(&mdp, &spec, &grid, &RcviOptions { slack_eps: 0.05, samples: 200_000, seed: 1 })
        .unwrap()
        .initial_values(&mdp);
    assert!((sampled.0 - exact.0).abs() < 0.05, "{sampled:?} vs {exact:?}");
}

#[test]
fn empirical_kernel_l1_error_shrinks_with_samples() {
    let mdp = small_instance();
    let err = |n: u64| {
        let model = EmpiricalModel::sample(&mdp, n, 11).unwrap();
        l1_distance(model.kernel(), mdp.kernel())
    };
    let (e1, e2, e3) = (err(100), err(10_000), err(1_000_000));
    assert!(e1 > e2 && e2 > e3, "{e1} {e2} {e3}");
    // Each hundredfold increase should cut the error roughly tenfold.
    assert!(e2 < e1 / 4.0 && e3 < e2 / 4.0, "{e1} {e2} {e3}");
}

#[test]
fn kl_operator_on_empirical_rows_concentrates_at_root_n() {
    let mdp = small_instance();
    let spec = UncertaintySpec::kl(0.1);
    let v = [0.0, 1.0, 2.5, 4.0];
    let truth = spec.worst_case(mdp.row(0, 0, 0), &v, 4.0).unwrap();
    let ns = [100u64, 1_000, 10_000, 100_000, 1_000_000];
    let gaps: Vec<f64> = ns
        .iter()
        .map(|&n| {
            median(
                (0..20)
                    .map(|seed| {
                        let model = EmpiricalModel::sample(&mdp, n, seed).unwrap();
                        (spec.worst_case(model.row(0, 0, 0), &v, 4.0).unwrap() - truth).abs()
                    })
                    .collect(),
            )
        })
        .collect();
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    let s = slope(&xs, &ys);
    assert!((-0.65..=-0.35).contains(&s), "slope {s}, gaps {gaps:?}");
}

#[test]
fn counterexample_needs_history_dependence() {
    let mdp = build_counterexample();
    let spec = UncertaintySpec::tv(0.2).with_support(Support::Nominal);
    let sol = exact_mode(&mdp, &spec, &BudgetGrid::new(3, 1.0).unwrap(), 1e-6).unwrap();
    let report = robust_policy_eval(&mdp, &sol.policy, &spec).unwrap();
    assert!((report.robust_reward_value - 1.0).abs() < 1e-6);
    assert!(report.violation < 1e-6);
}

#[test]
fn riverswim_solves_at_small_scale() {
    let mdp = riverswim(10, 4.0);
    let spec = UncertaintySpec::tv(0.05);
    let grid = BudgetGrid::with_bins(10, 200).unwrap();
    let sol = exact_mode(&mdp, &spec, &grid, 0.05).unwrap();
    let report = robust_policy_eval(&mdp, &sol.policy, &spec).unwrap();
    assert!(report.robust_reward_value.is_finite() && report.robust_reward_value >= 0.0);
    assert!(report.exact_violation <= report.violation + 1e-9);
}

fn quick_config(dir: &std::path::Path) -> ExperimentConfig {
    let flags = ConfigLayer {
        env: Some("garnet".into()),
        horizon: Some(4),
        samples: Some(200),
        bins: Some(8),
        seeds: Some(2),
        trace: Some(TraceMode::PerStage),
        out: Some(dir.to_path_buf()),
        garnet_states: Some(3),
        garnet_actions: Some(2),
        ..Default::default()
    };
    ExperimentConfig::resolve(None, &flags).unwrap()
}

#[test]
fn runner_outputs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    bench::run(&quick_config(a.path())).unwrap();
    bench::run(&quick_config(b.path())).unwrap();
    for file in ["trace.csv", "summary.csv", "policy-0.json", "policy-1.json"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file} differs between identical runs");
    }
    let trace = std::fs::read_to_string(a.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), bench::TRACE_HEADER.join(","));
    assert!(a.path().join("manifest.json").exists());
}

#[test]
fn config_hash_ignores_output_directory_and_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut x = quick_config(a.path());
    let y = quick_config(b.path());
    assert_eq!(x.hash(), y.hash());
    x.seed += 5;
    assert_eq!(x.hash(), y.hash());
    x.rho *= 2.0;
    assert_ne!(x.hash(), y.hash());
}

#[test]
fn exact_mode_runner_has_single_trace_point() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = quick_config(dir.path());
    config.mode = Mode::Exact;
    config.trace = TraceMode::FinalOnly;
    let outcome = bench::execute(&config).unwrap();
    for r in &outcome.results {
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.samples, None);
    }
}
