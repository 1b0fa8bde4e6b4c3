//! Harness experiments at reduced sizes, and their documented edge cases.

use frozen_er::stats_harness::statistics::gumbel_cdf;
use frozen_er::stats_harness::*;

#[test]
fn subcritical_gel_stays_small() {
    let cfg = TrajectoryConfig {
        p: 0.5,
        n: 100_000,
        replicas: 20,
        horizon: 0.45,
        grid_points: 451,
        ..TrajectoryConfig::default()
    };
    let report = trajectory_experiment(&cfg, 3).unwrap();
    let worst = report.replicas.iter().map(|r| r[1]).fold(0.0, f64::max);
    assert!(worst <= 0.01, "sup G/n = {worst}");
}

#[test]
fn zero_horizon_has_no_deviation() {
    let cfg = TrajectoryConfig {
        n: 1_000,
        replicas: 3,
        horizon: 0.0,
        grid_points: 1,
        ..TrajectoryConfig::default()
    };
    let report = trajectory_experiment(&cfg, 1).unwrap();
    assert!(report.verdict);
    for row in &report.replicas {
        assert!(row[1..].iter().all(|&x| x == 0.0), "{row:?}");
    }
}

#[test]
fn poisson_limit_means() {
    assert!((threshold_poisson_mean(1.0, 1, 0.0).unwrap() - 1.0).abs() < 1e-12);
    assert!((threshold_poisson_mean(0.5, 1, 0.0).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
    assert!((threshold_poisson_mean(1.0, 2, 0.0).unwrap() - 0.5).abs() < 1e-12);
    assert!((gumbel_cdf(0.0) - (-1.0f64).exp()).abs() < 1e-15);
}

#[test]
fn tree_count_at_threshold_is_poisson() {
    let cfg = TreeCountConfig {
        p: 1.0,
        n: 10_000,
        k: 2,
        replicas: 1000,
        ..TreeCountConfig::default()
    };
    let report = tree_count_poisson_experiment(&cfg, 5).unwrap();
    assert!(report.verdict, "{}", report.summary());
}

#[test]
fn typical_tree_sizes_and_entrance_times() {
    let report = typical_tree_experiment(
        &TypicalTreeConfig {
            p: 0.5,
            t: 0.25,
            ..Default::default()
        },
        2,
    )
    .unwrap();
    assert!(report.verdict, "{}", report.summary());
    let at_zero = typical_tree_experiment(
        &TypicalTreeConfig {
            t: 0.0,
            replicas: 100,
            n: 1_000,
            ..Default::default()
        },
        2,
    )
    .unwrap();
    assert!(at_zero.replicas.iter().all(|r| r[1] == 1.0), "size at t = 0 must be 1");
}

#[test]
fn largest_tree_refuses_the_critical_window() {
    for t in [0.46, 0.5, 0.54] {
        assert!(largest_tree_experiment(
            &LargestTreeConfig {
                t,
                ..Default::default()
            },
            0
        )
        .is_err());
    }
}

#[test]
fn largest_tree_constant_does_not_depend_on_rank() {
    let base = LargestTreeConfig {
        n: 10_000,
        replicas: 5,
        t: 1.5,
        ..Default::default()
    };
    let first = largest_tree_experiment(&base, 0).unwrap();
    let third = largest_tree_experiment(&LargestTreeConfig { rank: 3, ..base }, 0).unwrap();
    assert_eq!(
        first.get("limiting constant").unwrap().value,
        third.get("limiting constant").unwrap().value
    );
}

#[test]
fn de_poissonization() {
    let report = discrete_vs_poissonized_experiment(&DePoissonConfig::default(), 8).unwrap();
    assert!(report.verdict, "{}", report.summary());
}

#[test]
fn gel_tail_bound_at_stated_points() {
    for p in [1.0, 0.3] {
        let cfg = GelTailConfig {
            p,
            n: 10_000,
            replicas: 200,
            t_max: 10.0,
            t_step: 5.0,
        };
        let report = gel_tail_experiment(&cfg, 4).unwrap();
        assert!(report.verdict, "{}", report.summary());
    }
}

#[test]
fn larger_trees_vanish_at_the_smaller_threshold() {
    let cfg = ExpectationBoundConfig {
        k: 1,
        k_prime: 2,
        ..Default::default()
    };
    let report = expectation_bound_experiment(&cfg, 6).unwrap();
    assert!(report.verdict, "{}", report.summary());
    assert!(report.get("mean N^(k') at n = 100000").unwrap().value < 0.1);
}

#[test]
fn pnk_formula_small_instance() {
    let cfg = PnkConfig {
        replicas: 40_000,
        inner_replicas: 5_000,
        ..Default::default()
    };
    let report = pnk_formula_experiment(&cfg, 12).unwrap();
    assert!(report.verdict, "{}", report.summary());
}

#[test]
fn factorial_moment_small_instance() {
    let cfg = FactorialMomentConfig {
        replicas: 40_000,
        inner_replicas: 5_000,
        ..Default::default()
    };
    let report = factorial_moment_experiment(&cfg, 13).unwrap();
    assert!(report.verdict, "{}", report.summary());
    assert!(partition_sum(3, 1, 4).is_empty());
    assert_eq!(falling_factorial(3.0, 4), 0.0);
}

#[test]
fn kernel_on_small_states() {
    let report = kernel_experiment(
        &KernelConfig {
            n_max: 5,
            draws: 50_000,
            ..Default::default()
        },
        14,
    )
    .unwrap();
    assert!(report.verdict, "{}", report.summary());
}

#[test]
fn every_named_experiment_parses_its_defaults() {
    assert!(run_named("no-such-experiment", serde_json::json!({}), 0).is_err());
    assert!(run_named("gelation", serde_json::json!({"replicas": "many"}), 0).is_err());
    let report = run_named("poisson-concentration", serde_json::json!({}), 0).unwrap();
    assert!(report.verdict);
    assert!(report.to_json().contains("\"verdict\": true"));
}
