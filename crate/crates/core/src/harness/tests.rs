use std::collections::BTreeMap;

use super::*;
use crate::cluster::backward_cluster;
use crate::dynamics::CollisionEvent;

fn config(n: usize, samples: usize, grid: Vec<f64>, seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(EnsembleConfig::new(n, 1.0, seed).unwrap(), samples, grid)
}

#[test]
fn kinetic_mean_free_time_values() {
    assert_eq!(kinetic_mean_free_time(1, 1.0), f64::INFINITY);
    // N = 1000: (2π)³ / (999 · π · 10⁻³ · 4/√π).
    let expected = PERIOD.powi(3) / (999.0 * PI * 1e-3 * 4.0 / PI.sqrt());
    assert!((kinetic_mean_free_time(1000, 1.0) / expected - 1.0).abs() < 1e-14);
    // Speeds scale as β^{-1/2}.
    let ratio = kinetic_mean_free_time(50, 4.0) / kinetic_mean_free_time(50, 1.0);
    assert!((ratio - 2.0).abs() < 1e-12);
}

#[test]
fn two_particle_mean_free_time_matches_kinetic_theory() {
    let cfg = EnsembleConfig::new(2, 1.0, 17).unwrap();
    let kinetic = kinetic_mean_free_time(2, 1.0);
    let mfp = estimate_mean_free_time(&cfg, 400, 10.0 * kinetic, false, 0).unwrap();
    assert!(mfp.collisions > 1000);
    assert!(
        (mfp.tau / kinetic - 1.0).abs() < 0.2,
        "{} vs {kinetic}",
        mfp.tau
    );
    assert!(mfp.stderr > 0.0 && mfp.stderr < 0.1 * mfp.tau);
    let again = estimate_mean_free_time(&cfg, 400, 10.0 * kinetic, false, 1).unwrap();
    assert_eq!(again, mfp);
}

#[test]
fn mean_free_time_scales_with_root_beta() {
    let cold = EnsembleConfig::new(100, 4.0, 3).unwrap();
    let hot = EnsembleConfig::new(100, 1.0, 3).unwrap();
    let horizon = 3.0 * kinetic_mean_free_time(100, 1.0);
    let a = estimate_mean_free_time(&hot, 40, horizon, false, 0).unwrap();
    let b = estimate_mean_free_time(&cold, 40, horizon, false, 0).unwrap();
    let ratio = b.tau / a.tau;
    let se = ratio * ((a.stderr / a.tau).powi(2) + (b.stderr / b.tau).powi(2)).sqrt();
    assert!(
        (ratio - 2.0).abs() < 4.0 * se + 0.05,
        "ratio {ratio} ± {se}"
    );
}

#[test]
fn mean_free_time_rejects_bad_input() {
    let cfg = EnsembleConfig::new(2, 1.0, 1).unwrap();
    assert!(estimate_mean_free_time(&cfg, 5, 10.0, false, 0).is_err());
    assert!(matches!(
        estimate_mean_free_time(&cfg, 10, 1e-6, false, 0),
        Err(Error::NoCollisions)
    ));
}

#[test]
fn cluster_experiment_basic_properties() {
    let tau = kinetic_mean_free_time(150, 1.0);
    let grid: Vec<f64> = (0..=6).map(|k| 0.25 * k as f64 * tau).collect();
    let cfg = config(150, 12, grid, 5);
    let exp = cluster_size_experiment(&cfg).unwrap();
    assert_eq!(exp.monotone_violations, 0);
    let first = &exp.histograms[0];
    assert_eq!(first.counts, BTreeMap::from([(0, 150 * 12)]));
    assert_eq!(first.mean, 0.0);
    for h in &exp.histograms {
        assert_eq!(h.n_samples, 150 * 12);
        assert_eq!(h.counts.values().sum::<u64>(), h.n_samples);
        let mean: f64 = h
            .counts
            .iter()
            .map(|(&k, &c)| (k as u64 * c) as f64)
            .sum::<f64>()
            / h.n_samples as f64;
        assert!((mean - h.mean).abs() < 1e-12);
        assert_eq!(h.probability_stderr.len(), h.counts.len());
    }
    assert!(exp.series().windows(2).all(|w| w[0].mean <= w[1].mean));
    for (h, census) in exp.histograms.iter().zip(&exp.census) {
        for c in census {
            assert_eq!(c.clusters, h.counts.get(&c.k).copied().unwrap_or(0));
            let total: f64 = c.trees.iter().map(|t| c.frequency(&t.parents)).sum();
            assert!(c.clusters == 0 || (total - 1.0).abs() < 1e-12);
        }
        if census[0].clusters > 0 {
            assert_eq!(census[0].frequency(&[1]), 1.0);
            assert_eq!(census[0].chi2, 0.0);
        }
    }
    let rate_ratio = exp.rate.lambda * tau;
    assert!(
        (rate_ratio - 1.0).abs() < 0.15,
        "fitted rate × kinetic τ = {rate_ratio}"
    );
    if let Some((lo, hi)) = exp.growth_bracket(2.0) {
        assert!(0.0 < lo && lo <= hi);
    }
}

#[test]
fn experiments_do_not_depend_on_the_worker_count() {
    let tau = kinetic_mean_free_time(80, 1.0);
    let mut cfg = config(80, 6, vec![0.5 * tau, tau], 9);
    cfg.workers = 1;
    let a = cluster_size_experiment(&cfg).unwrap();
    cfg.workers = 3;
    let b = cluster_size_experiment(&cfg).unwrap();
    assert_eq!(a.histograms, b.histograms);
    assert_eq!(a.census, b.census);
    let p = percolation_experiment(&cfg).unwrap();
    cfg.workers = 1;
    assert_eq!(percolation_experiment(&cfg).unwrap().points, p.points);
}

fn scripted(n: usize, pairs: &[(f64, usize, usize)], duration: f64) -> CollisionLog {
    CollisionLog {
        events: pairs
            .iter()
            .map(|&(time, a, b)| CollisionEvent {
                time,
                i: a.min(b),
                j: a.max(b),
                omega: [1.0, 0.0, 0.0],
                v_i_pre: [0.0; 3],
                v_j_pre: [0.0; 3],
                v_i_post: [0.0; 3],
                v_j_post: [0.0; 3],
            })
            .collect(),
        n_particles: n,
        eps: 0.1,
        start_time: 0.0,
        duration,
    }
}

#[test]
fn estimators_count_synthetic_clusters_exactly() {
    let logs = vec![
        scripted(5, &[(1.0, 0, 1), (2.0, 1, 2), (3.0, 3, 4)], 4.0),
        scripted(5, &[(0.5, 2, 3), (2.5, 0, 2)], 4.0),
    ];
    let grid = vec![0.0, 1.5, 4.0];
    let cfg = config(5, 2, grid.clone(), 1);
    let exp = cluster_statistics(&cfg, &logs).unwrap();
    for (g, &t) in grid.iter().enumerate() {
        let mut expected = BTreeMap::new();
        for log in &logs {
            for root in 0..5 {
                *expected
                    .entry(backward_cluster(log, root, t, 0.0).unwrap().n())
                    .or_insert(0u64) += 1;
            }
        }
        assert_eq!(exp.histograms[g].counts, expected, "t = {t}");
    }
    let trees = &exp.census[2][1];
    assert_eq!(trees.k, 2);
    assert_eq!(trees.clusters, exp.histograms[2].counts[&2]);
    assert_eq!(exp.rate.collisions, 5);
    assert!((exp.rate.lambda - 2.0 * 5.0 / (2.0 * 5.0 * 4.0)).abs() < 1e-15);

    let single = ExperimentConfig {
        root_average: false,
        ..cfg
    };
    let exp = cluster_statistics(&single, &logs).unwrap();
    assert_eq!(exp.histograms[2].counts, BTreeMap::from([(1, 1), (2, 1)]));
}

/// Welch statistic for the difference of two means.
fn welch(a: &ClusterHistogram, b: &ClusterHistogram) -> f64 {
    (a.mean - b.mean) / (a.stderr.powi(2) + b.stderr.powi(2)).sqrt()
}

#[test]
fn root_averaging_estimates_the_same_law() {
    let tau = kinetic_mean_free_time(100, 1.0);
    let grid = vec![0.5 * tau, tau];
    let averaged = config(100, 40, grid.clone(), 21);
    let single = ExperimentConfig {
        root_average: false,
        samples: 600,
        ..config(100, 600, grid, 22)
    };
    let a = cluster_size_experiment(&averaged).unwrap();
    let b = cluster_size_experiment(&single).unwrap();
    for g in 0..2 {
        let z = welch(&a.histograms[g], &b.histograms[g]);
        // Two-sided p > 0.01.
        assert!(z.abs() < 2.576, "z = {z} at grid point {g}");
    }
}

#[test]
fn percolation_basic_properties() {
    let tau = kinetic_mean_free_time(200, 1.0);
    let grid: Vec<f64> = (0..=8).map(|k| 0.5 * k as f64 * tau).collect();
    let exp = percolation_experiment(&config(200, 4, grid, 2)).unwrap();
    assert_eq!(exp.points[0].fraction, 1.0 / 200.0);
    assert_eq!(exp.points[0].max_backward, 0.0);
    assert_eq!(exp.monotone_violations, 0);
    assert!(exp
        .points
        .windows(2)
        .all(|w| w[0].fraction <= w[1].fraction));
    assert!(exp
        .points
        .iter()
        .all(|p| p.min <= p.fraction && p.fraction <= p.max));
    assert!(exp.crossing(0.5).is_some());
}

#[test]
fn equilibrium_moments_are_conserved_in_energy() {
    let cfg = EnsembleConfig::new(100, 2.0, 4).unwrap();
    let moments = equilibrium_moments(&cfg, 5, 20.0, false, 0).unwrap();
    for (before, after) in moments {
        assert!((before.energy_per_particle - after.energy_per_particle).abs() < 1e-12);
        assert!(before.second > 0.0 && after.fourth > 0.0);
    }
}

#[test]
fn tables_round_trip_through_the_readers() {
    let dir = tempfile::tempdir().unwrap();
    let tau = kinetic_mean_free_time(60, 1.0);
    let cfg = config(60, 5, vec![0.0, tau, 2.0 * tau], 8);
    let exp = cluster_size_experiment(&cfg).unwrap();
    let written = write_cluster_tables(dir.path(), &exp).unwrap();
    assert_eq!(written.len(), 3 + 3);
    for (g, h) in exp.histograms.iter().enumerate() {
        let rows = read_histogram_table(dir.path().join(histogram_file_name(g))).unwrap();
        let counts: BTreeMap<usize, u64> = rows.iter().map(|r| (r.0, r.1)).collect();
        assert_eq!(counts, h.counts);
        for r in rows {
            assert_eq!(r.2, h.probability(r.0));
            assert_eq!(r.3, h.probability_stderr[&r.0]);
        }
    }
    assert_eq!(
        read_series_table(dir.path().join("series.csv")).unwrap(),
        exp.series()
    );

    let perc = percolation_experiment(&cfg).unwrap();
    let path = write_percolation_table(dir.path(), &perc).unwrap();
    assert_eq!(read_percolation_table(path).unwrap(), perc.points);

    let manifest = RunManifest {
        command: "clusters".into(),
        settings: toml::Table::try_from(&cfg).unwrap(),
        summary: toml::Table::from_iter([(
            "lambda".to_string(),
            toml::Value::Float(exp.rate.lambda),
        )]),
        software: Software::default(),
        wall_clock: WallClock {
            started_unix_seconds: 1,
            elapsed_seconds: 0.5,
        },
    };
    manifest.save(dir.path().join("manifest.toml")).unwrap();
    let back = RunManifest::load(dir.path().join("manifest.toml")).unwrap();
    assert_eq!(back, manifest);
    let settings: ExperimentConfig = back.settings.try_into().unwrap();
    assert_eq!(settings, cfg);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = config(10, 1, vec![1.0, 0.5], 1);
    assert!(cluster_size_experiment(&cfg).is_err());
    cfg.grid = vec![];
    assert!(percolation_experiment(&cfg).is_err());
    cfg.grid = vec![-1.0];
    assert!(cfg.validate().is_err());
    cfg.grid = vec![1.0];
    cfg.samples = 0;
    assert!(cfg.validate().is_err());
}
