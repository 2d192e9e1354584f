use serde::{Deserialize, Serialize};

use super::{
    run_parallel, simulate_trajectory, Bootstrap, ExperimentConfig, RateEstimate,
    BOOTSTRAP_RESAMPLES,
};
use crate::cluster::{backward_cluster_sizes, largest_cluster_series};
use crate::error::Result;

/// Fraction of particles in the largest dynamical cluster at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercolationPoint {
    pub t: f64,
    pub t_hat: f64,
    /// Mean over trajectories of `largest / N`.
    pub fraction: f64,
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
    /// Mean over trajectories of the largest backward cluster (members,
    /// root excluded) over all roots.
    pub max_backward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercolationExperiment {
    pub config: ExperimentConfig,
    pub rate: RateEstimate,
    pub points: Vec<PercolationPoint>,
    /// Number of (trajectory, consecutive grid times) where the largest
    /// block shrank; zero by construction.
    pub monotone_violations: u64,
}

impl PercolationExperiment {
    /// First grid point where the mean fraction exceeds `threshold`.
    pub fn crossing(&self, threshold: f64) -> Option<&PercolationPoint> {
        self.points.iter().find(|p| p.fraction > threshold)
    }
}

struct TrajectoryPercolation {
    collisions: u64,
    largest: Vec<usize>,
    max_backward: Vec<u32>,
}

/// Tracks the largest dynamical cluster and the largest backward cluster on
/// the time grid.
pub fn percolation_experiment(config: &ExperimentConfig) -> Result<PercolationExperiment> {
    config.validate()?;
    let runs = run_parallel(config.samples, config.workers, |k| {
        let (_, log) = simulate_trajectory(&config.ensemble, k, config.horizon(), config.engine())?;
        let max_backward = backward_cluster_sizes(&log, 0.0, &config.grid)?
            .iter()
            .map(|s| s.iter().copied().max().unwrap_or(0))
            .collect();
        Ok(TrajectoryPercolation {
            collisions: log.events.len() as u64,
            largest: largest_cluster_series(&log, &config.grid)?,
            max_backward,
        })
    })?;
    let boot = Bootstrap::new(runs.len(), BOOTSTRAP_RESAMPLES, config.ensemble.seed);
    let n = config.ensemble.n_particles as f64;
    let collisions: Vec<u64> = runs.iter().map(|r| r.collisions).collect();
    let rate = RateEstimate::pooled(&collisions, &vec![n * config.horizon(); runs.len()], &boot)?;
    let ones = vec![1.0; runs.len()];
    let points = config
        .grid
        .iter()
        .enumerate()
        .map(|(g, &t)| {
            let fractions: Vec<f64> = runs.iter().map(|r| r.largest[g] as f64 / n).collect();
            PercolationPoint {
                t,
                t_hat: rate.lambda * t,
                fraction: fractions.iter().sum::<f64>() / runs.len() as f64,
                stderr: boot.ratio_stderr(&fractions, &ones),
                min: fractions.iter().copied().fold(f64::INFINITY, f64::min),
                max: fractions.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                max_backward: runs.iter().map(|r| r.max_backward[g] as f64).sum::<f64>()
                    / runs.len() as f64,
            }
        })
        .collect();
    let monotone_violations = runs
        .iter()
        .map(|r| r.largest.windows(2).filter(|w| w[1] < w[0]).count() as u64)
        .sum();
    Ok(PercolationExperiment {
        config: config.clone(),
        rate,
        points,
        monotone_violations,
    })
}
