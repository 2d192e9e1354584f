//! Monte-Carlo experiments over equilibrium ensembles.
//!
//! Every experiment draws `samples` independent trajectories, trajectory
//! `k` seeded with `seed ^ k`, runs them on a worker pool and merges the
//! per-trajectory results in trajectory order, so outputs do not depend on
//! scheduling. Times passed to the harness are simulation times; results
//! also report them in fitted collision-rate units `t̂ = λ t`, where `λ` is
//! the per-particle collision rate measured on the same trajectories.

mod bootstrap;
mod clusters;
mod output;
mod percolation;

pub use bootstrap::{Bootstrap, BOOTSTRAP_RESAMPLES};
pub use clusters::{
    cluster_size_experiment, cluster_statistics, tree_structure_census, ClusterExperiment,
    ClusterHistogram, SeriesPoint, TreeCensus, TreeCount,
};
pub use output::{
    histogram_file_name, read_histogram_table, read_percolation_table, read_series_table,
    write_cluster_tables, write_mfp_table, write_percolation_table, RunManifest, Software,
    WallClock,
};
pub use percolation::{percolation_experiment, PercolationExperiment, PercolationPoint};

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve_with, CollisionLog, EngineOptions, StopCondition, SystemState};
use crate::ensemble::{sample_trajectory, EnsembleConfig};
use crate::error::{Error, Result};
use crate::torus::PERIOD;

/// Settings shared by all experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub ensemble: EnsembleConfig,
    /// Number of independent trajectories.
    pub samples: usize,
    /// Query times in simulation units, non-decreasing and non-negative.
    pub grid: Vec<f64>,
    /// Count the cluster of every particle of a trajectory instead of only
    /// particle 0. Exchangeability makes both estimate the same law.
    pub root_average: bool,
    /// Use the cell-list engine (same logs, faster for large `N`).
    pub cell_list: bool,
    /// Worker threads; 0 lets the pool choose.
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn new(ensemble: EnsembleConfig, samples: usize, grid: Vec<f64>) -> Self {
        ExperimentConfig {
            ensemble,
            samples,
            grid,
            root_average: true,
            cell_list: ensemble.n_particles >= 500,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        if self.samples == 0 {
            return Err(Error::invalid("need at least one sample"));
        }
        if self.grid.is_empty() {
            return Err(Error::invalid("the time grid is empty"));
        }
        if self.grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::invalid("grid times must be finite and non-negative"));
        }
        if self.grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("grid times must be non-decreasing"));
        }
        Ok(())
    }

    /// Last grid time, which every trajectory is run to.
    pub fn horizon(&self) -> f64 {
        self.grid.iter().copied().fold(0.0, f64::max)
    }

    fn engine(&self) -> EngineOptions {
        EngineOptions {
            cell_list: self.cell_list,
        }
    }
}

/// Mean free time from kinetic theory, `V / ((N - 1) π ε² v̄_rel)` with the
/// Maxwellian mean relative speed `v̄_rel = 4 / sqrt(π β)`.
pub fn kinetic_mean_free_time(n_particles: usize, beta: f64) -> f64 {
    if n_particles < 2 {
        return f64::INFINITY;
    }
    let n = n_particles as f64;
    let eps2 = 1.0 / n;
    let v_rel = 4.0 / (PI * beta).sqrt();
    PERIOD.powi(3) / ((n - 1.0) * PI * eps2 * v_rel)
}

/// Runs `f` for trajectories `0..samples` on a pool of `workers` threads (0
/// for the default) and returns the results in trajectory order.
pub fn run_parallel<T, F>(samples: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..samples as u64).into_par_iter().map(&f).collect())
}

/// Samples trajectory `index` of the ensemble and runs it to `t_end`.
pub fn simulate_trajectory(
    cfg: &EnsembleConfig,
    index: u64,
    t_end: f64,
    options: EngineOptions,
) -> Result<(SystemState, CollisionLog)> {
    let state = sample_trajectory(cfg, index)?;
    evolve_with(state, StopCondition::Time(t_end), options)
}

/// Per-particle collision rate `λ = 2 C / (N T)` pooled over trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub lambda: f64,
    pub stderr: f64,
    pub collisions: u64,
    /// `N T` summed over trajectories.
    pub particle_time: f64,
}

impl RateEstimate {
    /// `collisions[k]` collisions over `particle_time[k]` in trajectory `k`.
    fn pooled(collisions: &[u64], particle_time: &[f64], boot: &Bootstrap) -> Result<Self> {
        let total: u64 = collisions.iter().sum();
        if total == 0 {
            return Err(Error::NoCollisions);
        }
        let twice: Vec<f64> = collisions.iter().map(|&c| 2.0 * c as f64).collect();
        let pt: f64 = particle_time.iter().sum();
        Ok(RateEstimate {
            lambda: 2.0 * total as f64 / pt,
            stderr: boot.ratio_stderr(&twice, particle_time),
            collisions: total,
            particle_time: pt,
        })
    }

    /// Mean free time `1 / λ`.
    pub fn mean_free_time(&self) -> f64 {
        1.0 / self.lambda
    }
}

/// Mean free time `τ = (N T) / (2 C)` with its bootstrap standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFreeTime {
    pub tau: f64,
    pub stderr: f64,
    pub collisions: u64,
    pub particle_time: f64,
    /// Kinetic-theory value for comparison.
    pub kinetic: f64,
    pub horizon: f64,
    pub samples: usize,
}

/// Estimates the mean free time from `samples` trajectories of length
/// `horizon`.
pub fn estimate_mean_free_time(
    cfg: &EnsembleConfig,
    samples: usize,
    horizon: f64,
    cell_list: bool,
    workers: usize,
) -> Result<MeanFreeTime> {
    cfg.validate()?;
    if samples < 10 {
        return Err(Error::invalid(format!(
            "need at least 10 samples, got {samples}"
        )));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!(
            "horizon {horizon} must be positive"
        )));
    }
    let options = EngineOptions { cell_list };
    let counts = run_parallel(samples, workers, |k| {
        let (_, log) = simulate_trajectory(cfg, k, horizon, options)?;
        Ok(log.events.len() as u64)
    })?;
    let particle_time = vec![cfg.n_particles as f64 * horizon; samples];
    let boot = Bootstrap::new(samples, BOOTSTRAP_RESAMPLES, cfg.seed);
    let twice: Vec<f64> = counts.iter().map(|&c| 2.0 * c as f64).collect();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::NoCollisions);
    }
    let pt: f64 = particle_time.iter().sum();
    Ok(MeanFreeTime {
        tau: pt / (2.0 * total as f64),
        stderr: boot.ratio_stderr(&particle_time, &twice),
        collisions: total,
        particle_time: pt,
        kinetic: kinetic_mean_free_time(cfg.n_particles, cfg.beta),
        horizon,
        samples,
    })
}

/// Velocity statistics of one trajectory at a fixed time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityMoments {
    /// `Σ |v|² / (2N)`.
    pub energy_per_particle: f64,
    /// Mean of `v_a²` over particles and components.
    pub second: f64,
    /// Mean of `v_a⁴` over particles and components.
    pub fourth: f64,
}

impl VelocityMoments {
    pub fn of(state: &SystemState) -> Self {
        let n = state.len() as f64;
        let (mut m2, mut m4) = (0.0, 0.0);
        for p in &state.particles {
            for v in p.velocity {
                let v2 = v * v;
                m2 += v2;
                m4 += v2 * v2;
            }
        }
        VelocityMoments {
            energy_per_particle: state.kinetic_energy() / n,
            second: m2 / (3.0 * n),
            fourth: m4 / (3.0 * n),
        }
    }
}

/// Velocity moments at time 0 and at `t` for every trajectory.
pub fn equilibrium_moments(
    cfg: &EnsembleConfig,
    samples: usize,
    t: f64,
    cell_list: bool,
    workers: usize,
) -> Result<Vec<(VelocityMoments, VelocityMoments)>> {
    cfg.validate()?;
    run_parallel(samples, workers, |k| {
        let state = sample_trajectory(cfg, k)?;
        let before = VelocityMoments::of(&state);
        let (after, _) = evolve_with(state, StopCondition::Time(t), EngineOptions { cell_list })?;
        Ok((before, VelocityMoments::of(&after)))
    })
}

#[cfg(test)]
mod tests;
