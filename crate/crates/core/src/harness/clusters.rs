use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    run_parallel, simulate_trajectory, Bootstrap, ExperimentConfig, RateEstimate,
    BOOTSTRAP_RESAMPLES,
};
use crate::cluster::{backward_cluster, backward_cluster_sizes, EventIndex};
use crate::dynamics::CollisionLog;
use crate::error::Result;
use crate::theory::{count_trees, enumerate_trees, wild_cluster_pmf};

/// Trees are tallied for clusters of at most this many members.
pub const CENSUS_MAX_SIZE: usize = 4;

/// Empirical law of the backward cluster size at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterHistogram {
    /// Simulation time.
    pub t: f64,
    /// Time in fitted collision-rate units.
    pub t_hat: f64,
    /// Number of sampled clusters with each size.
    pub counts: BTreeMap<usize, u64>,
    pub n_samples: u64,
    /// Empirical mean size `S(t)`.
    pub mean: f64,
    /// Bootstrap standard error of `mean`.
    pub stderr: f64,
    /// Bootstrap standard error of each probability.
    pub probability_stderr: BTreeMap<usize, f64>,
}

impl ClusterHistogram {
    pub fn probability(&self, k: usize) -> f64 {
        self.counts.get(&k).copied().unwrap_or(0) as f64 / self.n_samples as f64
    }

    /// Total-variation distance to `e^{-t̂}(1 - e^{-t̂})^k`, counting the
    /// geometric mass beyond the largest observed size.
    pub fn wild_tv_distance(&self) -> f64 {
        let k_max = self.counts.keys().next_back().copied().unwrap_or(0);
        let growth = -(-self.t_hat).exp_m1();
        let mut tv = growth.powf(k_max as f64 + 1.0);
        for k in 0..=k_max {
            let p = wild_cluster_pmf(k as u64, self.t_hat).expect("t_hat is non-negative");
            tv += (self.probability(k) - p).abs();
        }
        tv / 2.0
    }
}

/// One point of the mean-size curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub t_hat: f64,
    pub mean: f64,
    pub stderr: f64,
    /// `e^{t̂} - 1`.
    pub wild: f64,
}

/// How often one tree occurred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeCount {
    pub parents: Vec<usize>,
    pub count: u64,
}

/// Trees of the clusters of one size at one time, with the χ² statistic
/// against all `k!` trees being equally likely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeCensus {
    pub t: f64,
    pub t_hat: f64,
    pub k: usize,
    /// Number of clusters of size `k`.
    pub clusters: u64,
    /// Every tree of size `k` in lexicographic order, including unseen ones.
    pub trees: Vec<TreeCount>,
    pub chi2: f64,
    pub dof: usize,
}

impl TreeCensus {
    fn new(t: f64, t_hat: f64, k: usize, seen: &BTreeMap<Vec<usize>, u64>) -> Self {
        let trees: Vec<TreeCount> = enumerate_trees(k)
            .expect("census sizes are small")
            .into_iter()
            .map(|parents| TreeCount {
                count: seen.get(&parents).copied().unwrap_or(0),
                parents,
            })
            .collect();
        let clusters: u64 = trees.iter().map(|c| c.count).sum();
        let expected =
            clusters as f64 / count_trees(k as u64).expect("census sizes are small") as f64;
        let chi2 = if clusters == 0 {
            0.0
        } else {
            trees
                .iter()
                .map(|c| (c.count as f64 - expected).powi(2) / expected)
                .sum()
        };
        TreeCensus {
            t,
            t_hat,
            k,
            clusters,
            dof: trees.len() - 1,
            trees,
            chi2,
        }
    }

    pub fn frequency(&self, parents: &[usize]) -> f64 {
        let count = self
            .trees
            .iter()
            .find(|c| c.parents == parents)
            .map_or(0, |c| c.count);
        count as f64 / self.clusters.max(1) as f64
    }
}

/// Result of [`cluster_size_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterExperiment {
    pub config: ExperimentConfig,
    /// Collision rate over `[0, horizon]` of the same trajectories.
    pub rate: RateEstimate,
    /// One histogram per grid time.
    pub histograms: Vec<ClusterHistogram>,
    /// Per grid time, the census of sizes `1..=4`.
    pub census: Vec<Vec<TreeCensus>>,
    /// Number of (trajectory, root, consecutive grid times) where the
    /// cluster shrank; zero by construction.
    pub monotone_violations: u64,
}

impl ClusterExperiment {
    pub fn series(&self) -> Vec<SeriesPoint> {
        self.histograms
            .iter()
            .map(|h| SeriesPoint {
                t: h.t,
                t_hat: h.t_hat,
                mean: h.mean,
                stderr: h.stderr,
                wild: h.t_hat.exp_m1(),
            })
            .collect()
    }

    /// Smallest and largest `γ` with `S(t) = e^{γ t̂} - 1` over the grid
    /// points with `0 < t̂ <= t_hat_max` and `S > 0`.
    pub fn growth_bracket(&self, t_hat_max: f64) -> Option<(f64, f64)> {
        let rates: Vec<f64> = self
            .histograms
            .iter()
            .filter(|h| h.t_hat > 0.0 && h.t_hat <= t_hat_max && h.mean > 0.0)
            .map(|h| h.mean.ln_1p() / h.t_hat)
            .collect();
        let lo = rates.iter().copied().reduce(f64::min)?;
        let hi = rates.iter().copied().reduce(f64::max)?;
        Some((lo, hi))
    }
}

struct TrajectoryClusters {
    collisions: u64,
    particle_time: f64,
    roots: u64,
    /// Per grid time, the number of roots with each cluster size.
    counts: Vec<Vec<u64>>,
    /// Per grid time, the trees of clusters with `1..=4` members.
    trees: Vec<BTreeMap<Vec<usize>, u64>>,
    monotone_violations: u64,
}

fn analyse(config: &ExperimentConfig, index: u64) -> Result<TrajectoryClusters> {
    let (_, log) = simulate_trajectory(&config.ensemble, index, config.horizon(), config.engine())?;
    analyse_log(config, &log)
}

/// Cluster statistics of one logged trajectory on the configured grid.
fn analyse_log(config: &ExperimentConfig, log: &CollisionLog) -> Result<TrajectoryClusters> {
    let events = EventIndex::new(log);
    let n = log.n_particles;
    let sizes: Vec<Vec<u32>> = if config.root_average {
        backward_cluster_sizes(log, 0.0, &config.grid)?
    } else {
        config
            .grid
            .iter()
            .map(|&t| Ok(vec![backward_cluster(log, 0, t, 0.0)?.n() as u32]))
            .collect::<Result<_>>()?
    };
    let mut counts = Vec::with_capacity(sizes.len());
    let mut trees = Vec::with_capacity(sizes.len());
    for (g, at_t) in sizes.iter().enumerate() {
        let largest = at_t.iter().copied().max().unwrap_or(0) as usize;
        let mut histogram = vec![0u64; largest + 1];
        let mut seen = BTreeMap::new();
        for (root, &size) in at_t.iter().enumerate() {
            histogram[size as usize] += 1;
            if (1..=CENSUS_MAX_SIZE as u32).contains(&size) {
                let tree = events
                    .backward_cluster_capped(root, config.grid[g], 0.0, CENSUS_MAX_SIZE)?
                    .expect("size already known to be within the cap");
                *seen.entry(tree.parents).or_insert(0) += 1;
            }
        }
        counts.push(histogram);
        trees.push(seen);
    }
    let monotone_violations = sizes
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).filter(|(a, b)| b < a).count() as u64)
        .sum();
    Ok(TrajectoryClusters {
        collisions: log.events.len() as u64,
        particle_time: n as f64 * log.duration,
        roots: if config.root_average { n as u64 } else { 1 },
        counts,
        trees,
        monotone_violations,
    })
}

/// Samples `config.samples` equilibrium trajectories, runs each to the last
/// grid time, and tallies the backward cluster of particle 0 (or of every
/// particle, with `root_average`) at each grid time.
pub fn cluster_size_experiment(config: &ExperimentConfig) -> Result<ClusterExperiment> {
    config.validate()?;
    let runs = run_parallel(config.samples, config.workers, |k| analyse(config, k))?;
    aggregate(config, &runs)
}

/// The experiment's estimators applied to given logs instead of sampled
/// trajectories; all logs must start at 0 and reach the last grid time.
pub fn cluster_statistics(
    config: &ExperimentConfig,
    logs: &[CollisionLog],
) -> Result<ClusterExperiment> {
    let runs = logs
        .iter()
        .map(|log| analyse_log(config, log))
        .collect::<Result<Vec<_>>>()?;
    aggregate(config, &runs)
}

fn aggregate(config: &ExperimentConfig, runs: &[TrajectoryClusters]) -> Result<ClusterExperiment> {
    let boot = Bootstrap::new(runs.len(), BOOTSTRAP_RESAMPLES, config.ensemble.seed);
    let collisions: Vec<u64> = runs.iter().map(|r| r.collisions).collect();
    let particle_time: Vec<f64> = runs.iter().map(|r| r.particle_time).collect();
    let rate = RateEstimate::pooled(&collisions, &particle_time, &boot)?;
    let roots: Vec<f64> = runs.iter().map(|r| r.roots as f64).collect();

    let mut histograms = Vec::with_capacity(config.grid.len());
    let mut census = Vec::with_capacity(config.grid.len());
    for (g, &t) in config.grid.iter().enumerate() {
        let t_hat = rate.lambda * t;
        let mut counts = BTreeMap::new();
        for r in runs {
            for (k, &c) in r.counts[g].iter().enumerate() {
                if c > 0 {
                    *counts.entry(k).or_insert(0u64) += c;
                }
            }
        }
        let n_samples: u64 = runs.iter().map(|r| r.roots).sum();
        let size_sums: Vec<f64> = runs
            .iter()
            .map(|r| {
                r.counts[g]
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| (k as u64 * c) as f64)
                    .sum()
            })
            .collect();
        let mean = size_sums.iter().sum::<f64>() / n_samples as f64;
        let probability_stderr = counts
            .keys()
            .map(|&k| {
                let per_run: Vec<f64> = runs
                    .iter()
                    .map(|r| r.counts[g].get(k).copied().unwrap_or(0) as f64)
                    .collect();
                (k, boot.ratio_stderr(&per_run, &roots))
            })
            .collect();
        histograms.push(ClusterHistogram {
            t,
            t_hat,
            counts,
            n_samples,
            mean,
            stderr: boot.ratio_stderr(&size_sums, &roots),
            probability_stderr,
        });

        let mut seen: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
        for r in runs {
            for (tree, &c) in &r.trees[g] {
                *seen.entry(tree.clone()).or_insert(0) += c;
            }
        }
        census.push(
            (1..=CENSUS_MAX_SIZE)
                .map(|k| TreeCensus::new(t, t_hat, k, &seen))
                .collect(),
        );
    }
    Ok(ClusterExperiment {
        config: config.clone(),
        rate,
        histograms,
        census,
        monotone_violations: runs.iter().map(|r| r.monotone_violations).sum(),
    })
}

/// Tree frequencies among clusters of sizes `1..=4` at time `t`.
pub fn tree_structure_census(config: &ExperimentConfig, t: f64) -> Result<Vec<TreeCensus>> {
    let config = ExperimentConfig {
        grid: vec![t],
        ..config.clone()
    };
    Ok(cluster_size_experiment(&config)?.census.remove(0))
}
