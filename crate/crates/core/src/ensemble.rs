//! Initial configurations drawn from the canonical Gibbs measure
//! `∝ Π exp(-β v_i²/2)` restricted to non-overlapping positions, with the
//! Boltzmann-Grad diameter `eps = N^{-1/2}`.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ParticleState, SystemState};
use crate::error::{Error, Result};
use crate::torus::{TorusVector, PERIOD};
use crate::vector::Vec3;

/// Largest admissible packing fraction.
pub const MAX_PACKING_FRACTION: f64 = 0.01;

/// Rejection budget per particle.
const ATTEMPTS_PER_PARTICLE: u64 = 1_000_000;

/// Generator behind every sampled configuration. Gaussian variates come from
/// `rand_distr::StandardNormal` (ziggurat) applied to this stream.
pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_particles: usize,
    pub beta: f64,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn new(n_particles: usize, beta: f64, seed: u64) -> Result<Self> {
        let cfg = EnsembleConfig {
            n_particles,
            beta,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sphere diameter under `eps² N = 1`.
    pub fn eps(&self) -> f64 {
        1.0 / (self.n_particles as f64).sqrt()
    }

    pub fn packing_fraction(&self) -> f64 {
        packing_fraction(self.n_particles, self.eps())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::invalid("need at least one particle"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!(
                "beta = {} must be positive",
                self.beta
            )));
        }
        let phi = self.packing_fraction();
        if phi >= MAX_PACKING_FRACTION {
            return Err(Error::invalid(format!(
                "packing fraction {phi} is not dilute (limit {MAX_PACKING_FRACTION})"
            )));
        }
        Ok(())
    }

    /// Generator for trajectory `index`, seeded with `seed ^ index`.
    pub fn trajectory_rng(&self, index: u64) -> SimRng {
        SimRng::seed_from_u64(trajectory_seed(self.seed, index))
    }
}

pub fn trajectory_seed(seed: u64, index: u64) -> u64 {
    seed ^ index
}

pub fn packing_fraction(n: usize, eps: f64) -> f64 {
    n as f64 * (PI / 6.0) * eps.powi(3) / PERIOD.powi(3)
}

/// Source of one particle velocity.
pub trait VelocityDistribution {
    fn sample(&self, rng: &mut dyn RngCore) -> Vec3;
}

/// Centered Gaussian with variance `1/β` per component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maxwellian {
    pub beta: f64,
}

impl VelocityDistribution for Maxwellian {
    fn sample(&self, rng: &mut dyn RngCore) -> Vec3 {
        let sigma = 1.0 / self.beta.sqrt();
        let mut v = [0.0; 3];
        for c in &mut v {
            let z: f64 = rng.sample(StandardNormal);
            *c = sigma * z;
        }
        v
    }
}

/// Draws trajectory 0 of the ensemble.
pub fn sample_equilibrium(cfg: &EnsembleConfig) -> Result<SystemState> {
    sample_trajectory(cfg, 0)
}

/// Draws the initial state of trajectory `index` of the ensemble.
pub fn sample_trajectory(cfg: &EnsembleConfig, index: u64) -> Result<SystemState> {
    cfg.validate()?;
    let mut rng = cfg.trajectory_rng(index);
    sample_configuration(
        cfg.n_particles,
        cfg.eps(),
        &Maxwellian { beta: cfg.beta },
        &mut rng,
    )
}

/// Draws `n` velocities from `velocities`, then places the spheres uniformly,
/// redrawing any sphere that overlaps one already placed.
pub fn sample_configuration(
    n: usize,
    eps: f64,
    velocities: &dyn VelocityDistribution,
    rng: &mut dyn RngCore,
) -> Result<SystemState> {
    let vs: Vec<Vec3> = (0..n).map(|_| velocities.sample(rng)).collect();
    let positions = place_spheres(n, eps, rng)?;
    let particles = positions
        .into_iter()
        .zip(vs)
        .map(|(x, v)| ParticleState::new(x, v))
        .collect::<Result<Vec<_>>>()?;
    SystemState::new(particles, eps)
}

fn place_spheres(n: usize, eps: f64, rng: &mut dyn RngCore) -> Result<Vec<TorusVector>> {
    // Cells at least `eps` wide, about one sphere each; the grid only speeds
    // up the overlap test and does not change which draws are accepted.
    let per_side = ((PERIOD / eps).floor() as usize)
        .min((n as f64).cbrt().ceil() as usize)
        .clamp(1, 128);
    let width = PERIOD / per_side as f64;
    let cell_of = |x: f64| ((x / width) as usize).min(per_side - 1);
    let flat = |c: [usize; 3]| (c[0] * per_side + c[1]) * per_side + c[2];
    let mut cells: Vec<Vec<u32>> = vec![Vec::new(); per_side.pow(3)];

    let budget = ATTEMPTS_PER_PARTICLE.saturating_mul(n as u64);
    let mut attempts = 0u64;
    let mut placed: Vec<TorusVector> = Vec::with_capacity(n);
    while placed.len() < n {
        if attempts >= budget {
            return Err(Error::SamplingFailed { attempts });
        }
        attempts += 1;
        let x = TorusVector::wrap_finite([
            rng.random::<f64>() * PERIOD,
            rng.random::<f64>() * PERIOD,
            rng.random::<f64>() * PERIOD,
        ]);
        let c = [cell_of(x.x()), cell_of(x.y()), cell_of(x.z())];
        let overlaps = if per_side < 3 {
            placed.iter().any(|y| x.distance(y) <= eps)
        } else {
            let mut hit = false;
            'search: for dx in [per_side - 1, 0, 1] {
                for dy in [per_side - 1, 0, 1] {
                    for dz in [per_side - 1, 0, 1] {
                        let nc = [
                            (c[0] + dx) % per_side,
                            (c[1] + dy) % per_side,
                            (c[2] + dz) % per_side,
                        ];
                        if cells[flat(nc)]
                            .iter()
                            .any(|&k| x.distance(&placed[k as usize]) <= eps)
                        {
                            hit = true;
                            break 'search;
                        }
                    }
                }
            }
            hit
        };
        if !overlaps {
            cells[flat(c)].push(placed.len() as u32);
            placed.push(x);
        }
    }
    Ok(placed)
}
