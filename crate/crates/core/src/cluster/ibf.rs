//! The interacting backwards flow: a cluster trajectory rebuilt from the
//! root state, a tree, creation times, contact normals and the velocities of
//! the created particles.
//!
//! The flow starts from the root at time `t` and runs backward. At the `r`-th
//! creation time particle `1 + r` appears in contact with its parent at
//! `ξ_parent + ω·ε` and the pair undergoes an instantaneous (backward)
//! collision; between creations every existing particle follows hard-sphere
//! dynamics. Internally the backward motion is simulated forward in a
//! reversed frame: velocities are negated and the clock is `s = t - τ`.
//!
//! Particles carry 1-based labels (root = 1, the particle created at `t_r`
//! is `1 + r`); the engine index of label `k` is `k - 1`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};

use super::{backward_cluster, ClusterTree};
use crate::dynamics::{evolve, reflect_unchecked, CollisionEvent, ParticleState, SystemState};
use crate::error::{Error, Result};
use crate::torus::{minimal_image, TorusVector, PERIOD};
use crate::vector::{self, Vec3};

/// Variables parametrising one interacting backwards flow.
#[derive(Debug, Clone, PartialEq)]
pub struct IbfVariables {
    /// Parent label `k_r ∈ {1, …, r}` of each creation.
    pub gamma: Vec<usize>,
    pub root_position: TorusVector,
    pub root_velocity: Vec3,
    /// Time at which the root state is given.
    pub t: f64,
    /// Time the flow runs back to.
    pub t_star: f64,
    /// Creation times, strictly decreasing inside `(t_star, t)`.
    pub times: Vec<f64>,
    /// Unit contact normals pointing from parent to created particle.
    pub omegas: Vec<Vec3>,
    /// Velocities of the created particles right after creation (forward
    /// time just after `t_r`).
    pub velocities: Vec<Vec3>,
}

impl IbfVariables {
    pub fn n(&self) -> usize {
        self.gamma.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.gamma.len();
        if self.times.len() != n || self.omegas.len() != n || self.velocities.len() != n {
            return Err(Error::invalid(format!(
                "tree has {n} creations but {} times, {} normals and {} velocities",
                self.times.len(),
                self.omegas.len(),
                self.velocities.len()
            )));
        }
        if !(self.t_star < self.t) {
            return Err(Error::invalid(format!(
                "lower time {} must precede the root time {}",
                self.t_star, self.t
            )));
        }
        Ok(())
    }
}

/// A stretch of the flow between two consecutive creations.
#[derive(Debug, Clone, PartialEq)]
pub struct IbfSegment {
    /// Later end of the stretch (forward time).
    pub from: f64,
    /// Earlier end of the stretch (forward time).
    pub to: f64,
    /// Number of particles present.
    pub alive: usize,
    /// `Σ |v|²` over the particles present.
    pub energy: f64,
    /// Recollisions inside the stretch in forward-time order, with forward
    /// pre/post velocities and engine indices.
    pub collisions: Vec<CollisionEvent>,
}

/// The insertion of one particle.
#[derive(Debug, Clone, PartialEq)]
pub struct IbfCreation {
    pub r: usize,
    pub parent: usize,
    pub time: f64,
    pub position: TorusVector,
    /// The forward collision between parent and created particle at the
    /// creation time (engine indices, forward velocities).
    pub collision: CollisionEvent,
}

#[derive(Debug, Clone)]
pub struct IbfTrajectory {
    /// Stretches from `t` down to `t_star`, latest first.
    pub segments: Vec<IbfSegment>,
    pub creations: Vec<IbfCreation>,
    /// Configuration at `t_star` with forward velocities.
    pub initial_state: SystemState,
}

/// Builds an interacting backwards flow one creation at a time, so that
/// creation variables can depend on the flow constructed so far.
#[derive(Debug, Clone)]
pub struct IbfBuilder {
    /// Reversed-frame state; its clock is `t - τ`.
    state: SystemState,
    t: f64,
    /// Forward time the state is at.
    now: f64,
    segment_from: f64,
    segment_events: Vec<CollisionEvent>,
    segments: Vec<IbfSegment>,
    creations: Vec<IbfCreation>,
}

fn forward_event(e: &CollisionEvent, t: f64) -> CollisionEvent {
    CollisionEvent {
        time: t - e.time,
        i: e.i,
        j: e.j,
        omega: e.omega,
        v_i_pre: vector::neg(e.v_i_post),
        v_j_pre: vector::neg(e.v_j_post),
        v_i_post: vector::neg(e.v_i_pre),
        v_j_post: vector::neg(e.v_j_pre),
    }
}

impl IbfBuilder {
    pub fn new(root_position: TorusVector, root_velocity: Vec3, t: f64, eps: f64) -> Result<Self> {
        if !t.is_finite() {
            return Err(Error::NonFinite("root time"));
        }
        let root = ParticleState::new(root_position, vector::neg(root_velocity))?;
        let state = SystemState::new(vec![root], eps)?;
        Ok(IbfBuilder {
            state,
            t,
            now: t,
            segment_from: t,
            segment_events: Vec::new(),
            segments: Vec::new(),
            creations: Vec::new(),
        })
    }

    /// Forward time the flow has reached.
    pub fn time(&self) -> f64 {
        self.now
    }

    /// Number of particles present.
    pub fn alive(&self) -> usize {
        self.state.len()
    }

    fn index(&self, label: usize) -> Result<usize> {
        if label == 0 || label > self.state.len() {
            return Err(Error::invalid(format!(
                "label {label} is not among the {} particles present",
                self.state.len()
            )));
        }
        Ok(label - 1)
    }

    /// Forward velocity of particle `label` at the current time.
    pub fn velocity(&self, label: usize) -> Result<Vec3> {
        Ok(vector::neg(
            self.state.particles[self.index(label)?].velocity,
        ))
    }

    /// Position of particle `label` at the current time.
    pub fn position(&self, label: usize) -> Result<TorusVector> {
        let p = &self.state.particles[self.index(label)?];
        Ok(p.position_at(self.state.current_time))
    }

    /// Runs the flow backward to forward time `tau`.
    pub fn advance_to(&mut self, tau: f64) -> Result<()> {
        if !(tau <= self.now) {
            return Err(Error::invalid(format!(
                "cannot advance backward from {} to the later time {tau}",
                self.now
            )));
        }
        if tau == self.now {
            return Ok(());
        }
        let (state, log) = evolve(self.state.clone(), self.t - tau)?;
        self.state = state;
        self.segment_events
            .extend(log.events.iter().map(|e| forward_event(e, self.t)));
        self.now = tau;
        Ok(())
    }

    fn close_segment(&mut self) {
        let mut collisions = std::mem::take(&mut self.segment_events);
        collisions.reverse();
        self.segments.push(IbfSegment {
            from: self.segment_from,
            to: self.now,
            alive: self.state.len(),
            energy: 2.0 * self.state.kinetic_energy(),
            collisions,
        });
        self.segment_from = self.now;
    }

    /// Creates the next particle at the current time, attached to `parent`
    /// along `omega` with post-creation velocity `velocity`.
    ///
    /// Fails without changing the flow when the pair would not be
    /// post-collisional or the new sphere would overlap another one.
    pub fn create(&mut self, parent: usize, omega: Vec3, velocity: Vec3) -> Result<()> {
        let r = self.state.len();
        if parent == 0 || parent > r {
            return Err(Error::invalid(format!(
                "creation {r} names parent {parent}, expected 1..={r}"
            )));
        }
        if !vector::is_finite(omega) || (vector::norm(omega) - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "normal {omega:?} of creation {r} is not a unit vector"
            )));
        }
        if !vector::is_finite(velocity) {
            return Err(Error::NonFinite("created velocity"));
        }
        let pi = parent - 1;
        let eta = self.velocity(parent)?;
        let dot = vector::dot(omega, vector::sub(velocity, eta));
        if dot < 0.0 {
            return Err(Error::PreCollisionalCreation { r, dot });
        }
        let s = self.state.current_time;
        let anchor = self.state.particles[pi].position_at(s);
        let eps = self.state.eps;
        let position = TorusVector::wrap(vector::axpy(anchor.as_array(), eps, omega))?;
        for (k, p) in self.state.particles.iter().enumerate() {
            if k == pi {
                continue;
            }
            let d = vector::norm(minimal_image(&position, &p.position_at(s)));
            if d < eps {
                return Err(Error::CreationOverlap { r, other: k + 1 });
            }
        }

        self.close_segment();
        // Reversed frame: the pair arrives with velocities (-v_new, -η) and
        // leaves with their reflection.
        let (v_new, v_parent) = reflect_unchecked(vector::neg(velocity), vector::neg(eta), omega);
        let forward = CollisionEvent {
            time: self.now,
            i: pi,
            j: r,
            omega: vector::neg(omega),
            v_i_pre: vector::neg(v_parent),
            v_j_pre: vector::neg(v_new),
            v_i_post: eta,
            v_j_post: velocity,
        };
        let parent_state = &mut self.state.particles[pi];
        parent_state.position = anchor;
        parent_state.last_update = s;
        parent_state.velocity = v_parent;
        self.state.particles.push(ParticleState {
            position,
            velocity: v_new,
            last_update: s,
        });
        self.state.collision_counts.push(0);
        self.creations.push(IbfCreation {
            r,
            parent,
            time: self.now,
            position,
            collision: forward,
        });
        Ok(())
    }

    /// Runs the flow back to `t_star` and returns the whole trajectory.
    pub fn finish(mut self, t_star: f64) -> Result<IbfTrajectory> {
        self.advance_to(t_star)?;
        self.close_segment();
        let mut state = self.state;
        state.synchronize();
        state.reverse_velocities();
        state.current_time = t_star;
        for p in &mut state.particles {
            p.last_update = t_star;
        }
        state.collision_counts.iter_mut().for_each(|c| *c = 0);
        Ok(IbfTrajectory {
            segments: self.segments,
            creations: self.creations,
            initial_state: state,
        })
    }
}

/// Builds the interacting backwards flow of `vars` with sphere diameter
/// `eps`.
pub fn construct_ibf(vars: &IbfVariables, eps: f64) -> Result<IbfTrajectory> {
    vars.validate()?;
    let mut builder = IbfBuilder::new(vars.root_position, vars.root_velocity, vars.t, eps)?;
    let mut previous = vars.t;
    for r in 0..vars.n() {
        let tr = vars.times[r];
        if !(tr < previous && tr > vars.t_star) {
            return Err(Error::invalid(format!(
                "creation time {tr} must lie in ({}, {previous})",
                vars.t_star
            )));
        }
        previous = tr;
        builder.advance_to(tr)?;
        builder.create(vars.gamma[r], vars.omegas[r], vars.velocities[r])?;
    }
    builder.finish(vars.t_star)
}

/// Draws valid variables with `n` creations: parents uniform in `1..=r`,
/// creation times uniform on `(t_star, t)`, standard normal velocities and
/// uniform normals, flipped when needed to make each creation
/// post-collisional. Overlapping creations are redrawn.
pub fn random_ibf_variables<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    t: f64,
    t_star: f64,
    eps: f64,
) -> Result<IbfVariables> {
    const ATTEMPTS: u64 = 1000;
    let gaussian = |rng: &mut R| -> Vec3 {
        [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ]
    };
    let root_position = TorusVector::wrap([
        rng.random_range(0.0..PERIOD),
        rng.random_range(0.0..PERIOD),
        rng.random_range(0.0..PERIOD),
    ])?;
    let root_velocity = gaussian(rng);
    let mut times: Vec<f64> = (0..n).map(|_| rng.random_range(t_star..t)).collect();
    times.sort_by(|a, b| b.total_cmp(a));
    if times.windows(2).any(|w| w[0] == w[1]) || times.contains(&t_star) {
        return Err(Error::invalid("degenerate creation times drawn"));
    }
    let gamma: Vec<usize> = (1..=n).map(|r| rng.random_range(1..=r)).collect();

    let mut builder = IbfBuilder::new(root_position, root_velocity, t, eps)?;
    let mut omegas = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    for r in 0..n {
        builder.advance_to(times[r])?;
        let eta = builder.velocity(gamma[r])?;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let v = gaussian(rng);
            let mut omega: Vec3 = UnitSphere.sample(rng);
            if vector::dot(omega, vector::sub(v, eta)) < 0.0 {
                omega = vector::neg(omega);
            }
            match builder.create(gamma[r], omega, v) {
                Ok(()) => {
                    omegas.push(omega);
                    velocities.push(v);
                    break;
                }
                Err(Error::CreationOverlap { .. }) if attempt < ATTEMPTS => continue,
                Err(Error::CreationOverlap { .. }) => {
                    return Err(Error::SamplingFailed { attempts: attempt });
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(IbfVariables {
        gamma,
        root_position,
        root_velocity,
        t,
        t_star,
        times,
        omegas,
        velocities,
    })
}

/// Outcome of re-simulating an interacting backwards flow forward in time.
#[derive(Debug, Clone, PartialEq)]
pub enum RoundTrip {
    /// The backward cluster of the root reproduces the tree, the creation
    /// order and the creation times.
    Recovered { max_time_error: f64 },
    /// The forward run has collisions the flow does not contain: a created
    /// particle colliding after its creation time, or a spectator taking
    /// part. Such variables do not describe a cluster of this tree.
    Ambiguous,
    /// The cluster differs from the variables.
    Mismatch { cluster: ClusterTree },
}

/// Creation times must be recovered this closely.
pub const ROUND_TRIP_TOL: f64 = 1e-8;

/// Builds the flow of `vars`, places its configuration at `t_star` among
/// resting spectators at distance at least 2 from every cluster particle,
/// runs the whole system forward to `t` and compares the backward cluster
/// of the root with `vars`.
pub fn ibf_round_trip(vars: &IbfVariables, eps: f64) -> Result<RoundTrip> {
    const SPECTATOR_GRID: usize = 4;
    const SPECTATOR_CLEARANCE: f64 = 2.0;
    let traj = construct_ibf(vars, eps)?;
    let mut particles = traj.initial_state.particles.clone();
    let n_ibf = particles.len();
    let cluster_positions: Vec<TorusVector> = particles.iter().map(|p| p.position).collect();
    let spacing = PERIOD / SPECTATOR_GRID as f64;
    for a in 0..SPECTATOR_GRID {
        for b in 0..SPECTATOR_GRID {
            for c in 0..SPECTATOR_GRID {
                let x = TorusVector::wrap([a, b, c].map(|k| (k as f64 + 0.5) * spacing))?;
                if cluster_positions
                    .iter()
                    .all(|p| p.distance(&x) >= SPECTATOR_CLEARANCE)
                {
                    particles.push(ParticleState::new(x, [0.0; 3])?);
                }
            }
        }
    }
    let mut state = SystemState::new(particles, eps)?;
    state.current_time = vars.t_star;
    for p in &mut state.particles {
        p.last_update = vars.t_star;
    }
    let (_, log) = evolve(state, vars.t)?;

    let alive_until = |p: usize| -> f64 {
        match p {
            0 => vars.t,
            p if p < n_ibf => vars.times[p - 1] + ROUND_TRIP_TOL,
            _ => f64::NEG_INFINITY,
        }
    };
    if log
        .events
        .iter()
        .any(|e| e.time > alive_until(e.i) || e.time > alive_until(e.j))
    {
        return Ok(RoundTrip::Ambiguous);
    }
    let cluster = backward_cluster(&log, 0, vars.t, vars.t_star)?;
    let same_tree = cluster.parents == vars.gamma && cluster.members.iter().copied().eq(1..n_ibf);
    let max_time_error = cluster
        .creation_times
        .iter()
        .zip(&vars.times)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if same_tree && max_time_error <= ROUND_TRIP_TOL {
        Ok(RoundTrip::Recovered { max_time_error })
    } else {
        Ok(RoundTrip::Mismatch { cluster })
    }
}
