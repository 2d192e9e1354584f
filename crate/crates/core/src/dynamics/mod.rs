//! Event-driven hard-sphere flow on the torus.
//!
//! Particles fly ballistically between collisions; the engine keeps a priority
//! queue of predicted pair contacts, discards stale predictions through
//! per-particle collision counters, and records every collision in a
//! [`CollisionLog`].

mod cells;
mod engine;
mod event;

use crate::error::{Error, Result};
use crate::torus::{self, TorusVector};
use crate::vector::{self, Vec3};

pub use engine::{EngineOptions, StopCondition};

/// Unit-normal tolerance accepted by [`reflect`].
const UNIT_TOL: f64 = 1e-12;

/// Position and velocity of one sphere. The position is exact at
/// `last_update`; later positions follow from ballistic flight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    pub position: TorusVector,
    pub velocity: Vec3,
    pub last_update: f64,
}

impl ParticleState {
    pub fn new(position: TorusVector, velocity: Vec3) -> Result<Self> {
        if !vector::is_finite(velocity) {
            return Err(Error::NonFinite("particle velocity"));
        }
        Ok(ParticleState {
            position,
            velocity,
            last_update: 0.0,
        })
    }

    #[inline]
    pub fn position_at(&self, t: f64) -> TorusVector {
        self.position.advanced(self.velocity, t - self.last_update)
    }

    fn synchronize(&mut self, t: f64) {
        self.position = self.position_at(t);
        self.last_update = t;
    }
}

/// The N-sphere configuration `Z_N` together with the simulation clock.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub particles: Vec<ParticleState>,
    pub eps: f64,
    pub current_time: f64,
    pub collision_counts: Vec<u64>,
}

impl SystemState {
    /// Builds a synchronized state at time 0. Fails if two spheres overlap.
    pub fn new(particles: Vec<ParticleState>, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < std::f64::consts::FRAC_PI_2) {
            return Err(Error::invalid(format!("diameter {eps} outside (0, π/2)")));
        }
        let n = particles.len();
        let mut state = SystemState {
            particles,
            eps,
            current_time: 0.0,
            collision_counts: vec![0; n],
        };
        for p in &mut state.particles {
            p.last_update = 0.0;
        }
        if let Some((_, _, d)) = state.closest_pair() {
            if d < eps * (1.0 - torus::OVERLAP_TOL) {
                return Err(Error::Overlap { distance: d, eps });
            }
        }
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Brings every stored position to the current clock.
    pub fn synchronize(&mut self) {
        let t = self.current_time;
        for p in &mut self.particles {
            p.synchronize(t);
        }
    }

    pub fn positions(&self) -> Vec<TorusVector> {
        self.particles
            .iter()
            .map(|p| p.position_at(self.current_time))
            .collect()
    }

    /// `Σ |v_i|² / 2` (unit masses).
    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self
            .particles
            .iter()
            .map(|p| vector::norm2(p.velocity))
            .sum::<f64>()
    }

    pub fn momentum(&self) -> Vec3 {
        self.particles
            .iter()
            .fold([0.0; 3], |acc, p| vector::add(acc, p.velocity))
    }

    /// The closest pair at the current clock, by brute force.
    pub fn closest_pair(&self) -> Option<(usize, usize, f64)> {
        let pos = self.positions();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..pos.len() {
            for j in i + 1..pos.len() {
                let d = pos[i].distance(&pos[j]);
                if best.is_none_or(|(_, _, b)| d < b) {
                    best = Some((i, j, d));
                }
            }
        }
        best
    }

    /// Reverses every velocity in place.
    pub fn reverse_velocities(&mut self) {
        for p in &mut self.particles {
            p.velocity = vector::neg(p.velocity);
        }
    }

    fn dump(&self) -> String {
        let mut s = format!(
            "state at t = {} (eps = {}, N = {})\n",
            self.current_time,
            self.eps,
            self.len()
        );
        for (k, p) in self.particles.iter().enumerate() {
            let x = p.position.as_array();
            s.push_str(&format!(
                "{k}: x = ({:.17e}, {:.17e}, {:.17e}) @ {:.17e}, v = ({:.17e}, {:.17e}, {:.17e})\n",
                x[0], x[1], x[2], p.last_update, p.velocity[0], p.velocity[1], p.velocity[2]
            ));
        }
        s
    }
}

/// One elastic collision between particles `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEvent {
    pub time: f64,
    pub i: usize,
    pub j: usize,
    /// Contact normal `(x_i - x_j) / |x_i - x_j|`.
    pub omega: Vec3,
    pub v_i_pre: Vec3,
    pub v_j_pre: Vec3,
    pub v_i_post: Vec3,
    pub v_j_post: Vec3,
}

impl CollisionEvent {
    /// Whether `p` takes part in this collision.
    #[inline]
    pub fn involves(&self, p: usize) -> bool {
        self.i == p || self.j == p
    }
}

/// Time-ordered record of every collision in `[start_time, start_time + duration]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionLog {
    pub events: Vec<CollisionEvent>,
    pub n_particles: usize,
    pub eps: f64,
    pub start_time: f64,
    pub duration: f64,
}

impl CollisionLog {
    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration
    }

    /// Events with `time <= t`, as a prefix of the log.
    pub fn up_to(&self, t: f64) -> &[CollisionEvent] {
        let k = self.events.partition_point(|e| e.time <= t);
        &self.events[..k]
    }

    /// The same collisions seen with time running backwards from `end_time`:
    /// event times become `end_time - time` and the order is reversed.
    pub fn time_reversed(&self) -> CollisionLog {
        let end = self.end_time();
        let events = self
            .events
            .iter()
            .rev()
            .map(|e| CollisionEvent {
                time: end - e.time,
                v_i_pre: e.v_i_post,
                v_j_pre: e.v_j_post,
                v_i_post: e.v_i_pre,
                v_j_post: e.v_j_pre,
                ..*e
            })
            .collect();
        CollisionLog {
            events,
            start_time: self.start_time,
            ..self.clone()
        }
    }
}

/// Elastic reflection of an incoming pair with contact normal `omega`:
/// `v_i' = v_i - ω[ω·(v_i - v_j)]`, `v_j' = v_j + ω[ω·(v_i - v_j)]`.
pub fn reflect(v_i: Vec3, v_j: Vec3, omega: Vec3) -> Result<(Vec3, Vec3)> {
    if (vector::norm(omega) - 1.0).abs() > UNIT_TOL {
        return Err(Error::invalid("contact normal is not a unit vector"));
    }
    let proj = vector::dot(omega, vector::sub(v_i, v_j));
    if !(proj < 0.0) {
        return Err(Error::NotIncoming(proj));
    }
    Ok(reflect_unchecked(v_i, v_j, omega))
}

#[inline]
pub(crate) fn reflect_unchecked(v_i: Vec3, v_j: Vec3, omega: Vec3) -> (Vec3, Vec3) {
    let proj = vector::dot(omega, vector::sub(v_i, v_j));
    (
        vector::axpy(v_i, -proj, omega),
        vector::axpy(v_j, proj, omega),
    )
}

/// Runs the hard-sphere flow from `state.current_time` to `t_end` with the
/// default (all-pairs) engine.
pub fn evolve(state: SystemState, t_end: f64) -> Result<(SystemState, CollisionLog)> {
    evolve_with(state, StopCondition::Time(t_end), EngineOptions::default())
}

/// Like [`evolve`] with an explicit stop condition and engine options.
pub fn evolve_with(
    state: SystemState,
    stop: StopCondition,
    options: EngineOptions,
) -> Result<(SystemState, CollisionLog)> {
    engine::run(state, stop, options)
}

/// Runs the flow backwards for `duration`: velocities are reversed, the state
/// is evolved forward, and velocities are reversed again.
///
/// The returned state sits at `current_time - duration`. The log is on the
/// backward clock: event times are elapsed backward time in `[0, duration]`
/// and pre/post velocities refer to the reversed motion.
pub fn evolve_backward(state: SystemState, duration: f64) -> Result<(SystemState, CollisionLog)> {
    evolve_backward_with(state, duration, EngineOptions::default())
}

pub fn evolve_backward_with(
    mut state: SystemState,
    duration: f64,
    options: EngineOptions,
) -> Result<(SystemState, CollisionLog)> {
    if !(duration > 0.0) {
        return Err(Error::invalid(format!(
            "backward duration {duration} must be positive"
        )));
    }
    let start = state.current_time;
    state.synchronize();
    state.reverse_velocities();
    state.current_time = 0.0;
    for p in &mut state.particles {
        p.last_update = 0.0;
    }
    let (mut state, log) = engine::run(state, StopCondition::Time(duration), options)?;
    state.reverse_velocities();
    state.current_time = start - duration;
    for p in &mut state.particles {
        p.last_update = state.current_time;
    }
    Ok((state, log))
}
