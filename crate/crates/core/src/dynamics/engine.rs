use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::cells::CellGrid;
use super::event::{Event, EventKind, MinTree};
use super::{reflect, CollisionEvent, CollisionLog, SystemState};
use crate::error::{Error, Result};
use crate::torus::{self, minimal_image, PERIOD};
use crate::vector::{self, Vec3};

/// When a run stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopCondition {
    /// Advance the clock to this absolute time.
    Time(f64),
    /// Stop right after the given number of collisions, or at `t_max`,
    /// whichever comes first.
    Events { count: usize, t_max: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineOptions {
    /// Restrict pair predictions to a 27-cell neighbourhood. Produces the
    /// same log as the all-pairs search.
    pub cell_list: bool,
}

pub(super) fn run(
    mut state: SystemState,
    stop: StopCondition,
    options: EngineOptions,
) -> Result<(SystemState, CollisionLog)> {
    let (t_end, max_events) = match stop {
        StopCondition::Time(t) => (t, usize::MAX),
        StopCondition::Events { count, t_max } => (t_max, count),
    };
    let start = state.current_time;
    if t_end.is_nan() || t_end < start {
        return Err(Error::invalid(format!(
            "end time {t_end} precedes current time {start}"
        )));
    }
    state.synchronize();
    if state.collision_counts.len() != state.len() {
        state.collision_counts = vec![0; state.len()];
    }

    let grid = if options.cell_list {
        CellGrid::for_system(state.len(), state.eps)
    } else {
        None
    };
    let mut engine = Engine::new(state, t_end, grid);
    engine.initialize();

    let mut events = Vec::new();
    let mut stopped_early = None;
    loop {
        let queued = engine.queue.peek().map(|Reverse(ev)| ev.time);
        if let Some((t, i)) = engine.crossings.as_ref().map(MinTree::min) {
            if queued.is_none_or(|q| t < q) {
                if t > t_end {
                    break;
                }
                engine.now = t;
                engine.cross(i);
                continue;
            }
        }
        let Some(Reverse(ev)) = engine.queue.pop() else {
            break;
        };
        if ev.time > t_end {
            break;
        }
        match ev.kind {
            EventKind::Collision { i, j, ci, cj } => {
                if engine.count(i) != ci || engine.count(j) != cj {
                    continue;
                }
                events.push(engine.collide(ev.time, i as usize, j as usize)?);
                if events.len() >= max_events {
                    stopped_early = Some(ev.time);
                    break;
                }
            }
            EventKind::Recheck { i, ci } => {
                if engine.count(i) == ci {
                    engine.now = ev.time;
                    engine.predict_particle(i as usize);
                }
            }
        }
    }

    let end = match stopped_early {
        Some(t) => t,
        None if t_end.is_finite() => t_end,
        None => events.last().map_or(start, |e| e.time),
    };
    let mut state = engine.state;
    state.current_time = end;
    state.synchronize();
    let log = CollisionLog {
        events,
        n_particles: state.len(),
        eps: state.eps,
        start_time: start,
        duration: end - start,
    };
    Ok((state, log))
}

/// Per-particle cell bookkeeping for the cell-list mode.
#[derive(Debug, Clone, Copy)]
struct CellSlot {
    cell: [usize; 3],
    /// Unwrapped face coordinate crossed next, relative to the stored position.
    boundary: [f64; 3],
    /// Axis of the face crossed next.
    axis: usize,
}

const NO_PARTNER: u32 = u32::MAX;

struct Engine {
    state: SystemState,
    now: f64,
    t_end: f64,
    queue: BinaryHeap<Reverse<Event>>,
    grid: Option<CellGrid>,
    slots: Vec<CellSlot>,
    /// Cell-list mode: next face crossing of every particle.
    crossings: Option<MinTree>,
    /// All-pairs mode: partner of each particle's scheduled collision.
    partner: Vec<u32>,
    /// All-pairs mode: how far ahead a particle's partners are searched
    /// before a recheck is scheduled.
    horizon: f64,
    scratch: Vec<usize>,
}

impl Engine {
    fn new(state: SystemState, t_end: f64, grid: Option<CellGrid>) -> Self {
        let now = state.current_time;
        let n = state.len();
        let mean_v2 = state
            .particles
            .iter()
            .map(|p| vector::norm2(p.velocity))
            .sum::<f64>()
            / n.max(1) as f64;
        // About eight box crossings at the typical relative speed.
        let horizon = if mean_v2 > 0.0 {
            8.0 * PERIOD / (2.0 * mean_v2).sqrt()
        } else {
            f64::INFINITY
        };
        Engine {
            state,
            now,
            t_end,
            queue: BinaryHeap::new(),
            grid,
            slots: Vec::new(),
            crossings: None,
            partner: vec![NO_PARTNER; n],
            horizon,
            scratch: Vec::new(),
        }
    }

    #[inline]
    fn count(&self, i: u32) -> u32 {
        self.state.collision_counts[i as usize] as u32
    }

    fn initialize(&mut self) {
        let n = self.state.len();
        if self.grid.is_some() {
            self.crossings = Some(MinTree::new(n));
            self.slots = (0..n)
                .map(|i| {
                    let cell = self.position_cell(i);
                    let mut slot = CellSlot {
                        cell,
                        boundary: [0.0; 3],
                        axis: 0,
                    };
                    self.reset_boundaries(i, &mut slot);
                    slot
                })
                .collect();
            for i in 0..n {
                let cell = self.slots[i].cell;
                self.grid.as_mut().unwrap().insert(cell, i as u32);
            }
            for i in 0..n {
                self.schedule_crossing(i);
            }
            for i in 0..n {
                self.predict_neighbours(i, |k| k > i);
            }
        } else {
            for i in 0..n {
                self.predict_particle(i);
            }
        }
    }

    /// Pair geometry at the later of the two particles' last
    /// synchronizations: that time, the unwrapped separation `x_i - x_j`, and
    /// the relative velocity.
    #[inline]
    fn pair_frame(&self, i: usize, j: usize) -> (f64, Vec3, Vec3) {
        let pi = &self.state.particles[i];
        let pj = &self.state.particles[j];
        let anchor = pi.last_update.max(pj.last_update);
        let x_rel = vector::sub(
            vector::axpy(pi.position.as_array(), anchor - pi.last_update, pi.velocity),
            vector::axpy(pj.position.as_array(), anchor - pj.last_update, pj.velocity),
        );
        (anchor, x_rel, vector::sub(pi.velocity, pj.velocity))
    }

    /// Earliest contact of the pair in `[now, limit]`, as an absolute time.
    ///
    /// The search is anchored at the later of the two particles' last
    /// synchronizations, so the value depends only on the two particle
    /// states and never on when or how far ahead it is computed.
    #[inline]
    fn pair_contact(&self, a: usize, b: usize, limit: f64) -> Option<f64> {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        let (anchor, x_rel, v_rel) = self.pair_frame(i, j);
        torus::first_contact(
            x_rel,
            v_rel,
            self.state.eps,
            self.now - anchor,
            limit - anchor,
        )
        .map(|s| anchor + s)
    }

    fn push_collision(&mut self, time: f64, a: usize, b: usize) {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        if time > self.t_end {
            return;
        }
        debug_assert!(time >= self.now - 1e-9, "prediction in the past");
        let c = &self.state.collision_counts;
        self.queue.push(Reverse(Event {
            time,
            kind: EventKind::Collision {
                i: i as u32,
                j: j as u32,
                ci: c[i] as u32,
                cj: c[j] as u32,
            },
        }));
    }

    /// All-pairs mode: schedules the earliest contact of `p` with anyone
    /// within the search horizon, or a recheck at the horizon.
    fn predict_particle(&mut self, p: usize) {
        let reach = self.now + self.horizon;
        let mut limit = reach.min(self.t_end);
        let mut best = None;
        for k in 0..self.state.len() {
            if k == p {
                continue;
            }
            if let Some(t) = self.pair_contact(p, k, limit) {
                if best.is_none() || t < limit {
                    best = Some((t, k));
                    limit = t;
                }
            }
        }
        match best {
            Some((t, k)) => {
                self.partner[p] = k as u32;
                self.push_collision(t, p, k);
            }
            None => {
                self.partner[p] = NO_PARTNER;
                if reach < self.t_end {
                    self.queue.push(Reverse(Event {
                        time: reach,
                        kind: EventKind::Recheck {
                            i: p as u32,
                            ci: self.count(p as u32),
                        },
                    }));
                }
            }
        }
    }

    /// Cell-list mode: schedules the pair's next contact, searched until the
    /// separation leaves the box of half-width two cells. Particles in
    /// adjacent cells are always inside that box, so the search covers the
    /// whole time the pair stays adjacent; a later contact needs a new
    /// adjacency, which triggers a new search.
    fn predict_cell_pair(&mut self, a: usize, b: usize) {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        let (anchor, x_rel, v_rel) = self.pair_frame(i, j);
        if v_rel == [0.0; 3] {
            return;
        }
        let reach = 2.0 * self.grid.as_ref().unwrap().width * (1.0 + 1e-9);
        let dt = self.now - anchor;
        let mut exit = f64::INFINITY;
        for k in 0..3 {
            if v_rel[k] != 0.0 {
                let d = x_rel[k] + v_rel[k] * dt;
                let d = d - PERIOD * torus::floor(d * torus::INV_PERIOD + 0.5);
                exit = exit.min((reach * v_rel[k].signum() - d) / v_rel[k]);
            }
        }
        let limit = (self.now + exit.max(0.0)).min(self.t_end);
        if let Some(s) = torus::first_contact(x_rel, v_rel, self.state.eps, dt, limit - anchor) {
            self.push_collision(anchor + s, i, j);
        }
    }

    fn predict_neighbours(&mut self, i: usize, filter: impl Fn(usize) -> bool) {
        let mut others = std::mem::take(&mut self.scratch);
        others.clear();
        let grid = self.grid.as_ref().unwrap();
        grid.for_each_neighbour(self.slots[i].cell, |k| {
            let k = k as usize;
            if k != i && filter(k) {
                others.push(k);
            }
        });
        for &k in &others {
            self.predict_cell_pair(i, k);
        }
        self.scratch = others;
    }

    fn collide(&mut self, time: f64, i: usize, j: usize) -> Result<CollisionEvent> {
        self.now = time;
        let eps = self.state.eps;
        let xi = self.state.particles[i].position_at(time);
        let xj = self.state.particles[j].position_at(time);
        let d = minimal_image(&xi, &xj);
        let dist = vector::norm(d);
        if dist < eps * (1.0 - torus::OVERLAP_TOL) {
            let mut dump_state = self.state.clone();
            dump_state.current_time = time;
            return Err(Error::CorruptedState {
                time,
                i,
                j,
                distance: dist,
                eps,
                dump: dump_state.dump(),
            });
        }
        let omega = vector::scale(d, 1.0 / dist);
        let v_i_pre = self.state.particles[i].velocity;
        let v_j_pre = self.state.particles[j].velocity;
        let (v_i_post, v_j_post) = reflect(v_i_pre, v_j_pre, omega)?;

        for (k, x, v) in [(i, xi, v_i_post), (j, xj, v_j_post)] {
            let p = &mut self.state.particles[k];
            p.position = x;
            p.velocity = v;
            p.last_update = time;
            self.state.collision_counts[k] += 1;
        }
        if self.grid.is_some() {
            self.relocate(i);
            self.relocate(j);
            self.predict_neighbours(i, |_| true);
            self.predict_neighbours(j, |k| k != i);
        } else {
            self.predict_particle(i);
            self.predict_particle(j);
            for p in 0..self.state.len() {
                let q = self.partner[p] as usize;
                if p != i && p != j && (q == i || q == j) {
                    self.predict_particle(p);
                }
            }
        }

        Ok(CollisionEvent {
            time,
            i,
            j,
            omega,
            v_i_pre,
            v_j_pre,
            v_i_post,
            v_j_post,
        })
    }

    fn position_cell(&self, i: usize) -> [usize; 3] {
        let grid = self.grid.as_ref().unwrap();
        let x = self.state.particles[i].position.as_array();
        [
            grid.coord_of(x[0]),
            grid.coord_of(x[1]),
            grid.coord_of(x[2]),
        ]
    }

    fn reset_boundaries(&self, i: usize, slot: &mut CellSlot) {
        let width = self.grid.as_ref().unwrap().width;
        let v = self.state.particles[i].velocity;
        for k in 0..3 {
            slot.boundary[k] = if v[k] > 0.0 {
                (slot.cell[k] + 1) as f64 * width
            } else {
                slot.cell[k] as f64 * width
            };
        }
    }

    /// Re-files particle `i` after its state changed at a collision.
    fn relocate(&mut self, i: usize) {
        let cell = self.position_cell(i);
        let old = self.slots[i].cell;
        if cell != old {
            let grid = self.grid.as_mut().unwrap();
            grid.remove(old, i as u32);
            grid.insert(cell, i as u32);
        }
        let mut slot = self.slots[i];
        slot.cell = cell;
        self.reset_boundaries(i, &mut slot);
        self.slots[i] = slot;
        self.schedule_crossing(i);
    }

    fn schedule_crossing(&mut self, i: usize) {
        let p = &self.state.particles[i];
        let x = p.position.as_array();
        let mut best = (f64::INFINITY, 0usize);
        for k in 0..3 {
            if p.velocity[k] != 0.0 {
                let t = p.last_update + (self.slots[i].boundary[k] - x[k]) / p.velocity[k];
                if t < best.0 {
                    best = (t, k);
                }
            }
        }
        self.slots[i].axis = best.1;
        let t = best.0.max(self.now);
        self.crossings.as_mut().unwrap().set(i, t);
    }

    fn cross(&mut self, i: usize) {
        let axis = self.slots[i].axis;
        let m = self.grid.as_ref().unwrap().per_side;
        let width = self.grid.as_ref().unwrap().width;
        let old = self.slots[i].cell;
        let mut cell = old;
        let forward = self.state.particles[i].velocity[axis] > 0.0;
        if forward {
            cell[axis] = if cell[axis] + 1 == m {
                0
            } else {
                cell[axis] + 1
            };
            self.slots[i].boundary[axis] += width;
        } else {
            cell[axis] = if cell[axis] == 0 {
                m - 1
            } else {
                cell[axis] - 1
            };
            self.slots[i].boundary[axis] -= width;
        }
        let grid = self.grid.as_mut().unwrap();
        grid.remove(old, i as u32);
        grid.insert(cell, i as u32);
        self.slots[i].cell = cell;
        self.schedule_crossing(i);

        let mut others = std::mem::take(&mut self.scratch);
        others.clear();
        self.grid
            .as_ref()
            .unwrap()
            .for_each_new_neighbour(cell, axis, forward, |k| others.push(k as usize));
        for &k in &others {
            self.predict_cell_pair(i, k);
        }
        self.scratch = others;
    }
}
