//! Collision clusters read off a [`CollisionLog`].
//!
//! The backward cluster of a root particle at time `t` collects, scanning the
//! log backward from `t`, every particle that collides with a particle
//! already in the cluster; the order of discovery and the member each new
//! particle collided with form the cluster's tree. Forward clusters run the
//! same procedure forward in time. Dynamical (Bogolyubov) clusters are the
//! connected components of the collision graph.

mod ibf;
mod union_find;

pub use ibf::{
    construct_ibf, ibf_round_trip, random_ibf_variables, IbfBuilder, IbfCreation, IbfSegment,
    IbfTrajectory, IbfVariables, RoundTrip, ROUND_TRIP_TOL,
};
pub use union_find::UnionFind;

use crate::dynamics::{CollisionEvent, CollisionLog};
use crate::error::{Error, Result};

/// A backward or forward cluster with its tree structure.
///
/// `parents[r - 1]` is the discovery index of the member that the `r`-th new
/// particle collided with, where the root has index 1 and `members[s - 1]`
/// has index `s + 1`; hence `1 <= parents[r - 1] <= r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTree {
    pub root: usize,
    pub parents: Vec<usize>,
    pub members: Vec<usize>,
    /// Absolute time at which each member joined, in scan order.
    pub creation_times: Vec<f64>,
    /// Logged collisions between two particles already in the cluster.
    pub recollisions: usize,
}

impl ClusterTree {
    fn empty(root: usize) -> Self {
        ClusterTree {
            root,
            parents: Vec::new(),
            members: Vec::new(),
            creation_times: Vec::new(),
            recollisions: 0,
        }
    }

    /// Number of members, the root excluded.
    pub fn n(&self) -> usize {
        self.members.len()
    }

    /// Particle carrying discovery index `k` (1 for the root).
    pub fn particle(&self, k: usize) -> usize {
        if k == 1 {
            self.root
        } else {
            self.members[k - 2]
        }
    }

    /// Root followed by the members, in discovery order.
    pub fn particles(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.root).chain(self.members.iter().copied())
    }
}

fn check_root(log: &CollisionLog, root: usize) -> Result<()> {
    if root >= log.n_particles {
        return Err(Error::invalid(format!(
            "root {root} out of range for {} particles",
            log.n_particles
        )));
    }
    Ok(())
}

fn check_time(log: &CollisionLog, t: f64, what: &str) -> Result<()> {
    if !(t >= log.start_time && t <= log.end_time()) {
        return Err(Error::invalid(format!(
            "{what} {t} outside the logged interval [{}, {}]",
            log.start_time,
            log.end_time()
        )));
    }
    Ok(())
}

/// Events with `lo <= time <= hi`.
fn window(log: &CollisionLog, lo: f64, hi: f64) -> &[CollisionEvent] {
    let a = log.events.partition_point(|e| e.time < lo);
    let b = log.events.partition_point(|e| e.time <= hi);
    &log.events[a..b.max(a)]
}

/// Grows a cluster from `root` over `events` in the given order. Returns
/// `None` as soon as the cluster would exceed `cap` members.
fn grow<'a>(
    n_particles: usize,
    root: usize,
    events: impl Iterator<Item = &'a CollisionEvent>,
    cap: usize,
) -> Option<ClusterTree> {
    // Discovery index of each particle, 0 while outside the cluster.
    let mut index = vec![0u32; n_particles];
    index[root] = 1;
    let mut tree = ClusterTree::empty(root);
    for e in events {
        let (a, b) = (index[e.i], index[e.j]);
        let (inside, fresh) = match (a, b) {
            (0, 0) => continue,
            (0, _) => (b, e.i),
            (_, 0) => (a, e.j),
            _ => {
                tree.recollisions += 1;
                continue;
            }
        };
        if tree.members.len() == cap {
            return None;
        }
        tree.members.push(fresh);
        tree.parents.push(inside as usize);
        tree.creation_times.push(e.time);
        index[fresh] = tree.members.len() as u32 + 1;
    }
    Some(tree)
}

/// Backward cluster of `root` at time `t`, using the collisions in
/// `[t_star, t]` scanned from `t` downward.
pub fn backward_cluster(
    log: &CollisionLog,
    root: usize,
    t: f64,
    t_star: f64,
) -> Result<ClusterTree> {
    Ok(backward_cluster_capped(log, root, t, t_star, usize::MAX)?.expect("uncapped"))
}

/// As [`backward_cluster`], but gives up with `Ok(None)` once the cluster has
/// more than `cap` members.
pub fn backward_cluster_capped(
    log: &CollisionLog,
    root: usize,
    t: f64,
    t_star: f64,
    cap: usize,
) -> Result<Option<ClusterTree>> {
    check_root(log, root)?;
    check_time(log, t, "query time")?;
    check_time(log, t_star, "lower time")?;
    if t_star > t {
        return Err(Error::invalid(format!(
            "lower time {t_star} exceeds query time {t}"
        )));
    }
    let events = window(log, t_star, t);
    Ok(grow(log.n_particles, root, events.iter().rev(), cap))
}

/// Forward cluster of `root` at time `t`: the same procedure run forward over
/// the collisions from the start of the log up to `t`.
pub fn forward_cluster(log: &CollisionLog, root: usize, t: f64) -> Result<ClusterTree> {
    check_root(log, root)?;
    check_time(log, t, "query time")?;
    let events = window(log, log.start_time, t);
    Ok(grow(log.n_particles, root, events.iter(), usize::MAX).expect("uncapped"))
}

/// Per-particle lists of log positions, for extracting many small
/// backward clusters from one log.
///
/// A scan only visits the collisions of particles already in the cluster,
/// so a cluster of `n` members costs `O(n · (n + d))` where `d` is the number
/// of collisions of its members, independent of the length of the log.
#[derive(Debug, Clone)]
pub struct EventIndex<'a> {
    log: &'a CollisionLog,
    /// Positions in `log.events` of the collisions of each particle,
    /// increasing.
    by_particle: Vec<Vec<u32>>,
}

impl<'a> EventIndex<'a> {
    pub fn new(log: &'a CollisionLog) -> Self {
        let mut by_particle = vec![Vec::new(); log.n_particles];
        for (k, e) in log.events.iter().enumerate() {
            by_particle[e.i].push(k as u32);
            by_particle[e.j].push(k as u32);
        }
        EventIndex { log, by_particle }
    }

    /// Same result as [`backward_cluster_capped`].
    pub fn backward_cluster_capped(
        &self,
        root: usize,
        t: f64,
        t_star: f64,
        cap: usize,
    ) -> Result<Option<ClusterTree>> {
        let log = self.log;
        check_root(log, root)?;
        check_time(log, t, "query time")?;
        check_time(log, t_star, "lower time")?;
        if t_star > t {
            return Err(Error::invalid(format!(
                "lower time {t_star} exceeds query time {t}"
            )));
        }
        let lo = log.events.partition_point(|e| e.time < t_star) as u32;
        let hi = log.events.partition_point(|e| e.time <= t) as u32;
        // For each member, how many of its collisions are still unscanned:
        // those at list positions below the cursor.
        let cursor_below =
            |p: usize, limit: u32| self.by_particle[p].partition_point(|&k| k < limit);
        let mut tree = ClusterTree::empty(root);
        let mut cursors = vec![(root, cursor_below(root, hi))];
        loop {
            let mut best: Option<(u32, usize)> = None;
            for (slot, &(p, c)) in cursors.iter().enumerate() {
                if c > 0 {
                    let k = self.by_particle[p][c - 1];
                    if k >= lo && best.is_none_or(|(b, _)| k > b) {
                        best = Some((k, slot));
                    }
                }
            }
            let Some((k, slot)) = best else {
                break;
            };
            let e = &log.events[k as usize];
            let inside = cursors[slot].0;
            let other = if e.i == inside { e.j } else { e.i };
            cursors[slot].1 -= 1;
            if let Some(o) = cursors.iter().position(|&(p, _)| p == other) {
                cursors[o].1 -= 1;
                tree.recollisions += 1;
                continue;
            }
            if tree.members.len() == cap {
                return Ok(None);
            }
            tree.members.push(other);
            tree.parents.push(slot + 1);
            tree.creation_times.push(e.time);
            cursors.push((other, cursor_below(other, k)));
        }
        Ok(Some(tree))
    }
}

/// Cluster sizes `|BC(r)|` of every root `r` at each query time, using the
/// collisions in `[t_star, t]`.
///
/// Works forward in time: each particle carries the set of particles that
/// reach it through a time-ordered chain of collisions, and a collision
/// merges the two sets. At time `t` the set of `r` is its backward cluster
/// plus `r` itself. Costs `O(E·N/64)` for all roots at once instead of
/// `O(N·E)` for separate scans. `times` must be non-decreasing.
pub fn backward_cluster_sizes(
    log: &CollisionLog,
    t_star: f64,
    times: &[f64],
) -> Result<Vec<Vec<u32>>> {
    check_time(log, t_star, "lower time")?;
    for w in times.windows(2) {
        if !(w[0] <= w[1]) {
            return Err(Error::invalid("query times must be non-decreasing"));
        }
    }
    if let Some(&t) = times.first() {
        if t < t_star {
            return Err(Error::invalid(format!(
                "query time {t} precedes lower time {t_star}"
            )));
        }
    }
    for &t in times.iter().rev().take(1) {
        check_time(log, t, "query time")?;
    }
    let n = log.n_particles;
    let words = n.div_ceil(64);
    let mut sets = vec![0u64; n * words];
    for p in 0..n {
        sets[p * words + p / 64] |= 1 << (p % 64);
    }
    let mut out = Vec::with_capacity(times.len());
    let events = window(log, t_star, log.end_time());
    let mut next = 0;
    for &t in times {
        while next < events.len() && events[next].time <= t {
            let e = &events[next];
            let (lo, hi) = (e.i.min(e.j), e.i.max(e.j));
            let (head, tail) = sets.split_at_mut(hi * words);
            let a = &mut head[lo * words..(lo + 1) * words];
            let b = &mut tail[..words];
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                let u = *x | *y;
                *x = u;
                *y = u;
            }
            next += 1;
        }
        out.push(
            (0..n)
                .map(|p| {
                    sets[p * words..(p + 1) * words]
                        .iter()
                        .map(|w| w.count_ones())
                        .sum::<u32>()
                        - 1
                })
                .collect(),
        );
    }
    Ok(out)
}

/// Partition of the particles into dynamical clusters: two particles share a
/// block when a chain of logged collisions up to the query time joins them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynamicalPartition {
    /// Blocks with sorted members, ordered by their smallest member.
    pub blocks: Vec<Vec<usize>>,
    /// Index into `blocks` for every particle.
    pub block_of: Vec<usize>,
    pub largest_size: usize,
}

impl DynamicalPartition {
    pub fn block_containing(&self, particle: usize) -> &[usize] {
        &self.blocks[self.block_of[particle]]
    }
}

/// Dynamical clusters formed by the collisions from the start of the log up
/// to time `t`.
pub fn dynamical_clusters(log: &CollisionLog, t: f64) -> Result<DynamicalPartition> {
    check_time(log, t, "query time")?;
    let n = log.n_particles;
    let mut uf = UnionFind::new(n);
    for e in window(log, log.start_time, t) {
        uf.union(e.i, e.j);
    }
    let mut label = vec![usize::MAX; n];
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut block_of = vec![0; n];
    for p in 0..n {
        let r = uf.find(p);
        if label[r] == usize::MAX {
            label[r] = blocks.len();
            blocks.push(Vec::new());
        }
        block_of[p] = label[r];
        blocks[label[r]].push(p);
    }
    let largest_size = blocks.iter().map(Vec::len).max().unwrap_or(0);
    Ok(DynamicalPartition {
        blocks,
        block_of,
        largest_size,
    })
}

/// Size of the largest dynamical cluster at each query time; `times` must
/// be non-decreasing.
pub fn largest_cluster_series(log: &CollisionLog, times: &[f64]) -> Result<Vec<usize>> {
    for w in times.windows(2) {
        if !(w[0] <= w[1]) {
            return Err(Error::invalid("query times must be non-decreasing"));
        }
    }
    for &t in times.iter().rev().take(1) {
        check_time(log, t, "query time")?;
    }
    let mut uf = UnionFind::new(log.n_particles);
    let mut next = 0;
    let events = &log.events;
    Ok(times
        .iter()
        .map(|&t| {
            while next < events.len() && events[next].time <= t {
                uf.union(events[next].i, events[next].j);
                next += 1;
            }
            uf.largest()
        })
        .collect())
}

#[cfg(test)]
mod tests;
