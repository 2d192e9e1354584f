use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use super::*;
use crate::dynamics::{evolve, SystemState};
use crate::ensemble::{sample_configuration, Maxwellian, SimRng};
use crate::torus::TorusVector;
use crate::vector::{self, Vec3};

fn scripted(n: usize, pairs: &[(f64, usize, usize)], duration: f64) -> CollisionLog {
    let events = pairs
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
        .collect();
    CollisionLog {
        events,
        n_particles: n,
        eps: 0.1,
        start_time: 0.0,
        duration,
    }
}

#[test]
fn backward_chain_with_branching() {
    let log = scripted(5, &[(1.0, 1, 4), (2.0, 2, 3), (3.0, 1, 2)], 5.0);
    let c = backward_cluster(&log, 1, 4.0, 0.0).unwrap();
    assert_eq!(c.members, vec![2, 3, 4]);
    assert_eq!(c.parents, vec![1, 2, 1]);
    assert_eq!(c.creation_times, vec![3.0, 2.0, 1.0]);
    assert_eq!(c.recollisions, 0);
    assert_eq!(c.n(), 3);
}

#[test]
fn backward_counts_recollisions() {
    let log = scripted(5, &[(2.0, 1, 2), (3.0, 1, 2)], 5.0);
    let c = backward_cluster(&log, 1, 4.0, 0.0).unwrap();
    assert_eq!(c.members, vec![2]);
    assert_eq!(c.parents, vec![1]);
    assert_eq!(c.recollisions, 1);
}

#[test]
fn backward_tree_with_two_root_children() {
    let log = scripted(5, &[(1.0, 2, 4), (2.0, 1, 3), (3.0, 1, 2)], 4.0);
    let c = backward_cluster(&log, 1, 4.0, 0.0).unwrap();
    assert_eq!(c.parents, vec![1, 1, 2]);
    assert_eq!(c.members, vec![2, 3, 4]);
}

#[test]
fn empty_log_gives_empty_clusters() {
    let log = scripted(4, &[], 1.0);
    assert_eq!(backward_cluster(&log, 0, 1.0, 0.0).unwrap().n(), 0);
    assert_eq!(forward_cluster(&log, 0, 1.0).unwrap().n(), 0);
}

#[test]
fn forward_chain() {
    let log = scripted(5, &[(1.0, 1, 2), (2.0, 2, 3)], 3.0);
    let c = forward_cluster(&log, 1, 3.0).unwrap();
    assert_eq!(c.members, vec![2, 3]);
    assert_eq!(c.parents, vec![1, 2]);
    assert_eq!(c.creation_times, vec![1.0, 2.0]);
}

#[test]
fn lower_time_and_query_time_bound_the_scan() {
    let log = scripted(5, &[(1.0, 1, 4), (2.0, 2, 3), (3.0, 1, 2)], 5.0);
    assert_eq!(
        backward_cluster(&log, 1, 4.0, 1.5).unwrap().members,
        vec![2, 3]
    );
    assert_eq!(
        backward_cluster(&log, 1, 2.5, 0.0).unwrap().members,
        vec![4]
    );
    // Events exactly at either end are included.
    assert_eq!(
        backward_cluster(&log, 1, 3.0, 1.0).unwrap().members,
        vec![2, 3, 4]
    );
}

#[test]
fn capped_scan_gives_up() {
    let log = scripted(5, &[(1.0, 1, 4), (2.0, 2, 3), (3.0, 1, 2)], 5.0);
    assert!(backward_cluster_capped(&log, 1, 4.0, 0.0, 2)
        .unwrap()
        .is_none());
    assert_eq!(
        backward_cluster_capped(&log, 1, 4.0, 0.0, 3)
            .unwrap()
            .unwrap()
            .n(),
        3
    );
}

#[test]
fn invalid_queries_are_rejected() {
    let log = scripted(3, &[(1.0, 0, 1)], 2.0);
    assert!(backward_cluster(&log, 3, 1.0, 0.0).is_err());
    assert!(backward_cluster(&log, 0, 2.5, 0.0).is_err());
    assert!(backward_cluster(&log, 0, 1.0, 1.5).is_err());
    assert!(forward_cluster(&log, 0, -0.1).is_err());
    assert!(dynamical_clusters(&log, 3.0).is_err());
    assert!(backward_cluster_sizes(&log, 0.0, &[1.0, 0.5]).is_err());
}

#[test]
fn dynamical_blocks() {
    let log = scripted(6, &[(1.0, 1, 2), (2.0, 3, 4)], 3.0);
    let p = dynamical_clusters(&log, 3.0).unwrap();
    assert_eq!(p.blocks, vec![vec![0], vec![1, 2], vec![3, 4], vec![5]]);
    assert_eq!(p.largest_size, 2);
    assert_eq!(p.block_containing(4), &[3, 4]);

    let chain = scripted(6, &[(1.0, 1, 2), (2.0, 2, 3), (2.5, 3, 4)], 3.0);
    let p = dynamical_clusters(&chain, 3.0).unwrap();
    assert_eq!(p.block_containing(1), &[1, 2, 3, 4]);
    assert_eq!(dynamical_clusters(&chain, 2.0).unwrap().largest_size, 3);
}

/// Naive backward cluster: join times are relaxed over the whole window
/// until nothing changes.
fn rescan_oracle(log: &CollisionLog, root: usize, t: f64, t_star: f64) -> ClusterTree {
    let events: Vec<&CollisionEvent> = log
        .events
        .iter()
        .filter(|e| e.time >= t_star && e.time <= t)
        .collect();
    let mut tau = vec![f64::NEG_INFINITY; log.n_particles];
    tau[root] = f64::INFINITY;
    loop {
        let mut changed = false;
        for e in &events {
            for (a, b) in [(e.i, e.j), (e.j, e.i)] {
                if tau[a] > e.time && tau[b] < e.time {
                    tau[b] = e.time;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut members: Vec<usize> = (0..log.n_particles)
        .filter(|&p| p != root && tau[p] > f64::NEG_INFINITY)
        .collect();
    members.sort_by(|&a, &b| tau[b].total_cmp(&tau[a]));
    let index_of = |p: usize| -> usize {
        if p == root {
            1
        } else {
            2 + members.iter().position(|&m| m == p).unwrap()
        }
    };
    let parents = members
        .iter()
        .map(|&p| {
            let e = events
                .iter()
                .find(|e| e.time == tau[p] && e.involves(p))
                .unwrap();
            index_of(if e.i == p { e.j } else { e.i })
        })
        .collect();
    let recollisions = events
        .iter()
        .filter(|e| e.time < tau[e.i].min(tau[e.j]))
        .count();
    ClusterTree {
        root,
        creation_times: members.iter().map(|&p| tau[p]).collect(),
        parents,
        members,
        recollisions,
    }
}

fn random_log(rng: &mut SimRng, n: usize, n_events: usize, duration: f64) -> CollisionLog {
    let mut times: Vec<f64> = (0..n_events)
        .map(|_| rng.random_range(0.0..duration))
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let pairs: Vec<(f64, usize, usize)> = times
        .into_iter()
        .map(|t| {
            let a = rng.random_range(0..n);
            let mut b = rng.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            (t, a, b)
        })
        .collect();
    scripted(n, &pairs, duration)
}

fn check_tree(c: &ClusterTree, n_particles: usize) {
    for (r, &k) in c.parents.iter().enumerate() {
        assert!(k >= 1 && k <= r + 1, "parent {k} at position {}", r + 1);
    }
    let mut seen = vec![false; n_particles];
    for p in c.particles() {
        assert!(!seen[p], "particle {p} listed twice");
        seen[p] = true;
    }
    assert!(c.n() < n_particles);
}

#[test]
fn single_pass_matches_rescan_oracle() {
    let mut rng = SimRng::seed_from_u64(7);
    for _ in 0..1000 {
        let n = rng.random_range(2..=50);
        let n_events = rng.random_range(0..=200);
        let log = random_log(&mut rng, n, n_events, 10.0);
        let root = rng.random_range(0..n);
        let t = rng.random_range(0.0..=10.0);
        let t_star = rng.random_range(0.0..=t);
        let fast = backward_cluster(&log, root, t, t_star).unwrap();
        check_tree(&fast, n);
        assert_eq!(fast, rescan_oracle(&log, root, t, t_star));
        let indexed = EventIndex::new(&log);
        assert_eq!(
            indexed
                .backward_cluster_capped(root, t, t_star, usize::MAX)
                .unwrap()
                .as_ref(),
            Some(&fast)
        );
        for cap in 0..4 {
            let capped = indexed
                .backward_cluster_capped(root, t, t_star, cap)
                .unwrap();
            assert_eq!(capped.is_some(), fast.n() <= cap);
            if let Some(c) = capped {
                assert_eq!(c, fast);
            }
        }
    }
}

proptest! {
    #[test]
    fn cluster_size_grows_with_query_time(seed in any::<u64>(), n in 2usize..40) {
        let mut rng = SimRng::seed_from_u64(seed);
        let log = random_log(&mut rng, n, 120, 10.0);
        let times: Vec<f64> = (0..=20).map(|k| 0.5 * k as f64).collect();
        let sizes = backward_cluster_sizes(&log, 0.0, &times).unwrap();
        for root in 0..n {
            let mut previous = 0;
            for (k, &t) in times.iter().enumerate() {
                let c = backward_cluster(&log, root, t, 0.0).unwrap();
                prop_assert!(c.n() >= previous);
                prop_assert_eq!(sizes[k][root] as usize, c.n());
                previous = c.n();
            }
        }
    }

    #[test]
    fn clusters_lie_in_their_dynamical_block(seed in any::<u64>(), n in 2usize..40) {
        let mut rng = SimRng::seed_from_u64(seed);
        let log = random_log(&mut rng, n, 60, 10.0);
        let t = rng.random_range(0.0..=10.0);
        let partition = dynamical_clusters(&log, t).unwrap();
        let series = largest_cluster_series(&log, &[t]).unwrap();
        prop_assert_eq!(series[0], partition.largest_size);
        let covered: usize = partition.blocks.iter().map(Vec::len).sum();
        prop_assert_eq!(covered, n);
        for root in 0..n {
            let block = partition.block_containing(root);
            for c in [backward_cluster(&log, root, t, 0.0).unwrap(), forward_cluster(&log, root, t).unwrap()] {
                for p in c.particles() {
                    prop_assert!(block.contains(&p));
                }
            }
        }
    }

    #[test]
    fn forward_is_backward_of_reversed_log(seed in any::<u64>(), n in 2usize..30) {
        let mut rng = SimRng::seed_from_u64(seed);
        let log = random_log(&mut rng, n, 80, 10.0);
        let reversed = log.time_reversed();
        let t = rng.random_range(0.0..=10.0);
        let root = rng.random_range(0..n);
        let forward = forward_cluster(&log, root, t).unwrap();
        let backward = backward_cluster(&reversed, root, 10.0, 10.0 - t).unwrap();
        prop_assert_eq!(&forward.members, &backward.members);
        prop_assert_eq!(&forward.parents, &backward.parents);
        prop_assert_eq!(forward.recollisions, backward.recollisions);
        for (a, b) in forward.creation_times.iter().zip(&backward.creation_times) {
            prop_assert!((a - (10.0 - b)).abs() < 1e-12);
        }
    }
}

#[test]
fn clusters_of_a_simulated_gas() {
    let mut rng = SimRng::seed_from_u64(11);
    let state =
        sample_configuration(200, 200f64.powf(-0.5), &Maxwellian { beta: 1.0 }, &mut rng).unwrap();
    let (_, log) = evolve(state, 40.0).unwrap();
    assert!(log.events.len() > 100);
    let times = [10.0, 20.0, 40.0];
    let sizes = backward_cluster_sizes(&log, 0.0, &times).unwrap();
    let partition = dynamical_clusters(&log, 40.0).unwrap();
    for root in 0..200 {
        let c = backward_cluster(&log, root, 40.0, 0.0).unwrap();
        check_tree(&c, 200);
        assert_eq!(c, rescan_oracle(&log, root, 40.0, 0.0));
        assert_eq!(sizes[2][root] as usize, c.n());
        assert!(c.creation_times.windows(2).all(|w| w[0] > w[1]));
        let block = partition.block_containing(root);
        assert!(c.particles().all(|p| block.contains(&p)));
    }
}

fn unit(v: Vec3) -> Vec3 {
    vector::scale(v, 1.0 / vector::norm(v))
}

fn head_on_vars(v2: Vec3) -> IbfVariables {
    IbfVariables {
        gamma: vec![1],
        root_position: TorusVector::wrap([1.0, 2.0, 3.0]).unwrap(),
        root_velocity: [1.0, 0.0, 0.0],
        t: 1.0,
        t_star: 0.0,
        times: vec![0.5],
        omegas: vec![[-1.0, 0.0, 0.0]],
        velocities: vec![v2],
    }
}

fn replay_root(traj: &IbfTrajectory, t: f64) -> (SystemState, crate::dynamics::CollisionLog) {
    evolve(traj.initial_state.clone(), t).unwrap()
}

#[test]
fn ibf_without_creations_is_free_flight() {
    let vars = IbfVariables {
        gamma: vec![],
        root_position: TorusVector::wrap([1.0, 1.0, 1.0]).unwrap(),
        root_velocity: [0.5, -1.0, 2.0],
        t: 2.0,
        t_star: 0.0,
        times: vec![],
        omegas: vec![],
        velocities: vec![],
    };
    let traj = construct_ibf(&vars, 0.1).unwrap();
    let root = &traj.initial_state.particles[0];
    let expected = TorusVector::wrap([0.0, 3.0, -3.0]).unwrap();
    assert!(root.position.distance(&expected) < 1e-12);
    assert_eq!(root.velocity, vars.root_velocity);
    assert_eq!(traj.segments.len(), 1);
}

#[test]
fn ibf_head_on_creation_replays_to_the_root_state() {
    for v2 in [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.3, 0.8, -0.2]] {
        let vars = head_on_vars(v2);
        let traj = construct_ibf(&vars, 0.1).unwrap();
        assert_eq!(traj.initial_state.len(), 2);
        let (end, _) = replay_root(&traj, 1.0);
        let root = &end.particles[0];
        assert!(root.position_at(1.0).distance(&vars.root_position) < 1e-8);
        for k in 0..3 {
            assert_relative_eq!(root.velocity[k], vars.root_velocity[k], epsilon = 1e-8);
        }
    }
    // A genuinely head-on creation is seen as the root's only collision.
    let traj = construct_ibf(&head_on_vars([-1.0, 0.0, 0.0]), 0.1).unwrap();
    let (_, log) = replay_root(&traj, 1.0);
    assert_eq!(log.events.len(), 1);
    assert_relative_eq!(log.events[0].time, 0.5, epsilon = 1e-12);
    assert_eq!(traj.initial_state.particles[0].velocity, [-1.0, 0.0, 0.0]);
    assert_eq!(traj.initial_state.particles[1].velocity, [1.0, 0.0, 0.0]);
}

#[test]
fn ibf_energy_jumps_by_the_created_energy() {
    let mut rng = SimRng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.random_range(0..=6);
        let vars = random_ibf_variables(&mut rng, n, 1.0, 0.0, 0.3).unwrap();
        let traj = construct_ibf(&vars, 0.3).unwrap();
        assert_eq!(traj.segments.len(), n + 1);
        assert_relative_eq!(
            traj.segments[0].energy,
            vector::norm2(vars.root_velocity),
            max_relative = 1e-12
        );
        for r in 1..=n {
            let jump = traj.segments[r].energy - traj.segments[r - 1].energy;
            assert_relative_eq!(jump, vector::norm2(vars.velocities[r - 1]), epsilon = 1e-10);
            assert_eq!(traj.segments[r].alive, r + 1);
        }
        let total: f64 = std::iter::once(vars.root_velocity)
            .chain(vars.velocities.iter().copied())
            .map(vector::norm2)
            .sum();
        assert_relative_eq!(
            2.0 * traj.initial_state.kinetic_energy(),
            total,
            max_relative = 1e-12
        );
        for segment in &traj.segments {
            for e in &segment.collisions {
                let before = vector::norm2(e.v_i_pre) + vector::norm2(e.v_j_pre);
                let after = vector::norm2(e.v_i_post) + vector::norm2(e.v_j_post);
                assert_relative_eq!(before, after, max_relative = 1e-12);
            }
        }
    }
}

#[test]
fn ibf_rejects_overlapping_creation() {
    let eta = [0.2, -0.1, 0.4];
    let omega = unit([1.0, 2.0, -0.5]);
    let mut builder = IbfBuilder::new(TorusVector::wrap([3.0; 3]).unwrap(), eta, 1.0, 0.1).unwrap();
    builder.advance_to(0.6).unwrap();
    builder.create(1, omega, vector::add(eta, omega)).unwrap();
    builder.advance_to(0.599).unwrap();
    let parent = builder.velocity(1).unwrap();
    let err = builder
        .create(1, omega, vector::add(parent, omega))
        .unwrap_err();
    assert!(
        matches!(err, Error::CreationOverlap { r: 2, other: 2 }),
        "{err}"
    );
    // The builder is left untouched and accepts a clear creation.
    assert_eq!(builder.alive(), 2);
    builder
        .create(1, vector::neg(omega), vector::sub(parent, omega))
        .unwrap();
    assert_eq!(builder.alive(), 3);
}

#[test]
fn ibf_rejects_precollisional_creation() {
    let mut vars = head_on_vars([2.0, 0.0, 0.0]);
    let err = construct_ibf(&vars, 0.1).unwrap_err();
    assert!(
        matches!(err, Error::PreCollisionalCreation { r: 1, .. }),
        "{err}"
    );
    vars.times = vec![1.5];
    assert!(construct_ibf(&vars, 0.1).is_err());
}

#[test]
fn ibf_round_trip_recovers_the_tree() {
    let mut rng = SimRng::seed_from_u64(2024);
    let mut checked = 0;
    let mut ambiguous = 0;
    while checked < 40 {
        let n = rng.random_range(1..=4);
        let vars = random_ibf_variables(&mut rng, n, 1.0, 0.0, 0.1).unwrap();
        match ibf_round_trip(&vars, 0.1).unwrap() {
            RoundTrip::Recovered { max_time_error } => assert!(max_time_error < 1e-8),
            RoundTrip::Ambiguous => {
                ambiguous += 1;
                continue;
            }
            RoundTrip::Mismatch { cluster } => panic!("{vars:?} gave {cluster:?}"),
        }
        checked += 1;
    }
    assert!(ambiguous < 20, "{ambiguous} ambiguous draws");
}
