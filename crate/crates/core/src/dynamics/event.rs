use std::cmp::Ordering;

/// Scheduled engine event. Ordering is by time, then kind, then particle
/// indices, so simultaneous collisions resolve lexicographically in `(i, j)`.
///
/// Counters hold the low 32 bits of the particles' collision counts when the
/// event was scheduled.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Event {
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum EventKind {
    /// Predicted contact of `i < j`, valid while both counters are unchanged.
    Collision { i: u32, j: u32, ci: u32, cj: u32 },
    /// All-pairs mode: particle `i` had no contact within its search horizon;
    /// search again from here.
    Recheck { i: u32, ci: u32 },
}

impl EventKind {
    fn key(&self) -> (u8, u32, u32, u32, u32) {
        match *self {
            EventKind::Collision { i, j, ci, cj } => (0, i, j, ci, cj),
            EventKind::Recheck { i, ci } => (1, i, 0, ci, 0),
        }
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then_with(|| self.kind.key().cmp(&other.kind.key()))
    }
}

/// One pending time per slot with `O(log n)` in-place updates and an
/// `O(1)` minimum. Ties go to the lower slot index.
#[derive(Debug, Clone)]
pub(crate) struct MinTree {
    leaves: usize,
    times: Vec<f64>,
    /// `winner[k]` is the slot holding the minimum below node `k`; leaves
    /// occupy nodes `leaves..2 * leaves`.
    winner: Vec<u32>,
}

impl MinTree {
    pub fn new(n: usize) -> Self {
        let leaves = n.next_power_of_two().max(1);
        let mut winner = vec![0u32; 2 * leaves];
        for k in 0..leaves {
            winner[leaves + k] = k as u32;
        }
        for k in (1..leaves).rev() {
            winner[k] = winner[2 * k];
        }
        MinTree {
            leaves,
            times: vec![f64::INFINITY; leaves],
            winner,
        }
    }

    #[inline]
    pub fn min(&self) -> (f64, usize) {
        let w = self.winner[1] as usize;
        (self.times[w], w)
    }

    pub fn set(&mut self, slot: usize, time: f64) {
        self.times[slot] = time;
        let mut k = (self.leaves + slot) / 2;
        while k >= 1 {
            let (a, b) = (self.winner[2 * k], self.winner[2 * k + 1]);
            let (ta, tb) = (self.times[a as usize], self.times[b as usize]);
            self.winner[k] = if tb < ta || (tb == ta && b < a) { b } else { a };
            k /= 2;
        }
    }
}
