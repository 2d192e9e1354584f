//! Uniform cell grid over the torus for neighbour search.

use crate::torus::PERIOD;

/// Cubic cell grid, at least 4 cells per side so that cells one step apart
/// are never also two steps apart.
#[derive(Debug, Clone)]
pub(crate) struct CellGrid {
    pub per_side: usize,
    pub width: f64,
    cells: Vec<Vec<u32>>,
}

impl CellGrid {
    /// Picks a grid for `n` spheres of diameter `eps`, or `None` when the box
    /// cannot hold four cells wider than `eps`.
    pub fn for_system(n: usize, eps: f64) -> Option<Self> {
        let max_side = (PERIOD / (eps * 1.001)).floor() as usize;
        // About one particle per ten cells: crossings are cheap, so small
        // cells that keep neighbour searches short pay off.
        let target = ((n as f64) / 0.1).cbrt().round() as usize;
        let per_side = target.min(max_side).min(256);
        if per_side < 4 {
            return None;
        }
        Some(CellGrid {
            per_side,
            width: PERIOD / per_side as f64,
            cells: vec![Vec::new(); per_side * per_side * per_side],
        })
    }

    #[inline]
    pub fn coord_of(&self, x: f64) -> usize {
        ((x / self.width) as usize).min(self.per_side - 1)
    }

    #[inline]
    fn flat(&self, c: [usize; 3]) -> usize {
        (c[0] * self.per_side + c[1]) * self.per_side + c[2]
    }

    pub fn insert(&mut self, c: [usize; 3], id: u32) {
        let f = self.flat(c);
        self.cells[f].push(id);
    }

    pub fn remove(&mut self, c: [usize; 3], id: u32) {
        let f = self.flat(c);
        let cell = &mut self.cells[f];
        if let Some(pos) = cell.iter().position(|&p| p == id) {
            cell.swap_remove(pos);
        }
    }

    /// The three cell coordinates `c - 1, c, c + 1` along one axis.
    #[inline]
    fn around(&self, c: usize) -> [usize; 3] {
        let m = self.per_side;
        [
            if c == 0 { m - 1 } else { c - 1 },
            c,
            if c + 1 == m { 0 } else { c + 1 },
        ]
    }

    /// Calls `f` on every particle in the 27 cells around `c` (including `c`).
    pub fn for_each_neighbour(&self, c: [usize; 3], mut f: impl FnMut(u32)) {
        for x in self.around(c[0]) {
            for y in self.around(c[1]) {
                for z in self.around(c[2]) {
                    for &id in &self.cells[self.flat([x, y, z])] {
                        f(id);
                    }
                }
            }
        }
    }

    /// Calls `f` on every particle in the nine cells that became adjacent
    /// when a particle moved into `c` by one step along `axis` in direction
    /// `forward`.
    pub fn for_each_new_neighbour(
        &self,
        c: [usize; 3],
        axis: usize,
        forward: bool,
        mut f: impl FnMut(u32),
    ) {
        let mut cell = c;
        cell[axis] = self.around(c[axis])[if forward { 2 } else { 0 }];
        let (u, w) = ((axis + 1) % 3, (axis + 2) % 3);
        for cu in self.around(c[u]) {
            cell[u] = cu;
            for cw in self.around(c[w]) {
                cell[w] = cw;
                for &id in &self.cells[self.flat(cell)] {
                    f(id);
                }
            }
        }
    }
}
