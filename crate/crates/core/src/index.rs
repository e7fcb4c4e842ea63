//! Orbit tables and a bucket index for Bowen-ball queries over a finite
//! candidate set.
//!
//! Two points within `r` of each other in `d_{w,n}` are within `r` at every
//! step, so bucketing by their cells (width at least `r`) at a few fixed
//! steps means a query only inspects the neighbouring buckets: steps 0 and
//! `n`, plus `n/2` in dimension one.

use std::collections::HashMap;

use smallvec::SmallVec;

use crate::spaces::{Grid, Space};
use crate::system::{NaifsSchedule, Word};

/// Orbits of a candidate set along one word.
pub struct OrbitTable {
    space: Space,
    dim: usize,
    steps: usize,
    /// Grid index of each candidate.
    pub(crate) members: Vec<usize>,
    data: Vec<f64>,
}

impl OrbitTable {
    pub fn build(s: &NaifsSchedule, g: &Grid, members: &[usize], w: &Word, n: usize) -> Self {
        let dim = g.space().dim();
        let steps = n + 1;
        let stride = steps * dim;
        let mut data = vec![0.0; members.len() * stride];
        for (slot, &gi) in data.chunks_exact_mut(stride).zip(members) {
            s.orbit_into(w, n, g.coords(gi), slot);
        }
        OrbitTable {
            space: g.space(),
            dim,
            steps,
            members: members.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn space(&self) -> Space {
        self.space
    }

    /// Number of recorded steps (`n + 1`).
    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn at(&self, i: usize, step: usize) -> &[f64] {
        let base = (i * self.steps + step) * self.dim;
        &self.data[base..base + self.dim]
    }

    /// `d_{w,n}` between candidates `i` and `j`.
    #[inline]
    pub fn bowen(&self, i: usize, j: usize) -> f64 {
        let stride = self.steps * self.dim;
        let a = &self.data[i * stride..(i + 1) * stride];
        let b = &self.data[j * stride..(j + 1) * stride];
        let mut m = 0.0f64;
        for (x, y) in a.iter().zip(b) {
            m = m.max(self.space.coord_dist(*x, *y));
        }
        m
    }

    /// Whether `d_{w,n}(i, j) <= r`, with early exit.
    #[inline]
    pub fn within(&self, i: usize, j: usize, r: f64) -> bool {
        let stride = self.steps * self.dim;
        let a = &self.data[i * stride..(i + 1) * stride];
        let b = &self.data[j * stride..(j + 1) * stride];
        a.iter()
            .zip(b)
            .all(|(x, y)| self.space.coord_dist(*x, *y) <= r)
    }

    /// Whether `d_{w,n}(i, j) < r`, with early exit.
    #[inline]
    pub fn strictly_within(&self, i: usize, j: usize, r: f64) -> bool {
        let stride = self.steps * self.dim;
        let a = &self.data[i * stride..(i + 1) * stride];
        let b = &self.data[j * stride..(j + 1) * stride];
        a.iter().zip(b).all(|(x, y)| self.space.coord_dist(*x, *y) < r)
    }
}

type Key = u128;

/// Cell keys for candidates, for queries of radius at most `radius`.
pub struct CellKeys {
    cells: usize,
    periodic: bool,
    dim: usize,
    /// Orbit steps whose cells form the key.
    steps: SmallVec<[usize; 3]>,
}

impl CellKeys {
    pub fn new(table: &OrbitTable, radius: f64) -> Self {
        let cells = if radius > 0.0 && radius < 1.0 {
            ((1.0 / radius).floor() as usize).clamp(1, 1 << 20)
        } else {
            1
        };
        let last = table.steps - 1;
        let mut steps: SmallVec<[usize; 3]> = SmallVec::new();
        steps.push(0);
        if table.dim == 1 && last >= 2 {
            steps.push(last / 2);
        }
        if last > 0 {
            steps.push(last);
        }
        CellKeys {
            cells,
            periodic: table.space.is_periodic(),
            dim: table.dim,
            steps,
        }
    }

    #[inline]
    fn cell(&self, c: f64) -> usize {
        ((c * self.cells as f64) as usize).min(self.cells - 1)
    }

    fn pack(&self, idx: &[usize]) -> Key {
        idx.iter()
            .fold(0u128, |k, &i| k * self.cells as u128 + i as u128)
    }

    pub fn key(&self, table: &OrbitTable, i: usize) -> Key {
        let mut idx: SmallVec<[usize; 4]> = SmallVec::new();
        for &step in &self.steps {
            for &c in table.at(i, step) {
                idx.push(self.cell(c));
            }
        }
        self.pack(&idx)
    }

    /// Keys of all buckets that can hold a point within the radius of `i`.
    pub fn neighbour_keys(&self, table: &OrbitTable, i: usize) -> SmallVec<[Key; 16]> {
        let cells = self.cells as isize;
        let mut out: SmallVec<[Key; 16]> = SmallVec::new();
        out.push(0);
        for &step in &self.steps {
            for &c in table.at(i, step) {
                let base = self.cell(c) as isize;
                let mut axis: SmallVec<[Key; 3]> = SmallVec::new();
                for v in base - 1..=base + 1 {
                    let v = if self.periodic {
                        v.rem_euclid(cells)
                    } else if v < 0 || v >= cells {
                        continue;
                    } else {
                        v
                    };
                    if !axis.contains(&(v as Key)) {
                        axis.push(v as Key);
                    }
                }
                let prev = std::mem::take(&mut out);
                for &k in &prev {
                    for &a in &axis {
                        out.push(k * self.cells as Key + a);
                    }
                }
            }
        }
        out
    }
}

/// Dense bucket tables hold at most this many cells per candidate.
const DENSE_PER_POINT: u128 = 16;

enum Buckets {
    Dense(Vec<Vec<u32>>),
    Sparse(HashMap<Key, Vec<u32>>),
}

/// Incrementally built bucket map from cell keys to candidate indices.
pub struct BucketIndex {
    keys: CellKeys,
    buckets: Buckets,
}

impl BucketIndex {
    pub fn empty(table: &OrbitTable, radius: f64) -> Self {
        let keys = CellKeys::new(table, radius);
        let total = (keys.cells as u128).checked_pow((keys.steps.len() * keys.dim) as u32);
        let buckets = match total {
            Some(t) if t <= DENSE_PER_POINT * table.len() as u128 + 1024 => Buckets::Dense(vec![Vec::new(); t as usize]),
            _ => Buckets::Sparse(HashMap::new()),
        };
        BucketIndex { keys, buckets }
    }

    pub fn full(table: &OrbitTable, radius: f64) -> Self {
        let mut idx = BucketIndex::empty(table, radius);
        for i in 0..table.len() {
            idx.insert(table, i);
        }
        idx
    }

    pub fn insert(&mut self, table: &OrbitTable, i: usize) {
        let k = self.keys.key(table, i);
        match &mut self.buckets {
            Buckets::Dense(v) => v[k as usize].push(i as u32),
            Buckets::Sparse(m) => m.entry(k).or_default().push(i as u32),
        }
    }

    #[inline]
    fn bucket(&self, k: Key) -> &[u32] {
        match &self.buckets {
            Buckets::Dense(v) => &v[k as usize],
            Buckets::Sparse(m) => m.get(&k).map_or(&[], |v| v.as_slice()),
        }
    }

    /// Calls `f` on every indexed candidate that may lie within the radius
    /// of `i`; the caller applies the exact distance test.
    #[inline]
    pub fn for_candidates(&self, table: &OrbitTable, i: usize, mut f: impl FnMut(usize) -> bool) -> bool {
        for k in self.keys.neighbour_keys(table, i) {
            for &j in self.bucket(k) {
                if !f(j as usize) {
                    return false;
                }
            }
        }
        true
    }

    /// Sorted candidates `j` with `d_{w,n}(i, j) <= r` (or `< r` when
    /// `strict`).
    pub fn ball(&self, table: &OrbitTable, i: usize, r: f64, strict: bool) -> Vec<u32> {
        let mut out = Vec::new();
        self.for_candidates(table, i, |j| {
            let inside = if strict {
                table.strictly_within(i, j, r)
            } else {
                table.within(i, j, r)
            };
            if inside {
                out.push(j as u32);
            }
            true
        });
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::MapSpec;

    #[test]
    fn ball_queries_match_brute_force() {
        let s = NaifsSchedule::autonomous(Space::Circle, &[MapSpec::circle(3)]).unwrap();
        let g = Grid::new(Space::Circle, 1.0 / 200.0).unwrap();
        let members: Vec<usize> = (0..g.len()).collect();
        let w = Word::zeros(1, 3);
        let t = OrbitTable::build(&s, &g, &members, &w, 3);
        for r in [0.05, 0.13, 0.3, 0.6] {
            let idx = BucketIndex::full(&t, r);
            for i in (0..t.len()).step_by(7) {
                let brute: Vec<u32> = (0..t.len())
                    .filter(|&j| t.bowen(i, j) <= r)
                    .map(|j| j as u32)
                    .collect();
                assert_eq!(idx.ball(&t, i, r, false), brute, "r={r} i={i}");
                let brute: Vec<u32> = (0..t.len())
                    .filter(|&j| t.bowen(i, j) < r)
                    .map(|j| j as u32)
                    .collect();
                assert_eq!(idx.ball(&t, i, r, true), brute);
            }
        }
    }

    #[test]
    fn torus_and_interval_queries_match_brute_force() {
        let torus = Space::torus(2).unwrap();
        let s = NaifsSchedule::autonomous(
            torus,
            &[MapSpec::TorusEndo {
                matrix: vec![vec![2, 0], vec![0, 2]],
            }],
        )
        .unwrap();
        let g = Grid::new(torus, 1.0 / 24.0).unwrap();
        let members: Vec<usize> = (0..g.len()).collect();
        let t = OrbitTable::build(&s, &g, &members, &Word::zeros(1, 2), 2);
        let idx = BucketIndex::full(&t, 0.1);
        for i in (0..t.len()).step_by(13) {
            let brute: Vec<u32> = (0..t.len())
                .filter(|&j| t.bowen(i, j) <= 0.1)
                .map(|j| j as u32)
                .collect();
            assert_eq!(idx.ball(&t, i, 0.1, false), brute);
        }

        let s = NaifsSchedule::autonomous(Space::Interval, &[MapSpec::Power { p: 2.0 }]).unwrap();
        let g = Grid::new(Space::Interval, 0.01).unwrap();
        let members: Vec<usize> = (0..g.len()).collect();
        let t = OrbitTable::build(&s, &g, &members, &Word::zeros(1, 4), 4);
        let idx = BucketIndex::full(&t, 0.07);
        for i in 0..t.len() {
            let brute: Vec<u32> = (0..t.len())
                .filter(|&j| t.bowen(i, j) <= 0.07)
                .map(|j| j as u32)
                .collect();
            assert_eq!(idx.ball(&t, i, 0.07, false), brute);
        }
    }
}
