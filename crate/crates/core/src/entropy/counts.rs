//! Per-word separated, spanning and cover counts on a grid.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{invalid, Result};
use crate::exact;
use crate::index::{BucketIndex, OrbitTable};
use crate::spaces::Grid;
use crate::system::{NaifsSchedule, Word};

/// Sorted, deduplicated candidate indices (the whole grid when `y` is
/// `None`).
pub(crate) fn candidates(g: &Grid, y: Option<&[usize]>) -> Result<Vec<usize>> {
    match y {
        None => Ok((0..g.len()).collect()),
        Some(y) => {
            let mut v = y.to_vec();
            v.sort_unstable();
            v.dedup();
            if let Some(&bad) = v.iter().find(|&&i| i >= g.len()) {
                return invalid(format!("candidate index {bad} outside the grid of {}", g.len()));
            }
            if v.is_empty() {
                return invalid("candidate set is empty");
            }
            Ok(v)
        }
    }
}

fn check_args(s: &NaifsSchedule, g: &Grid, w: &Word, n: usize, eps: f64) -> Result<()> {
    if g.space() != s.space() {
        return invalid("grid and schedule live on different spaces");
    }
    if n != w.len() {
        return invalid(format!("n = {n} must equal the word length {}", w.len()));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return invalid(format!("eps must be positive, got {eps}"));
    }
    s.check_word(w)
}

/// Candidate orbits along `w`, after validating the arguments.
pub(crate) fn table(
    s: &NaifsSchedule,
    g: &Grid,
    y: Option<&[usize]>,
    w: &Word,
    n: usize,
    eps: f64,
) -> Result<OrbitTable> {
    check_args(s, g, w, n, eps)?;
    let members = candidates(g, y)?;
    Ok(OrbitTable::build(s, g, &members, w, n))
}

/// Greedy `(n,w,eps)`-separated set: scans `order` and keeps a point iff it
/// is more than `eps` from every kept point. Returns table indices.
pub(crate) fn greedy_separated(t: &OrbitTable, eps: f64, order: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut idx = BucketIndex::empty(t, eps);
    let mut kept = Vec::new();
    for i in order {
        let free = idx.for_candidates(t, i, |j| !t.within(i, j, eps));
        if free {
            idx.insert(t, i);
            kept.push(i);
        }
    }
    kept
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64, Reverse<usize>);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Lazy greedy set cover of all table points by balls of radius `r`
/// centred at table points (`strict` selects `< r`). Each step picks the
/// ball minimising `exp(log_cost) / newly covered`. Returns the centres.
pub(crate) fn greedy_cover(t: &OrbitTable, r: f64, strict: bool, log_cost: Option<&[f64]>) -> Vec<usize> {
    let len = t.len();
    let idx = BucketIndex::full(t, r);
    let cost = |i: usize| log_cost.map_or(0.0, |c| c[i]);
    let mut covered = vec![false; len];
    let mut left = len;
    let mut heap: BinaryHeap<Key> = (0..len)
        .map(|i| {
            let size = idx.ball(t, i, r, strict).len();
            Key((size as f64).ln() - cost(i), Reverse(i))
        })
        .collect();
    let mut chosen = Vec::new();
    while left > 0 {
        let Some(Key(_, Reverse(i))) = heap.pop() else {
            break;
        };
        let ball = idx.ball(t, i, r, strict);
        let gain = ball.iter().filter(|&&j| !covered[j as usize]).count();
        if gain == 0 {
            continue;
        }
        let key = Key((gain as f64).ln() - cost(i), Reverse(i));
        if heap.peek().is_some_and(|top| *top > key) {
            heap.push(key);
            continue;
        }
        for j in ball {
            if !covered[j as usize] {
                covered[j as usize] = true;
                left -= 1;
            }
        }
        chosen.push(i);
    }
    chosen
}

/// Adjacency bitmasks of the relation `d_{w,n} <= r` (`< r` when strict),
/// loops included.
pub(crate) fn closed_adjacency(t: &OrbitTable, r: f64, strict: bool) -> Result<Vec<u32>> {
    exact::guard(t.len())?;
    let len = t.len();
    let mut adj = vec![0u32; len];
    for i in 0..len {
        for j in 0..len {
            let near = if strict { t.strictly_within(i, j, r) } else { t.within(i, j, r) };
            if i == j || near {
                adj[i] |= 1 << j;
            }
        }
    }
    Ok(adj)
}

fn to_grid(t: &OrbitTable, picks: impl IntoIterator<Item = usize>) -> Vec<usize> {
    picks.into_iter().map(|i| t.members[i]).collect()
}

/// Points of a separated set, as grid indices. Greedy scans the candidates
/// in grid order; `exact` returns a maximum-cardinality set (at most
/// [`exact::EXACT_LIMIT`] candidates).
pub fn separated_set(
    s: &NaifsSchedule,
    g: &Grid,
    y: Option<&[usize]>,
    w: &Word,
    n: usize,
    eps: f64,
    exact: bool,
) -> Result<Vec<usize>> {
    let t = table(s, g, y, w, n, eps)?;
    if exact {
        let adj = closed_adjacency(&t, eps, false)?;
        let mask = exact::max_independent_set(&adj);
        Ok(to_grid(&t, (0..t.len()).filter(|i| mask & (1 << i) != 0)))
    } else {
        Ok(to_grid(&t, greedy_separated(&t, eps, 0..t.len())))
    }
}

/// `s_n(Y; w, eps)`: greedy lower bound, or the exact maximum.
pub fn separated_count(
    s: &NaifsSchedule,
    g: &Grid,
    y: Option<&[usize]>,
    w: &Word,
    n: usize,
    eps: f64,
    exact: bool,
) -> Result<usize> {
    separated_set(s, g, y, w, n, eps, exact).map(|v| v.len())
}

/// `r_n(Y; w, eps)` upper bound: the smaller of a greedy set cover by closed
/// Bowen balls and the greedy maximal separated set.
pub fn spanning_count(
    s: &NaifsSchedule,
    g: &Grid,
    y: Option<&[usize]>,
    w: &Word,
    n: usize,
    eps: f64,
) -> Result<usize> {
    let t = table(s, g, y, w, n, eps)?;
    let sep = greedy_separated(&t, eps, 0..t.len()).len();
    Ok(greedy_cover(&t, eps, false, None).len().min(sep))
}

/// Exact `r_n(Y; w, eps)` over spanning sets drawn from `Y`.
pub fn exact_spanning_count(
    s: &NaifsSchedule,
    g: &Grid,
    y: Option<&[usize]>,
    w: &Word,
    n: usize,
    eps: f64,
) -> Result<usize> {
    let t = table(s, g, y, w, n, eps)?;
    let adj = closed_adjacency(&t, eps, false)?;
    Ok(exact::min_dominating_set(&adj).count_ones() as usize)
}

/// Greedy number of open dynamical balls `B(x; w, n, eps)`, `x` in the grid,
/// needed to cover the grid: an upper-bound surrogate for the minimal
/// subcover of the `eps`-ball cover.
pub fn cover_count(s: &NaifsSchedule, g: &Grid, w: &Word, n: usize, eps: f64) -> Result<usize> {
    let t = table(s, g, None, w, n, eps)?;
    Ok(greedy_cover(&t, eps, true, None).len())
}

/// Exact minimal number of open dynamical `eps`-balls centred at grid points
/// whose traces on `Y` cover `Y` (`|Y|` at most [`exact::EXACT_LIMIT`]).
pub fn exact_cover_count(
    s: &NaifsSchedule,
    g: &Grid,
    y: Option<&[usize]>,
    w: &Word,
    n: usize,
    eps: f64,
) -> Result<usize> {
    check_args(s, g, w, n, eps)?;
    let members = candidates(g, y)?;
    exact::guard(members.len())?;
    let all: Vec<usize> = (0..g.len()).collect();
    let t = OrbitTable::build(s, g, &all, w, n);
    let sets: Vec<u32> = (0..g.len())
        .map(|c| {
            members.iter().enumerate().fold(0u32, |m, (b, &p)| {
                if t.strictly_within(c, p, eps) {
                    m | (1 << b)
                } else {
                    m
                }
            })
        })
        .filter(|&m| m != 0)
        .collect();
    let universe = if members.len() == 32 { u32::MAX } else { (1u32 << members.len()) - 1 };
    Ok(exact::min_set_cover(&sets, universe).expect("every point lies in its own ball"))
}
