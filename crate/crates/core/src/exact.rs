//! Exhaustive optimizers for instances of at most [`EXACT_LIMIT`] points.
//!
//! Graphs are adjacency bitmasks: `adj[i]` has bit `j` set when `i` and `j`
//! are related (and bit `i` itself for closed neighbourhoods).

use crate::error::{NaifsError, Result};

pub const EXACT_LIMIT: usize = 24;

pub fn guard(size: usize) -> Result<()> {
    if size > EXACT_LIMIT {
        Err(NaifsError::ComplexityGuard {
            size,
            limit: EXACT_LIMIT,
        })
    } else {
        Ok(())
    }
}

#[inline]
fn bits(mask: u32) -> impl Iterator<Item = usize> {
    let mut m = mask;
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(i)
        }
    })
}

/// Sum of `weights` over the set bits of `mask`, in increasing index order.
/// Every reported weighted optimum is re-summed this way so that values of
/// nested sets compare monotonically.
pub fn canonical_sum(mask: u32, weights: &[f64]) -> f64 {
    bits(mask).map(|i| weights[i]).sum()
}

/// Largest set with no two members adjacent in `conflict` (loops ignored).
pub fn max_independent_set(conflict: &[u32]) -> u32 {
    let n = conflict.len();
    let nb: Vec<u32> = conflict
        .iter()
        .enumerate()
        .map(|(i, &m)| m & !(1u32 << i))
        .collect();
    let mut best = 0u32;
    fn go(cand: u32, cur: u32, nb: &[u32], best: &mut u32) {
        if cand == 0 {
            if cur.count_ones() > best.count_ones() {
                *best = cur;
            }
            return;
        }
        if cur.count_ones() + cand.count_ones() <= best.count_ones() {
            return;
        }
        // Branch on the candidate with most candidate neighbours.
        let v = bits(cand)
            .max_by_key(|&v| ((nb[v] & cand).count_ones(), std::cmp::Reverse(v)))
            .unwrap();
        if nb[v] & cand == 0 {
            // Isolated among candidates: always take it.
            go(cand & !(1 << v), cur | (1 << v), nb, best);
            return;
        }
        go(cand & !(1 << v) & !nb[v], cur | (1 << v), nb, best);
        go(cand & !(1 << v), cur, nb, best);
    }
    let all = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    go(all, 0, &nb, &mut best);
    best
}

/// Independent set of `conflict` with the largest total weight (weights
/// positive).
pub fn max_weight_independent_set(conflict: &[u32], weights: &[f64]) -> u32 {
    let n = conflict.len();
    let nb: Vec<u32> = conflict
        .iter()
        .enumerate()
        .map(|(i, &m)| m & !(1u32 << i))
        .collect();
    struct St<'a> {
        nb: &'a [u32],
        w: &'a [f64],
        best: u32,
        best_val: f64,
    }
    fn go(cand: u32, cur: u32, cur_val: f64, st: &mut St) {
        if cand == 0 {
            let v = canonical_sum(cur, st.w);
            if v > st.best_val {
                st.best_val = v;
                st.best = cur;
            }
            return;
        }
        let bound: f64 = cur_val + bits(cand).map(|i| st.w[i]).sum::<f64>();
        if bound < st.best_val * (1.0 - 1e-12) {
            return;
        }
        let v = bits(cand)
            .max_by(|&a, &b| {
                (st.nb[a] & cand)
                    .count_ones()
                    .cmp(&(st.nb[b] & cand).count_ones())
                    .then(b.cmp(&a))
            })
            .unwrap();
        go(
            cand & !(1 << v) & !st.nb[v],
            cur | (1 << v),
            cur_val + st.w[v],
            st,
        );
        if st.nb[v] & cand != 0 {
            go(cand & !(1 << v), cur, cur_val, st);
        }
    }
    let mut st = St {
        nb: &nb,
        w: weights,
        best: 0,
        best_val: f64::NEG_INFINITY,
    };
    let all = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    go(all, 0, 0.0, &mut st);
    st.best
}

/// Smallest set `D` whose closed neighbourhoods (`closed[i]` includes `i`)
/// cover every vertex.
pub fn min_dominating_set(closed: &[u32]) -> u32 {
    let n = closed.len();
    let all = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let widest = closed.iter().map(|m| m.count_ones()).max().unwrap_or(1).max(1);
    let mut best = all;
    fn go(cur: u32, dominated: u32, all: u32, closed: &[u32], widest: u32, best: &mut u32) {
        let missing = all & !dominated;
        if missing == 0 {
            if cur.count_ones() < best.count_ones() {
                *best = cur;
            }
            return;
        }
        let lower = missing.count_ones().div_ceil(widest);
        if cur.count_ones() + lower >= best.count_ones() {
            return;
        }
        // Vertex with the fewest ways to be dominated.
        let v = bits(missing)
            .min_by_key(|&v| (closed[v].count_ones(), v))
            .unwrap();
        for u in bits(closed[v]) {
            go(cur | (1 << u), dominated | closed[u], all, closed, widest, best);
        }
    }
    if n > 0 {
        go(0, 0, all, closed, widest, &mut best);
    } else {
        best = 0;
    }
    best
}

/// Dominating set of least total weight (weights positive). Only
/// inclusion-minimal sets can be optimal, and the branching reaches every one
/// of them.
pub fn min_weight_dominating_set(closed: &[u32], weights: &[f64]) -> u32 {
    let n = closed.len();
    if n == 0 {
        return 0;
    }
    let all = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    struct St<'a> {
        closed: &'a [u32],
        w: &'a [f64],
        all: u32,
        best: u32,
        best_val: f64,
    }
    fn go(cur: u32, dominated: u32, cur_val: f64, st: &mut St) {
        let missing = st.all & !dominated;
        if missing == 0 {
            let v = canonical_sum(cur, st.w);
            if v < st.best_val {
                st.best_val = v;
                st.best = cur;
            }
            return;
        }
        if cur_val > st.best_val * (1.0 + 1e-12) {
            return;
        }
        let v = bits(missing)
            .min_by_key(|&v| (st.closed[v].count_ones(), v))
            .unwrap();
        let cheapest = bits(st.closed[v])
            .map(|u| st.w[u])
            .fold(f64::INFINITY, f64::min);
        if cur_val + cheapest > st.best_val * (1.0 + 1e-12) {
            return;
        }
        for u in bits(st.closed[v]) {
            go(cur | (1 << u), dominated | st.closed[u], cur_val + st.w[u], st);
        }
    }
    let mut st = St {
        closed,
        w: weights,
        all,
        best: all,
        best_val: canonical_sum(all, weights),
    };
    go(0, 0, 0.0, &mut st);
    st.best
}

/// Fewest sets from `sets` whose union covers `universe`; `None` when the
/// sets cannot cover it.
pub fn min_set_cover(sets: &[u32], universe: u32) -> Option<usize> {
    if universe == 0 {
        return Some(0);
    }
    if sets.iter().fold(0, |a, s| a | s) & universe != universe {
        return None;
    }
    let widest = sets
        .iter()
        .map(|s| (s & universe).count_ones())
        .max()
        .unwrap_or(1)
        .max(1);
    let mut best = sets.len();
    fn go(covered: u32, used: usize, universe: u32, sets: &[u32], widest: u32, best: &mut usize) {
        let missing = universe & !covered;
        if missing == 0 {
            *best = (*best).min(used);
            return;
        }
        if used + missing.count_ones().div_ceil(widest) as usize >= *best {
            return;
        }
        let e = missing.trailing_zeros();
        for s in sets.iter().filter(|s| *s & (1 << e) != 0) {
            go(covered | s, used + 1, universe, sets, widest, best);
        }
    }
    go(0, 0, universe, sets, widest, &mut best);
    Some(best)
}
