//! Scale-stamped detection of nonwandering grid points.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::index::OrbitTable;
use crate::spaces::Grid;
use crate::system::{derive_seed, NaifsSchedule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonwanderingResult {
    pub r: f64,
    /// Ball radii tested around every point.
    pub ladder: Vec<f64>,
    pub n_max: usize,
    pub m_max: usize,
    /// Words evaluated per start level.
    pub words_per_level: Vec<usize>,
    pub sampled: bool,
    pub mesh: f64,
    /// Verdict per grid point.
    pub marked: Vec<bool>,
    /// Grid indices of marked points.
    pub points: Vec<usize>,
}

/// Marks grid point `x` iff for every radius `r'` in the ladder
/// `r, r/2, r/4` (each at least `2h`) some tested word `w ∈ I^{m,k}`,
/// `m <= m_max`, `1 <= k <= n_max`, maps a grid point of the open ball
/// `B(x, r')` back into `B(x, r')`.
///
/// Words of `I^{m,n_max}` are enumerated (or sampled past `budget`); their
/// prefixes supply the shorter words.
pub fn nonwandering_set(
    s: &NaifsSchedule,
    g: &Grid,
    r: f64,
    n_max: usize,
    m_max: usize,
    budget: usize,
    seed: u64,
) -> Result<NonwanderingResult> {
    let h = g.spacing();
    if !(r >= 2.0 * h) {
        return invalid(format!("r = {r} must be at least twice the mesh {h}"));
    }
    if n_max < 1 || m_max < 1 {
        return invalid("n_max and m_max must be at least 1");
    }
    if g.space() != s.space() {
        return invalid("grid and schedule live on different spaces");
    }
    let mut ladder: Vec<f64> = [r, r / 2.0, r / 4.0].iter().map(|&q| q.max(2.0 * h)).collect();
    ladder.dedup();

    let space = g.space();
    let all: Vec<usize> = (0..g.len()).collect();
    let balls: Vec<Vec<Vec<usize>>> = ladder
        .iter()
        .map(|&q| {
            (0..g.len())
                .map(|i| g.ball_indices(&g.point(i), q))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    // returns[l][i]: point i already certified at rung l.
    let mut returns = vec![vec![false; g.len()]; ladder.len()];
    let mut words_per_level = Vec::with_capacity(m_max);
    let mut sampled = false;
    for m in 1..=m_max {
        let ens = s.words(m, n_max, budget, derive_seed(seed, "nonwandering", m as u64))?;
        sampled |= ens.is_sampled();
        words_per_level.push(ens.count());
        for wi in 0..ens.count() {
            let w = ens.word(wi);
            let t = OrbitTable::build(s, g, &all, &w, n_max);
            for (l, &q) in ladder.iter().enumerate() {
                for x in 0..g.len() {
                    if returns[l][x] {
                        continue;
                    }
                    let cx = g.coords(x);
                    returns[l][x] = balls[l][x].iter().any(|&y| {
                        (1..=n_max).any(|k| space.dist(t.at(y, k), cx) < q)
                    });
                }
            }
        }
    }
    let marked: Vec<bool> = (0..g.len()).map(|x| returns.iter().all(|rung| rung[x])).collect();
    let points = (0..g.len()).filter(|&x| marked[x]).collect();
    Ok(NonwanderingResult {
        r,
        ladder,
        n_max,
        m_max,
        words_per_level,
        sampled,
        mesh: h,
        marked,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::MapSpec;
    use crate::spaces::Space;

    #[test]
    fn identity_marks_everything() {
        let s = NaifsSchedule::autonomous(Space::Interval, &[MapSpec::Identity {}]).unwrap();
        let g = Grid::new(Space::Interval, 0.01).unwrap();
        let res = nonwandering_set(&s, &g, 0.05, 2, 1, 10, 0).unwrap();
        assert!(res.marked.iter().all(|&m| m));
    }

    #[test]
    fn contraction_marks_only_near_zero() {
        let s = NaifsSchedule::autonomous(Space::Interval, &[MapSpec::IntervalAffine { a: 0.5, b: 0.0 }]).unwrap();
        let g = Grid::new(Space::Interval, 1.0 / 512.0).unwrap();
        let r = 16.0 / 512.0;
        let res = nonwandering_set(&s, &g, r, 6, 2, 10, 0).unwrap();
        assert!(res.marked[0]);
        for &p in &res.points {
            assert!(g.coords(p)[0] < r + 2.0 * g.spacing());
        }
    }

    #[test]
    fn doubling_marks_everything() {
        let s = NaifsSchedule::autonomous(Space::Circle, &[MapSpec::circle(2)]).unwrap();
        // Dyadic grids collapse onto 0 under doubling.
        let g = Grid::new(Space::Circle, 1.0 / 1000.0).unwrap();
        let res = nonwandering_set(&s, &g, 0.1, 12, 1, 10, 0).unwrap();
        assert_eq!(res.points.len(), g.len());
    }

    #[test]
    fn radius_below_two_mesh_is_rejected() {
        let s = NaifsSchedule::autonomous(Space::Circle, &[MapSpec::circle(2)]).unwrap();
        let g = Grid::new(Space::Circle, 0.01).unwrap();
        assert!(nonwandering_set(&s, &g, 0.015, 3, 1, 10, 0).is_err());
    }
}
