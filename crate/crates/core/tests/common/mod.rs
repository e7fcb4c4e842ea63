#![allow(dead_code)]

use naifs::{Grid, MapSpec, NaifsSchedule, Point, ScheduleSpec, Space, Tail, Word};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub s: NaifsSchedule,
    pub g: Grid,
    pub w: Word,
    pub eps: f64,
}

pub fn random_map(rng: &mut ChaCha8Rng, space: Space) -> MapSpec {
    match space {
        Space::Circle => match rng.random_range(0..4) {
            0 => MapSpec::Identity {},
            _ => MapSpec::CircleAffine {
                k: rng.random_range(1..=3),
                b: rng.random_range(0.0..1.0),
            },
        },
        _ => random_monotone(rng),
    }
}

pub fn random_monotone(rng: &mut ChaCha8Rng) -> MapSpec {
    match rng.random_range(0..4) {
        0 => MapSpec::Power {
            p: rng.random_range(1.0..3.0),
        },
        1 => MapSpec::HalfShift {
            c: rng.random_range(0.0..1.0),
        },
        2 => {
            let a: f64 = rng.random_range(-1.0..1.0);
            let (lo, hi) = ((-a).max(0.0), (1.0 - a).min(1.0));
            MapSpec::IntervalAffine {
                a,
                b: lo + (hi - lo) * rng.random_range(0.0..1.0),
            }
        }
        _ => {
            let mut v: Vec<f64> = (0..rng.random_range(2..6)).map(|_| rng.random_range(0.0..1.0)).collect();
            v.sort_by(f64::total_cmp);
            if rng.random_bool(0.5) {
                v.reverse();
            }
            MapSpec::Tabulated { values: v }
        }
    }
}

pub fn random_schedule(rng: &mut ChaCha8Rng, space: Space, gen: fn(&mut ChaCha8Rng, Space) -> MapSpec) -> NaifsSchedule {
    let levels: Vec<Vec<MapSpec>> = (0..rng.random_range(1..=3))
        .map(|_| (0..rng.random_range(1..=3)).map(|_| gen(rng, space)).collect())
        .collect();
    NaifsSchedule::from_spec(space, &ScheduleSpec { levels, tail: Tail::Constant }).unwrap()
}

pub fn random_word(rng: &mut ChaCha8Rng, s: &NaifsSchedule, n: usize) -> Word {
    Word::new(1, (1..=n).map(|j| rng.random_range(0..s.level_size(j) as u32)).collect())
}

/// A schedule, a grid of at most 24 points, a word of length 1..=3 and a
/// scale in `[0.05, 0.45)`.
pub fn small_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = if rng.random_bool(0.5) { Space::Circle } else { Space::Interval };
    let points = rng.random_range(6..=24);
    let cells = if space == Space::Circle { points } else { points - 1 };
    let g = Grid::new(space, 1.0 / cells as f64).unwrap();
    let s = random_schedule(&mut rng, space, random_map);
    let n = rng.random_range(1..=3);
    let w = random_word(&mut rng, &s, n);
    Instance {
        s,
        g,
        w,
        eps: rng.random_range(0.05..0.45),
    }
}

/// Orbits of every grid point along `w`, by repeated single-map evaluation.
pub fn orbits(s: &NaifsSchedule, g: &Grid, w: &Word) -> Vec<Vec<Point>> {
    (0..g.len())
        .map(|i| {
            let mut x = g.point(i);
            let mut o = vec![x.clone()];
            for (k, &a) in w.symbols.iter().enumerate() {
                x = s.level(w.start + k)[a as usize].eval(&x);
                o.push(x.clone());
            }
            o
        })
        .collect()
}

pub fn bowen(space: Space, a: &[Point], b: &[Point]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| space.dist(x.coords(), y.coords()))
        .fold(0.0, f64::max)
}
