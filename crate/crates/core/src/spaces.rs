//! Compact phase spaces (unit interval, circle, flat torus) and the uniform
//! grids used as finite stand-ins for them.
//!
//! Circle and torus coordinates live in `[0, 1)`; the torus carries the sup
//! over coordinates of the circle distance, so dynamical balls are products
//! of arcs.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{invalid, NaifsError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Space {
    Interval,
    Circle,
    Torus { dim: usize },
}

impl Space {
    pub fn torus(dim: usize) -> Result<Self> {
        if dim == 0 {
            return invalid("torus dimension must be positive");
        }
        Ok(Space::Torus { dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            Space::Interval | Space::Circle => 1,
            Space::Torus { dim } => *dim,
        }
    }

    /// Coordinates wrap modulo one.
    pub fn is_periodic(&self) -> bool {
        !matches!(self, Space::Interval)
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Space::Interval => 1.0,
            Space::Circle => 0.5,
            // Per-coordinate circle metric, combined as in the (Euclidean)
            // product; the sup-metric actually used never exceeds this.
            Space::Torus { dim } => (*dim as f64).sqrt() / 2.0,
        }
    }

    /// Distance between raw coordinate slices. Both slices must be canonical
    /// and of length `self.dim()`.
    #[inline]
    pub fn dist(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Space::Interval => (x[0] - y[0]).abs(),
            Space::Circle => circle_dist(x[0], y[0]),
            Space::Torus { .. } => x
                .iter()
                .zip(y)
                .map(|(a, b)| circle_dist(*a, *b))
                .fold(0.0, f64::max),
        }
    }

    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.dist(x.coords(), y.coords()))
    }

    /// Per-coordinate distance used by the sup-metric.
    #[inline]
    pub fn coord_dist(&self, a: f64, b: f64) -> f64 {
        if self.is_periodic() {
            circle_dist(a, b)
        } else {
            (a - b).abs()
        }
    }

    pub fn canonicalize(&self, x: &mut [f64]) {
        if self.is_periodic() {
            for c in x.iter_mut() {
                *c = wrap_unit(*c);
            }
        } else {
            for c in x.iter_mut() {
                *c = c.clamp(0.0, 1.0);
            }
        }
    }

    pub fn canonical_point(&self, coords: &[f64]) -> Result<Point> {
        if coords.len() != self.dim() {
            return invalid(format!(
                "expected {} coordinates, got {}",
                self.dim(),
                coords.len()
            ));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return invalid("non-finite coordinate");
        }
        let mut p = Point::new(coords);
        self.canonicalize(&mut p.0);
        Ok(p)
    }

    pub fn check(&self, p: &Point) -> Result<()> {
        if p.dim() != self.dim() {
            return Err(NaifsError::InvalidInput(format!(
                "dimension mismatch: space has dimension {}, point has {}",
                self.dim(),
                p.dim()
            )));
        }
        let in_range = if self.is_periodic() {
            p.coords().iter().all(|c| (0.0..1.0).contains(c))
        } else {
            p.coords().iter().all(|c| (0.0..=1.0).contains(c))
        };
        if !in_range {
            return invalid(format!("point {:?} is not canonical", p.coords()));
        }
        Ok(())
    }
}

#[inline]
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let t = (a - b).abs();
    t.min(1.0 - t)
}

/// Signed circular displacement `b - a` folded into `[-1/2, 1/2)`.
#[inline]
pub fn circle_delta(a: f64, b: f64) -> f64 {
    let mut d = b - a;
    d -= d.round();
    if d >= 0.5 {
        d -= 1.0;
    }
    d
}

#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let y = x - x.floor();
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point(SmallVec<[f64; 2]>);

impl Point {
    pub fn new(coords: &[f64]) -> Self {
        Point(SmallVec::from_slice(coords))
    }

    pub fn scalar(x: f64) -> Self {
        Point::new(&[x])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// First coordinate; convenient for one-dimensional spaces.
    pub fn x(&self) -> f64 {
        self.0[0]
    }
}

impl From<f64> for Point {
    fn from(x: f64) -> Self {
        Point::scalar(x)
    }
}

/// Uniform lattice over a space. Coordinates are stored flat, `dim` values
/// per point, in lexicographic order (first coordinate most significant).
#[derive(Clone, Debug)]
pub struct Grid {
    space: Space,
    requested_mesh: f64,
    spacing: f64,
    per_axis: usize,
    coords: Vec<f64>,
}

impl Grid {
    pub fn new(space: Space, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return invalid(format!("grid mesh must be positive, got {h}"));
        }
        if h > space.diameter() {
            return invalid(format!(
                "grid mesh {h} exceeds the space diameter {}",
                space.diameter()
            ));
        }
        let cells = (1.0 / h).ceil() as usize;
        let spacing = 1.0 / cells as f64;
        let per_axis = if space.is_periodic() { cells } else { cells + 1 };
        let dim = space.dim();
        let total = per_axis
            .checked_pow(dim as u32)
            .filter(|t| *t <= 1 << 28)
            .ok_or_else(|| NaifsError::InvalidInput("grid too large".into()))?;
        let mut coords = Vec::with_capacity(total * dim);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            coords.extend(idx.iter().map(|&i| i as f64 / cells as f64));
            for axis in (0..dim).rev() {
                idx[axis] += 1;
                if idx[axis] < per_axis {
                    break;
                }
                idx[axis] = 0;
            }
        }
        Ok(Grid {
            space,
            requested_mesh: h,
            spacing,
            per_axis,
            coords,
        })
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn mesh(&self) -> f64 {
        self.requested_mesh
    }

    /// Actual lattice spacing, never larger than the requested mesh.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.space.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn coords(&self, i: usize) -> &[f64] {
        let d = self.space.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn point(&self, i: usize) -> Point {
        Point::new(self.coords(i))
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.space.dim())
    }

    /// Indices of grid points strictly within `r` of `c`.
    pub fn ball_indices(&self, c: &Point, r: f64) -> Result<Vec<usize>> {
        if !(r > 0.0) {
            return invalid(format!("ball radius must be positive, got {r}"));
        }
        self.space.check(c)?;
        Ok((0..self.len())
            .filter(|&i| self.space.dist(self.coords(i), c.coords()) < r)
            .collect())
    }

    /// Indices of grid points within `r` of `c`, boundary included.
    pub fn closed_ball_indices(&self, c: &Point, r: f64) -> Result<Vec<usize>> {
        if !(r >= 0.0) {
            return invalid(format!("ball radius must be nonnegative, got {r}"));
        }
        self.space.check(c)?;
        Ok((0..self.len())
            .filter(|&i| self.space.dist(self.coords(i), c.coords()) <= r)
            .collect())
    }

    pub fn ball_points(&self, c: &Point, r: f64) -> Result<Vec<Point>> {
        Ok(self
            .ball_indices(c, r)?
            .into_iter()
            .map(|i| self.point(i))
            .collect())
    }

    /// Index of the lattice point nearest to `x` along each axis.
    pub fn nearest_index(&self, x: &[f64]) -> usize {
        let cells = (1.0 / self.spacing).round() as usize;
        let mut flat = 0usize;
        for &c in x {
            let mut i = (c * cells as f64).round() as usize;
            if self.space.is_periodic() {
                i %= cells;
            } else {
                i = i.min(cells);
            }
            flat = flat * self.per_axis + i;
        }
        flat
    }
}

/// Convenience wrapper matching the free-function form.
pub fn distance(space: Space, x: &Point, y: &Point) -> Result<f64> {
    space.distance(x, y)
}

pub fn grid_points(space: Space, h: f64) -> Result<Grid> {
    Grid::new(space, h)
}

pub fn ball_points(g: &Grid, c: &Point, r: f64) -> Result<Vec<Point>> {
    g.ball_points(c, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        let c = Space::Circle;
        let d = c.distance(&0.1.into(), &0.9.into()).unwrap();
        assert!((d - 0.2).abs() < 1e-15);
        let i = Space::Interval;
        assert_eq!(i.distance(&0.25.into(), &0.75.into()).unwrap(), 0.5);
        let t = Space::torus(2).unwrap();
        let d = t
            .distance(&Point::new(&[0.0, 0.4]), &Point::new(&[0.9, 0.5]))
            .unwrap();
        assert!((d - 0.1).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let t = Space::torus(2).unwrap();
        assert!(t.distance(&0.1.into(), &Point::new(&[0.1, 0.2])).is_err());
    }

    #[test]
    fn grid_sizes() {
        let g = Grid::new(Space::Circle, 0.25).unwrap();
        let pts: Vec<f64> = g.points().map(|p| p[0]).collect();
        assert_eq!(pts, vec![0.0, 0.25, 0.5, 0.75]);
        let g = Grid::new(Space::Interval, 0.5).unwrap();
        let pts: Vec<f64> = g.points().map(|p| p[0]).collect();
        assert_eq!(pts, vec![0.0, 0.5, 1.0]);
        let g = Grid::new(Space::torus(2).unwrap(), 0.5).unwrap();
        assert_eq!(g.len(), 4);
        assert!(Grid::new(Space::Circle, 0.0).is_err());
        assert!(Grid::new(Space::Circle, -1.0).is_err());
    }

    #[test]
    fn grid_is_lexicographic() {
        let g = Grid::new(Space::torus(2).unwrap(), 0.25).unwrap();
        let pts: Vec<&[f64]> = g.points().collect();
        for w in pts.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert_eq!(g.nearest_index(&[0.5, 0.25]), 9);
    }

    #[test]
    fn ball_examples() {
        let g = Grid::new(Space::Circle, 0.25).unwrap();
        let b: Vec<f64> = g
            .ball_points(&0.0.into(), 0.3)
            .unwrap()
            .iter()
            .map(|p| p.x())
            .collect();
        assert_eq!(b, vec![0.0, 0.25, 0.75]);
        assert_eq!(g.ball_points(&0.0.into(), 0.6).unwrap().len(), 4);
        assert!(g.ball_points(&0.1.into(), 0.05).unwrap().is_empty());
        assert!(g.ball_points(&0.1.into(), 0.0).is_err());
    }

    fn space_strategy() -> impl Strategy<Value = Space> {
        prop_oneof![
            Just(Space::Interval),
            Just(Space::Circle),
            Just(Space::Torus { dim: 2 }),
            Just(Space::Torus { dim: 3 }),
        ]
    }

    fn point_in(space: Space) -> impl Strategy<Value = Vec<f64>> {
        let hi = if space.is_periodic() { 1.0 } else { 1.0 + f64::EPSILON };
        proptest::collection::vec(0.0..hi, space.dim())
            .prop_map(move |mut v| {
                space.canonicalize(&mut v);
                v
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn triangle_inequality(
            (s, x, y, z) in space_strategy().prop_flat_map(|s| (Just(s), point_in(s), point_in(s), point_in(s)))
        ) {
            let dxy = s.dist(&x, &y);
            prop_assert!(dxy >= 0.0);
            prop_assert_eq!(dxy, s.dist(&y, &x));
            prop_assert!(dxy <= s.dist(&x, &z) + s.dist(&z, &y) + 4.0 * f64::EPSILON);
            if s == Space::Circle {
                prop_assert!(dxy <= 0.5);
            }
        }
    }

    proptest! {
        #[test]
        fn integer_shifts_vanish(x in 0.0f64..1.0, k in -5i32..5) {
            let s = Space::Circle;
            let p = s.canonical_point(&[x + k as f64]).unwrap();
            let q = s.canonical_point(&[x]).unwrap();
            // Adding an integer can round the fractional part by an ulp.
            prop_assert!(s.dist(p.coords(), q.coords()) <= 4.0 * f64::EPSILON);
            let again = s.canonical_point(p.coords()).unwrap();
            prop_assert_eq!(again, p);
        }

        #[test]
        fn grid_covers_space(
            coords in proptest::collection::vec(0.0f64..1.0, 2),
            h in 0.01f64..0.5,
        ) {
            let s = Space::torus(2).unwrap();
            let g = Grid::new(s, h).unwrap();
            let p = s.canonical_point(&coords).unwrap();
            let best = g.points().map(|q| s.dist(q, p.coords())).fold(f64::INFINITY, f64::min);
            prop_assert!(best <= h * (2f64).sqrt() / 2.0 + 1e-12);
        }
    }
}
