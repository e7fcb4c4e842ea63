//! Concrete map families: affine circle covers, linear torus endomorphisms,
//! the Pomeau–Manneville intermittent map, monotone interval maps, and
//! compositions of these (used by blocked systems).

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{NaifsError, Result};
use crate::spaces::{circle_delta, wrap_unit, Point, Space};

/// Serializable description of a map. In configuration files this appears as
/// `{ family = "...", params = { ... } }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum MapSpec {
    /// `x ↦ kx + b (mod 1)` on the circle; `k = 1` is a rotation.
    CircleAffine {
        k: u32,
        #[serde(default)]
        b: f64,
    },
    /// `x ↦ Ax (mod 1)` on the torus.
    TorusEndo { matrix: Vec<Vec<i64>> },
    /// `x + 2^α x^{1+α}` on `[0, 1/2)`, `2x - 1` on `[1/2, 1)`.
    PomeauManneville { alpha: f64 },
    /// `x ↦ x^p` on the interval, `p ≥ 1`.
    Power { p: f64 },
    /// `x ↦ (x + c)/2` on the interval.
    HalfShift { c: f64 },
    /// `x ↦ ax + b` on the interval; must map `[0,1]` into itself.
    IntervalAffine { a: f64, b: f64 },
    /// Piecewise-linear monotone interval map through equally spaced knots.
    Tabulated { values: Vec<f64> },
    /// Identity on any space.
    Identity {},
    /// `maps[last] ∘ … ∘ maps[0]`.
    Composite { maps: Vec<MapSpec> },
}

impl MapSpec {
    pub fn circle(k: u32) -> Self {
        MapSpec::CircleAffine { k, b: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpandingMapInfo {
    pub sigma: f64,
    pub rho: f64,
    pub branches: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub name: String,
    pub monotone: bool,
    pub expanding: Option<ExpandingMapInfo>,
    pub lipschitz: f64,
    pub has_branches: bool,
}

#[derive(Debug)]
enum Action {
    CircleAffine {
        k: f64,
        b: f64,
    },
    Torus {
        dim: usize,
        a: Vec<i64>,
        inv: DMatrix<f64>,
        det: i64,
    },
    PomeauManneville {
        alpha: f64,
        coef: f64,
    },
    Power(f64),
    IntervalAffine {
        a: f64,
        b: f64,
    },
    Tabulated(Vec<f64>),
    Identity,
    Composite(Vec<MapRef>),
}

#[derive(Debug)]
struct MapImpl {
    spec: MapSpec,
    action: Action,
    meta: MapMeta,
}

/// Shared handle to a continuous self-map.
#[derive(Clone)]
pub struct MapRef(Arc<MapImpl>);

impl fmt::Debug for MapRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MapRef({})", self.0.meta.name)
    }
}

impl PartialEq for MapRef {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.spec == other.0.spec
    }
}

pub fn make_map(spec: &MapSpec) -> Result<MapRef> {
    MapRef::new(spec)
}

fn construction<T>(msg: impl Into<String>) -> Result<T> {
    Err(NaifsError::Construction(msg.into()))
}

fn sup_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

impl MapRef {
    pub fn new(spec: &MapSpec) -> Result<Self> {
        let (action, meta) = match spec {
            MapSpec::CircleAffine { k, b } => {
                if *k < 1 {
                    return construction("circle affine map needs degree k >= 1");
                }
                if !b.is_finite() {
                    return construction("circle affine offset must be finite");
                }
                let k = *k as f64;
                let expanding = (k >= 2.0).then(|| ExpandingMapInfo {
                    sigma: k,
                    rho: 1.0 / (4.0 * k),
                    branches: k as usize,
                });
                (
                    Action::CircleAffine { k, b: wrap_unit(*b) },
                    MapMeta {
                        name: if k == 1.0 {
                            format!("rotation({b})")
                        } else {
                            format!("x*{k}+{b}")
                        },
                        monotone: k == 1.0,
                        expanding,
                        lipschitz: k,
                        has_branches: true,
                    },
                )
            }
            MapSpec::TorusEndo { matrix } => {
                let dim = matrix.len();
                if dim == 0 || matrix.iter().any(|r| r.len() != dim) {
                    return construction("torus matrix must be square and nonempty");
                }
                let a: Vec<i64> = matrix.iter().flatten().copied().collect();
                let m = DMatrix::from_row_slice(dim, dim, &a.iter().map(|&v| v as f64).collect::<Vec<_>>());
                let det = m.determinant().round() as i64;
                if det == 0 {
                    return construction("torus matrix is singular");
                }
                let min_eig = m
                    .complex_eigenvalues()
                    .iter()
                    .map(|z| z.norm())
                    .fold(f64::INFINITY, f64::min);
                if min_eig <= 1.0 + 1e-9 {
                    return construction(format!(
                        "torus matrix has an eigenvalue of modulus {min_eig:.6} <= 1"
                    ));
                }
                let inv = m
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| NaifsError::Construction("matrix not invertible".into()))?;
                // Expansion and injectivity constants for the sup-metric.
                let sigma = 1.0 / sup_norm(&inv);
                if sigma < 1.0 + 1e-9 {
                    return construction(format!(
                        "torus matrix expands the sup-metric only by {sigma:.6}"
                    ));
                }
                let norm = sup_norm(&m);
                (
                    Action::Torus { dim, a, inv, det },
                    MapMeta {
                        name: format!("torus{matrix:?}"),
                        monotone: false,
                        expanding: Some(ExpandingMapInfo {
                            sigma,
                            rho: 1.0 / (4.0 * norm),
                            branches: det.unsigned_abs() as usize,
                        }),
                        lipschitz: norm,
                        has_branches: true,
                    },
                )
            }
            MapSpec::PomeauManneville { alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return construction(format!("Pomeau-Manneville alpha {alpha} not in (0,1)"));
                }
                (
                    Action::PomeauManneville {
                        alpha: *alpha,
                        coef: 2f64.powf(*alpha),
                    },
                    MapMeta {
                        name: format!("pomeau_manneville({alpha})"),
                        monotone: false,
                        expanding: None,
                        lipschitz: 2.0 + alpha,
                        has_branches: true,
                    },
                )
            }
            MapSpec::Power { p } => {
                if !(*p >= 1.0) || !p.is_finite() {
                    return construction(format!("power map needs p >= 1, got {p}"));
                }
                (
                    Action::Power(*p),
                    monotone_meta(format!("x^{p}"), *p),
                )
            }
            MapSpec::HalfShift { c } => {
                if !(0.0..=1.0).contains(c) {
                    return construction(format!("(x+c)/2 needs c in [0,1], got {c}"));
                }
                (
                    Action::IntervalAffine { a: 0.5, b: c / 2.0 },
                    monotone_meta(format!("(x+{c})/2"), 0.5),
                )
            }
            MapSpec::IntervalAffine { a, b } => {
                let lo = b.min(a + b);
                let hi = b.max(a + b);
                if !(lo >= 0.0 && hi <= 1.0) {
                    return construction(format!("{a}x+{b} does not map [0,1] into itself"));
                }
                (
                    Action::IntervalAffine { a: *a, b: *b },
                    monotone_meta(format!("{a}x+{b}"), a.abs()),
                )
            }
            MapSpec::Tabulated { values } => {
                if values.len() < 2 {
                    return construction("tabulated map needs at least two knots");
                }
                if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return construction("tabulated values must lie in [0,1]");
                }
                let up = values.windows(2).all(|w| w[0] <= w[1]);
                let down = values.windows(2).all(|w| w[0] >= w[1]);
                if !up && !down {
                    return construction("tabulated map is not monotone");
                }
                let segs = (values.len() - 1) as f64;
                let lip = values
                    .windows(2)
                    .map(|w| (w[1] - w[0]).abs() * segs)
                    .fold(0.0, f64::max);
                (
                    Action::Tabulated(values.clone()),
                    monotone_meta("tabulated".into(), lip),
                )
            }
            MapSpec::Identity {} => (
                Action::Identity,
                MapMeta {
                    name: "identity".into(),
                    monotone: true,
                    expanding: None,
                    lipschitz: 1.0,
                    has_branches: true,
                },
            ),
            MapSpec::Composite { maps } => {
                if maps.is_empty() {
                    return construction("composite map needs at least one factor");
                }
                let parts = maps.iter().map(MapRef::new).collect::<Result<Vec<_>>>()?;
                return Ok(MapRef::compose(&parts));
            }
        };
        Ok(MapRef(Arc::new(MapImpl {
            spec: spec.clone(),
            action,
            meta,
        })))
    }

    /// `parts[last] ∘ … ∘ parts[0]`.
    pub fn compose(parts: &[MapRef]) -> MapRef {
        assert!(!parts.is_empty());
        if parts.len() == 1 {
            return parts[0].clone();
        }
        let lipschitz = parts.iter().map(|p| p.meta().lipschitz).product();
        let expanding = if parts.iter().all(|p| p.meta().expanding.is_some()) {
            let mut sigma = 1.0;
            let mut rho = f64::INFINITY;
            let mut growth = 1.0;
            let mut branches = 1;
            for p in parts {
                let e = p.meta().expanding.as_ref().unwrap();
                rho = f64::min(rho, e.rho / growth);
                growth *= p.meta().lipschitz;
                sigma *= e.sigma;
                branches *= e.branches;
            }
            Some(ExpandingMapInfo {
                sigma,
                rho,
                branches,
            })
        } else {
            None
        };
        let meta = MapMeta {
            name: parts
                .iter()
                .rev()
                .map(|p| p.meta().name.clone())
                .collect::<Vec<_>>()
                .join(" o "),
            monotone: parts.iter().all(|p| p.meta().monotone),
            expanding,
            lipschitz,
            has_branches: parts.iter().all(|p| p.meta().has_branches),
        };
        let spec = MapSpec::Composite {
            maps: parts.iter().map(|p| p.spec().clone()).collect(),
        };
        MapRef(Arc::new(MapImpl {
            spec,
            action: Action::Composite(parts.to_vec()),
            meta,
        }))
    }

    pub fn spec(&self) -> &MapSpec {
        &self.0.spec
    }

    pub fn meta(&self) -> &MapMeta {
        &self.0.meta
    }

    pub fn lipschitz(&self) -> f64 {
        self.0.meta.lipschitz
    }

    pub fn is_expanding(&self) -> bool {
        self.0.meta.expanding.is_some()
    }

    /// Whether the map acts on `space`.
    pub fn supports(&self, space: Space) -> bool {
        match &self.0.action {
            Action::CircleAffine { .. } | Action::PomeauManneville { .. } => {
                space == Space::Circle
            }
            Action::Torus { dim, .. } => space == Space::Torus { dim: *dim },
            Action::Power(_) | Action::IntervalAffine { .. } | Action::Tabulated(_) => {
                space == Space::Interval
            }
            Action::Identity => true,
            Action::Composite(parts) => parts.iter().all(|p| p.supports(space)),
        }
    }

    /// Evaluates the map on canonical coordinates, writing canonical output.
    #[inline]
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        match &self.0.action {
            Action::CircleAffine { k, b } => out[0] = wrap_unit(k * x[0] + b),
            Action::Torus { dim, a, .. } => {
                for i in 0..*dim {
                    let row = &a[i * dim..(i + 1) * dim];
                    let s: f64 = row.iter().zip(x).map(|(&c, &v)| c as f64 * v).sum();
                    out[i] = wrap_unit(s);
                }
            }
            Action::PomeauManneville { alpha, coef } => {
                let v = x[0];
                out[0] = if v < 0.5 {
                    wrap_unit(v + coef * v.powf(1.0 + alpha))
                } else {
                    wrap_unit(2.0 * v - 1.0)
                };
            }
            Action::Power(p) => out[0] = x[0].powf(*p).clamp(0.0, 1.0),
            Action::IntervalAffine { a, b } => out[0] = (a * x[0] + b).clamp(0.0, 1.0),
            Action::Tabulated(values) => out[0] = interpolate(values, x[0]),
            Action::Identity => out.copy_from_slice(x),
            Action::Composite(parts) => {
                let mut cur: SmallVec<[f64; 4]> = SmallVec::from_slice(x);
                let mut next = cur.clone();
                for p in parts {
                    p.apply(&cur, &mut next);
                    std::mem::swap(&mut cur, &mut next);
                }
                out.copy_from_slice(&cur);
            }
        }
    }

    pub fn eval(&self, x: &Point) -> Point {
        let mut out = x.clone();
        self.apply(x.coords(), out.coords_mut());
        out
    }

    /// Jacobian at `x`.
    pub fn derivative(&self, x: &Point) -> Result<DMatrix<f64>> {
        let v = x.coords();
        let scalar = |d: f64| Ok(DMatrix::from_element(1, 1, d));
        match &self.0.action {
            Action::CircleAffine { k, .. } => scalar(*k),
            Action::Torus { dim, a, .. } => Ok(DMatrix::from_row_slice(
                *dim,
                *dim,
                &a.iter().map(|&c| c as f64).collect::<Vec<_>>(),
            )),
            Action::PomeauManneville { alpha, coef } => {
                if v[0] == 0.5 {
                    return Err(NaifsError::NonDifferentiable(format!("{}", v[0])));
                }
                if v[0] < 0.5 {
                    scalar(1.0 + (1.0 + alpha) * coef * v[0].powf(*alpha))
                } else {
                    scalar(2.0)
                }
            }
            Action::Power(p) => scalar(p * v[0].powf(p - 1.0)),
            Action::IntervalAffine { a, .. } => scalar(*a),
            Action::Tabulated(values) => {
                let segs = (values.len() - 1) as f64;
                let t = v[0] * segs;
                if t.fract() == 0.0 && t > 0.0 && t < segs {
                    return Err(NaifsError::NonDifferentiable(format!("knot {}", v[0])));
                }
                let i = (t.floor() as usize).min(values.len() - 2);
                scalar((values[i + 1] - values[i]) * segs)
            }
            Action::Identity => Ok(DMatrix::identity(v.len(), v.len())),
            Action::Composite(parts) => {
                let mut jac = DMatrix::identity(v.len(), v.len());
                let mut p = x.clone();
                for part in parts {
                    jac = part.derivative(&p)? * jac;
                    p = part.eval(&p);
                }
                Ok(jac)
            }
        }
    }

    /// All preimages of `y`, canonical and sorted.
    pub fn inverse_branches(&self, y: &Point) -> Result<Vec<Point>> {
        let yv = y.coords();
        let mut out: Vec<Point> = match &self.0.action {
            Action::CircleAffine { k, b } => {
                let deg = *k as usize;
                (0..deg)
                    .map(|i| Point::scalar(wrap_unit((yv[0] - b + i as f64) / k)))
                    .collect()
            }
            Action::Torus { dim, inv, det, a } => {
                torus_preimages(*dim, a, inv, det.unsigned_abs() as usize, yv)
            }
            Action::PomeauManneville { alpha, coef } => {
                let left = pm_left_inverse(*alpha, *coef, yv[0]);
                vec![Point::scalar(left), Point::scalar((yv[0] + 1.0) / 2.0)]
            }
            Action::Identity => vec![y.clone()],
            Action::Composite(parts) => {
                let mut current = vec![y.clone()];
                for p in parts.iter().rev() {
                    let mut next = Vec::new();
                    for c in &current {
                        next.extend(p.inverse_branches(c)?);
                    }
                    current = next;
                }
                current
            }
            _ => {
                return Err(NaifsError::Unsupported(format!(
                    "{} has no inverse branches",
                    self.0.meta.name
                )))
            }
        };
        out.sort_by(|p, q| p.coords().partial_cmp(q.coords()).unwrap());
        out.dedup_by(|p, q| {
            p.coords()
                .iter()
                .zip(q.coords())
                .all(|(a, b)| (a - b).abs() < 1e-13)
        });
        Ok(out)
    }

    /// The preimage of `y` on the local branch through `anchor`, i.e. the
    /// preimage closest to `anchor` when `y` is near `self(anchor)`.
    pub fn local_inverse(&self, anchor: &[f64], y: &[f64]) -> Result<Point> {
        match &self.0.action {
            Action::CircleAffine { k, .. } => {
                let mut fx = [0.0];
                self.apply(anchor, &mut fx);
                Ok(Point::scalar(wrap_unit(anchor[0] + circle_delta(fx[0], y[0]) / k)))
            }
            Action::Torus { dim, inv, .. } => {
                let mut fx = vec![0.0; *dim];
                self.apply(anchor, &mut fx);
                let delta: Vec<f64> = fx.iter().zip(y).map(|(a, b)| circle_delta(*a, *b)).collect();
                let step = inv * nalgebra::DVector::from_vec(delta);
                let coords: Vec<f64> = anchor
                    .iter()
                    .zip(step.iter())
                    .map(|(a, s)| wrap_unit(a + s))
                    .collect();
                Ok(Point::new(&coords))
            }
            Action::Identity => Ok(Point::new(y)),
            Action::Composite(parts) => {
                // Forward anchors, then pull back factor by factor.
                let mut anchors = vec![anchor.to_vec()];
                for p in &parts[..parts.len() - 1] {
                    let mut next = vec![0.0; anchor.len()];
                    p.apply(anchors.last().unwrap(), &mut next);
                    anchors.push(next);
                }
                let mut target = Point::new(y);
                for (p, a) in parts.iter().zip(&anchors).rev() {
                    target = p.local_inverse(a, target.coords())?;
                }
                Ok(target)
            }
            _ => {
                let space = if anchor.len() == 1 {
                    Space::Circle
                } else {
                    Space::Torus { dim: anchor.len() }
                };
                let pre = self.inverse_branches(&Point::new(y))?;
                pre.into_iter()
                    .min_by(|p, q| {
                        space
                            .dist(p.coords(), anchor)
                            .total_cmp(&space.dist(q.coords(), anchor))
                    })
                    .ok_or_else(|| NaifsError::Domain("no preimage".into()))
            }
        }
    }
}

fn monotone_meta(name: String, lipschitz: f64) -> MapMeta {
    MapMeta {
        name,
        monotone: true,
        expanding: None,
        lipschitz,
        has_branches: false,
    }
}

fn interpolate(values: &[f64], x: f64) -> f64 {
    let segs = (values.len() - 1) as f64;
    let t = (x * segs).clamp(0.0, segs);
    let i = (t.floor() as usize).min(values.len() - 2);
    let f = t - i as f64;
    (values[i] + f * (values[i + 1] - values[i])).clamp(0.0, 1.0)
}

/// Solves `x + c·x^{1+α} = y` on `[0, 1/2)` by bisection.
fn pm_left_inverse(alpha: f64, coef: f64, y: f64) -> f64 {
    let f = |x: f64| x + coef * x.powf(1.0 + alpha);
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    if y <= 0.0 {
        return 0.0;
    }
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn torus_preimages(dim: usize, a: &[i64], inv: &DMatrix<f64>, count: usize, y: &[f64]) -> Vec<Point> {
    // Preimages are A^{-1}(y + m) mod 1 for integer m; m ranges over a box
    // large enough to reach every coset of A·Z^d.
    let reach: i64 = a.iter().map(|v| v.abs()).max().unwrap_or(1) * dim as i64;
    let mut found: Vec<Point> = Vec::new();
    let mut m = vec![-reach; dim];
    'outer: loop {
        let shifted: Vec<f64> = y.iter().zip(&m).map(|(v, k)| v + *k as f64).collect();
        let x = inv * nalgebra::DVector::from_vec(shifted);
        let coords: Vec<f64> = x.iter().map(|v| wrap_unit(*v)).collect();
        let space = Space::Torus { dim };
        if !found.iter().any(|p| space.dist(p.coords(), &coords) < 1e-10) {
            found.push(Point::new(&coords));
            if found.len() == count {
                break;
            }
        }
        for i in 0..dim {
            m[i] += 1;
            if m[i] <= reach {
                continue 'outer;
            }
            m[i] = -reach;
        }
        break;
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn make_map_examples() {
        let m = make_map(&MapSpec::circle(2)).unwrap();
        assert!(close(m.eval(&0.3.into()).x(), 0.6, 1e-15));
        let pm = make_map(&MapSpec::PomeauManneville { alpha: 0.5 }).unwrap();
        let expected = 0.25 + 2f64.sqrt() * 0.25f64.powf(1.5);
        assert!(close(pm.eval(&0.25.into()).x(), expected, 1e-15));
        assert!(close(expected, 0.426776, 1e-6));
        let cat = make_map(&MapSpec::TorusEndo {
            matrix: vec![vec![2, 1], vec![1, 1]],
        });
        assert!(matches!(cat, Err(NaifsError::Construction(_))));
    }

    #[test]
    fn construction_errors() {
        for spec in [
            MapSpec::PomeauManneville { alpha: 0.0 },
            MapSpec::PomeauManneville { alpha: 1.0 },
            MapSpec::CircleAffine { k: 0, b: 0.0 },
            MapSpec::TorusEndo {
                matrix: vec![vec![2, 4], vec![1, 2]],
            },
            MapSpec::IntervalAffine { a: 1.0, b: 0.5 },
            MapSpec::Tabulated {
                values: vec![0.0, 0.8, 0.2],
            },
        ] {
            assert!(make_map(&spec).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn derivative_examples() {
        let m = make_map(&MapSpec::circle(3)).unwrap();
        assert_eq!(m.derivative(&0.7.into()).unwrap()[(0, 0)], 3.0);
        let pm = make_map(&MapSpec::PomeauManneville { alpha: 0.5 }).unwrap();
        let d = pm.derivative(&0.25.into()).unwrap()[(0, 0)];
        assert!(close(d, 1.0 + 1.5 * 2f64.sqrt() * 0.5, 1e-14));
        assert!(close(d, 2.0606, 1e-4));
        assert!(matches!(
            pm.derivative(&0.5.into()),
            Err(NaifsError::NonDifferentiable(_))
        ));
        let t = make_map(&MapSpec::TorusEndo {
            matrix: vec![vec![2, 1], vec![0, 3]],
        })
        .unwrap();
        let j = t.derivative(&Point::new(&[0.1, 0.2])).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]));
    }

    #[test]
    fn inverse_branch_examples() {
        let m = make_map(&MapSpec::circle(2)).unwrap();
        let pre: Vec<f64> = m
            .inverse_branches(&0.5.into())
            .unwrap()
            .iter()
            .map(|p| p.x())
            .collect();
        assert_eq!(pre, vec![0.25, 0.75]);
        let m = make_map(&MapSpec::circle(3)).unwrap();
        let pre: Vec<f64> = m
            .inverse_branches(&0.0.into())
            .unwrap()
            .iter()
            .map(|p| p.x())
            .collect();
        assert_eq!(pre.len(), 3);
        assert!(close(pre[1], 1.0 / 3.0, 1e-15) && close(pre[2], 2.0 / 3.0, 1e-15));
        let t = make_map(&MapSpec::TorusEndo {
            matrix: vec![vec![2, 0], vec![0, 2]],
        })
        .unwrap();
        let pre = t.inverse_branches(&Point::new(&[0.5, 0.5])).unwrap();
        let coords: Vec<Vec<f64>> = pre.iter().map(|p| p.coords().to_vec()).collect();
        assert_eq!(
            coords,
            vec![
                vec![0.25, 0.25],
                vec![0.25, 0.75],
                vec![0.75, 0.25],
                vec![0.75, 0.75]
            ]
        );
        let sq = make_map(&MapSpec::Power { p: 2.0 }).unwrap();
        assert!(matches!(
            sq.inverse_branches(&0.5.into()),
            Err(NaifsError::Unsupported(_))
        ));
    }

    #[test]
    fn expanding_metadata() {
        let m = make_map(&MapSpec::circle(4)).unwrap();
        let e = m.meta().expanding.clone().unwrap();
        assert_eq!((e.sigma, e.rho, e.branches), (4.0, 1.0 / 16.0, 4));
        assert!(make_map(&MapSpec::circle(1)).unwrap().meta().expanding.is_none());
        let t = make_map(&MapSpec::TorusEndo {
            matrix: vec![vec![2, 0], vec![0, 2]],
        })
        .unwrap();
        let e = t.meta().expanding.clone().unwrap();
        assert_eq!((e.sigma, e.rho, e.branches), (2.0, 1.0 / 8.0, 4));
    }

    #[test]
    fn pomeau_manneville_is_glued_at_half() {
        let pm = make_map(&MapSpec::PomeauManneville { alpha: 0.3 }).unwrap();
        let left = pm.eval(&(0.5 - 1e-13).into()).x();
        let right = pm.eval(&0.5.into()).x();
        assert!(Space::Circle.dist(&[left], &[right]) < 1e-12);
        assert_eq!(pm.eval(&0.0.into()).x(), 0.0);
        for i in 0..1000 {
            let x = i as f64 / 1000.0;
            if x != 0.5 {
                assert!(pm.derivative(&x.into()).unwrap()[(0, 0)] >= 1.0);
            }
        }
    }

    #[test]
    fn monotone_scan() {
        for spec in [
            MapSpec::Power { p: 2.0 },
            MapSpec::Power { p: 3.5 },
            MapSpec::HalfShift { c: 0.3 },
            MapSpec::IntervalAffine { a: 1.0 / 1.3, b: 0.3 / 1.3 },
            MapSpec::Tabulated {
                values: vec![0.0, 0.1, 0.7, 1.0],
            },
        ] {
            let m = make_map(&spec).unwrap();
            assert!(m.meta().monotone);
            let ys: Vec<f64> = (0..=10_000)
                .map(|i| m.eval(&(i as f64 / 10_000.0).into()).x())
                .collect();
            let up = ys.windows(2).all(|w| w[0] <= w[1]);
            let down = ys.windows(2).all(|w| w[0] >= w[1]);
            assert!(up || down, "{spec:?}");
        }
    }

    #[test]
    fn composite_matches_sequential_application() {
        let two = make_map(&MapSpec::circle(2)).unwrap();
        let three = make_map(&MapSpec::circle(3)).unwrap();
        let c = MapRef::compose(&[two.clone(), three.clone()]);
        let x = Point::scalar(0.1234);
        assert_eq!(c.eval(&x), three.eval(&two.eval(&x)));
        assert_eq!(c.lipschitz(), 6.0);
        assert_eq!(c.meta().expanding.as_ref().unwrap().branches, 6);
        let pre = c.inverse_branches(&0.3.into()).unwrap();
        assert_eq!(pre.len(), 6);
        for p in &pre {
            assert!(Space::Circle.dist(c.eval(p).coords(), &[0.3]) < 1e-12);
        }
        let z = c.local_inverse(&[0.1234], &[c.eval(&x).x() + 0.01]).unwrap();
        assert!(close(z.x(), 0.1234 + 0.01 / 6.0, 1e-12));
    }

    proptest! {
        #[test]
        fn branches_are_preimages(y in 0.0f64..1.0, k in 1u32..6, alpha in 0.05f64..0.95) {
            let maps = [
                make_map(&MapSpec::CircleAffine { k, b: 0.17 }).unwrap(),
                make_map(&MapSpec::PomeauManneville { alpha }).unwrap(),
            ];
            for m in &maps {
                for p in m.inverse_branches(&y.into()).unwrap() {
                    prop_assert!(Space::Circle.dist(m.eval(&p).coords(), &[y]) < 1e-12);
                }
            }
        }

        #[test]
        fn torus_branches_are_preimages(y0 in 0.0f64..1.0, y1 in 0.0f64..1.0) {
            let t = make_map(&MapSpec::TorusEndo { matrix: vec![vec![3, 1], vec![1, 2]] });
            // eigenvalues (5 ± √5)/2 > 1, but the sup-metric expansion is
            // 1/‖A^{-1}‖∞ = 5/4, so this one is admissible.
            let t = t.unwrap();
            let y = Point::new(&[y0, y1]);
            let pre = t.inverse_branches(&y).unwrap();
            prop_assert_eq!(pre.len(), 5);
            let s = Space::torus(2).unwrap();
            for p in pre {
                prop_assert!(s.dist(t.eval(&p).coords(), y.coords()) < 1e-12);
            }
        }

        #[test]
        fn circle_affine_expands_locally(x in 0.0f64..1.0, t in -1.0f64..1.0, k in 2u32..7) {
            let m = make_map(&MapSpec::circle(k)).unwrap();
            let rho = m.meta().expanding.as_ref().unwrap().rho;
            let y = wrap_unit(x + t * rho * 0.999);
            let d = Space::Circle.dist(&[x], &[y]);
            let fd = Space::Circle.dist(m.eval(&x.into()).coords(), m.eval(&y.into()).coords());
            prop_assert!(fd >= k as f64 * d - 1e-12);
        }
    }
}
