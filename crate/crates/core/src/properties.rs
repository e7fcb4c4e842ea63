//! Specification tracing through inverse branches, topological-exactness
//! constants, and expansivity certificates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, NaifsError, Result};
use crate::maps::MapSpec;
use crate::spaces::{Grid, Point, Space};
use crate::system::{derive_seed, NaifsSchedule, Word};

const LOG_SLACK: f64 = 1e-9;

/// Most sampled points allowed in one ball-image test.
pub const IMAGE_SAMPLE_LIMIT: usize = 1 << 22;

fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(NaifsError::Precondition(msg.into()))
}

fn require_expanding(s: &NaifsSchedule) -> Result<(f64, f64)> {
    s.expansion_constants().ok_or_else(|| {
        NaifsError::Precondition("the schedule is not uniformly expanding".into())
    })
}

/// `ceil(log_σ(x))`, tolerant of rounding at exact powers.
fn ceil_log(x: f64, sigma: f64) -> usize {
    let v = (x.ln() / sigma.ln() - LOG_SLACK).ceil();
    v.max(0.0) as usize
}

/// Smallest degree when every map is an expanding circle map `kx + b`.
fn circle_affine_sigma(s: &NaifsSchedule) -> Option<f64> {
    s.all_maps()
        .map(|m| match m.spec() {
            MapSpec::CircleAffine { k, .. } if *k >= 2 => Some(*k as f64),
            _ => None,
        })
        .try_fold(f64::INFINITY, |acc, k| k.map(|k| acc.min(k)))
}

fn is_pomeau_manneville(spec: &MapSpec) -> bool {
    matches!(spec, MapSpec::PomeauManneville { .. })
}

/// `ceil(log_σ(1/(2δ))) + 1` for schedules of expanding circle maps.
pub fn analytic_exactness(s: &NaifsSchedule, delta: f64) -> Option<usize> {
    let sigma = circle_affine_sigma(s)?;
    Some(ceil_log(1.0 / (2.0 * delta), sigma) + 1)
}

/// Smallest expansion `1/‖Df(x)⁻¹‖` over sampled diagonal points at
/// distance at least `delta` from `0`, across all maps.
pub fn measured_expansion(s: &NaifsSchedule, delta: f64, samples: usize) -> Result<f64> {
    let space = s.space();
    let mut worst = f64::INFINITY;
    for m in s.all_maps() {
        for i in 0..samples {
            let t = (i as f64 + 0.5) / samples as f64;
            if space.coord_dist(t, 0.0) < delta {
                continue;
            }
            let x = Point::new(&vec![t; space.dim()]);
            let jac = match m.derivative(&x) {
                Ok(j) => j,
                Err(NaifsError::NonDifferentiable(_)) => continue,
                Err(e) => return Err(e),
            };
            let inv = jac.try_inverse().ok_or_else(|| {
                NaifsError::Precondition(format!("singular derivative at {t}"))
            })?;
            let norm = inv
                .row_iter()
                .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max);
            worst = worst.min(1.0 / norm);
        }
    }
    Ok(worst)
}

/// Whether `φ_w(B(center, delta))` meets every grid cell. The ball is
/// sampled at spacing `h / (2 L)`, `L` the Lipschitz bound of the word.
pub fn ball_image_is_dense(s: &NaifsSchedule, g: &Grid, w: &Word, center: &[f64], delta: f64) -> Result<bool> {
    let space = s.space();
    let dim = space.dim();
    let lip: f64 = (0..w.len()).map(|i| s.word_map(w, i).lipschitz()).product();
    let step = g.spacing() / (2.0 * lip.max(1.0));
    let per_axis = ((2.0 * delta / step).ceil() as usize).max(1);
    let total = per_axis.checked_pow(dim as u32).filter(|&t| t <= IMAGE_SAMPLE_LIMIT);
    let total = total.ok_or(NaifsError::ComplexityGuard {
        size: per_axis.saturating_pow(dim as u32),
        limit: IMAGE_SAMPLE_LIMIT,
    })?;
    let mut hit = vec![false; g.len()];
    let mut x = vec![0.0; dim];
    let mut orbit = vec![0.0; (w.len() + 1) * dim];
    for flat in 0..total {
        let mut rem = flat;
        for c in (0..dim).rev() {
            let i = rem % per_axis;
            rem /= per_axis;
            x[c] = center[c] - delta + (i as f64 + 0.5) * (2.0 * delta / per_axis as f64);
        }
        if space.is_periodic() {
            space.canonicalize(&mut x);
        } else if x.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
            continue;
        }
        if space.dist(&x, center) >= delta {
            continue;
        }
        s.orbit_into(w, w.len(), &x, &mut orbit);
        hit[g.nearest_index(&orbit[w.len() * dim..])] = true;
    }
    Ok(hit.into_iter().all(|b| b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactnessConstant {
    pub delta: f64,
    /// `N(δ)` to use for gaps.
    pub n: usize,
    /// Smallest `n` at which every tested ball image was dense.
    pub empirical: usize,
    /// Closed form for expanding circle maps.
    pub analytic: Option<usize>,
    /// Smallest measured `|f'|` away from `0`.
    pub sigma_measured: f64,
    pub centers: usize,
    pub words_per_level: usize,
    pub mesh: f64,
}

/// Topological-exactness constant `N(δ)`: the smallest `n <= cap` such that
/// the image of every sampled ball `B(x, δ)` under every tested word of
/// length `n` is dense at grid resolution. Schedules of expanding circle
/// maps also report the closed form and require the two to agree; the
/// returned `n` is the closed form when available, else the measured value
/// plus one.
pub fn exactness_n(
    s: &NaifsSchedule,
    delta: f64,
    g: &Grid,
    cap: usize,
    budget: usize,
    seed: u64,
) -> Result<ExactnessConstant> {
    if !(delta > 0.0 && delta < 0.5) {
        return invalid(format!("delta must lie in (0, 1/2), got {delta}"));
    }
    if g.space() != s.space() {
        return invalid("grid and schedule live on different spaces");
    }
    if !s.all_maps().all(|m| m.is_expanding() || is_pomeau_manneville(m.spec())) {
        return precondition("the schedule is not uniformly expanding");
    }
    let stride = (g.len() / 32).max(1);
    let centers: Vec<usize> = (0..g.len()).step_by(stride).collect();
    let mut found = None;
    for n in 1..=cap {
        let mut dense = true;
        'levels: for m in 1..=s.distinct_levels() {
            let ens = s.words(m, n, budget, derive_seed(seed, "exactness", (n * 4096 + m) as u64))?;
            for w in ens.iter() {
                for &c in &centers {
                    if !ball_image_is_dense(s, g, &w, g.coords(c), delta)? {
                        dense = false;
                        break 'levels;
                    }
                }
            }
        }
        if dense {
            found = Some(n);
            break;
        }
    }
    let empirical = found.ok_or_else(|| {
        NaifsError::NotExact(format!("ball images of radius {delta} not dense up to n = {cap}"))
    })?;
    let analytic = analytic_exactness(s, delta);
    if let Some(a) = analytic {
        if empirical > a {
            return Err(NaifsError::NotExact(format!(
                "measured N = {empirical} exceeds the closed form {a}"
            )));
        }
    }
    Ok(ExactnessConstant {
        delta,
        n: analytic.unwrap_or(empirical + 1),
        empirical,
        analytic,
        sigma_measured: measured_expansion(s, delta, 1000)?,
        centers: centers.len(),
        words_per_level: budget,
        mesh: g.spacing(),
    })
}

/// The inverse branch `h_{w,x}`: the preimage `z` of `y` under `φ_w` whose
/// orbit shadows that of `x`, contracting by `σ⁻¹` per step backwards.
pub fn inverse_branch_compose(s: &NaifsSchedule, w: &Word, x: &Point, y: &Point) -> Result<Point> {
    let (_, rho) = require_expanding(s)?;
    let orbit = s.orbit(w, x)?;
    let space = s.space();
    space.check(y)?;
    let d = space.distance(y, orbit.last().unwrap())?;
    if !(d < rho) {
        return Err(NaifsError::Domain(format!(
            "target is {d} from the orbit end, outside the injectivity radius {rho}"
        )));
    }
    let mut z = y.clone();
    for i in (0..w.len()).rev() {
        z = s.word_map(w, i).local_inverse(orbit[i].coords(), z.coords())?;
    }
    Ok(z)
}

/// Orbit segments to shadow: target `x_m` over times `j_m..=k_m` along
/// `word` (from level 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecInstance {
    pub word: Word,
    pub targets: Vec<Point>,
    pub windows: Vec<(usize, usize)>,
    pub delta: f64,
}

impl SpecInstance {
    pub fn validate(&self, s: &NaifsSchedule) -> Result<()> {
        s.check_word(&self.word)?;
        if self.word.start != 1 {
            return invalid("specification words start at level 1");
        }
        if self.targets.is_empty() || self.targets.len() != self.windows.len() {
            return invalid("need one window per target and at least one target");
        }
        if !(self.delta > 0.0) {
            return invalid("delta must be positive");
        }
        if self.windows[0].0 != 0 {
            return invalid("the first window starts at time 0");
        }
        for (m, &(j, k)) in self.windows.iter().enumerate() {
            if j > k {
                return invalid(format!("window {m} has j > k"));
            }
            if m > 0 && j <= self.windows[m - 1].1 {
                return invalid(format!("window {m} overlaps its predecessor"));
            }
        }
        if self.windows.last().unwrap().1 > self.word.len() {
            return invalid("the word does not reach the last window");
        }
        for t in &self.targets {
            s.space().check(t)?;
        }
        Ok(())
    }

    /// `j_{m+1} − k_m` for consecutive windows.
    pub fn gaps(&self) -> Vec<usize> {
        self.windows.windows(2).map(|p| p[1].0 - p[0].1).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub delta: f64,
    /// Largest `d(φ^{1,i}(x), φ^{1,i}(x_m))` over each window.
    pub window_errors: Vec<f64>,
    pub max_error: f64,
    pub pass: bool,
}

/// Tracing errors of `x` against every window of `inst`.
pub fn verify_trace(s: &NaifsSchedule, inst: &SpecInstance, x: &Point) -> Result<TraceReport> {
    inst.validate(s)?;
    let space = s.space();
    let end = inst.windows.last().unwrap().1;
    let w = inst.word.prefix(end);
    let dim = space.dim();
    let mut ox = vec![0.0; (end + 1) * dim];
    let mut ot = vec![0.0; (end + 1) * dim];
    s.orbit_into(&w, end, x.coords(), &mut ox);
    let mut window_errors = Vec::with_capacity(inst.targets.len());
    for (t, &(j, k)) in inst.targets.iter().zip(&inst.windows) {
        s.orbit_into(&w, k, t.coords(), &mut ot);
        let e = (j..=k)
            .map(|i| space.dist(&ox[i * dim..(i + 1) * dim], &ot[i * dim..(i + 1) * dim]))
            .fold(0.0, f64::max);
        window_errors.push(e);
    }
    let max_error = window_errors.iter().copied().fold(0.0, f64::max);
    Ok(TraceReport {
        delta: inst.delta,
        window_errors,
        max_error,
        pass: max_error <= inst.delta,
    })
}

/// Gap length required before tracing: the closed form when available,
/// otherwise the measured exactness constant.
pub fn required_gap(s: &NaifsSchedule, delta: f64, g: &Grid, seed: u64) -> Result<usize> {
    match analytic_exactness(s, delta) {
        Some(n) => Ok(n),
        None => Ok(exactness_n(s, delta, g, 32, 64, seed)?.n),
    }
}

/// Builds a point shadowing every window of `inst`, working backwards from
/// the last target: across each gap a grid point near the previous window's
/// end is refined onto an exact preimage of the current point, which is
/// then pulled back through the window along the target's inverse branch.
pub fn trace_specification(s: &NaifsSchedule, g: &Grid, inst: &SpecInstance) -> Result<Point> {
    let (_, rho) = require_expanding(s)?;
    inst.validate(s)?;
    if g.space() != s.space() {
        return invalid("grid and schedule live on different spaces");
    }
    let need = required_gap(s, inst.delta, g, 0)?;
    if let Some((m, &gap)) = inst.gaps().iter().enumerate().find(|(_, &gap)| gap < need) {
        return precondition(format!(
            "gap {m} has length {gap}, shorter than the exactness constant {need}"
        ));
    }
    let space = s.space();
    let radius = inst.delta.min(rho);
    let w = &inst.word;
    let last = inst.targets.len() - 1;
    let (j_last, _) = inst.windows[last];
    // Point at time j_{m+1} being pulled back.
    let mut z = s.apply_word(w, j_last, &inst.targets[last])?;
    for m in (0..last).rev() {
        let (j, k) = inst.windows[m];
        let next_j = inst.windows[m + 1].0;
        let start = s.apply_word(w, j, &inst.targets[m])?;
        let window = Word::new(w.start + j, w.symbols[j..k].to_vec());
        let gap = Word::new(w.start + k, w.symbols[k..next_j].to_vec());
        let end = s.apply_word(&window, k - j, &start)?;
        let u = pull_across_gap(s, g, &gap, &end, &z, radius).ok_or_else(|| {
            NaifsError::Resolution(format!(
                "no preimage within {radius} of window {m}'s end across gap [{k}, {next_j}]"
            ))
        })?;
        z = inverse_branch_compose(s, &window, &start, &u)?;
        space.check(&z)?;
    }
    let report = verify_trace(s, inst, &z)?;
    if !report.pass {
        return Err(NaifsError::Resolution(format!(
            "constructed point misses by {} > {}",
            report.max_error, inst.delta
        )));
    }
    Ok(z)
}

/// A point `u` with `d(u, anchor) < radius` and `φ_gap(u) = target`: grid
/// points of the ball ranked by how close their image lands, each refined by
/// the inverse branch through it.
fn pull_across_gap(s: &NaifsSchedule, g: &Grid, gap: &Word, anchor: &Point, target: &Point, radius: f64) -> Option<Point> {
    let space = s.space();
    let (_, rho) = s.expansion_constants()?;
    let ball = g.ball_indices(anchor, radius).ok()?;
    let mut ranked: Vec<(f64, usize)> = ball
        .iter()
        .filter_map(|&i| {
            let y = s.apply_word(gap, gap.len(), &g.point(i)).ok()?;
            Some((space.dist(y.coords(), target.coords()), i))
        })
        .filter(|&(d, _)| d < rho)
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().find_map(|(_, i)| {
        let u = inverse_branch_compose(s, gap, &g.point(i), target).ok()?;
        (space.dist(u.coords(), anchor.coords()) < radius).then_some(u)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefutationReport {
    pub candidates: usize,
    pub passing: usize,
    /// Smallest `max_error` over all candidates.
    pub best_error: f64,
}

/// Runs `verify_trace` on every grid point.
pub fn refute_specification(s: &NaifsSchedule, g: &Grid, inst: &SpecInstance) -> Result<RefutationReport> {
    inst.validate(s)?;
    let mut passing = 0;
    let mut best_error = f64::INFINITY;
    for i in 0..g.len() {
        let r = verify_trace(s, inst, &g.point(i))?;
        passing += r.pass as usize;
        best_error = best_error.min(r.max_error);
    }
    Ok(RefutationReport {
        candidates: g.len(),
        passing,
        best_error,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateMethod {
    /// From the expansion constants of a uniformly expanding schedule.
    Analytic,
    /// From a bounded random scan; holds only at the stamped scale.
    EmpiricalScan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanStamp {
    pub pairs: usize,
    pub k_cap: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub gamma: f64,
    pub k0: usize,
    pub x: Point,
    pub y: Point,
    pub word: Word,
    pub bowen: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansivityCertificate {
    pub delta: f64,
    /// `(γ, k₀(γ))`.
    pub gamma_table: Vec<(f64, usize)>,
    pub method: CertificateMethod,
    pub system_hash: String,
    pub scan: Option<ScanStamp>,
    /// Violations seen below the certified `k₀`.
    pub counterexamples: Vec<Counterexample>,
}

impl ExpansivityCertificate {
    pub fn k0(&self, gamma: f64) -> Option<usize> {
        self.gamma_table.iter().find(|(g, _)| *g == gamma).map(|&(_, k)| k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub pairs: usize,
    pub k_cap: usize,
    pub seed: u64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            pairs: 2000,
            k_cap: 12,
            seed: 0,
        }
    }
}

fn random_point(space: Space, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..space.dim()).map(|_| rng.random::<f64>()).collect()
}

/// A point at distance exactly `d` from `x` in the sup metric, if one fits.
fn point_at(space: Space, x: &[f64], d: f64, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    let dim = space.dim();
    let axis = rng.random_range(0..dim);
    let mut y: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let off = if i == axis { d } else { d * rng.random_range(-1.0..=1.0) };
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            c + sign * off
        })
        .collect();
    if space.is_periodic() {
        space.canonicalize(&mut y);
    } else {
        for (yi, &xi) in y.iter_mut().zip(x) {
            if !(0.0..=1.0).contains(yi) {
                *yi = 2.0 * xi - *yi;
            }
        }
        if y.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return None;
        }
    }
    let actual = space.dist(x, &y);
    ((actual - d).abs() < 1e-12).then_some(y)
}

fn random_word(s: &NaifsSchedule, n: usize, rng: &mut ChaCha8Rng) -> Word {
    let m = rng.random_range(1..=s.distinct_levels());
    let symbols = (0..n).map(|i| rng.random_range(0..s.level_size(m + i) as u32)).collect();
    Word::new(m, symbols)
}

/// Pairs with `d(x, y) >= gamma`: half uniform, half at distance in
/// `[gamma, gamma + delta]`.
fn sample_pair(space: Space, gamma: f64, delta: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    loop {
        let x = random_point(space, rng);
        if rng.random::<bool>() {
            let y = random_point(space, rng);
            if space.dist(&x, &y) >= gamma {
                return (x, y);
            }
        } else {
            let d = gamma + delta * rng.random::<f64>();
            if let Some(y) = point_at(space, &x, d, rng) {
                return (x, y);
            }
        }
    }
}

/// Certifies that `γ`-separated points become `δ`-separated in every Bowen
/// metric of length at least `k₀(γ)`.
///
/// Uniformly expanding schedules get `δ := min(δ, ρ)` and
/// `k₀ = ceil(log_σ(δ/γ)) + 1`; other schedules are scanned for the first
/// `k₀ <= k_cap` without a violation among random pairs and words.
pub fn expansivity_check(
    s: &NaifsSchedule,
    delta: f64,
    gammas: &[f64],
    scan: ScanOptions,
) -> Result<ExpansivityCertificate> {
    if !(delta > 0.0) {
        return invalid("delta must be positive");
    }
    if gammas.is_empty() || gammas.iter().any(|g| !(*g > 0.0)) {
        return invalid("need at least one positive gamma");
    }
    if let Some((sigma, rho)) = s.expansion_constants() {
        let delta = delta.min(rho);
        let gamma_table = gammas
            .iter()
            .map(|&g| (g, ceil_log(delta / g, sigma) + 1))
            .collect();
        return Ok(ExpansivityCertificate {
            delta,
            gamma_table,
            method: CertificateMethod::Analytic,
            system_hash: s.system_hash(),
            scan: None,
            counterexamples: Vec::new(),
        });
    }
    if scan.pairs == 0 || scan.k_cap == 0 {
        return invalid("the scan needs pairs and k_cap of at least 1");
    }
    let space = s.space();
    let mut gamma_table = Vec::with_capacity(gammas.len());
    let mut counterexamples = Vec::new();
    for (gi, &gamma) in gammas.iter().enumerate() {
        let mut certified = None;
        let mut last_violation = None;
        for k0 in 1..=scan.k_cap {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                scan.seed,
                "expansivity",
                (gi * 1024 + k0) as u64,
            ));
            let violation = (0..scan.pairs).find_map(|_| {
                let (x, y) = sample_pair(space, gamma, delta, &mut rng);
                let w = random_word(s, k0, &mut rng);
                let (px, py) = (Point::new(&x), Point::new(&y));
                let b = s.bowen_distance(&w, k0, &px, &py).ok()?;
                (b <= delta).then_some(Counterexample {
                    gamma,
                    k0,
                    x: px,
                    y: py,
                    word: w,
                    bowen: b,
                })
            });
            match violation {
                Some(c) => last_violation = Some(c),
                None => {
                    certified = Some(k0);
                    break;
                }
            }
        }
        match certified {
            Some(k0) => {
                gamma_table.push((gamma, k0));
                counterexamples.extend(last_violation);
            }
            None => {
                let c = last_violation.expect("violation recorded");
                return Err(NaifsError::NotExpansive(format!(
                    "gamma = {gamma}: pair ({:?}, {:?}) stays within {delta} (bowen {}) for k0 up to {} \
                     ({} pairs per k0, seed {})",
                    c.x.coords(),
                    c.y.coords(),
                    c.bowen,
                    scan.k_cap,
                    scan.pairs,
                    scan.seed
                )));
            }
        }
    }
    Ok(ExpansivityCertificate {
        delta,
        gamma_table,
        method: CertificateMethod::EmpiricalScan,
        system_hash: s.system_hash(),
        scan: Some(ScanStamp {
            pairs: scan.pairs,
            k_cap: scan.k_cap,
            seed: scan.seed,
        }),
        counterexamples,
    })
}

/// Violations of the certificate among `pairs` random pairs per `γ`, each
/// with a random word of length `k₀(γ)`.
pub fn certificate_spot_check(s: &NaifsSchedule, cert: &ExpansivityCertificate, pairs: usize, seed: u64) -> Result<usize> {
    if cert.system_hash != s.system_hash() {
        return precondition("the certificate belongs to a different system");
    }
    let space = s.space();
    let mut failures = 0;
    for (gi, &(gamma, k0)) in cert.gamma_table.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "spot_check", gi as u64));
        for _ in 0..pairs {
            let (x, y) = sample_pair(space, gamma, cert.delta, &mut rng);
            let w = random_word(s, k0, &mut rng);
            if s.bowen_distance(&w, k0, &Point::new(&x), &Point::new(&y))? <= cert.delta {
                failures += 1;
            }
        }
    }
    Ok(failures)
}
