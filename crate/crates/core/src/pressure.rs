//! Topological pressure: weighted spanning, separated and cover sums along
//! words, their averages over word ensembles, and rate estimates.

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entropy::{
    candidates, check_lists, closed_adjacency, ensembles, greedy_cover, greedy_separated,
    run_jobs, series_by_eps, table, SpanningMode,
};
use crate::error::{invalid, NaifsError, Result};
use crate::exact;
use crate::fit::{estimate_rate, fit_series, FitPoint, RateEstimate, RateFit, Series};
use crate::index::{BucketIndex, OrbitTable};
use crate::properties::ExpansivityCertificate;
use crate::spaces::{Grid, Space};
use crate::system::{derive_seed, NaifsSchedule, Word};

/// Continuous potentials `ψ : X → ℝ` acting on the first coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Potential {
    Zero,
    Constant { c: f64 },
    /// `cos(2π x₁)`.
    Cos2pi,
    /// `height · max(0, 1 − d(x₁, center)/width)`.
    Hat { center: f64, width: f64, height: f64 },
}

impl Potential {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Potential::Constant { c } if !c.is_finite() => invalid("constant must be finite"),
            Potential::Hat { center, width, height } => {
                if !(width > 0.0) || !center.is_finite() || !height.is_finite() {
                    invalid("hat needs a positive width and finite center and height")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, space: Space, x: &[f64]) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Constant { c } => c,
            Potential::Cos2pi => (2.0 * std::f64::consts::PI * x[0]).cos(),
            Potential::Hat { center, width, height } => {
                height * (1.0 - space.coord_dist(x[0], center) / width).max(0.0)
            }
        }
    }

    /// `‖ψ‖ = sup |ψ|`.
    pub fn sup_bound(&self) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Constant { c } => c.abs(),
            Potential::Cos2pi => 1.0,
            Potential::Hat { height, .. } => height.abs(),
        }
    }

    pub fn lipschitz_bound(&self) -> f64 {
        match *self {
            Potential::Zero | Potential::Constant { .. } => 0.0,
            Potential::Cos2pi => 2.0 * std::f64::consts::PI,
            Potential::Hat { width, height, .. } => height.abs() / width,
        }
    }

    /// Largest observed `|ψ(x) − ψ(y)| / d(x, y)` over `pairs` random pairs.
    pub fn empirical_lipschitz(&self, space: Space, pairs: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = space.dim();
        let mut worst = 0.0f64;
        let (mut x, mut y) = (vec![0.0; d], vec![0.0; d]);
        for _ in 0..pairs {
            x.iter_mut().for_each(|c| *c = rng.random::<f64>());
            y.iter_mut().for_each(|c| *c = rng.random::<f64>());
            let dist = space.dist(&x, &y);
            if dist > 0.0 {
                worst = worst.max((self.evaluate(space, &x) - self.evaluate(space, &y)).abs() / dist);
            }
        }
        worst
    }
}

/// `S_{w,n}ψ(x) = Σ_{j=0}^{n} ψ(φ_w^{m,j}(x))`.
pub fn birkhoff_sum(s: &NaifsSchedule, w: &Word, n: usize, psi: &Potential, x: &[f64]) -> Result<f64> {
    s.check_word(w)?;
    if n > w.len() {
        return invalid(format!("n = {n} exceeds the word length {}", w.len()));
    }
    let space = s.space();
    if x.len() != space.dim() {
        return invalid("point dimension does not match the space");
    }
    let mut orbit = vec![0.0; (n + 1) * x.len()];
    s.orbit_into(w, n, x, &mut orbit);
    Ok(orbit.chunks_exact(x.len()).map(|p| psi.evaluate(space, p)).sum())
}

fn table_sums(t: &OrbitTable, psi: &Potential) -> Vec<f64> {
    let space = t.space();
    (0..t.len())
        .map(|i| (0..t.steps()).map(|j| psi.evaluate(space, t.at(i, j))).sum())
        .collect()
}

/// Which side of the grid-restricted optimum a value lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Exact,
    Upper,
    Lower,
}

/// `Σ_{x∈F} e^{S_{w,n}ψ(x)}` for a chosen set `F`, kept in log space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedSum {
    pub log_value: f64,
    /// `|F|`.
    pub cardinality: usize,
    pub bound: Bound,
}

impl WeightedSum {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

/// `log Σ_{i∈set} e^{lw_i}`, summed in increasing index order.
fn log_sum(lw: &[f64], set: impl Iterator<Item = usize> + Clone) -> f64 {
    let m = set.clone().map(|i| lw[i]).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + set.map(|i| (lw[i] - m).exp()).sum::<f64>().ln()
}

fn mask_sum(lw: &[f64], mask: u32) -> WeightedSum {
    // Normalised weights keep the exact solvers in range; the shift is the
    // same for every subset of one instance.
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|v| (v - m).exp()).collect();
    WeightedSum {
        log_value: m + exact::canonical_sum(mask, &w).ln(),
        cardinality: mask.count_ones() as usize,
        bound: Bound::Exact,
    }
}

fn normalised(lw: &[f64]) -> Vec<f64> {
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    lw.iter().map(|v| (v - m).exp()).collect()
}

fn spanning_inf_on(t: &OrbitTable, lw: &[f64], eps: f64, exact_mode: bool, mode: SpanningMode) -> Result<WeightedSum> {
    if exact_mode {
        let adj = closed_adjacency(t, eps, false)?;
        let mask = exact::min_weight_dominating_set(&adj, &normalised(lw));
        return Ok(mask_sum(lw, mask));
    }
    let sep = greedy_separated(t, eps, 0..t.len());
    let lb = log_sum(lw, sep.iter().copied());
    if mode == SpanningMode::SeparatedBound {
        return Ok(WeightedSum {
            log_value: lb,
            cardinality: sep.len(),
            bound: Bound::Upper,
        });
    }
    let mut a = greedy_cover(t, eps, false, Some(lw));
    a.sort_unstable();
    let la = log_sum(lw, a.iter().copied());
    let (log_value, cardinality) = if la <= lb { (la, a.len()) } else { (lb, sep.len()) };
    Ok(WeightedSum {
        log_value,
        cardinality,
        bound: Bound::Upper,
    })
}

fn separated_sup_on(t: &OrbitTable, lw: &[f64], eps: f64, exact_mode: bool) -> Result<WeightedSum> {
    if exact_mode {
        let adj = closed_adjacency(t, eps, false)?;
        let mask = exact::max_weight_independent_set(&adj, &normalised(lw));
        return Ok(mask_sum(lw, mask));
    }
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&a, &b| lw[b].total_cmp(&lw[a]));
    let mut kept = greedy_separated(t, eps, order.into_iter());
    kept.sort_unstable();
    Ok(WeightedSum {
        log_value: log_sum(lw, kept.iter().copied()),
        cardinality: kept.len(),
        bound: Bound::Lower,
    })
}

fn cover_sum_on(t: &OrbitTable, lw: &[f64], eps: f64) -> WeightedSum {
    let r = eps / 2.0;
    let idx = BucketIndex::full(t, r);
    let ball_max: Vec<f64> = (0..t.len())
        .map(|i| {
            idx.ball(t, i, r, true)
                .iter()
                .map(|&j| lw[j as usize])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let mut chosen = greedy_cover(t, r, true, Some(&ball_max));
    chosen.sort_unstable();
    WeightedSum {
        log_value: log_sum(&ball_max, chosen.iter().copied()),
        cardinality: chosen.len(),
        bound: Bound::Upper,
    }
}

/// `Q_n(Φ; w, ψ, ε)` over spanning sets drawn from the grid: exact minimum
/// over inclusion-minimal spanning sets, or a greedy upper bound.
#[allow(clippy::too_many_arguments)]
pub fn weighted_spanning_inf(
    s: &NaifsSchedule,
    g: &Grid,
    w: &Word,
    n: usize,
    eps: f64,
    psi: &Potential,
    exact_mode: bool,
) -> Result<WeightedSum> {
    let t = table(s, g, None, w, n, eps)?;
    spanning_inf_on(&t, &table_sums(&t, psi), eps, exact_mode, SpanningMode::Search)
}

/// `P_n(Φ; w, ψ, ε)`: exact maximum-weight separated set, or the greedy
/// lower bound scanning points by decreasing weight.
#[allow(clippy::too_many_arguments)]
pub fn weighted_separated_sup(
    s: &NaifsSchedule,
    g: &Grid,
    w: &Word,
    n: usize,
    eps: f64,
    psi: &Potential,
    exact_mode: bool,
) -> Result<WeightedSum> {
    let t = table(s, g, None, w, n, eps)?;
    separated_sup_on(&t, &table_sums(&t, psi), eps, exact_mode)
}

/// `C_n(Φ; w, ψ, ε)` surrogate: greedy cover of the grid by open dynamical
/// `ε/2`-balls, each weighted by `e^{max S_{w,n}ψ}` over its grid points.
pub fn cover_pressure_sum(
    s: &NaifsSchedule,
    g: &Grid,
    w: &Word,
    n: usize,
    eps: f64,
    psi: &Potential,
) -> Result<WeightedSum> {
    let t = table(s, g, None, w, n, eps)?;
    Ok(cover_sum_on(&t, &table_sums(&t, psi), eps))
}

/// Largest `|ψ(φ^j x) − ψ(φ^j y)|` over orbit steps of grid pairs with
/// `d_{w,n}(x, y) <= r`: the oscillation constant for comparing separated and
/// spanning sums at scales `2r` and `r`.
pub fn orbit_oscillation(s: &NaifsSchedule, g: &Grid, w: &Word, n: usize, r: f64, psi: &Potential) -> Result<f64> {
    let t = table(s, g, None, w, n, r)?;
    let space = t.space();
    let idx = BucketIndex::full(&t, r);
    let mut worst = 0.0f64;
    for i in 0..t.len() {
        for j in idx.ball(&t, i, r, false) {
            for k in 0..t.steps() {
                let d = psi.evaluate(space, t.at(i, k)) - psi.evaluate(space, t.at(j as usize, k));
                worst = worst.max(d.abs());
            }
        }
    }
    Ok(worst)
}

/// `Var_{w,n}(ψ, ε)` over grid pairs with `d_{w,n} < ε`: a lower-bound
/// surrogate for the supremum over the space.
pub fn variation(s: &NaifsSchedule, g: &Grid, w: &Word, n: usize, eps: f64, psi: &Potential) -> Result<f64> {
    let t = table(s, g, None, w, n, eps)?;
    let lw = table_sums(&t, psi);
    let idx = BucketIndex::full(&t, eps);
    let mut worst = 0.0f64;
    for i in 0..t.len() {
        idx.for_candidates(&t, i, |j| {
            if t.strictly_within(i, j, eps) {
                worst = worst.max((lw[i] - lw[j]).abs());
            }
            true
        });
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PressureOptions {
    /// How `Q_n` is bounded in heuristic mode.
    pub spanning: SpanningMode,
    /// Exact optimisation (at most 24 grid points).
    pub exact: bool,
    /// Also compute the cover sums `C_n`.
    pub cover: bool,
}

/// `Q_n`, `P_n` and `C_n` averaged over words at one `(eps, n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureRecord {
    pub eps: f64,
    pub n: usize,
    #[serde(with = "crate::bigdec")]
    pub ensemble_size: BigUint,
    pub sampled: bool,
    pub words: usize,
    pub q_mean: f64,
    pub q_stderr: f64,
    pub p_mean: f64,
    pub p_stderr: f64,
    pub c_mean: Option<f64>,
    pub c_stderr: Option<f64>,
    pub log_q_mean: f64,
    pub log_p_mean: f64,
    pub log_c_mean: Option<f64>,
    /// Mean size of the separated sets behind `P_n`.
    pub p_cardinality: f64,
    pub candidates: usize,
    pub mesh: f64,
    pub lipschitz_growth: f64,
    pub worst_lipschitz_growth: f64,
    pub exact: bool,
}

/// Log of the mean of `e^{l_i}` and the relative standard error of that
/// mean (zero unless `sampled`).
fn log_mean_exp(logs: &[f64], sampled: bool) -> (f64, f64) {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let v: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let (mean, se) = crate::entropy::mean_stderr(v.iter().copied(), sampled);
    (m + mean.ln(), se / mean)
}

#[derive(Clone, Debug)]
struct WordPressure {
    q: WeightedSum,
    p: WeightedSum,
    c: Option<WeightedSum>,
}

/// Averages of `Q_n`, `P_n` (and optionally `C_n`) over the word ensembles
/// of `I^{1,n}`, ordered by `eps`, then `n`.
#[allow(clippy::too_many_arguments)]
pub fn averaged_pressure(
    s: &NaifsSchedule,
    g: &Grid,
    eps_list: &[f64],
    n_list: &[usize],
    psi: &Potential,
    budget: usize,
    seed: u64,
    opts: PressureOptions,
) -> Result<Vec<PressureRecord>> {
    check_lists(eps_list, n_list)?;
    psi.validate()?;
    if g.space() != s.space() {
        return invalid("grid and schedule live on different spaces");
    }
    let members = candidates(g, None)?;
    if opts.exact {
        exact::guard(members.len())?;
    }
    let ens = ensembles(s, n_list, budget, seed)?;
    let per_word = run_jobs(&ens, |_, w| {
        let t = OrbitTable::build(s, g, &members, &w, w.len());
        let lw = table_sums(&t, psi);
        eps_list
            .iter()
            .map(|&eps| {
                Ok(WordPressure {
                    q: spanning_inf_on(&t, &lw, eps, opts.exact, opts.spanning)?,
                    p: separated_sup_on(&t, &lw, eps, opts.exact)?,
                    c: opts.cover.then(|| cover_sum_on(&t, &lw, eps)),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out = Vec::with_capacity(eps_list.len() * n_list.len());
    for (k, &eps) in eps_list.iter().enumerate() {
        for (e, &n) in n_list.iter().enumerate() {
            let en = &ens[e];
            let sampled = en.is_sampled();
            let rows: Vec<&WordPressure> = per_word[e].iter().map(|v| &v[k]).collect();
            let logs = |f: &dyn Fn(&WordPressure) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (lq, rq) = log_mean_exp(&logs(&|r| r.q.log_value), sampled);
            let (lp, rp) = log_mean_exp(&logs(&|r| r.p.log_value), sampled);
            let c = opts
                .cover
                .then(|| log_mean_exp(&logs(&|r| r.c.as_ref().unwrap().log_value), sampled));
            let p_cardinality =
                rows.iter().map(|r| r.p.cardinality as f64).sum::<f64>() / rows.len() as f64;
            out.push(PressureRecord {
                eps,
                n,
                ensemble_size: en.ensemble_size().clone(),
                sampled,
                words: en.count(),
                q_mean: lq.exp(),
                q_stderr: lq.exp() * rq,
                p_mean: lp.exp(),
                p_stderr: lp.exp() * rp,
                c_mean: c.map(|(l, _)| l.exp()),
                c_stderr: c.map(|(l, r)| l.exp() * r),
                log_q_mean: lq,
                log_p_mean: lp,
                log_c_mean: c.map(|(l, _)| l),
                p_cardinality,
                candidates: members.len(),
                mesh: g.spacing(),
                lipschitz_growth: crate::entropy::typical_lipschitz_growth(s, en),
                worst_lipschitz_growth: s.lipschitz_growth(1, n),
                exact: opts.exact,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureEstimate {
    /// Rate fit of `log P_n`.
    pub rate: RateEstimate,
    /// Rate fit of `log Q_n`, when it can be formed.
    pub spanning_check: Option<RateEstimate>,
    pub warnings: Vec<String>,
}

impl PressureEstimate {
    pub fn value(&self) -> f64 {
        self.rate.value
    }

    pub fn uncertainty(&self) -> f64 {
        self.rate.uncertainty
    }
}

fn pressure_point(r: &PressureRecord, log_value: f64, log_stderr: f64) -> FitPoint {
    FitPoint {
        n: r.n,
        log_value,
        log_stderr,
        cardinality: r.p_cardinality,
        candidates: r.candidates,
        lipschitz_growth: r.lipschitz_growth,
        worst_lipschitz_growth: r.worst_lipschitz_growth,
        mesh: r.mesh,
    }
}

fn p_series(records: &[PressureRecord]) -> Vec<Series> {
    series_by_eps(
        records,
        |r| r.eps,
        |r| pressure_point(r, r.log_p_mean, r.p_stderr / r.p_mean),
    )
}

/// Rate of `log P_n` with the entropy fit machinery, cross-checked by the
/// rate of `log Q_n`.
pub fn pressure_estimate(records: &[PressureRecord]) -> Result<PressureEstimate> {
    let rate = estimate_rate(&p_series(records))?;
    let q = series_by_eps(
        records,
        |r| r.eps,
        |r| pressure_point(r, r.log_q_mean, r.q_stderr / r.q_mean),
    );
    let mut warnings = rate.warnings.clone();
    let spanning_check = match estimate_rate(&q) {
        Ok(e) => {
            let slack = crate::entropy::rate_slack(e.uncertainty, rate.uncertainty);
            if e.value > rate.value + slack {
                warnings.push(format!(
                    "spanning rate {:.4} exceeds separated rate {:.4}",
                    e.value, rate.value
                ));
            }
            Some(e)
        }
        Err(err) => {
            warnings.push(format!("spanning cross-check unavailable: {err}"));
            None
        }
    };
    Ok(PressureEstimate {
        rate,
        spanning_check,
        warnings,
    })
}

pub const FIXED_SCALE_LABEL: &str = "fixed-scale (valid under delta-expansivity)";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedScaleEstimate {
    pub label: String,
    pub eps: f64,
    pub delta: f64,
    pub value: f64,
    pub uncertainty: f64,
    pub fit: RateFit,
    pub records: Vec<PressureRecord>,
    pub warnings: Vec<String>,
}

/// Growth rate of `log P_n` at the single scale `eps`, read as the pressure
/// when the schedule is certified `delta`-expansive with `eps < delta`.
#[allow(clippy::too_many_arguments)]
pub fn fixed_scale_pressure(
    s: &NaifsSchedule,
    g: &Grid,
    eps: f64,
    delta: f64,
    psi: &Potential,
    n_list: &[usize],
    budget: usize,
    seed: u64,
    certificate: Option<&ExpansivityCertificate>,
) -> Result<FixedScaleEstimate> {
    let cert = certificate.ok_or_else(|| {
        NaifsError::Precondition(
            "fixed-scale pressure needs an expansivity certificate; run the expansivity check first"
                .into(),
        )
    })?;
    if cert.system_hash != s.system_hash() {
        return Err(NaifsError::Precondition(
            "the expansivity certificate belongs to a different system".into(),
        ));
    }
    if !(delta > 0.0 && delta <= cert.delta) {
        return Err(NaifsError::Precondition(format!(
            "delta = {delta} is not covered by the certificate (delta = {})",
            cert.delta
        )));
    }
    if !(eps > 0.0 && eps < delta) {
        return Err(NaifsError::Precondition(format!("need 0 < eps < delta, got eps = {eps}, delta = {delta}")));
    }
    if n_list.len() < 3 {
        return invalid("a fixed-scale fit needs at least three n values");
    }
    let records = averaged_pressure(
        s,
        g,
        &[eps],
        n_list,
        psi,
        budget,
        derive_seed(seed, "fixed_scale", 0),
        PressureOptions {
            spanning: SpanningMode::SeparatedBound,
            ..Default::default()
        },
    )?;
    let series = p_series(&records).pop().expect("one eps");
    let fit = fit_series(&series);
    if fit.window.is_none() {
        return Err(NaifsError::Saturation(format!(
            "fewer than two unsaturated n values at eps = {eps}; refine the grid"
        )));
    }
    let mut warnings = Vec::new();
    if !fit.clean {
        warnings.push(format!(
            "no clean window with three points at eps = {eps}; fit uses n in {:?}",
            fit.window.unwrap()
        ));
    }
    Ok(FixedScaleEstimate {
        label: FIXED_SCALE_LABEL.into(),
        eps,
        delta,
        value: fit.slope,
        uncertainty: fit.stderr,
        fit,
        records,
        warnings,
    })
}
