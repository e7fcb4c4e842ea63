//! Topological entropy from averaged separated and spanning counts.

mod counts;
mod nonwandering;
mod probe;

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fit::{estimate_rate, FitPoint, RateEstimate, Series};
use crate::index::OrbitTable;
use crate::spaces::Grid;
use crate::system::{derive_seed, NaifsSchedule, Word, WordEnsemble};

pub use counts::{
    cover_count, exact_cover_count, exact_spanning_count, separated_count, separated_set,
    spanning_count,
};
pub(crate) use counts::{candidates, closed_adjacency, greedy_cover, greedy_separated, table};
pub use nonwandering::{nonwandering_set, NonwanderingResult};
pub use probe::{entropy_point_probe, ProbeResult};

pub type EntropyEstimate = RateEstimate;

/// How `R_n` is bounded in the averaged counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanningMode {
    /// Smaller of a greedy set cover and the maximal separated set.
    #[default]
    Search,
    /// The maximal separated set alone (it spans).
    SeparatedBound,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountOptions {
    pub spanning: SpanningMode,
    /// Exhaustive optimisation instead of greedy bounds (small candidate sets
    /// only).
    pub exact: bool,
    /// Also compute the open-ball cover surrogate.
    pub cover: bool,
    /// Keep the per-word counts in each record.
    pub keep_per_word: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordCounts {
    pub symbols: Vec<u32>,
    pub separated: usize,
    pub spanning: usize,
    pub cover: Option<usize>,
}

/// `S_n` and `R_n` at one `(eps, n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub eps: f64,
    pub n: usize,
    #[serde(with = "crate::bigdec")]
    pub ensemble_size: BigUint,
    pub sampled: bool,
    /// Words actually evaluated.
    pub words: usize,
    pub s_mean: f64,
    pub s_stderr: f64,
    pub r_mean: f64,
    pub r_stderr: f64,
    pub cover_mean: Option<f64>,
    pub candidates: usize,
    pub mesh: f64,
    /// Geometric mean over the evaluated words of their Lipschitz products.
    pub lipschitz_growth: f64,
    /// Largest Lipschitz product over `I^{1,n}`.
    pub worst_lipschitz_growth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_word: Option<Vec<WordCounts>>,
}

/// Mean and standard error of the mean (zero unless `sampled`).
pub(crate) fn mean_stderr(values: impl Iterator<Item = f64> + Clone, sampled: bool) -> (f64, f64) {
    let k = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / k;
    if !sampled || k < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

pub(crate) fn check_lists(eps_list: &[f64], n_list: &[usize]) -> Result<()> {
    if eps_list.is_empty() || n_list.is_empty() {
        return invalid("eps and n lists must be nonempty");
    }
    if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return invalid(format!("eps must be positive, got {e}"));
    }
    Ok(())
}

/// Word ensembles of `I^{1,n}` for each `n`, with sub-seeds split from
/// `seed`.
pub(crate) fn ensembles(
    s: &NaifsSchedule,
    n_list: &[usize],
    budget: usize,
    seed: u64,
) -> Result<Vec<WordEnsemble>> {
    n_list
        .iter()
        .map(|&n| s.words(1, n, budget, derive_seed(seed, "words", n as u64)))
        .collect()
}

/// Geometric mean over the ensemble's words of `∏ Lip(φ_{w_i})`.
pub(crate) fn typical_lipschitz_growth(s: &NaifsSchedule, en: &WordEnsemble) -> f64 {
    let total: f64 = en
        .iter()
        .map(|w| (0..w.len()).map(|i| s.word_map(&w, i).lipschitz().ln()).sum::<f64>())
        .sum();
    (total / en.count() as f64).exp()
}

/// Flattened `(ensemble, word)` jobs, evaluated in parallel and returned in
/// job order.
pub(crate) fn run_jobs<T: Send>(
    ens: &[WordEnsemble],
    f: impl Fn(usize, Word) -> Result<T> + Sync,
) -> Result<Vec<Vec<T>>> {
    let jobs: Vec<(usize, usize)> = ens
        .iter()
        .enumerate()
        .flat_map(|(e, en)| (0..en.count()).map(move |i| (e, i)))
        .collect();
    let results: Vec<Result<T>> = jobs
        .par_iter()
        .map(|&(e, i)| f(e, ens[e].word(i)))
        .collect();
    let mut out: Vec<Vec<T>> = ens.iter().map(|en| Vec::with_capacity(en.count())).collect();
    for (&(e, _), r) in jobs.iter().zip(results) {
        out[e].push(r?);
    }
    Ok(out)
}

fn word_counts(
    s: &NaifsSchedule,
    g: &Grid,
    members: &[usize],
    w: &Word,
    eps_list: &[f64],
    opts: CountOptions,
) -> Result<Vec<WordCounts>> {
    let t = OrbitTable::build(s, g, members, w, w.len());
    eps_list
        .iter()
        .map(|&eps| {
            let (separated, spanning) = if opts.exact {
                let adj = closed_adjacency(&t, eps, false)?;
                (
                    crate::exact::max_independent_set(&adj).count_ones() as usize,
                    crate::exact::min_dominating_set(&adj).count_ones() as usize,
                )
            } else {
                let sep = greedy_separated(&t, eps, 0..t.len()).len();
                match opts.spanning {
                    SpanningMode::Search => (sep, greedy_cover(&t, eps, false, None).len().min(sep)),
                    SpanningMode::SeparatedBound => (sep, sep),
                }
            };
            let cover = opts.cover.then(|| greedy_cover(&t, eps, true, None).len());
            Ok(WordCounts {
                symbols: w.symbols.clone(),
                separated,
                spanning,
                cover,
            })
        })
        .collect()
}

/// `S_n(Y; eps)` and `R_n(Y; eps)` for every `eps` and `n`, averaged over all
/// words of `I^{1,n}` when there are at most `budget` of them and over
/// `budget` sampled words otherwise. Records are ordered by `eps`, then `n`,
/// as given.
#[allow(clippy::too_many_arguments)]
pub fn averaged_counts(
    s: &NaifsSchedule,
    g: &Grid,
    y: Option<&[usize]>,
    eps_list: &[f64],
    n_list: &[usize],
    budget: usize,
    seed: u64,
    opts: CountOptions,
) -> Result<Vec<CountRecord>> {
    check_lists(eps_list, n_list)?;
    if g.space() != s.space() {
        return invalid("grid and schedule live on different spaces");
    }
    let members = candidates(g, y)?;
    if opts.exact {
        crate::exact::guard(members.len())?;
    }
    let ens = ensembles(s, n_list, budget, seed)?;
    let per_word = run_jobs(&ens, |_, w| word_counts(s, g, &members, &w, eps_list, opts))?;
    let growth: Vec<f64> = ens.iter().map(|en| typical_lipschitz_growth(s, en)).collect();
    let mut records = Vec::with_capacity(eps_list.len() * n_list.len());
    for (k, &eps) in eps_list.iter().enumerate() {
        for (e, &n) in n_list.iter().enumerate() {
            let en = &ens[e];
            let rows: Vec<&WordCounts> = per_word[e].iter().map(|v| &v[k]).collect();
            let sampled = en.is_sampled();
            let (s_mean, s_stderr) = mean_stderr(rows.iter().map(|r| r.separated as f64), sampled);
            let (r_mean, r_stderr) = mean_stderr(rows.iter().map(|r| r.spanning as f64), sampled);
            let cover_mean = opts
                .cover
                .then(|| mean_stderr(rows.iter().map(|r| r.cover.unwrap() as f64), sampled).0);
            records.push(CountRecord {
                eps,
                n,
                ensemble_size: en.ensemble_size().clone(),
                sampled,
                words: en.count(),
                s_mean,
                s_stderr,
                r_mean,
                r_stderr,
                cover_mean,
                candidates: members.len(),
                mesh: g.spacing(),
                lipschitz_growth: growth[e],
                worst_lipschitz_growth: s.lipschitz_growth(1, n),
                per_word: opts
                    .keep_per_word
                    .then(|| rows.iter().map(|r| (*r).clone()).collect()),
            });
        }
    }
    Ok(records)
}

/// Groups records into one series per `eps` using `value` (a positive
/// average) and its standard error.
pub(crate) fn series_by_eps<R>(
    records: &[R],
    eps: impl Fn(&R) -> f64,
    point: impl Fn(&R) -> FitPoint,
) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for r in records {
        let e = eps(r);
        match out.iter_mut().find(|s| s.eps == e) {
            Some(s) => s.points.push(point(r)),
            None => out.push(Series {
                eps: e,
                points: vec![point(r)],
            }),
        }
    }
    out
}

/// Growth rate of `S_n` per scale, with the value read at the smallest scale
/// whose window passes the saturation and distortion guards.
pub fn entropy_estimate(records: &[CountRecord]) -> Result<EntropyEstimate> {
    let series = series_by_eps(
        records,
        |r| r.eps,
        |r| FitPoint {
            n: r.n,
            log_value: r.s_mean.ln(),
            log_stderr: r.s_stderr / r.s_mean,
            cardinality: r.s_mean,
            candidates: r.candidates,
            lipschitz_growth: r.lipschitz_growth,
            worst_lipschitz_growth: r.worst_lipschitz_growth,
            mesh: r.mesh,
        },
    );
    estimate_rate(&series)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftRate {
    pub k: usize,
    pub estimate: EntropyEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticEstimate {
    pub per_shift: Vec<ShiftRate>,
    /// Estimate at the largest shift.
    pub value: f64,
    pub uncertainty: f64,
    /// No later shift has a rate below an earlier one beyond the slack.
    pub monotone: bool,
    pub violations: Vec<(usize, usize)>,
    /// `value > 3 * uncertainty`.
    pub chaotic: bool,
    pub warnings: Vec<String>,
}

/// Tolerance for comparing two fitted rates.
pub fn rate_slack(u1: f64, u2: f64) -> f64 {
    3.0 * (u1 * u1 + u2 * u2).sqrt() + 1e-9
}

/// Entropy estimates of the shifted systems `Φ_k` for each `k` in `k_list`.
#[allow(clippy::too_many_arguments)]
pub fn asymptotic_entropy(
    s: &NaifsSchedule,
    g: &Grid,
    eps_list: &[f64],
    n_list: &[usize],
    k_list: &[usize],
    budget: usize,
    seed: u64,
    opts: CountOptions,
) -> Result<AsymptoticEstimate> {
    if k_list.is_empty() || k_list.windows(2).any(|p| p[0] >= p[1]) || k_list[0] < 1 {
        return invalid("shifts must be a nonempty increasing list of levels >= 1");
    }
    let mut per_shift = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let shifted = s.shifted(k)?;
        let records = averaged_counts(
            &shifted,
            g,
            None,
            eps_list,
            n_list,
            budget,
            derive_seed(seed, "shift", k as u64),
            opts,
        )?;
        per_shift.push(ShiftRate {
            k,
            estimate: entropy_estimate(&records)?,
        });
    }
    let mut violations = Vec::new();
    let mut warnings = Vec::new();
    for (a, ea) in per_shift.iter().enumerate() {
        for eb in &per_shift[a + 1..] {
            let (x, y) = (&ea.estimate, &eb.estimate);
            if x.value > y.value + rate_slack(x.uncertainty, y.uncertainty) {
                violations.push((ea.k, eb.k));
                warnings.push(format!(
                    "rate at shift {} ({:.4}) exceeds rate at shift {} ({:.4})",
                    ea.k, x.value, eb.k, y.value
                ));
            }
        }
    }
    let last = &per_shift.last().unwrap().estimate;
    Ok(AsymptoticEstimate {
        value: last.value,
        uncertainty: last.uncertainty,
        monotone: violations.is_empty(),
        chaotic: last.value > 3.0 * last.uncertainty,
        violations,
        warnings,
        per_shift,
    })
}
