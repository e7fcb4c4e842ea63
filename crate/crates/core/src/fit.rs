//! Growth-rate fits of `log(count)` against `n`, shared by the entropy and
//! pressure estimators.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, NaifsError, Result};

/// Fraction of the candidate count at which a count is treated as
/// exhausting the grid.
pub const SATURATION_FRACTION: f64 = 0.95;
/// Grid spacing, magnified along the orbit, must stay below `eps / 10`.
pub const DISTORTION_RATIO: f64 = 0.1;

/// One observation of a growth series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub n: usize,
    /// Logarithm of the averaged quantity.
    pub log_value: f64,
    /// Standard error of `log_value` (0 when exhaustive).
    pub log_stderr: f64,
    /// Averaged cardinality of the underlying point set, for the saturation
    /// test.
    pub cardinality: f64,
    /// Number of candidate points the sets are drawn from.
    pub candidates: usize,
    /// Typical Lipschitz constant of the `n`-step compositions averaged
    /// over: the geometric mean over words of the product of map constants.
    pub lipschitz_growth: f64,
    /// Largest such product over all words.
    pub worst_lipschitz_growth: f64,
    pub mesh: f64,
}

impl FitPoint {
    pub fn saturated(&self) -> bool {
        self.candidates > 1 && self.cardinality >= SATURATION_FRACTION * self.candidates as f64
    }

    /// The grid spacing, magnified along a typical orbit, exceeds
    /// `eps / 10`; such points leave the fit window.
    pub fn distorted(&self, eps: f64) -> bool {
        self.lipschitz_growth * self.mesh > DISTORTION_RATIO * eps
    }

    /// The same test with the worst-case growth; reported only.
    pub fn flagged(&self, eps: f64) -> bool {
        self.worst_lipschitz_growth * self.mesh > DISTORTION_RATIO * eps
    }
}

/// All observations at one scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub eps: f64,
    pub points: Vec<FitPoint>,
}

/// Fitted rate at one scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub eps: f64,
    /// Inclusive `n` range used by the fit.
    pub window: Option<(usize, usize)>,
    pub points_used: usize,
    pub slope: f64,
    pub intercept: f64,
    /// Regression standard error combined with propagated sampling error.
    pub stderr: f64,
    pub residual_rms: f64,
    /// `max (1/n) log value` over the upper half of the window.
    pub suffix_max_rate: f64,
    pub saturated_n: Vec<usize>,
    pub distorted_n: Vec<usize>,
    /// `n` failing only the worst-case distortion test.
    pub flagged_n: Vec<usize>,
    /// Window passes both the saturation and the distortion guard.
    pub clean: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub eps_schedule: Vec<f64>,
    pub n_range: (usize, usize),
    pub per_eps: Vec<RateFit>,
    pub value: f64,
    pub uncertainty: f64,
    /// Scale whose fit supplied `value`.
    pub value_eps: f64,
    /// Rates do not decrease (beyond their errors) as `eps` shrinks.
    pub eps_monotone: bool,
    pub warnings: Vec<String>,
}

struct Line {
    slope: f64,
    intercept: f64,
    stderr: f64,
    rms: f64,
}

fn least_squares(pts: &[&FitPoint]) -> Line {
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.n as f64).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.log_value).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.n as f64 - mx).powi(2)).sum();
    let sxy: f64 = pts
        .iter()
        .map(|p| (p.n as f64 - mx) * (p.log_value - my))
        .sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = pts
        .iter()
        .map(|p| (p.log_value - intercept - slope * p.n as f64).powi(2))
        .sum();
    let fit_se = if pts.len() > 2 && sxx > 0.0 {
        (sse / (k - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let sampling_var: f64 = if sxx > 0.0 {
        pts.iter()
            .map(|p| ((p.n as f64 - mx) / sxx).powi(2) * p.log_stderr.powi(2))
            .sum()
    } else {
        0.0
    };
    Line {
        slope,
        intercept,
        stderr: (fit_se * fit_se + sampling_var).sqrt(),
        rms: (sse / k).sqrt(),
    }
}

/// Longest contiguous run (earliest on ties) of indices satisfying `ok`.
fn longest_run(len: usize, ok: impl Fn(usize) -> bool) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for i in 0..=len {
        if i < len && ok(i) {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            if best.is_none_or(|(a, b)| i - s > b - a + 1) {
                best = Some((s, i - 1));
            }
        }
    }
    best
}

fn fit_window(eps: f64, pts: &[FitPoint], range: Option<(usize, usize)>, clean: bool) -> RateFit {
    let saturated_n = pts.iter().filter(|p| p.saturated()).map(|p| p.n).collect();
    let distorted_n = pts.iter().filter(|p| p.distorted(eps)).map(|p| p.n).collect();
    let flagged_n = pts
        .iter()
        .filter(|p| p.flagged(eps) && !p.distorted(eps))
        .map(|p| p.n)
        .collect();
    let Some((a, b)) = range else {
        return RateFit {
            eps,
            window: None,
            points_used: 0,
            slope: f64::NAN,
            intercept: f64::NAN,
            stderr: f64::NAN,
            residual_rms: f64::NAN,
            suffix_max_rate: f64::NAN,
            saturated_n,
            distorted_n,
            flagged_n,
            clean: false,
        };
    };
    let used: Vec<&FitPoint> = pts[a..=b].iter().collect();
    let line = least_squares(&used);
    let half = used.len() / 2;
    let suffix_max_rate = used[half..]
        .iter()
        .filter(|p| p.n > 0)
        .map(|p| p.log_value / p.n as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    RateFit {
        eps,
        window: Some((pts[a].n, pts[b].n)),
        points_used: used.len(),
        slope: line.slope,
        intercept: line.intercept,
        stderr: line.stderr,
        residual_rms: line.rms,
        suffix_max_rate,
        saturated_n,
        distorted_n,
        flagged_n,
        clean,
    }
}

/// Fits one scale: prefers the longest window passing both guards, and
/// otherwise the longest saturation-free window (marked unclean).
pub fn fit_series(series: &Series) -> RateFit {
    let mut pts = series.points.clone();
    pts.sort_by_key(|p| p.n);
    let eps = series.eps;
    let clean = longest_run(pts.len(), |i| !pts[i].saturated() && !pts[i].distorted(eps));
    if let Some((a, b)) = clean {
        if b - a + 1 >= 3 {
            return fit_window(eps, &pts, clean, true);
        }
    }
    let loose = longest_run(pts.len(), |i| !pts[i].saturated());
    match loose {
        Some((a, b)) if b > a => fit_window(eps, &pts, loose, false),
        _ => fit_window(eps, &pts, None, false),
    }
}

/// Rate estimate across scales: the value is the slope at the smallest
/// scale with a clean window of at least three points.
pub fn estimate_rate(series: &[Series]) -> Result<RateEstimate> {
    if series.len() < 2 {
        return invalid("a rate estimate needs at least two eps values");
    }
    let mut series = series.to_vec();
    series.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    for s in &series {
        if s.points.len() < 3 {
            return invalid(format!(
                "a rate estimate needs at least three n values per eps (eps = {} has {})",
                s.eps,
                s.points.len()
            ));
        }
    }
    let per_eps: Vec<RateFit> = series.iter().map(fit_series).collect();
    let mut warnings = Vec::new();
    for f in &per_eps {
        if !f.saturated_n.is_empty() {
            warnings.push(format!(
                "saturation at eps = {}: n in {:?} excluded; refine the grid for larger n",
                f.eps, f.saturated_n
            ));
        }
        if !f.distorted_n.is_empty() {
            warnings.push(format!(
                "grid distortion at eps = {}: n in {:?} exceed the Lipschitz resolution bound",
                f.eps, f.distorted_n
            ));
        }
        if !f.flagged_n.is_empty() {
            warnings.push(format!(
                "possible grid distortion at eps = {}: n in {:?} exceed the worst-case Lipschitz bound",
                f.eps, f.flagged_n
            ));
        }
    }
    let chosen = per_eps
        .iter()
        .rev()
        .find(|f| f.clean)
        .or_else(|| {
            let f = per_eps.iter().rev().find(|f| f.window.is_some());
            if let Some(f) = f {
                warnings.push(format!(
                    "no clean window with three points; using the saturation-free window at eps = {}",
                    f.eps
                ));
            }
            f
        })
        .ok_or_else(|| {
            NaifsError::Saturation(
                "every eps has fewer than two unsaturated n values; refine the grid".into(),
            )
        })?;
    let mut eps_monotone = true;
    let fitted: Vec<&RateFit> = per_eps.iter().filter(|f| f.window.is_some()).collect();
    for pair in fitted.windows(2) {
        let (coarse, fine) = (pair[0], pair[1]);
        let slack = 2.0 * (coarse.stderr + fine.stderr) + 1e-9;
        if fine.slope + slack < coarse.slope {
            eps_monotone = false;
            warnings.push(format!(
                "rate at eps = {} ({:.4}) is below the rate at eps = {} ({:.4})",
                fine.eps, fine.slope, coarse.eps, coarse.slope
            ));
        }
    }
    let n_min = series.iter().flat_map(|s| s.points.iter().map(|p| p.n)).min().unwrap();
    let n_max = series.iter().flat_map(|s| s.points.iter().map(|p| p.n)).max().unwrap();
    Ok(RateEstimate {
        eps_schedule: series.iter().map(|s| s.eps).collect(),
        n_range: (n_min, n_max),
        value: chosen.slope,
        uncertainty: chosen.stderr,
        value_eps: chosen.eps,
        per_eps,
        eps_monotone,
        warnings,
    })
}
