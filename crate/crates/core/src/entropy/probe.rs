//! Entropy carried by a closed neighbourhood of a point.

use serde::{Deserialize, Serialize};

use super::{averaged_counts, entropy_estimate, CountOptions, EntropyEstimate};
use crate::error::{NaifsError, Result};
use crate::spaces::{Grid, Point};
use crate::system::{derive_seed, NaifsSchedule};

/// Fewest grid points a probed ball may hold.
pub const MIN_PROBE_POINTS: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub center: Point,
    pub radius: f64,
    pub ball_points: usize,
    pub local: EntropyEstimate,
    pub global: EntropyEstimate,
    /// `|local - global|`.
    pub gap: f64,
}

/// Compares the entropy of `grid ∩ closed B(x0, radius)` (separated points
/// drawn from the ball) with the entropy of the whole grid.
#[allow(clippy::too_many_arguments)]
pub fn entropy_point_probe(
    s: &NaifsSchedule,
    g: &Grid,
    x0: &Point,
    radius: f64,
    eps_list: &[f64],
    n_list: &[usize],
    budget: usize,
    seed: u64,
) -> Result<ProbeResult> {
    if !(radius >= 4.0 * g.spacing()) {
        return Err(NaifsError::Precondition(format!(
            "radius {radius} is below four mesh widths ({})",
            4.0 * g.spacing()
        )));
    }
    let y = g.closed_ball_indices(x0, radius)?;
    if y.len() < MIN_PROBE_POINTS {
        return Err(NaifsError::Resolution(format!(
            "under-resolved: the ball holds {} grid points, at least {MIN_PROBE_POINTS} are needed",
            y.len()
        )));
    }
    let opts = CountOptions::default();
    let local = averaged_counts(s, g, Some(&y), eps_list, n_list, budget, derive_seed(seed, "probe", 0), opts)?;
    let global = averaged_counts(s, g, None, eps_list, n_list, budget, derive_seed(seed, "probe", 1), opts)?;
    let local = entropy_estimate(&local)?;
    let global = entropy_estimate(&global)?;
    Ok(ProbeResult {
        center: x0.clone(),
        radius,
        ball_points: y.len(),
        gap: (local.value - global.value).abs(),
        local,
        global,
    })
}
