//! CSV tables and JSON estimate records.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::entropy::CountRecord;
use crate::error::Result;
use crate::fit::{RateEstimate, RateFit};
use crate::pressure::PressureRecord;

#[derive(Serialize)]
struct EntropyRow {
    eps: f64,
    n: usize,
    ensemble_size: String,
    sampled: bool,
    s_mean: f64,
    s_stderr: f64,
    r_mean: f64,
    r_stderr: f64,
    cover_mean: Option<f64>,
}

#[derive(Serialize)]
struct PressureRow {
    eps: f64,
    n: usize,
    ensemble_size: String,
    sampled: bool,
    q_mean: f64,
    p_mean: f64,
    c_mean: Option<f64>,
    q_stderr: f64,
    p_stderr: f64,
    c_stderr: Option<f64>,
}

pub fn write_entropy_csv<W: Write>(out: W, records: &[CountRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(EntropyRow {
            eps: r.eps,
            n: r.n,
            ensemble_size: r.ensemble_size.to_string(),
            sampled: r.sampled,
            s_mean: r.s_mean,
            s_stderr: r.s_stderr,
            r_mean: r.r_mean,
            r_stderr: r.r_stderr,
            cover_mean: r.cover_mean,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pressure_csv<W: Write>(out: W, records: &[PressureRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(PressureRow {
            eps: r.eps,
            n: r.n,
            ensemble_size: r.ensemble_size.to_string(),
            sampled: r.sampled,
            q_mean: r.q_mean,
            p_mean: r.p_mean,
            c_mean: r.c_mean,
            q_stderr: r.q_stderr,
            p_stderr: r.p_stderr,
            c_stderr: r.c_stderr,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Shared JSON shape for entropy and pressure estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub kind: String,
    pub system_hash: String,
    pub value: f64,
    pub uncertainty: f64,
    pub per_eps: Vec<RateFit>,
    pub warnings: Vec<String>,
}

impl EstimateRecord {
    pub fn from_rate(kind: &str, system_hash: &str, rate: &RateEstimate, extra_warnings: &[String]) -> Self {
        let mut warnings = rate.warnings.clone();
        warnings.extend(extra_warnings.iter().filter(|w| !warnings.contains(w)).cloned().collect::<Vec<_>>());
        EstimateRecord {
            kind: kind.into(),
            system_hash: system_hash.into(),
            value: rate.value,
            uncertainty: rate.uncertainty,
            per_eps: rate.per_eps.clone(),
            warnings,
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;

    #[test]
    fn entropy_csv_header_and_rows() {
        let r = CountRecord {
            eps: 0.125,
            n: 3,
            ensemble_size: BigUint::from(8u32),
            sampled: false,
            words: 8,
            s_mean: 10.5,
            s_stderr: 0.0,
            r_mean: 9.0,
            r_stderr: 0.0,
            cover_mean: None,
            candidates: 100,
            mesh: 0.01,
            lipschitz_growth: 8.0,
            worst_lipschitz_growth: 8.0,
            per_word: None,
        };
        let mut buf = Vec::new();
        write_entropy_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "eps,n,ensemble_size,sampled,s_mean,s_stderr,r_mean,r_stderr,cover_mean\n0.125,3,8,false,10.5,0.0,9.0,0.0,\n"
        );
    }
}
