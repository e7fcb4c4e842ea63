use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use naifs::entropy::AsymptoticEstimate;
use naifs::output::{to_json, EstimateRecord};
use serde::Serialize;

use crate::run::{write_atomic, RunManifest, MANIFEST};

#[derive(Serialize)]
struct Row<'a> {
    run: String,
    kind: &'a str,
    system_hash: &'a str,
    value: Option<f64>,
    uncertainty: Option<f64>,
    verdict: Option<&'a str>,
    warnings: String,
}

#[derive(Serialize)]
struct Curve {
    run: String,
    kind: String,
    system_hash: String,
    x: Vec<f64>,
    rate: Vec<f64>,
    stderr: Vec<f64>,
}

#[derive(Default, Serialize)]
struct PlotData {
    rate_vs_eps: Vec<Curve>,
    rate_vs_shift: Vec<Curve>,
}

#[derive(Debug)]
pub struct ReportSummary {
    pub runs: usize,
    pub skipped: Vec<(PathBuf, String)>,
    pub files: Vec<PathBuf>,
}

fn find_manifests(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_manifests(&p, found)?;
        } else if p.file_name().is_some_and(|n| n == MANIFEST) {
            found.push(p);
        }
    }
    Ok(())
}

fn load(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Option<T> {
    serde_json::from_str(&fs::read_to_string(path).ok()?).ok()
}

/// Merges every manifest under `dir` into `summary.csv` and
/// `plot_data.json` in `dir`.
pub fn report(dir: &Path) -> Result<ReportSummary> {
    let mut paths = Vec::new();
    find_manifests(dir, &mut paths)?;
    if paths.is_empty() {
        bail!("no {MANIFEST} found under {}", dir.display());
    }
    let mut skipped = Vec::new();
    let mut runs = Vec::new();
    for p in paths {
        match load(&p) {
            Ok(m) => runs.push((p, m)),
            Err(e) => {
                eprintln!("warning: skipping corrupt manifest {}: {e}", p.display());
                skipped.push((p, e.to_string()));
            }
        }
    }
    if runs.is_empty() {
        bail!("every manifest under {} is corrupt", dir.display());
    }

    let mut csv = csv::Writer::from_writer(Vec::new());
    let mut plot = PlotData::default();
    for (path, m) in &runs {
        let run_dir = path.parent().unwrap();
        let run = run_dir
            .strip_prefix(dir)
            .unwrap_or(run_dir)
            .to_string_lossy()
            .into_owned();
        let run = if run.is_empty() { ".".into() } else { run };
        csv.serialize(Row {
            run: run.clone(),
            kind: &m.kind,
            system_hash: &m.system_hash,
            value: m.summary.value,
            uncertainty: m.summary.uncertainty,
            verdict: m.summary.verdict.as_deref(),
            warnings: m.warnings.join("; "),
        })?;
        for name in ["entropy.json", "pressure.json"] {
            if !m.files.iter().any(|f| f == name) {
                continue;
            }
            if let Some(e) = read_json::<EstimateRecord>(&run_dir.join(name)) {
                plot.rate_vs_eps.push(Curve {
                    run: run.clone(),
                    kind: e.kind.clone(),
                    system_hash: e.system_hash.clone(),
                    x: e.per_eps.iter().map(|f| f.eps).collect(),
                    rate: e.per_eps.iter().map(|f| f.slope).collect(),
                    stderr: e.per_eps.iter().map(|f| f.stderr).collect(),
                });
            }
        }
        if m.files.iter().any(|f| f == "asymptotic.json") {
            if let Some(a) = read_json::<AsymptoticEstimate>(&run_dir.join("asymptotic.json")) {
                plot.rate_vs_shift.push(Curve {
                    run: run.clone(),
                    kind: m.kind.clone(),
                    system_hash: m.system_hash.clone(),
                    x: a.per_shift.iter().map(|r| r.k as f64).collect(),
                    rate: a.per_shift.iter().map(|r| r.estimate.value).collect(),
                    stderr: a.per_shift.iter().map(|r| r.estimate.uncertainty).collect(),
                });
            }
        }
    }
    let summary_path = dir.join("summary.csv");
    let plot_path = dir.join("plot_data.json");
    write_atomic(&summary_path, &csv.into_inner()?)?;
    write_atomic(&plot_path, to_json(&plot)?.as_bytes())?;
    Ok(ReportSummary {
        runs: runs.len(),
        skipped,
        files: vec![summary_path, plot_path],
    })
}
