use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use naifs::entropy::{asymptotic_entropy, averaged_counts, entropy_estimate, entropy_point_probe, nonwandering_set};
use naifs::output::{to_json, write_entropy_csv, write_pressure_csv, EstimateRecord};
use naifs::pressure::{averaged_pressure, fixed_scale_pressure, pressure_estimate, PressureOptions};
use naifs::properties::{
    expansivity_check, required_gap, trace_specification, verify_trace, ExpansivityCertificate,
    ScanOptions, SpecInstance, TraceReport,
};
use naifs::{derive_seed, CountOptions, NaifsError, Point, Word};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind, System};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub value: Option<f64>,
    pub uncertainty: Option<f64>,
    pub verdict: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub config_hash: String,
    pub system_hash: String,
    pub version: String,
    pub seed: u64,
    pub wall_time_s: f64,
    pub stages: Vec<Stage>,
    pub summary: Summary,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub budget: Option<usize>,
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().context("output path has no file name")?.to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.files.push(name.into());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.put(name, to_json(value)?.as_bytes())
    }
}

struct Timer {
    stages: Vec<Stage>,
}

impl Timer {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.stages.push(Stage {
            name: name.into(),
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }
}

fn sampling_warning(sampled: bool, budget: usize) -> Option<String> {
    sampled.then(|| format!("word ensembles larger than the budget {budget} were sampled"))
}

pub fn run(config_path: &Path, overrides: &Overrides) -> Result<RunManifest> {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(b) = overrides.budget {
        cfg.budget = b;
    }
    let mut warnings = cfg.validate()?;
    let sys = cfg.system()?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let dir = match (&overrides.out, &cfg.output) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => base.join("naifs-out").join(cfg.kind.name()),
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut out = Outputs { dir, files: Vec::new() };
    let mut timer = Timer { stages: Vec::new() };
    out.put("config.toml", cfg.to_toml().as_bytes())?;

    let summary = execute(&cfg, &sys, base, &mut out, &mut timer, &mut warnings)?;

    let mut files = out.files.clone();
    files.push(MANIFEST.into());
    let manifest = RunManifest {
        kind: cfg.kind.name().into(),
        config_hash: cfg.hash(),
        system_hash: sys.schedule.system_hash(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        stages: timer.stages,
        summary,
        warnings,
        files,
    };
    out.json(MANIFEST, &manifest)?;
    Ok(manifest)
}

fn execute(
    cfg: &ExperimentConfig,
    sys: &System,
    base: &Path,
    out: &mut Outputs,
    timer: &mut Timer,
    warnings: &mut Vec<String>,
) -> Result<Summary> {
    let (s, g) = (&sys.schedule, &sys.grid);
    let hash = s.system_hash();
    let n_list = cfg.n_list();
    let count_opts = CountOptions {
        spanning: cfg.spanning,
        ..Default::default()
    };
    let pressure_opts = PressureOptions {
        spanning: cfg.spanning,
        ..Default::default()
    };
    match cfg.kind {
        ExperimentKind::Entropy => {
            let records = timer.time("counts", || {
                averaged_counts(s, g, None, &cfg.eps, &n_list, cfg.budget, cfg.seed, count_opts)
            })?;
            let mut csv = Vec::new();
            write_entropy_csv(&mut csv, &records)?;
            out.put("counts.csv", &csv)?;
            let est = timer.time("fit", || entropy_estimate(&records))?;
            warnings.extend(est.warnings.iter().cloned());
            warnings.extend(sampling_warning(records.iter().any(|r| r.sampled), cfg.budget));
            out.json("entropy.json", &EstimateRecord::from_rate("entropy", &hash, &est, &[]))?;
            Ok(Summary {
                value: Some(est.value),
                uncertainty: Some(est.uncertainty),
                verdict: None,
            })
        }
        ExperimentKind::AsymptoticEntropy => {
            let a = timer.time("shifts", || {
                asymptotic_entropy(s, g, &cfg.eps, &n_list, &cfg.k_list, cfg.budget, cfg.seed, count_opts)
            })?;
            warnings.extend(a.warnings.iter().cloned());
            out.json("asymptotic.json", &a)?;
            Ok(Summary {
                value: Some(a.value),
                uncertainty: Some(a.uncertainty),
                verdict: Some(if a.chaotic { "chaotic" } else { "not chaotic" }.into()),
            })
        }
        ExperimentKind::Pressure => {
            let psi = cfg.potential.as_ref().unwrap();
            let records = timer.time("sums", || {
                averaged_pressure(s, g, &cfg.eps, &n_list, psi, cfg.budget, cfg.seed, pressure_opts)
            })?;
            let mut csv = Vec::new();
            write_pressure_csv(&mut csv, &records)?;
            out.put("pressure.csv", &csv)?;
            let est = timer.time("fit", || pressure_estimate(&records))?;
            warnings.extend(est.warnings.iter().cloned());
            warnings.extend(sampling_warning(records.iter().any(|r| r.sampled), cfg.budget));
            out.json(
                "pressure.json",
                &EstimateRecord::from_rate("pressure", &hash, &est.rate, &est.warnings),
            )?;
            Ok(Summary {
                value: Some(est.value()),
                uncertainty: Some(est.uncertainty()),
                verdict: None,
            })
        }
        ExperimentKind::FixedScalePressure => {
            let fs_cfg = cfg.fixed_scale.as_ref().unwrap();
            let cert: Option<ExpansivityCertificate> = match &fs_cfg.certificate {
                None => None,
                Some(p) => {
                    let path = base.join(p);
                    let text = fs::read_to_string(&path)
                        .map_err(|e| ConfigError(format!("certificate {}: {e}", path.display())))?;
                    Some(serde_json::from_str(&text).map_err(|e| ConfigError(format!("certificate: {e}")))?)
                }
            };
            let psi = cfg.potential.as_ref().unwrap();
            let est = timer.time("fixed_scale", || {
                fixed_scale_pressure(s, g, fs_cfg.eps, fs_cfg.delta, psi, &n_list, cfg.budget, cfg.seed, cert.as_ref())
            })?;
            let mut csv = Vec::new();
            write_pressure_csv(&mut csv, &est.records)?;
            out.put("pressure.csv", &csv)?;
            warnings.extend(est.warnings.iter().cloned());
            out.json("fixed_scale.json", &est)?;
            Ok(Summary {
                value: Some(est.value),
                uncertainty: Some(est.uncertainty),
                verdict: Some(est.label.clone()),
            })
        }
        ExperimentKind::Nonwandering => {
            let nw = cfg.nonwandering.as_ref().unwrap();
            let res = timer.time("scan", || {
                nonwandering_set(s, g, nw.radius, nw.n_max, nw.m_max, cfg.budget, cfg.seed)
            })?;
            warnings.extend(sampling_warning(res.sampled, cfg.budget));
            out.json("nonwandering.json", &res)?;
            Ok(Summary {
                value: None,
                uncertainty: None,
                verdict: Some(format!("{} of {} grid points nonwandering", res.points.len(), g.len())),
            })
        }
        ExperimentKind::EntropyPoint => {
            let ep = cfg.entropy_point.as_ref().unwrap();
            let mut probes = Vec::with_capacity(ep.centers.len());
            for (i, c) in ep.centers.iter().enumerate() {
                let x0 = Point::new(c);
                let p = timer.time(&format!("probe_{i}"), || {
                    entropy_point_probe(
                        s,
                        g,
                        &x0,
                        ep.radius,
                        &cfg.eps,
                        &n_list,
                        cfg.budget,
                        derive_seed(cfg.seed, "entropy_point", i as u64),
                    )
                })?;
                probes.push(p);
            }
            out.json("entropy_points.json", &probes)?;
            let worst = probes.iter().map(|p| p.gap).fold(0.0, f64::max);
            Ok(Summary {
                value: Some(worst),
                uncertainty: None,
                verdict: Some(format!("max |local - global| = {worst:.4}")),
            })
        }
        ExperimentKind::Specification => {
            let sc = cfg.specification.as_ref().unwrap();
            let gap = timer.time("exactness", || required_gap(s, sc.delta, g, derive_seed(cfg.seed, "exactness", 0)))?;
            let mut instances = sc.instances.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "specification", 0));
            for _ in 0..sc.random {
                instances.push(random_instance(&mut rng, sys, sc.delta, gap, sc.max_targets, sc.max_window));
            }
            let traced = timer.time("trace", || -> Result<Vec<Traced>, NaifsError> {
                instances
                    .into_iter()
                    .map(|inst| {
                        let x = trace_specification(s, g, &inst)?;
                        let report = verify_trace(s, &inst, &x)?;
                        Ok(Traced { instance: inst, point: x, report })
                    })
                    .collect()
            })?;
            let passed = traced.iter().filter(|t| t.report.pass).count();
            out.json("specification.json", &SpecificationOutput { gap, traced: &traced })?;
            Ok(Summary {
                value: None,
                uncertainty: None,
                verdict: Some(format!("{passed}/{} traces verified (gap {gap})", traced.len())),
            })
        }
        ExperimentKind::Expansivity => {
            let ex = cfg.expansivity.as_ref().unwrap();
            let scan = ScanOptions {
                pairs: ex.pairs,
                k_cap: ex.k_cap,
                seed: derive_seed(cfg.seed, "expansivity", 0),
            };
            let cert = timer.time("certificate", || expansivity_check(s, ex.delta, &ex.gammas, scan))?;
            out.json("certificate.json", &cert)?;
            Ok(Summary {
                value: None,
                uncertainty: None,
                verdict: Some(format!("{:?} certificate at delta = {}", cert.method, cert.delta)),
            })
        }
    }
}

#[derive(Serialize)]
struct Traced {
    instance: SpecInstance,
    point: Point,
    report: TraceReport,
}

#[derive(Serialize)]
struct SpecificationOutput<'a> {
    gap: usize,
    traced: &'a [Traced],
}

fn random_instance(
    rng: &mut ChaCha8Rng,
    sys: &System,
    delta: f64,
    gap: usize,
    max_targets: usize,
    max_window: usize,
) -> SpecInstance {
    let s = &sys.schedule;
    let count = rng.random_range(1..=max_targets);
    let mut windows = Vec::with_capacity(count);
    let mut start = 0;
    for _ in 0..count {
        let end = start + rng.random_range(0..=max_window);
        windows.push((start, end));
        start = end + gap;
    }
    let len = windows.last().unwrap().1;
    let symbols = (1..=len).map(|j| rng.random_range(0..s.level_size(j) as u32)).collect();
    let dim = s.space().dim();
    let targets = (0..count)
        .map(|_| Point::new(&(0..dim).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<_>>()))
        .collect();
    SpecInstance {
        word: Word::new(1, symbols),
        targets,
        windows,
        delta,
    }
}
