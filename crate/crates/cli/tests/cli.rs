use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const DOUBLING: &str = r#"
seed = 7
mesh = 0.000244140625
eps = [0.0625, 0.03125, 0.015625]
n_range = [2, 9]

[space]
kind = "circle"

[schedule]
tail = "constant"
levels = [[{ family = "circle_affine", params = { k = 2 } }]]
"#;

fn naifs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_naifs"))
        .args(args)
        .env_remove("NAIFS_THREADS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, kind: &str, body: &str, extra: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, format!("kind = \"{kind}\"\n{body}\n{extra}")).unwrap();
    path
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    naifs(&args)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn entropy_run_writes_manifest_and_estimate() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "e.toml", "entropy", DOUBLING, "");
    let out = tmp.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = String::from_utf8(o.stdout).unwrap();
    assert!(summary.starts_with("entropy "), "{summary}");

    let est = json(&out.join("entropy.json"));
    assert_eq!(est["kind"], "entropy");
    let v = est["value"].as_f64().unwrap();
    assert!((v - std::f64::consts::LN_2).abs() <= 0.07, "{v}");
    assert!(est["per_eps"].as_array().unwrap().len() == 3);

    let m = json(&out.join("manifest.json"));
    let files: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    for f in &files {
        assert!(out.join(f).exists(), "{f} listed but missing");
    }
    for f in ["counts.csv", "entropy.json", "config.toml", "manifest.json"] {
        assert!(files.contains(&f), "{f} not listed");
    }
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    let csv = fs::read_to_string(out.join("counts.csv")).unwrap();
    assert!(csv.starts_with("eps,n,ensemble_size,sampled,s_mean,"));
    assert_eq!(csv.lines().count(), 1 + 3 * 8);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "p.toml",
        "pressure",
        &DOUBLING.replace("0.000244140625", "0.0009765625").replace("[2, 9]", "[2, 6]"),
        "[potential]\nname = \"cos2pi\"\n",
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run(&cfg, &a, &["--threads", "1"]).status.success());
    assert!(run(&cfg, &b, &["--threads", "4"]).status.success());
    for f in ["pressure.csv", "pressure.json", "config.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn budget_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let body = DOUBLING
        .replace("[[{ family = \"circle_affine\", params = { k = 2 } }]]", "[[{ family = \"circle_affine\", params = { k = 2 } }, { family = \"circle_affine\", params = { k = 3 } }]]")
        .replace("0.000244140625", "0.0009765625")
        .replace("[2, 9]", "[2, 5]");
    let cfg = write_config(tmp.path(), "e.toml", "entropy", &body, "");
    let out = tmp.path().join("out");
    assert!(run(&cfg, &out, &["--budget", "4"]).status.success());
    let m = json(&out.join("manifest.json"));
    let warnings = m["warnings"].to_string();
    assert!(warnings.contains("sampled"), "{warnings}");
    let saved = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(saved.contains("budget = 4"), "{saved}");
}

#[test]
fn specification_with_rotation_is_refused() {
    let tmp = TempDir::new().unwrap();
    let body = r#"
seed = 3
mesh = 0.001

[space]
kind = "circle"

[schedule]
tail = "constant"
levels = [[{ family = "circle_affine", params = { k = 2 } }, { family = "circle_affine", params = { k = 1, b = 0.3 } }]]

[specification]
delta = 0.125
random = 5
"#;
    let cfg = write_config(tmp.path(), "s.toml", "specification", body, "");
    let o = run(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("precondition"), "{}", stderr(&o));
}

#[test]
fn specification_on_expanding_schedule_traces() {
    let tmp = TempDir::new().unwrap();
    let body = r#"
seed = 3
mesh = 0.001

[space]
kind = "circle"

[schedule]
tail = "constant"
levels = [[{ family = "circle_affine", params = { k = 2 } }, { family = "circle_affine", params = { k = 3 } }]]

[specification]
delta = 0.125
random = 10
"#;
    let cfg = write_config(tmp.path(), "s.toml", "specification", body, "");
    let out = tmp.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = json(&out.join("manifest.json"));
    assert!(m["summary"]["verdict"].as_str().unwrap().starts_with("10/10"), "{m}");
}

#[test]
fn fixed_scale_needs_certificate() {
    let tmp = TempDir::new().unwrap();
    let body = DOUBLING.replace("0.000244140625", "0.00006103515625").replace("[2, 9]", "[2, 6]");
    let section = "[potential]\nname = \"zero\"\n\n[fixed_scale]\neps = 0.0625\ndelta = 0.125\n";
    let cfg = write_config(tmp.path(), "f.toml", "fixed_scale_pressure", &body, section);
    let o = run(&cfg, &tmp.path().join("refused"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let cert_cfg = write_config(
        tmp.path(),
        "x.toml",
        "expansivity",
        &body,
        "[expansivity]\ndelta = 0.125\ngammas = [0.0625]\n",
    );
    let cert_dir = tmp.path().join("cert");
    let o = run(&cert_cfg, &cert_dir, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cert = json(&cert_dir.join("certificate.json"));
    assert_eq!(cert["method"], "analytic");

    let with_cert = format!("{section}certificate = \"cert/certificate.json\"\n");
    let cfg = write_config(tmp.path(), "g.toml", "fixed_scale_pressure", &body, &with_cert);
    let out = tmp.path().join("fixed");
    let o = run(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let est = json(&out.join("fixed_scale.json"));
    assert!((est["value"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 0.07, "{est}");
    assert_eq!(est["label"], "fixed-scale (valid under delta-expansivity)");
}

#[test]
fn malformed_config_exits_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "entropy", &DOUBLING.replace("circle_affine", "tent"), "");
    assert_eq!(run(&cfg, &tmp.path().join("out"), &[]).status.code(), Some(1));
    let cfg = write_config(tmp.path(), "noseed.toml", "entropy", &DOUBLING.replace("seed = 7", ""), "");
    assert_eq!(run(&cfg, &tmp.path().join("out"), &[]).status.code(), Some(1));
    let missing = tmp.path().join("missing.toml");
    assert_eq!(run(&missing, &tmp.path().join("out"), &[]).status.code(), Some(1));
}

#[test]
fn saturated_counts_exit_three() {
    let tmp = TempDir::new().unwrap();
    let body = DOUBLING.replace("0.000244140625", "0.0625").replace("[0.0625, 0.03125, 0.015625]", "[0.01, 0.005]");
    let cfg = write_config(tmp.path(), "sat.toml", "entropy", &body, "");
    let o = run(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn report_merges_runs() {
    let tmp = TempDir::new().unwrap();
    let body = DOUBLING.replace("0.000244140625", "0.0009765625").replace("[2, 9]", "[2, 7]");
    let e = write_config(tmp.path(), "e.toml", "entropy", &body, "");
    let p = write_config(tmp.path(), "p.toml", "pressure", &body, "[potential]\nname = \"zero\"\n");
    let a = write_config(
        tmp.path(),
        "a.toml",
        "asymptotic_entropy",
        &body.replace("[space]", "k_list = [1, 2]\n\n[space]"),
        "",
    );
    let runs = tmp.path().join("runs");
    assert!(run(&e, &runs.join("entropy"), &[]).status.success());
    assert!(run(&p, &runs.join("pressure"), &[]).status.success());
    let o = run(&a, &runs.join("shifts"), &[]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = naifs(&["report", runs.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(runs.join("summary.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    let value = |kind: &str| -> f64 {
        rows.iter().find(|r| &r[1] == kind).unwrap()[3].parse().unwrap()
    };
    assert!((value("entropy") - value("pressure")).abs() <= 1e-9);
    let plot = json(&runs.join("plot_data.json"));
    assert_eq!(plot["rate_vs_eps"].as_array().unwrap().len(), 2);
    assert_eq!(plot["rate_vs_shift"][0]["x"], serde_json::json!([1.0, 2.0]));
}

#[test]
fn report_single_run_and_corrupt_manifest() {
    let tmp = TempDir::new().unwrap();
    let body = DOUBLING.replace("0.000244140625", "0.0009765625").replace("[2, 9]", "[2, 6]");
    let cfg = write_config(tmp.path(), "e.toml", "entropy", &body, "");
    let runs = tmp.path().join("runs");
    assert!(run(&cfg, &runs.join("one"), &[]).status.success());
    fs::create_dir_all(runs.join("broken")).unwrap();
    fs::write(runs.join("broken/manifest.json"), "{ not json").unwrap();

    let o = naifs(&["report", runs.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("skipping corrupt manifest"));
    let text = fs::read_to_string(runs.join("summary.csv")).unwrap();
    assert_eq!(text.lines().count(), 2, "{text}");
}

#[test]
fn report_on_empty_dir_fails() {
    let tmp = TempDir::new().unwrap();
    let o = naifs(&["report", tmp.path().to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn nonwandering_and_entropy_point_runs() {
    let tmp = TempDir::new().unwrap();
    let contraction = r#"
seed = 5
mesh = 0.001953125
budget = 64

[space]
kind = "interval"

[schedule]
tail = "constant"
levels = [[{ family = "half_shift", params = { c = 0.0 } }]]

[nonwandering]
radius = 0.03125
n_max = 9
m_max = 2
"#;
    let cfg = write_config(tmp.path(), "n.toml", "nonwandering", contraction, "");
    let out = tmp.path().join("nw");
    let o = run(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let res = json(&out.join("nonwandering.json"));
    let h = 0.001953125;
    for i in res["points"].as_array().unwrap() {
        assert!(i.as_u64().unwrap() as f64 * h < 0.03125 + 2.0 * h);
    }

    let body = DOUBLING.replace("0.000244140625", "0.0009765625").replace("[2, 9]", "[2, 6]");
    let cfg = write_config(
        tmp.path(),
        "p.toml",
        "entropy_point",
        &body,
        "[entropy_point]\ncenters = [[0.3], [0.8]]\nradius = 0.1\n",
    );
    let out = tmp.path().join("ep");
    let o = run(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&out.join("entropy_points.json")).as_array().unwrap().len(), 2);
}
