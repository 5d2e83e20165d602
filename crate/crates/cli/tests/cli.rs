use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_oma-va"))
}

fn contract(n_periods: usize) -> Value {
    json!({ "eta": 0.6, "guarantee": 50.0, "n_periods": n_periods, "delta": 1.0, "x0": 50.0 })
}

fn heston() -> Value {
    json!({ "type": "heston", "r": 0.0, "kappa": 0.1, "theta": 0.04, "nu": 0.1, "alpha0": 0.04, "rho": -0.69 })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().args(["run", "--config"]).arg(cfg).arg("--out").arg(out).args(extra).output().unwrap()
}

fn run_ok(cfg: &Path, out: &Path, extra: &[&str]) {
    let o = run(cfg, out, extra);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn hedge_config() -> Value {
    json!({
        "experiment": "hedge",
        "contract": contract(2),
        "model": heston(),
        "bs_mark_v": 0.04,
        "seed": 11,
        "n_paths": 40,
        "n_steps": 24,
        "strides": [1, 2]
    })
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let o = bin().args(["validate", "--config"]).arg(&path).output().unwrap();
        assert!(o.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
        n += 1;
    }
    assert!(n >= 6);
}

#[test]
fn invalid_config_exits_2_naming_the_field() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = hedge_config();
    cfg["contract"]["eta"] = json!(1.5);
    let path = write_config(tmp.path(), "bad.json", &cfg);
    let o = bin().args(["validate", "--config"]).arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eta"));

    let mut cfg = hedge_config();
    cfg["strides"] = json!([0]);
    let path = write_config(tmp.path(), "bad_stride.json", &cfg);
    let o = run(&path, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("strides"));

    let mut cfg = hedge_config();
    cfg["n_path"] = json!(10);
    let path = write_config(tmp.path(), "typo.json", &cfg);
    let o = bin().args(["validate", "--config"]).arg(&path).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_path"));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "hedge.json", &hedge_config());
    let o = bin()
        .env("OMA_VA_THREADS", "zero")
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("OMA_VA_THREADS"));
}

#[test]
fn reruns_are_byte_identical_and_seed_matters() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "hedge.json", &hedge_config());
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    run_ok(&path, &a, &[]);
    let o = bin()
        .env("OMA_VA_THREADS", "4")
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    assert!(o.status.success());
    let first = outputs(&a);
    assert!(first.iter().any(|(n, _)| n == "hedge_summary.csv"));
    assert_eq!(first, outputs(&b));

    run_ok(&path, &c, &["--seed", "12"]);
    let paths = |d: &Path| std::fs::read(d.join("hedge_paths.csv")).unwrap();
    assert_ne!(paths(&a), paths(&c));
    assert_eq!(read_json(&c.join("manifest.json"))["config"]["seed"], json!(12));
}

#[test]
fn manifest_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "hedge.json", &hedge_config());
    let first = tmp.path().join("first");
    run_ok(&path, &first, &["--seed", "3"]);
    let manifest = read_json(&first.join("manifest.json"));
    assert_eq!(manifest["library_version"], json!(env!("CARGO_PKG_VERSION")));
    assert!(manifest["git_hash"].is_string());
    let again = tmp.path().join("again");
    run_ok(&first.join("manifest.json"), &again, &[]);
    assert_eq!(outputs(&first), outputs(&again));
}

#[test]
fn matching_bs_market_has_no_adjustments() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "experiment": "decompose2p",
        "contract": contract(2),
        "model": { "type": "bs", "v": 0.04, "r": 0.0 },
        "bs_mark_v": 0.04,
        "seed": 5,
        "n_paths": 4000,
        "n_steps": 50
    });
    let path = write_config(tmp.path(), "d2.json", &cfg);
    let out = tmp.path().join("out");
    run_ok(&path, &out, &[]);
    let doc = read_json(&out.join("decomposition.json"));
    let r = &doc["report"];
    let f = |k: &str| r[k].as_f64().unwrap();
    assert!(f("va_realized").abs() < 3.0 * f("se_realized") + 1e-12, "{r}");
    assert!(f("va_smile").abs() < 3.0 * f("se_smile") + 1e-12, "{r}");
    assert!(f("va_suboptimal").abs() < 1e-12, "{r}");
    assert!(f("residual").abs() < 3.0 * f("se_residual") + 1e-9, "{r}");
    let q = &doc["quadrature"];
    assert!(q["residual"].as_f64().unwrap().abs() < 1e-6, "{q}");
    let csv = std::fs::read_to_string(out.join("decomposition.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn multi_period_identity_holds_on_the_grid() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "experiment": "decompose_mp",
        "contract": contract(3),
        "model": { "type": "detvol", "w": [0.04, 0.09], "r": 0.0 },
        "bs_mark_v": 0.04,
        "seed": 1
    });
    let path = write_config(tmp.path(), "mp.json", &cfg);
    let out = tmp.path().join("out");
    run_ok(&path, &out, &[]);
    let doc = read_json(&out.join("decomposition.json"));
    assert!(doc["report"]["residual"].as_f64().unwrap().abs() < 1e-6, "{doc}");
    assert!(doc["max_v3"].as_f64().unwrap() <= 1e-12);
    for r in doc["node_residuals"].as_array().unwrap() {
        assert!(r.as_f64().unwrap().abs() < 1e-6, "{r}");
    }
}

#[test]
fn attribution_rows_telescope() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "experiment": "attribution",
        "contract": contract(3),
        "model": { "type": "detvol", "w": [0.09, 0.06], "r": 0.0 },
        "bs_mark_v": 0.04,
        "seed": 5,
        "n_steps": 100
    });
    let path = write_config(tmp.path(), "attr.json", &cfg);
    let out = tmp.path().join("out");
    run_ok(&path, &out, &[]);
    let doc = read_json(&out.join("attribution.json"));
    assert_eq!(doc["n_steps"], json!(100));
    let err = doc["telescoping_error"].as_f64().unwrap();
    let scale = doc["max_abs_row"].as_f64().unwrap();
    assert!(err.abs() <= 5.0 * 0.01 * scale.max(1e-12), "{doc}");
    let csv = std::fs::read_to_string(out.join("attribution.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101);
}

#[test]
fn figures_emit_every_table() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "experiment": "figures",
        "contract": contract(2),
        "model": heston(),
        "bs_mark_v": 0.04,
        "seed": 7,
        "n_paths": 20,
        "n_steps": 24,
        "strides": [1, 2],
        "value_function_v": [0.04, 0.09]
    });
    let path = write_config(tmp.path(), "fig.json", &cfg);
    let out = tmp.path().join("out");
    let o = run(&path, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    for name in [
        "manifest.json",
        "terminal_states.csv",
        "xi1_hist.csv",
        "x1_hist.csv",
        "hedge_summary.csv",
        "pnl_hist.csv",
        "hedge_paths.csv",
        "value_function.csv",
    ] {
        assert!(out.join(name).is_file(), "{name}");
        assert!(stdout.contains(name), "{name} not listed");
    }
    let terminal = std::fs::read_to_string(out.join("terminal_states.csv")).unwrap();
    assert_eq!(terminal.lines().count(), 21);
}

#[test]
fn price_reports_the_true_price_for_bs() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "experiment": "price",
        "contract": contract(2),
        "model": { "type": "bs", "v": 0.04, "r": 0.0 },
        "bs_mark_v": 0.04,
        "seed": 1
    });
    let path = write_config(tmp.path(), "price.json", &cfg);
    let out = tmp.path().join("out");
    run_ok(&path, &out, &[]);
    let doc = read_json(&out.join("price.json"));
    let bs = doc["bs_price"].as_f64().unwrap();
    let truth = doc["true_price"].as_f64().unwrap();
    assert!(bs > 50.0 && (bs - truth).abs() < 1e-9, "{doc}");
}
