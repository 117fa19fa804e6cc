use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cme-reduce"))
}

fn networks() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../networks")
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn cme-reduce");
    assert!(
        out.status.success(),
        "cme-reduce {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field<'a>(line: &'a str, key: &str) -> &'a str {
    line.split_whitespace()
        .find_map(|w| w.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in `{line}`"))
}

fn net(name: &str) -> String {
    networks().join(name).to_string_lossy().into_owned()
}

fn write_net(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn enumerate_reports_state_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = run(&["enumerate", "--network", &net("reversible.net"), "--out-dir", d]);
    assert_eq!(stdout(&o).trim(), "w=301 nnz=901");
    assert!(dir.path().join("states.csv").exists());
    assert!(fs::read_to_string(dir.path().join("generator.mtx")).unwrap().starts_with("%%MatrixMarket"));

    let o = run(&["enumerate", "--network", &net("enzyme.net"), "--out-dir", d]);
    assert!(stdout(&o).starts_with("w=66 "));

    let empty = write_net(dir.path(), "empty.net", "species: A\ninit: A=4\n");
    let o = run(&["enumerate", "--network", &empty, "--out-dir", d]);
    assert!(stdout(&o).starts_with("w=1 "));
}

#[test]
fn reduce_reports_published_bound() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let common = ["reduce", "--network", &net("reversible.net"), "--output", "state S1=0 S2=300", "--out-dir", d];
    let o = run(&[&common[..], &["--order", "10"]].concat());
    let line = stdout(&o);
    let bound: f64 = field(&line, "bound").parse().unwrap();
    assert!((bound - 587.9172e-6).abs() <= 0.01 * 587.9172e-6, "{bound}");
    let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("\"subcommand\": \"reduce\""));
    assert!(dir.path().join("model.txt").exists());
    let hsv = csv_rows(&dir.path().join("hsv.csv"));
    assert!(hsv.windows(2).all(|w| w[0][1] >= w[1][1]));

    let q = field(&line, "q").to_string();
    let o = run(&[&common[..], &["--order", &q]].concat());
    assert_eq!(field(&stdout(&o), "bound").parse::<f64>().unwrap(), 0.0);
}

#[test]
fn simulate_satisfies_bound() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = run(&[
        "simulate", "--network", &net("reversible.net"), "--output", "state S1=0 S2=300",
        "--order", "10", "--t-stop", "5", "--points", "501", "--out-dir", d,
    ]);
    assert!(stdout(&o).contains("bound_satisfied=yes"));
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["bound_satisfied"], "yes");
    assert!(metrics["realized_l2_gain"].as_f64().unwrap() <= metrics["bound"].as_f64().unwrap());
    let full = csv_rows(&dir.path().join("full.csv"));
    assert_eq!(full.len(), 501);
    assert!(dir.path().join("reduced.meta.json").exists());
}

#[test]
fn simulate_full_order_has_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let n = write_net(dir.path(), "iso.net", "species: A B\nreaction: A -> B @ 2\nreaction: B -> A @ 1\ninit: A=4\n");
    let o = run(&["reduce", "--network", &n, "--output", "state A=0 B=4", "--order", "1", "--out-dir", d]);
    let q = field(&stdout(&o), "q").to_string();
    let model = dir.path().join("model.txt");
    let full_model = dir.path().join("full_model.txt");
    run(&["reduce", "--network", &n, "--output", "state A=0 B=4", "--order", &q, "--out-dir", d]);
    fs::rename(&model, &full_model).unwrap();
    run(&[
        "simulate", "--network", &n, "--output", "state A=0 B=4", "--model",
        full_model.to_str().unwrap(), "--t-stop", "3", "--points", "31", "--out-dir", d,
    ]);
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["sup_error_max"].as_f64().unwrap() < 1e-9);
    assert_eq!(metrics["bound"].as_f64().unwrap(), 0.0);
}

#[test]
fn range_outputs_transfer_mass() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let n = write_net(
        dir.path(),
        "enz40.net",
        "species: S E C P\nreaction: S + E -> C @ 1\nreaction: C -> S + E @ 1\n\
         reaction: C -> P + E @ 1\ninit: S=40 E=40\n",
    );
    run(&[
        "simulate", "--network", &n, "--output", "range P 0 12", "--output", "range P 13 28",
        "--output", "range P 29 40", "--order", "12", "--t-stop", "10", "--points", "101",
        "--no-adaptive-gain", "--out-dir", d,
    ]);
    let rows = csv_rows(&dir.path().join("full.csv"));
    assert_eq!(rows[0].len(), 4);
    assert!(rows.windows(2).all(|w| w[1][1] <= w[0][1] + 1e-12 && w[1][3] >= w[0][3] - 1e-12));
    assert!((rows[0][1] - 1.0).abs() < 1e-12 && rows[100][3] > 0.5);
    for r in &rows {
        assert!((r[1] + r[2] + r[3] - 1.0).abs() < 1e-9);
    }
}

#[test]
fn ssa_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |sub: &str| {
        vec![
            "ssa".to_string(), "--network".into(), net("enzyme.net"), "--seed".into(), "11".into(),
            "--runs".into(), "2000".into(), "--t-stop".into(), "2".into(), "--points".into(), "5".into(),
            "--out-dir".into(), dir.path().join(sub).to_string_lossy().into_owned(),
        ]
    };
    let a: Vec<String> = args("a");
    let b: Vec<String> = args("b");
    run(&a.iter().map(String::as_str).collect::<Vec<_>>());
    let o = run(&b.iter().map(String::as_str).collect::<Vec<_>>());
    for f in ["distribution.csv", "tv.csv"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
    }
    let tv: f64 = field(&stdout(&o), "max_tv").parse().unwrap();
    assert!(tv < 0.1, "{tv}");
    let meta = fs::read_to_string(dir.path().join("a/ssa.meta.json")).unwrap();
    assert!(meta.contains("\"seed\": 11") && meta.contains("ChaCha8"));
}

#[test]
fn ssa_single_run_writes_path() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    run(&["ssa", "--network", &net("enzyme.net"), "--seed", "5", "--runs", "1", "--t-stop", "50", "--out-dir", d]);
    let text = fs::read_to_string(dir.path().join("path.csv")).unwrap();
    assert!(text.starts_with("time,S,E,C,P\n0.0000000000000000e0,10,10,0,0\n"));
    assert!(!dir.path().join("distribution.csv").exists());
}

#[test]
fn bench_writes_one_row_per_count() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let base = [
        "bench", "--network", &net("enzyme.net"), "--output", "state S=0 E={n} C=0 P={n}",
        "--suggest-ratio", "1e-3", "--t-stop", "10", "--points", "51", "--out-dir", d,
    ];
    run(&[&base[..], &["--counts", "5,10"]].concat());
    let text = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let eta = r.rsplit(',').next().unwrap();
        assert!(eta == "undefined" || eta.parse::<f64>().unwrap().is_finite());
    }
    assert!(rows[1].starts_with("10,66,"));
    run(&[&base[..], &["--counts", "7"]].concat());
    let text = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 2);
}

#[test]
fn invalid_configuration_fails_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("never");
    let d = d.to_str().unwrap();
    let o = bin()
        .args(["reduce", "--network", &net("reversible.net"), "--output", "state S1=0 S2=300", "--out-dir", d])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--order"));
    assert!(!Path::new(d).exists());

    let o = bin()
        .args(["reduce", "--network", &net("reversible.net"), "--output", "state X=1", "--order", "2", "--out-dir", d])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown species"));

    let o = bin().args(["enumerate", "--network", "/does/not/exist"]).output().unwrap();
    assert!(!o.status.success());
}
