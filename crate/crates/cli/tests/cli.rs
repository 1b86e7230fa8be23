use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnn")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = qnn(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(s: &str) -> serde_json::Value {
    serde_json::from_str(s).unwrap()
}

fn gen(dir: &Path, name: &str, extra: &[&str]) -> String {
    let path = dir.join(name).display().to_string();
    let mut args = vec!["circuit", "gen", "--out", &path];
    args.extend_from_slice(extra);
    ok(&args);
    path
}

fn dataset(dir: &Path) -> String {
    let p = dir.join("data.csv");
    fs::write(&p, "x0,x1,y\n0.1,0.2,0.3\n1.0,0.5,-0.2\n2.0,2.5,0.1\n0.7,1.9,-0.4\n").unwrap();
    p.display().to_string()
}

#[test]
fn circuit_roundtrip_and_validation() {
    let t = tempfile::tempdir().unwrap();
    let c = gen(t.path(), "c.json", &["--family", "brick1d", "--m", "6", "--L", "2", "--input-dim", "2", "--mean-zero"]);
    assert_eq!(json(&ok(&["circuit", "validate", &c]))["valid"], true);

    let mut spec = json(&fs::read_to_string(&c).unwrap());
    spec["layers"][0]["pairing"][0] = serde_json::json!([0, 0]);
    let bad = t.path().join("bad.json");
    fs::write(&bad, spec.to_string()).unwrap();
    let out = qnn(&["circuit", "validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("with itself"));

    let report = json(&ok(&["lightcone", "report", &c]));
    assert!(report["max_future"].as_u64().unwrap() <= 4);
    let dump = json(&ok(&["lightcone", "dump", &c, "--qubit", "2"]));
    assert_eq!(dump["target"], 2);
}

#[test]
fn eval_matches_between_seed_and_file_theta() {
    let t = tempfile::tempdir().unwrap();
    let c = gen(t.path(), "c.json", &["--family", "lattice2d", "--m", "6", "--L", "2", "--input-dim", "1"]);
    let v = json(&ok(&["sim", "eval", &c, "--theta", "5", "--x", "0.3"]));
    let locals = v["locals"].as_array().unwrap();
    let sum: f64 = locals.iter().map(|x| x.as_f64().unwrap()).sum();
    let value = v["value"].as_f64().unwrap();
    assert!((sum / v["normalization"].as_f64().unwrap() - value).abs() < 1e-12);

    let theta = t.path().join("theta.csv");
    let zeros: String = std::iter::once("theta\n".to_string()).chain((0..12).map(|_| "0\n".to_string())).collect();
    fs::write(&theta, zeros).unwrap();
    let z = json(&ok(&["sim", "eval", &c, "--theta", theta.to_str().unwrap(), "--x", "0"]));
    assert!(z["value"].as_f64().unwrap().is_finite());
}

#[test]
fn missing_file_exits_2_with_path() {
    let out = qnn(&["lightcone", "report", "/nonexistent/circuit.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = json(&String::from_utf8_lossy(&out.stderr));
    assert_eq!(err["error"], "config");
    assert_eq!(err["path"], "/nonexistent/circuit.json");
}

#[test]
fn oversized_light_cone_exits_3() {
    let t = tempfile::tempdir().unwrap();
    let c = gen(t.path(), "big.json", &["--family", "random-pairing", "--m", "30", "--L", "8"]);
    let out = qnn(&["sim", "eval", &c, "--x", "0"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&String::from_utf8_lossy(&out.stderr))["error"], "capacity");
}

#[test]
fn singular_kernel_exits_4() {
    let t = tempfile::tempdir().unwrap();
    let k = t.path().join("k.csv");
    fs::write(&k, "c0,c1\n0,0\n0,0\n").unwrap();
    let d = t.path().join("d.csv");
    fs::write(&d, "x0,y\n0.1,0.5\n0.2,0.1\n").unwrap();
    let out = qnn(&[
        "gp", "posterior", "--kernel", k.to_str().unwrap(), "--cov0", k.to_str().unwrap(), "--data",
        d.to_str().unwrap(), "--eta0", "0.1", "--t", "3", "--discrete", "--out",
        t.path().join("p.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn gp_posterior_at_time_zero_is_prior() {
    let t = tempfile::tempdir().unwrap();
    let k = t.path().join("k.csv");
    fs::write(&k, "c0,c1,c2\n1,0.3,0.1\n0.3,1,0.2\n0.1,0.2,1\n").unwrap();
    let d = t.path().join("d.csv");
    fs::write(&d, "x0,y\n0.1,0.5\n0.2,0.1\n").unwrap();
    let out = t.path().join("p.csv");
    ok(&[
        "gp", "posterior", "--kernel", k.to_str().unwrap(), "--cov0", k.to_str().unwrap(), "--data",
        d.to_str().unwrap(), "--eta0", "0.1", "--t", "0", "--continuous", "--out", out.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(out).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "0");
    assert_eq!(row[2], "1");
}

#[test]
fn training_trace_has_documented_columns() {
    let t = tempfile::tempdir().unwrap();
    let c = gen(t.path(), "c.json", &["--family", "brick1d", "--m", "6", "--L", "2", "--input-dim", "2", "--mean-zero"]);
    let d = dataset(t.path());
    let trace = t.path().join("trace.csv");
    let s = json(&ok(&[
        "train", "--mode", "gd", "--circuit", &c, "--data", &d, "--eta0", "0.3", "--steps", "10", "--seed", "1",
        "--out", trace.to_str().unwrap(),
    ]));
    assert!(s["final_loss"].as_f64().unwrap() >= 0.0);
    let text = fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().next().unwrap(), "step,loss,param_disp_inf,resid_l2,ntk_drift,lin_gap,shots_used");
    assert_eq!(text.lines().count(), 12);

    let shots = t.path().join("shots.csv");
    let s = json(&ok(&[
        "train", "--mode", "noisy-gd", "--circuit", &c, "--data", &d, "--eta0", "0.3", "--steps", "2", "--seed", "1",
        "--shots-schedule", "fixed:1000", "--out", shots.to_str().unwrap(),
    ]));
    assert!(s["total_shots"].as_f64().unwrap() > 0.0);
    let bad = qnn(&[
        "train", "--mode", "noisy-gd", "--circuit", &c, "--data", &d, "--eta0", "0.3", "--steps", "2", "--seed", "1",
        "--shots-schedule", "sometimes", "--out", shots.to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn stats_pipeline_on_pathological_circuit() {
    let t = tempfile::tempdir().unwrap();
    let c = gen(t.path(), "p.json", &["--family", "pathological", "--m", "4", "--L", "9", "--input-dim", "0"]);
    let ens = t.path().join("ens.csv");
    let e = json(&ok(&[
        "stats", "init-ensemble", "--circuit", &c, "--probes", "1", "--samples", "2000", "--seed", "3", "--law",
        "pathological", "--out", ens.to_str().unwrap(),
    ]));
    assert_eq!(e["within_bound"], true);
    assert_eq!(fs::read_to_string(&ens).unwrap().lines().next().unwrap(), "seed,probe_index,value");
    let cum = json(&ok(&["stats", "cumulants", "--ensemble", ens.to_str().unwrap(), "--order", "4"]));
    let ek = cum[0]["excess_kurtosis"].as_f64().unwrap();
    assert!((ek + 2.0).abs() < 0.1);
    let nt = json(&ok(&["stats", "normality", "--ensemble", ens.to_str().unwrap()]));
    assert!(nt["per_probe"][0]["ks_p"].as_f64().unwrap() < 1e-6);
    let j = json(&ok(&["stats", "janson", "--ensemble", ens.to_str().unwrap(), "--circuit", &c, "--order", "2"]));
    assert_eq!(j["max_degree"], 3);
    assert_eq!(j["reports"][0]["passed"], true);
}

#[test]
fn ntk_commands_write_square_matrices() {
    let t = tempfile::tempdir().unwrap();
    let c = gen(t.path(), "c.json", &["--family", "brick1d", "--m", "6", "--L", "2", "--input-dim", "2", "--mean-zero"]);
    let d = dataset(t.path());
    let k = t.path().join("k.csv");
    let e = json(&ok(&["ntk", "empirical", &c, "--inputs", &d, "--nk", "1", "--out", k.to_str().unwrap()]));
    assert!(e["lambda_min"].as_f64().unwrap() > 0.0);
    assert_eq!(fs::read_to_string(&k).unwrap().lines().count(), 5);
    let a = json(&ok(&["ntk", "analytic", &c, "--inputs", &d, "--samples", "50", "--seed", "2"]));
    let diag: f64 = (0..4).map(|i| a["entries"][i][i].as_f64().unwrap()).sum::<f64>() / 4.0;
    assert!((diag - 1.0).abs() < 1e-12);
}

fn sorted_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = walk(dir)
        .into_iter()
        .map(|p| p.strip_prefix(dir).unwrap().display().to_string())
        .collect();
    v.sort();
    v
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn run_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let cfg = |out: &str| {
        format!(
            r#"{{"seed": 9, "output_dir": "{out}",
                "circuit": {{"family": "brick1d", "m": 8, "layers": 2, "input_dim": 2, "mean_zero": true}},
                "dataset": {{"synthetic": {{"n": 3, "dim": 2}}}},
                "plan": {{"kind": "gp-check", "steps": 3, "seeds": 20, "kernel_samples": 30, "cov_samples": 100, "probes": 2}}}}"#
        )
    };
    for out in ["a", "b"] {
        let p = t.path().join(format!("{out}.json"));
        fs::write(&p, cfg(out)).unwrap();
        ok(&["run", p.to_str().unwrap()]);
    }
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    let files = sorted_files(&a);
    assert_eq!(files, sorted_files(&b));
    for f in files.iter().filter(|f| f.ends_with(".csv")) {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest = json(&fs::read_to_string(a.join("manifest.json")).unwrap());
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["wall_time_secs"].as_f64().is_some());
}

#[test]
fn width_sweep_writes_one_directory_per_width() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path().join("sweep.json");
    fs::write(
        &p,
        r#"{"seed": 1, "output_dir": "sweep",
            "circuit": {"family": "brick1d", "m": 8, "layers": 2, "input_dim": 2, "mean_zero": true},
            "dataset": {"synthetic": {"n": 3, "dim": 2}},
            "plan": {"kind": "width-sweep", "widths": [8, 16, 32],
                     "plan": {"kind": "train", "mode": "gd", "steps": 3}}}"#,
    )
    .unwrap();
    ok(&["run", p.to_str().unwrap()]);
    let out = t.path().join("sweep");
    for m in [8, 16, 32] {
        assert!(out.join(format!("m{m}/trace.csv")).is_file());
    }
    let agg = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 4);
    assert!(agg.starts_with("m,final_loss"));
}

#[test]
fn malformed_config_exits_2() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path().join("bad.json");
    fs::write(&p, "{\"seed\": 1}").unwrap();
    let out = qnn(&["run", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let p = t.path().join("nofile.json");
    fs::write(
        &p,
        r#"{"seed": 1, "output_dir": "o", "circuit": {"file": "missing.json"}, "plan": {"kind": "ntk-empirical"}}"#,
    )
    .unwrap();
    let out = qnn(&["run", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
}

#[test]
fn reproduce_runs_a_suite() {
    let out = ok(&["reproduce", "A1"]);
    assert!(out.starts_with("A1") && out.contains("PASS"));
    assert_eq!(qnn(&["reproduce", "A42"]).status.code(), Some(2));
}

#[test]
fn every_subcommand_has_help() {
    for args in [
        vec!["circuit", "gen"],
        vec!["circuit", "validate"],
        vec!["lightcone", "report"],
        vec!["lightcone", "dump"],
        vec!["sim", "eval"],
        vec!["sim", "calibrate"],
        vec!["ntk", "empirical"],
        vec!["ntk", "analytic"],
        vec!["train"],
        vec!["gp", "posterior"],
        vec!["gp", "check"],
        vec!["stats", "init-ensemble"],
        vec!["stats", "cumulants"],
        vec!["stats", "normality"],
        vec!["stats", "janson"],
        vec!["reproduce"],
        vec!["run"],
    ] {
        let mut a = args.clone();
        a.push("--help");
        let out = ok(&a);
        assert!(out.contains("Usage"), "{args:?}");
    }
}
