use std::path::Path;
use std::process::{Command, Output};

fn ggm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ggm"))
        .args(args)
        .env_remove("GGM_JOBS")
        .output()
        .expect("binary runs")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn gen_sample_recover_finds_triangle() {
    let dir = tempfile::tempdir().unwrap();
    let (m, s, g) = (path(dir.path(), "m.json"), path(dir.path(), "s.csv"), path(dir.path(), "g.json"));
    let out = ggm(&[
        "gen", "--family", "triangle-cloud", "--p", "200", "--kappa", "0.4", "--eps", "0.01",
        "--sigma2", "1000", "--out", &m,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut hits = 0;
    for seed in ["3", "4", "5"] {
        let out = ggm(&["sample", "--model", &m, "--n", "175", "--seed", seed, "--out", &s]);
        assert!(out.status.success());
        let out = ggm(&[
            "recover", "--algo", "slice", "--d", "2", "--kappa", "0.4", "--samples", &s, "--out", &g,
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&g).unwrap()).unwrap();
        let edges = v["edges"].as_array().unwrap();
        let triangle = [[1, 2], [1, 3], [2, 3]]
            .iter()
            .all(|e| edges.contains(&serde_json::json!(e)));
        hits += triangle as usize;
    }
    assert!(hits >= 2, "triangle found in {hits}/3 runs");
}

#[test]
fn sampling_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let m = path(dir.path(), "m.json");
    assert!(ggm(&["gen", "--family", "four-node", "--kappa", "0.3", "--eps", "0.1", "--out", &m])
        .status
        .success());
    let a = ggm(&["sample", "--model", &m, "--n", "5", "--seed", "9", "--header"]);
    let b = ggm(&["sample", "--model", &m, "--n", "5", "--seed", "9", "--header"]);
    let c = ggm(&["sample", "--model", &m, "--n", "5", "--seed", "10", "--header"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("x1,x2,x3,x4\n"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn bounds_prints_plan() {
    let out = ggm(&["bounds", "--p", "15", "--d", "2", "--kappa", "0.5", "--delta", "0.1"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n_dice"], 5286);
    assert_eq!(v["n_slice"], 6051);
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_dice"));
}

#[test]
fn exit_codes() {
    let out = ggm(&["bounds", "--p", "15", "--d", "2", "--kappa", "0.5", "--nope"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim().lines().count(), 1);
    assert!(err.contains("--nope"));

    let out = ggm(&["gen", "--family", "triangle-cloud", "--p", "10"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--kappa"));

    let out = ggm(&["recover", "--d", "2", "--kappa", "0.4", "--samples", "/does/not/exist.csv"]);
    assert_eq!(out.status.code(), Some(2));

    let out = ggm(&["bounds", "--p", "15", "--d", "2", "--kappa", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn experiment_config_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = path(dir.path(), "cfg.json");
    std::fs::write(
        &cfg,
        r#"{"experiment":"failure-vs-sigma",
            "family":{"family":"triangle-cloud","kappa":0.4,"epsilon":0.01,"sigma2":1.0,"p":20},
            "sweep":[1.0,1000.0],"trials":3,"n":100,"d":2,"kappa":0.4,"base_seed":11}"#,
    )
    .unwrap();
    let a = ggm(&["experiment", "--config", &cfg, "--jobs", "1"]);
    let b = ggm(&["experiment", "--config", &cfg, "--jobs", "2"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().nth(1).unwrap().starts_with("sigma2,1.0,0,11,"));

    let c = ggm(&["experiment", "--config", &cfg, "--trials", "1", "--seed", "40"]);
    let text = String::from_utf8(c.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("sigma2,1.0,0,40,"));

    let d = ggm(&["experiment", "--config", &cfg, "--trials", "0"]);
    assert_eq!(d.status.code(), Some(1));

    let e = ggm(&["experiment", "--config", &cfg, "--population", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&e.stdout).unwrap();
    for s in v["summaries"].as_array().unwrap() {
        assert_eq!(s["failure_probability"], 0.0);
    }
}
