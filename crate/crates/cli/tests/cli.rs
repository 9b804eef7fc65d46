use std::path::Path;
use std::process::Command;

fn gsmc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gsmc"))
}

fn write_grid(path: &Path, rows: usize, cols: usize) {
    let vertices: Vec<_> = (0..rows * cols)
        .map(|v| serde_json::json!({"id": format!("v{v}"), "pop": 1, "attributes": {"votes": (v % 3) as f64}}))
        .collect();
    let mut edges = Vec::new();
    for v in 0..rows * cols {
        if v % cols + 1 < cols {
            edges.push(serde_json::json!([format!("v{v}"), format!("v{}", v + 1)]));
        }
        if v + cols < rows * cols {
            edges.push(serde_json::json!([format!("v{v}"), format!("v{}", v + cols)]));
        }
    }
    std::fs::write(path, serde_json::json!({"vertices": vertices, "edges": edges}).to_string()).unwrap();
}

fn run(cmd: &mut Command) -> i32 {
    cmd.output().unwrap().status.code().unwrap()
}

#[test]
fn sample_is_byte_identical_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    write_grid(&g, 4, 4);
    for name in ["a.jsonl", "b.jsonl"] {
        let out = dir.path().join(name);
        let code = run(gsmc().args(["sample", "--districts", "4", "--n", "300", "--seed", "7", "--threads", "1"]).arg("--graph").arg(&g).arg("--out").arg(&out));
        assert_eq!(code, 0);
    }
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_eq!(read("a.manifest.json"), read("b.manifest.json"));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    write_grid(&g, 3, 4);
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"scheme": {"districts": 3, "seats": 3, "min_size": 1, "max_size": 1}, "run": {"n_particles": 50, "seed": 1}}"#).unwrap();
    let out = dir.path().join("p.jsonl");
    let code = run(gsmc().args(["sample", "--space", "linking", "--mcmc-successes", "1", "--n", "80"]).arg("--graph").arg(&g).arg("--config").arg(&cfg).arg("--out").arg(&out));
    assert_eq!(code, 0);
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 80);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("p.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["space"], "linking");
    assert_eq!(manifest["config"]["run"]["mcmc_successes"], 1);
}

#[test]
fn enumerate_two_by_two() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    write_grid(&g, 2, 2);
    let out = dir.path().join("exact.jsonl");
    assert_eq!(run(gsmc().args(["enumerate", "--scheme", "2"]).arg("--graph").arg(&g).arg("--out").arg(&out)), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2);
    for line in text.lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!((rec["normalized_weight"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    }
}

#[test]
fn diagnose_flags_divergent_runs() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    write_grid(&g, 1, 4);
    let runs = dir.path().join("runs");
    std::fs::create_dir(&runs).unwrap();
    let line = |a: [usize; 4]| format!("{{\"assignment\":{a:?},\"sizes\":[1,1],\"log_weight\":0.0,\"normalized_weight\":0.25}}\n");
    std::fs::write(runs.join("r1.jsonl"), line([0, 0, 1, 1]).repeat(4)).unwrap();
    std::fs::write(runs.join("r2.jsonl"), line([0, 1, 1, 1]).repeat(4)).unwrap();
    let pattern = format!("{}/*.jsonl", runs.display());
    let table = dir.path().join("rhat.csv");
    let code = run(gsmc().args(["diagnose", "--runs", &pattern, "--stat", "sum:votes", "--fail-above-rhat", "1.05"]).arg("--graph").arg(&g).arg("--out").arg(&table));
    assert_eq!(code, 3);
    assert!(std::fs::read_to_string(&table).unwrap().starts_with("statistic,runs,mean,se,rhat"));
}

#[test]
fn stats_writes_tidy_rows() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    write_grid(&g, 2, 2);
    let exact = dir.path().join("exact.jsonl");
    assert_eq!(run(gsmc().args(["enumerate", "--scheme", "2"]).arg("--graph").arg(&g).arg("--out").arg(&exact)), 0);
    let out = gsmc().args(["stats", "--stat", "edges-removed"]).arg("--graph").arg(&g).arg("--plans").arg(&exact).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().collect::<Vec<_>>(), ["plan,weight,statistic,value", "0,0.5,edges-removed,2", "1,0.5,edges-removed,2"]);
}

#[test]
fn exit_codes() {
    assert_eq!(run(gsmc().args(["sample", "--bogus"])), 1);
    assert_eq!(run(gsmc().args(["sample", "--graph", "/nonexistent.json", "--districts", "2"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    write_grid(&g, 2, 2);
    assert_eq!(run(gsmc().args(["sample", "--districts", "3"]).arg("--graph").arg(&g).arg("--out").arg(dir.path().join("x.jsonl"))), 2);
}
