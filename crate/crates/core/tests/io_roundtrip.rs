use gsmc::graph::Plan;
use gsmc::io::{load_graph, manifest_path, read_manifest, read_plans, write_manifest, write_plans, RunManifest, SampleConfig, TargetConfig};
use gsmc::scheme::{DistrictingScheme, ScheduleKind};
use gsmc::smc::{run_gsmc, RunConfig};
use gsmc::Error;

fn grid_json(rows: usize, cols: usize) -> serde_json::Value {
    let vertices: Vec<_> = (0..rows * cols).map(|v| serde_json::json!({"id": format!("p{v}"), "pop": 1})).collect();
    let mut edges = Vec::new();
    for v in 0..rows * cols {
        if v % cols + 1 < cols {
            edges.push(serde_json::json!([format!("p{v}"), format!("p{}", v + 1)]));
        }
        if v + cols < rows * cols {
            edges.push(serde_json::json!([format!("p{v}"), format!("p{}", v + cols)]));
        }
    }
    serde_json::json!({"vertices": vertices, "edges": edges})
}

#[test]
fn fixture_loads_and_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    std::fs::write(&path, grid_json(2, 2).to_string()).unwrap();
    let g = load_graph(&path).unwrap();
    assert_eq!((g.n_vertices(), g.n_edges()), (4, 4));

    let mut bad = grid_json(2, 2);
    bad["vertices"][1]["pop"] = serde_json::json!("many");
    std::fs::write(&path, bad.to_string()).unwrap();
    match load_graph(&path) {
        Err(Error::Schema { path, .. }) => assert_eq!(path, "vertices[1].pop"),
        other => panic!("{other:?}"),
    }

    let mut split = grid_json(1, 3);
    for (i, u) in ["a", "b", "a"].iter().enumerate() {
        split["vertices"][i]["unit"] = serde_json::json!(u);
    }
    std::fs::write(&path, split.to_string()).unwrap();
    assert!(load_graph(&path).is_err());

    let mut cut = grid_json(2, 2);
    cut["edges"] = serde_json::json!([["p0", "p1"]]);
    std::fs::write(&path, cut.to_string()).unwrap();
    assert!(load_graph(&path).is_err());
}

#[test]
fn plan_archive_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let gpath = dir.path().join("g.json");
    std::fs::write(&gpath, grid_json(3, 3).to_string()).unwrap();
    let graph = load_graph(&gpath).unwrap();
    let config = SampleConfig {
        scheme: DistrictingScheme::single_member(3),
        schedule: ScheduleKind::DistrictOnly,
        target: TargetConfig::default(),
        run: RunConfig::new(2, 5),
    };
    let problem = config.build_problem(graph).unwrap();
    let ens = run_gsmc(&problem, config.run.clone()).unwrap();
    let out = dir.path().join("plans.jsonl");
    write_plans(&ens, &out).unwrap();
    write_manifest(&RunManifest::new(&config, &ens, None), &manifest_path(&out)).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 2);
    let records = read_plans(&out).unwrap();
    let total: f64 = records.iter().map(|r| r.normalized_weight).sum();
    assert!((total - 1.0).abs() < 1e-9);
    for (r, p) in records.iter().zip(&ens.particles) {
        let plan: Plan = r.plan().unwrap();
        assert_eq!(plan.assignment(), p.plan().canonical().assignment());
    }
    let manifest = read_manifest(&manifest_path(&out)).unwrap();
    assert_eq!(manifest.config_digest, config.digest());
    assert_eq!(manifest.stages.len(), 2);
    assert_eq!(manifest.config, config);
}

#[test]
fn config_parses_with_defaults() {
    let text = r#"{"scheme": {"districts": 3, "seats": 7, "min_size": 2, "max_size": 3},
                   "target": {"tolerance": 0.01, "space": "forest"},
                   "run": {"n_particles": 100, "seed": 3, "resample": {"defer": {"ess_threshold": 0.5}}}}"#;
    let config: SampleConfig = serde_json::from_str(text).unwrap();
    assert_eq!(config.schedule, ScheduleKind::DistrictOnly);
    assert_eq!(config.target.rho, 1.0);
    assert_eq!(config.run.max_rejections, 10_000);
}
