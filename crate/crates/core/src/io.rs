//! Graph files, run configuration, plan archives and run manifests.
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{MapGraph, Plan, VertexRecord};
use crate::problem::Problem;
use crate::scheme::{DistrictingScheme, ScheduleKind, SplittingSchedule};
use crate::smc::{Ensemble, RunConfig, StageStats};
use crate::target::{PopBounds, ScoreTerm, Space, TargetSpec};

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema { path: path.into(), message: message.into() }
}

/// Parses a graph document; vertex indices follow file order.
pub fn parse_graph(doc: &Value) -> Result<MapGraph> {
    let obj = doc.as_object().ok_or_else(|| schema("$", "expected an object"))?;
    let verts = obj
        .get("vertices")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("vertices", "expected an array"))?;
    let mut records = Vec::with_capacity(verts.len());
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, v) in verts.iter().enumerate() {
        let at = |f: &str| format!("vertices[{i}].{f}");
        let id = match v.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(schema(at("id"), "expected a string")),
        };
        let pop = v.get("pop").and_then(Value::as_u64).ok_or_else(|| schema(at("pop"), "expected a non-negative integer"))?;
        let mut rec = VertexRecord::new(id.clone(), pop);
        if let Some(attrs) = v.get("attributes") {
            let attrs = attrs.as_object().ok_or_else(|| schema(at("attributes"), "expected an object"))?;
            for (k, x) in attrs {
                let x = x.as_f64().ok_or_else(|| schema(format!("vertices[{i}].attributes.{k}"), "expected a number"))?;
                rec.attributes.insert(k.clone(), x);
            }
        }
        match v.get("unit") {
            None | Some(Value::Null) => {}
            Some(Value::String(s)) => rec.unit = Some(s.clone()),
            Some(Value::Number(n)) => rec.unit = Some(n.to_string()),
            Some(_) => return Err(schema(at("unit"), "expected a string")),
        }
        if index.insert(id.clone(), i).is_some() {
            return Err(schema(at("id"), format!("duplicate vertex id {id}")));
        }
        records.push(rec);
    }
    let edge_list = obj
        .get("edges")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("edges", "expected an array"))?;
    let mut edges = Vec::with_capacity(edge_list.len());
    for (i, e) in edge_list.iter().enumerate() {
        let pair = e
            .as_array()
            .filter(|p| p.len() == 2)
            .ok_or_else(|| schema(format!("edges[{i}]"), "expected a pair of vertex ids"))?;
        let mut ends = [0usize; 2];
        for (j, end) in pair.iter().enumerate() {
            let key = match end {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.to_string(),
                _ => return Err(schema(format!("edges[{i}][{j}]"), "expected a vertex id")),
            };
            ends[j] = *index.get(&key).ok_or_else(|| schema(format!("edges[{i}][{j}]"), format!("unknown vertex id {key}")))?;
        }
        edges.push((ends[0], ends[1]));
    }
    MapGraph::new(records, edges)
}

pub fn load_graph(path: &Path) -> Result<MapGraph> {
    let text = std::fs::read_to_string(path)?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| schema(path.display().to_string(), e.to_string()))?;
    parse_graph(&doc)
}

/// The inverse of [`parse_graph`].
pub fn graph_to_json(graph: &MapGraph) -> Value {
    let vertices: Vec<Value> = (0..graph.n_vertices())
        .map(|v| {
            let mut o = serde_json::json!({
                "id": graph.id(v),
                "pop": graph.pop(v),
                "attributes": graph.attributes(v),
            });
            if let Some(units) = graph.units() {
                o["unit"] = Value::String(graph.unit_name(units[v]).to_string());
            }
            o
        })
        .collect();
    let edges: Vec<Value> = graph.edges().iter().map(|&(a, b)| serde_json::json!([graph.id(a), graph.id(b)])).collect();
    serde_json::json!({ "vertices": vertices, "edges": edges })
}

fn default_rho() -> f64 {
    1.0
}

/// Target settings as written in a configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetConfig {
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Relative per-seat population tolerance around the ideal.
    #[serde(default)]
    pub tolerance: f64,
    #[serde(default)]
    pub soft_terms: Vec<ScoreTerm>,
    #[serde(default = "default_space")]
    pub space: Space,
    #[serde(default)]
    pub hierarchical: bool,
}

fn default_space() -> Space {
    Space::Graph
}

impl Default for TargetConfig {
    fn default() -> Self {
        TargetConfig { rho: 1.0, tolerance: 0.0, soft_terms: Vec::new(), space: Space::Graph, hierarchical: false }
    }
}

fn default_schedule() -> ScheduleKind {
    ScheduleKind::DistrictOnly
}

/// A complete sampling configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub scheme: DistrictingScheme,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleKind,
    #[serde(default)]
    pub target: TargetConfig,
    pub run: RunConfig,
}

impl SampleConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| schema(path.display().to_string(), e.to_string()))
    }

    /// Hex SHA-256 of the fields that affect results; thread count and
    /// logging settings are left out.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.run.threads = 1;
        c.run.verbose = false;
        c.run.timings = false;
        let bytes = serde_json::to_vec(&c).expect("configs serialise");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn build_problem(&self, graph: MapGraph) -> Result<Problem> {
        let schedule = SplittingSchedule::new(self.schedule, self.scheme)?;
        let bounds = PopBounds::from_tolerance(graph.total_pop(), self.scheme.seats, self.target.tolerance);
        let target = TargetSpec {
            rho: self.target.rho,
            pop_bounds: bounds,
            soft_terms: self.target.soft_terms.clone(),
            space: self.target.space,
            hierarchical: self.target.hierarchical,
        };
        Problem::new(graph, schedule, target)
    }
}

/// One particle of a plan archive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub assignment: Vec<usize>,
    pub sizes: Vec<u32>,
    pub log_weight: f64,
    pub normalized_weight: f64,
}

impl PlanRecord {
    pub fn plan(&self) -> Result<Plan> {
        Plan::new(self.assignment.clone(), self.sizes.clone())
    }
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub seed: u64,
    pub library_version: String,
    pub n_particles: usize,
    pub space: Space,
    pub log_z: f64,
    pub final_ess: f64,
    pub stages: Vec<StageStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
    /// The full configuration the run used.
    pub config: SampleConfig,
}

impl RunManifest {
    pub fn new(config: &SampleConfig, ens: &Ensemble, wall_seconds: Option<f64>) -> Self {
        RunManifest {
            config_digest: config.digest(),
            seed: config.run.seed,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            n_particles: ens.len(),
            space: config.target.space,
            log_z: ens.log_z,
            final_ess: ens.ess(),
            stages: ens.stats.clone(),
            wall_seconds,
            config: config.clone(),
        }
    }
}

/// Sidecar manifest path for a plan archive.
pub fn manifest_path(plans: &Path) -> PathBuf {
    plans.with_extension("manifest.json")
}

/// Writes one JSON line per particle.
pub fn write_plans(ens: &Ensemble, path: &Path) -> Result<()> {
    let weights = ens.normalized_weights();
    let mut out = BufWriter::new(File::create(path)?);
    for ((p, &lw), &w) in ens.particles.iter().zip(&ens.log_weights).zip(&weights) {
        let plan = p.plan().canonical();
        let rec = PlanRecord { assignment: plan.assignment(), sizes: plan.sizes().to_vec(), log_weight: lw, normalized_weight: w };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, manifest)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_plans(path: &Path) -> Result<Vec<PlanRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| schema(format!("{}:{}", path.display(), i + 1), e.to_string()))?);
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| schema(path.display().to_string(), e.to_string()))
}

/// Writes an enumeration archive: one line per plan with its exact probability.
pub fn write_exact(plans: &[Plan], probs: &[f64], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for (p, &w) in plans.iter().zip(probs) {
        let rec = PlanRecord { assignment: p.assignment(), sizes: p.sizes().to_vec(), log_weight: w.ln(), normalized_weight: w };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_round_trip_and_errors() {
        let doc = serde_json::json!({
            "vertices": [
                {"id": "a", "pop": 1}, {"id": "b", "pop": 1},
                {"id": "c", "pop": 1, "attributes": {"x": 2.5}}, {"id": "d", "pop": 1}
            ],
            "edges": [["a", "b"], ["a", "c"], ["b", "d"], ["c", "d"]]
        });
        let g = parse_graph(&doc).unwrap();
        assert_eq!((g.n_vertices(), g.n_edges()), (4, 4));
        assert_eq!(g.attribute(2, "x"), Some(2.5));
        let again = parse_graph(&graph_to_json(&g)).unwrap();
        assert_eq!(again.edges(), g.edges());

        let mut dup = doc.clone();
        dup["edges"].as_array_mut().unwrap().push(serde_json::json!(["b", "a"]));
        let err = parse_graph(&dup).unwrap_err().to_string();
        assert!(err.contains("duplicate edge"), "{err}");
        let mut unknown = doc.clone();
        unknown["edges"][0][1] = serde_json::json!("zz");
        let err = parse_graph(&unknown).unwrap_err().to_string();
        assert!(err.contains("edges[0][1]") && err.contains("zz"), "{err}");
    }

    #[test]
    fn digest_tracks_meaningful_fields() {
        let cfg = SampleConfig {
            scheme: DistrictingScheme::single_member(2),
            schedule: ScheduleKind::DistrictOnly,
            target: TargetConfig::default(),
            run: RunConfig::new(10, 1),
        };
        let mut threads = cfg.clone();
        threads.run.threads = 4;
        assert_eq!(cfg.digest(), threads.digest());
        let mut seed = cfg.clone();
        seed.run.seed = 2;
        assert_ne!(cfg.digest(), seed.digest());
        let mut rho = cfg.clone();
        rho.target.rho = 0.5;
        assert_ne!(cfg.digest(), rho.digest());
    }
}
