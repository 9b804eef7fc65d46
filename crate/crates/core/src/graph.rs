//! Map graphs, plans and the region-level quantities derived from them.
use std::collections::{BTreeMap, VecDeque};
use std::hash::{Hash, Hasher};

use crate::error::{argument, domain, Error, Result};

/// One geographic unit as supplied by the caller.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexRecord {
    pub id: String,
    pub pop: u64,
    pub attributes: BTreeMap<String, f64>,
    /// Name of the administrative unit containing this vertex, if any.
    pub unit: Option<String>,
}

impl VertexRecord {
    pub fn new(id: impl Into<String>, pop: u64) -> Self {
        VertexRecord { id: id.into(), pop, attributes: BTreeMap::new(), unit: None }
    }
}

/// Immutable dual graph of a map. Vertices and edges are indexed densely.
#[derive(Clone, Debug)]
pub struct MapGraph {
    ids: Vec<String>,
    pops: Vec<u64>,
    attributes: Vec<BTreeMap<String, f64>>,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<(usize, usize)>>,
    units: Option<Vec<usize>>,
    unit_names: Vec<String>,
    total_pop: u64,
}

impl MapGraph {
    /// Builds and validates a graph from vertex records and index pairs.
    pub fn new(vertices: Vec<VertexRecord>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = vertices.len();
        let any_unit = vertices.iter().any(|v| v.unit.is_some());
        let mut unit_names: Vec<String> = Vec::new();
        let mut unit_index: BTreeMap<String, usize> = BTreeMap::new();
        let mut units = Vec::with_capacity(n);
        if any_unit {
            for (i, v) in vertices.iter().enumerate() {
                let name = v.unit.clone().ok_or_else(|| Error::Schema {
                    path: format!("vertices[{i}].unit"),
                    message: "every vertex needs a unit when any vertex has one".into(),
                })?;
                let next = unit_index.len();
                let idx = *unit_index.entry(name.clone()).or_insert_with(|| {
                    unit_names.push(name);
                    next
                });
                units.push(idx);
            }
        }
        let mut graph = MapGraph {
            ids: vertices.iter().map(|v| v.id.clone()).collect(),
            pops: vertices.iter().map(|v| v.pop).collect(),
            attributes: vertices.into_iter().map(|v| v.attributes).collect(),
            edges: Vec::new(),
            adjacency: vec![Vec::new(); n],
            units: None,
            unit_names,
            total_pop: 0,
        };
        graph.set_edges(edges)?;
        graph.total_pop = graph.pops.iter().sum();
        if graph.total_pop == 0 {
            return domain("total population must be positive");
        }
        if any_unit {
            graph = graph.with_units(units)?;
        }
        Ok(graph)
    }

    /// Graph with the given populations and anonymous vertex ids `"0"`, `"1"`, ...
    pub fn from_pops(pops: Vec<u64>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let vertices = pops
            .into_iter()
            .enumerate()
            .map(|(i, p)| VertexRecord::new(i.to_string(), p))
            .collect();
        Self::new(vertices, edges)
    }

    /// Rectangular lattice with unit populations, vertices in row-major order.
    pub fn grid(rows: usize, cols: usize) -> Self {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    edges.push((v, v + 1));
                }
                if r + 1 < rows {
                    edges.push((v, v + cols));
                }
            }
        }
        Self::from_pops(vec![1; rows * cols], edges).expect("grid graphs are valid")
    }

    /// Attaches administrative units (one label per vertex).
    pub fn with_units(mut self, units: Vec<usize>) -> Result<Self> {
        if units.len() != self.n_vertices() {
            return argument("unit labels must cover every vertex");
        }
        let count = units.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; count];
        for &u in &units {
            seen[u] = true;
        }
        if seen.iter().any(|s| !s) {
            return argument("unit labels must be dense");
        }
        if self.unit_names.len() != count {
            self.unit_names = (0..count).map(|u| u.to_string()).collect();
        }
        for u in 0..count {
            let members: Vec<usize> = (0..units.len()).filter(|&v| units[v] == u).collect();
            if !self.is_connected(&members) {
                return Err(Error::Schema {
                    path: format!("unit {}", self.unit_names[u]),
                    message: "administrative unit is not connected".into(),
                });
            }
        }
        self.units = Some(units);
        Ok(self)
    }

    fn set_edges(&mut self, edges: Vec<(usize, usize)>) -> Result<()> {
        let n = self.ids.len();
        let mut seen = std::collections::HashSet::new();
        for (i, &(a, b)) in edges.iter().enumerate() {
            if a >= n || b >= n {
                return Err(Error::Schema {
                    path: format!("edges[{i}]"),
                    message: format!("vertex index out of range in ({a}, {b})"),
                });
            }
            if a == b {
                return Err(Error::Schema {
                    path: format!("edges[{i}]"),
                    message: format!("self-loop on {}", self.ids[a]),
                });
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::Schema {
                    path: format!("edges[{i}]"),
                    message: format!("duplicate edge ({}, {})", self.ids[a], self.ids[b]),
                });
            }
            self.adjacency[a].push((b, i));
            self.adjacency[b].push((a, i));
        }
        self.edges = edges;
        let all: Vec<usize> = (0..n).collect();
        if n == 0 || !self.is_connected(&all) {
            return domain("graph must be non-empty and connected");
        }
        Ok(())
    }

    pub fn n_vertices(&self) -> usize {
        self.pops.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn pop(&self, v: usize) -> u64 {
        self.pops[v]
    }

    pub fn pops(&self) -> &[u64] {
        &self.pops
    }

    pub fn total_pop(&self) -> u64 {
        self.total_pop
    }

    pub fn id(&self, v: usize) -> &str {
        &self.ids[v]
    }

    pub fn attribute(&self, v: usize, name: &str) -> Option<f64> {
        self.attributes[v].get(name).copied()
    }

    pub fn attributes(&self, v: usize) -> &BTreeMap<String, f64> {
        &self.attributes[v]
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// `(neighbour, edge index)` pairs incident to `v`.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adjacency[v]
    }

    pub fn units(&self) -> Option<&[usize]> {
        self.units.as_deref()
    }

    pub fn n_units(&self) -> usize {
        self.unit_names.len()
    }

    pub fn unit_name(&self, u: usize) -> &str {
        &self.unit_names[u]
    }

    /// Whether the subgraph induced by `vertices` is connected (and non-empty).
    pub fn is_connected(&self, vertices: &[usize]) -> bool {
        if vertices.is_empty() {
            return false;
        }
        let mut inside = vec![false; self.n_vertices()];
        for &v in vertices {
            inside[v] = true;
        }
        self.component_count(vertices, |a, b| inside[a] && inside[b]) == 1
    }

    /// Number of connected components of `vertices` using only edges accepted by `keep`.
    pub fn component_count(&self, vertices: &[usize], keep: impl Fn(usize, usize) -> bool) -> usize {
        let mut visited = vec![false; self.n_vertices()];
        let mut inside = vec![false; self.n_vertices()];
        for &v in vertices {
            inside[v] = true;
        }
        let mut components = 0;
        let mut queue = VecDeque::new();
        for &start in vertices {
            if visited[start] {
                continue;
            }
            components += 1;
            visited[start] = true;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &(w, _) in &self.adjacency[u] {
                    if inside[w] && !visited[w] && keep(u, w) {
                        visited[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        components
    }
}

/// A partition of the map into sized regions, stored as an assignment vector.
///
/// Region labels carry no meaning: equality and hashing use the canonical
/// relabelling in which regions are numbered by their smallest vertex.
#[derive(Clone, Debug)]
pub struct Plan {
    assignment: Vec<u32>,
    sizes: Vec<u32>,
}

impl Plan {
    pub fn new(assignment: Vec<usize>, sizes: Vec<u32>) -> Result<Self> {
        let r = sizes.len();
        let mut used = vec![false; r];
        for &a in &assignment {
            if a >= r {
                return argument(format!("region index {a} out of range for {r} regions"));
            }
            used[a] = true;
        }
        if used.iter().any(|u| !u) {
            return argument("every region needs at least one vertex");
        }
        if sizes.contains(&0) {
            return argument("region sizes must be positive");
        }
        Ok(Plan { assignment: assignment.into_iter().map(|a| a as u32).collect(), sizes })
    }

    /// The one-region plan holding every seat.
    pub fn single(n_vertices: usize, seats: u32) -> Self {
        Plan { assignment: vec![0; n_vertices], sizes: vec![seats] }
    }

    pub fn n_regions(&self) -> usize {
        self.sizes.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.assignment.len()
    }

    pub fn region_of(&self, v: usize) -> usize {
        self.assignment[v] as usize
    }

    pub fn size(&self, k: usize) -> u32 {
        self.sizes[k]
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }

    pub fn assignment(&self) -> Vec<usize> {
        self.assignment.iter().map(|&a| a as usize).collect()
    }

    pub fn total_seats(&self) -> u32 {
        self.sizes.iter().sum()
    }

    pub fn region_vertices(&self, k: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&v| self.assignment[v] as usize == k).collect()
    }

    pub fn region_pop(&self, graph: &MapGraph, k: usize) -> u64 {
        (0..self.assignment.len())
            .filter(|&v| self.assignment[v] as usize == k)
            .map(|v| graph.pop(v))
            .sum()
    }

    pub fn region_pops(&self, graph: &MapGraph) -> Vec<u64> {
        let mut pops = vec![0; self.n_regions()];
        for (v, &a) in self.assignment.iter().enumerate() {
            pops[a as usize] += graph.pop(v);
        }
        pops
    }

    /// Checks that the plan covers `graph` and every region is connected.
    pub fn validate(&self, graph: &MapGraph) -> Result<()> {
        if self.assignment.len() != graph.n_vertices() {
            return argument("plan does not cover the graph");
        }
        for k in 0..self.n_regions() {
            if !graph.is_connected(&self.region_vertices(k)) {
                return domain(format!("region {k} is not connected"));
            }
        }
        Ok(())
    }

    /// Permutation mapping current labels to canonical labels.
    fn canonical_labels(&self) -> Vec<u32> {
        let mut map = vec![u32::MAX; self.sizes.len()];
        let mut next = 0;
        for &a in &self.assignment {
            if map[a as usize] == u32::MAX {
                map[a as usize] = next;
                next += 1;
            }
        }
        map
    }

    /// Relabels regions in order of their smallest vertex.
    pub fn canonical(&self) -> Plan {
        let map = self.canonical_labels();
        let mut sizes = vec![0; self.sizes.len()];
        for (k, &s) in self.sizes.iter().enumerate() {
            sizes[map[k] as usize] = s;
        }
        Plan { assignment: self.assignment.iter().map(|&a| map[a as usize]).collect(), sizes }
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical_labels().iter().enumerate().all(|(k, &m)| k as u32 == m)
    }

    /// Replaces region `k` by `above` (keeping label `k`) and a new last region
    /// made of `below`.
    pub fn split_region(&self, k: usize, below: &[usize], below_size: u32, above_size: u32) -> Plan {
        let mut next = self.clone();
        let label = next.sizes.len() as u32;
        for &v in below {
            debug_assert_eq!(next.assignment[v] as usize, k);
            next.assignment[v] = label;
        }
        next.sizes[k] = above_size;
        next.sizes.push(below_size);
        next
    }

    /// Relabels so that the given permutation `perm[old] = new` applies.
    pub fn permuted(&self, perm: &[usize]) -> Plan {
        let mut sizes = vec![0; self.sizes.len()];
        for (k, &s) in self.sizes.iter().enumerate() {
            sizes[perm[k]] = s;
        }
        Plan { assignment: self.assignment.iter().map(|&a| perm[a as usize] as u32).collect(), sizes }
    }
}

impl PartialEq for Plan {
    fn eq(&self, other: &Self) -> bool {
        if self.assignment.len() != other.assignment.len() || self.sizes.len() != other.sizes.len() {
            return false;
        }
        let a = self.canonical();
        let b = other.canonical();
        a.assignment == b.assignment && a.sizes == b.sizes
    }
}

impl Eq for Plan {}

impl Hash for Plan {
    fn hash<H: Hasher>(&self, state: &mut H) {
        let c = self.canonical();
        c.assignment.hash(state);
        c.sizes.hash(state);
    }
}

/// An unordered pair of adjacent regions with its boundary edge count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegionPair {
    pub a: usize,
    pub b: usize,
    pub boundary: usize,
}

/// Edges with one endpoint in region `k` and the other in `k2`, ascending.
pub fn boundary_edges(graph: &MapGraph, plan: &Plan, k: usize, k2: usize) -> Result<Vec<usize>> {
    let r = plan.n_regions();
    if k == k2 || k >= r || k2 >= r {
        return argument(format!("invalid region pair ({k}, {k2})"));
    }
    Ok(graph
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, &(u, v))| {
            let (a, b) = (plan.region_of(u), plan.region_of(v));
            (a == k && b == k2) || (a == k2 && b == k)
        })
        .map(|(e, _)| e)
        .collect())
}

/// All adjacent region pairs, ordered by `(a, b)` with `a < b`.
pub fn adjacent_region_pairs(graph: &MapGraph, plan: &Plan) -> Vec<RegionPair> {
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for &(u, v) in graph.edges() {
        let (a, b) = (plan.region_of(u), plan.region_of(v));
        if a != b {
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    counts.into_iter().map(|((a, b), boundary)| RegionPair { a, b, boundary }).collect()
}

/// Merges regions `k` and `k2` into the smaller of the two labels.
pub fn merge_regions(graph: &MapGraph, plan: &Plan, k: usize, k2: usize) -> Result<Plan> {
    if k == k2 || k >= plan.n_regions() || k2 >= plan.n_regions() {
        return argument(format!("invalid region pair ({k}, {k2})"));
    }
    let adjacent = graph.edges().iter().any(|&(u, v)| {
        let (a, b) = (plan.region_of(u), plan.region_of(v));
        (a == k && b == k2) || (a == k2 && b == k)
    });
    if !adjacent {
        return domain(format!("regions {k} and {k2} are not adjacent"));
    }
    Ok(merge_unchecked(plan, k, k2))
}

/// Merge without the adjacency check; labels above the removed one shift down.
pub(crate) fn merge_unchecked(plan: &Plan, k: usize, k2: usize) -> Plan {
    let (keep, gone) = (k.min(k2) as u32, k.max(k2) as u32);
    let assignment = plan
        .assignment
        .iter()
        .map(|&a| match a {
            a if a == gone => keep,
            a if a > gone => a - 1,
            a => a,
        })
        .collect();
    let mut sizes = plan.sizes.clone();
    sizes[keep as usize] += sizes[gone as usize];
    sizes.remove(gone as usize);
    Plan { assignment, sizes }
}

/// Multigraph with symmetric parallel-edge multiplicities and no self-loops.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuotientMultigraph {
    pub nodes: usize,
    /// Multiplicity of each stored pair `(i, j)` with `i < j`.
    pub multiplicity: BTreeMap<(usize, usize), usize>,
}

impl QuotientMultigraph {
    pub fn new(nodes: usize) -> Self {
        QuotientMultigraph { nodes, multiplicity: BTreeMap::new() }
    }

    pub fn add_edge(&mut self, i: usize, j: usize) {
        if i != j {
            *self.multiplicity.entry((i.min(j), i.max(j))).or_insert(0) += 1;
        }
    }

    pub fn count(&self, i: usize, j: usize) -> usize {
        self.multiplicity.get(&(i.min(j), i.max(j))).copied().unwrap_or(0)
    }
}

/// The plan multigraph: one node per region, one edge per crossing map edge.
pub fn quotient_multigraph(graph: &MapGraph, plan: &Plan) -> QuotientMultigraph {
    let mut q = QuotientMultigraph::new(plan.n_regions());
    for &(u, v) in graph.edges() {
        q.add_edge(plan.region_of(u), plan.region_of(v));
    }
    q
}

/// Number and fraction of map edges that cross region boundaries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgesRemoved {
    pub count: usize,
    pub fraction: f64,
}

pub fn edges_removed(graph: &MapGraph, plan: &Plan) -> EdgesRemoved {
    let count = graph
        .edges()
        .iter()
        .filter(|&&(u, v)| plan.region_of(u) != plan.region_of(v))
        .count();
    EdgesRemoved { count, fraction: count as f64 / graph.n_edges() as f64 }
}

/// Sum over units and regions of the component counts of each intersection,
/// minus the number of units.
pub fn admin_splits(graph: &MapGraph, plan: &Plan) -> Result<usize> {
    let units = graph
        .units()
        .ok_or_else(|| Error::Configuration("admin splits need administrative units".into()))?;
    let all: Vec<usize> = (0..graph.n_vertices()).collect();
    let pieces = graph.component_count(&all, |u, v| {
        units[u] == units[v] && plan.region_of(u) == plan.region_of(v)
    });
    Ok(pieces - graph.n_units())
}

/// Number of units that intersect two or more regions.
pub fn split_units(graph: &MapGraph, plan: &Plan) -> Result<usize> {
    let units = graph
        .units()
        .ok_or_else(|| Error::Configuration("split counts need administrative units".into()))?;
    let mut first: Vec<Option<usize>> = vec![None; graph.n_units()];
    let mut split = vec![false; graph.n_units()];
    for v in 0..graph.n_vertices() {
        let k = plan.region_of(v);
        match first[units[v]] {
            None => first[units[v]] = Some(k),
            Some(f) if f != k => split[units[v]] = true,
            _ => {}
        }
    }
    Ok(split.iter().filter(|&&s| s).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vertical_2x2() -> (MapGraph, Plan) {
        let g = MapGraph::grid(2, 2);
        let p = Plan::new(vec![0, 1, 0, 1], vec![1, 1]).unwrap();
        (g, p)
    }

    #[test]
    fn boundary_of_vertical_split() {
        let (g, p) = vertical_2x2();
        let b = boundary_edges(&g, &p, 0, 1).unwrap();
        let ends: Vec<_> = b.iter().map(|&e| g.edge(e)).collect();
        assert_eq!(ends, vec![(0, 1), (2, 3)]);
        assert!(boundary_edges(&g, &p, 1, 1).is_err());
    }

    #[test]
    fn path_boundary() {
        let g = MapGraph::from_pops(vec![1, 1, 1], vec![(0, 1), (1, 2)]).unwrap();
        let p = Plan::new(vec![0, 1, 1], vec![1, 1]).unwrap();
        assert_eq!(boundary_edges(&g, &p, 0, 1).unwrap(), vec![0]);
    }

    #[test]
    fn pairs_quotient_and_removed() {
        let (g, p) = vertical_2x2();
        assert_eq!(adjacent_region_pairs(&g, &p), vec![RegionPair { a: 0, b: 1, boundary: 2 }]);
        let q = quotient_multigraph(&g, &p);
        assert_eq!(q.nodes, 2);
        assert_eq!(q.count(0, 1), 2);
        let er = edges_removed(&g, &p);
        assert_eq!(er.count, 2);
        assert_eq!(er.fraction, 0.5);

        let single = Plan::single(4, 2);
        assert!(adjacent_region_pairs(&g, &single).is_empty());
        assert_eq!(quotient_multigraph(&g, &single).multiplicity.len(), 0);
        assert_eq!(edges_removed(&g, &single).count, 0);

        let singletons = Plan::new(vec![0, 1, 2, 3], vec![1; 4]).unwrap();
        let q = quotient_multigraph(&g, &singletons);
        assert_eq!(q.multiplicity.len(), 4);
        assert!(q.multiplicity.values().all(|&m| m == 1));
    }

    #[test]
    fn merge_then_labels() {
        let (g, p) = vertical_2x2();
        let m = merge_regions(&g, &p, 0, 1).unwrap();
        assert_eq!(m, Plan::single(4, 2));
        assert!(merge_regions(&g, &p, 0, 0).is_err());
        let strip = Plan::new(vec![0, 1, 2, 2], vec![1, 1, 2]).unwrap();
        let g2 = MapGraph::from_pops(vec![1; 4], vec![(0, 1), (1, 2), (2, 3)]).unwrap();
        assert!(merge_regions(&g2, &strip, 0, 2).is_err());
    }

    #[test]
    fn admin_split_counts() {
        let g = MapGraph::grid(2, 2).with_units(vec![0, 0, 1, 1]).unwrap();
        let (_, cols) = vertical_2x2();
        assert_eq!(admin_splits(&g, &cols).unwrap(), 2);
        let rows = Plan::new(vec![0, 0, 1, 1], vec![1, 1]).unwrap();
        assert_eq!(admin_splits(&g, &rows).unwrap(), 0);
        assert!(admin_splits(&MapGraph::grid(2, 2), &rows).is_err());
    }

    #[test]
    fn label_invariant_equality() {
        let a = Plan::new(vec![0, 1, 0, 1], vec![1, 1]).unwrap();
        let b = Plan::new(vec![1, 0, 1, 0], vec![1, 1]).unwrap();
        assert_eq!(a, b);
        assert!(a.is_canonical());
        assert!(!b.is_canonical());
    }

    #[test]
    fn rejects_bad_graphs() {
        assert!(MapGraph::from_pops(vec![1, 1], vec![(0, 1), (1, 0)]).is_err());
        assert!(MapGraph::from_pops(vec![1, 1], vec![(0, 0)]).is_err());
        assert!(MapGraph::from_pops(vec![1, 1, 1], vec![(0, 1)]).is_err());
        assert!(MapGraph::from_pops(vec![0, 0], vec![(0, 1)]).is_err());
        assert!(MapGraph::grid(1, 3).with_units(vec![0, 1, 0]).is_err());
    }
}
