//! Single-level administrative hierarchy: hierarchical trees, their counts,
//! and which plans can be reached by hierarchical splitting.
use rand::Rng;

use crate::error::{domain, Error, Result};
use crate::graph::{boundary_edges, merge_unchecked, quotient_multigraph, MapGraph, Plan, QuotientMultigraph};
use crate::trees::{log_multigraph_tree_count, log_spanning_tree_count, log_tree_count_local, wilson, wilson_tree, LocalGraph, RegionTree};

/// Assignment of every vertex to an administrative unit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdminHierarchy {
    unit_of: Vec<usize>,
    n_units: usize,
}

impl AdminHierarchy {
    /// Uses the unit labels attached to the graph.
    pub fn from_graph(graph: &MapGraph) -> Result<Self> {
        let units = graph
            .units()
            .ok_or_else(|| Error::Configuration("hierarchical sampling needs administrative units".into()))?;
        Ok(AdminHierarchy { unit_of: units.to_vec(), n_units: graph.n_units() })
    }

    pub fn unit(&self, v: usize) -> usize {
        self.unit_of[v]
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    /// Vertices of `vertices` grouped by unit; only non-empty groups, by unit index.
    fn by_unit(&self, vertices: &[usize]) -> Vec<(usize, Vec<usize>)> {
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); self.n_units];
        for &v in vertices {
            groups[self.unit_of[v]].push(v);
        }
        groups.into_iter().enumerate().filter(|(_, g)| !g.is_empty()).collect()
    }
}

/// Whether `vertices` is connected and meets every unit in at most one piece.
pub fn is_hierarchically_connected(graph: &MapGraph, h: &AdminHierarchy, vertices: &[usize]) -> bool {
    graph.is_connected(vertices) && h.by_unit(vertices).iter().all(|(_, g)| graph.is_connected(g))
}

/// Unit-level multigraph of the subgraph on `vertices`, with the unit index of
/// each node and `(node, node, edge)` triples for the crossing edges.
fn unit_quotient(graph: &MapGraph, h: &AdminHierarchy, vertices: &[usize]) -> (Vec<usize>, Vec<(usize, usize, usize)>) {
    let groups = h.by_unit(vertices);
    let mut node_of_unit = vec![usize::MAX; h.n_units];
    for (i, (u, _)) in groups.iter().enumerate() {
        node_of_unit[*u] = i;
    }
    let mut inside = vec![false; graph.n_vertices()];
    for &v in vertices {
        inside[v] = true;
    }
    let mut edges = Vec::new();
    for (e, &(a, b)) in graph.edges().iter().enumerate() {
        if inside[a] && inside[b] && h.unit(a) != h.unit(b) {
            edges.push((node_of_unit[h.unit(a)], node_of_unit[h.unit(b)], e));
        }
    }
    (groups.into_iter().map(|(u, _)| u).collect(), edges)
}

/// Log of the number of hierarchical spanning trees of the subgraph on
/// `vertices`: trees of the unit multigraph times trees inside each unit.
pub fn log_tau_eta(graph: &MapGraph, h: &AdminHierarchy, vertices: &[usize]) -> Result<f64> {
    if !is_hierarchically_connected(graph, h, vertices) {
        return domain("region is not hierarchically connected");
    }
    let (units, edges) = unit_quotient(graph, h, vertices);
    let mut total = log_tree_count_local(&LocalGraph::from_edges(units.len(), &edges))?;
    for (_, group) in h.by_unit(vertices) {
        total += log_spanning_tree_count(graph, &group)?;
    }
    Ok(total)
}

/// Draws a uniform hierarchical spanning tree of the subgraph on `vertices`.
///
/// Parallel unit-level edges stay distinct in the walk, so the quotient tree
/// and the choice of underlying edge are drawn jointly and uniformly.
pub fn hierarchical_wilson<R: Rng + ?Sized>(
    graph: &MapGraph,
    h: &AdminHierarchy,
    vertices: &[usize],
    seats: u32,
    rng: &mut R,
) -> Result<RegionTree> {
    if !is_hierarchically_connected(graph, h, vertices) {
        return domain("region is not hierarchically connected");
    }
    let mut edges = Vec::with_capacity(vertices.len().saturating_sub(1));
    for (_, group) in h.by_unit(vertices) {
        edges.extend(wilson_tree(graph, &group, 0, rng)?.edges);
    }
    let (units, cross) = unit_quotient(graph, h, vertices);
    edges.extend(wilson(&LocalGraph::from_edges(units.len(), &cross), rng)?);
    Ok(RegionTree::new(vertices.to_vec(), edges, seats))
}

/// Whether `tree` is a spanning tree whose restriction to every unit it meets
/// is again a spanning tree.
pub fn is_hierarchical_tree(graph: &MapGraph, h: &AdminHierarchy, tree: &RegionTree) -> bool {
    if !tree.is_spanning_tree(graph) {
        return false;
    }
    h.by_unit(&tree.vertices).iter().all(|(u, group)| {
        let inner: Vec<usize> = tree
            .edges
            .iter()
            .copied()
            .filter(|&e| {
                let (a, b) = graph.edge(e);
                h.unit(a) == *u && h.unit(b) == *u
            })
            .collect();
        RegionTree::new(group.clone(), inner, 0).is_spanning_tree(graph)
    })
}

/// Component label of each region in the graph whose edges join regions
/// adjacent inside a common unit.
pub fn admin_adjacency_components(graph: &MapGraph, h: &AdminHierarchy, plan: &Plan) -> Vec<usize> {
    let r = plan.n_regions();
    let mut parent: Vec<usize> = (0..r).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(u, v) in graph.edges() {
        let (a, b) = (plan.region_of(u), plan.region_of(v));
        if a != b && h.unit(u) == h.unit(v) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut label = vec![usize::MAX; r];
    let mut next = 0;
    (0..r)
        .map(|k| {
            let root = find(&mut parent, k);
            if label[root] == usize::MAX {
                label[root] = next;
                next += 1;
            }
            label[root]
        })
        .collect()
}

/// Whether the plan admits a hierarchical plan tree: every region is
/// hierarchically connected and each administrative-adjacency component
/// splits exactly one fewer unit pieces than it has regions.
pub fn is_hierarchical_plan(graph: &MapGraph, h: &AdminHierarchy, plan: &Plan) -> bool {
    let r = plan.n_regions();
    let mut regions: Vec<Vec<usize>> = vec![Vec::new(); r];
    for v in 0..graph.n_vertices() {
        regions[plan.region_of(v)].push(v);
    }
    if !regions.iter().all(|g| is_hierarchically_connected(graph, h, g)) {
        return false;
    }
    let comp = admin_adjacency_components(graph, h, plan);
    let n_comp = comp.iter().max().map_or(0, |m| m + 1);
    let mut region_count = vec![0usize; n_comp];
    for &c in &comp {
        region_count[c] += 1;
    }
    // Each unit lies in exactly one component; count its region pieces there.
    let mut pieces = vec![0usize; h.n_units()];
    let mut unit_comp = vec![usize::MAX; h.n_units()];
    let mut seen = std::collections::HashSet::new();
    for v in 0..graph.n_vertices() {
        let (u, k) = (h.unit(v), plan.region_of(v));
        if seen.insert((u, k)) {
            pieces[u] += 1;
            unit_comp[u] = comp[k];
        }
    }
    let mut splits = vec![0usize; n_comp];
    for u in 0..h.n_units() {
        if unit_comp[u] != usize::MAX {
            splits[unit_comp[u]] += pieces[u] - 1;
        }
    }
    (0..n_comp).all(|c| splits[c] + 1 == region_count[c])
}

/// Boundary edges between regions `k` and `k2` that a hierarchical tree on
/// their union may use to join them.
pub fn hierarchical_boundary(graph: &MapGraph, h: &AdminHierarchy, plan: &Plan, k: usize, k2: usize) -> Result<Vec<usize>> {
    let all = boundary_edges(graph, plan, k, k2)?;
    let mut in_a = vec![false; h.n_units()];
    let mut in_b = vec![false; h.n_units()];
    for v in 0..graph.n_vertices() {
        let region = plan.region_of(v);
        if region == k {
            in_a[h.unit(v)] = true;
        } else if region == k2 {
            in_b[h.unit(v)] = true;
        }
    }
    let shared: Vec<usize> = (0..h.n_units()).filter(|&u| in_a[u] && in_b[u]).collect();
    Ok(match shared.as_slice() {
        [] => all,
        [x] => all
            .into_iter()
            .filter(|&e| {
                let (a, b) = graph.edge(e);
                h.unit(a) == *x && h.unit(b) == *x
            })
            .collect(),
        _ => Vec::new(),
    })
}

/// Log of the number of linking-edge sets that complete hierarchical region
/// trees into a hierarchical plan tree.
///
/// Factorises as trees on the multigraph of administrative-adjacency
/// components times trees inside each component.
pub fn log_hier_linking_edge_count(graph: &MapGraph, h: &AdminHierarchy, plan: &Plan) -> Result<f64> {
    if !is_hierarchical_plan(graph, h, plan) {
        return domain("linking edge count needs a hierarchical plan");
    }
    let comp = admin_adjacency_components(graph, h, plan);
    let n_comp = comp.iter().max().map_or(0, |m| m + 1);
    let mut across = QuotientMultigraph::new(n_comp);
    let mut local_index = vec![0usize; plan.n_regions()];
    let mut comp_size = vec![0usize; n_comp];
    for k in 0..plan.n_regions() {
        local_index[k] = comp_size[comp[k]];
        comp_size[comp[k]] += 1;
    }
    let mut within: Vec<QuotientMultigraph> = comp_size.iter().map(|&n| QuotientMultigraph::new(n)).collect();
    for &(u, v) in graph.edges() {
        let (a, b) = (plan.region_of(u), plan.region_of(v));
        if a == b {
            continue;
        }
        if comp[a] != comp[b] {
            across.add_edge(comp[a], comp[b]);
        } else if h.unit(u) == h.unit(v) {
            within[comp[a]].add_edge(local_index[a], local_index[b]);
        }
    }
    let mut total = log_multigraph_tree_count(&across)?;
    for q in &within {
        total += log_multigraph_tree_count(q)?;
    }
    Ok(total)
}

/// How trees are drawn and counted: plainly, or hierarchically.
#[derive(Clone, Copy, Debug)]
pub enum Structure<'a> {
    Flat,
    Hier(&'a AdminHierarchy),
}

impl<'a> Structure<'a> {
    pub fn hierarchy(&self) -> Option<&'a AdminHierarchy> {
        match self {
            Structure::Flat => None,
            Structure::Hier(h) => Some(h),
        }
    }

    pub fn log_tau(&self, graph: &MapGraph, vertices: &[usize]) -> Result<f64> {
        match self {
            Structure::Flat => log_spanning_tree_count(graph, vertices),
            Structure::Hier(h) => log_tau_eta(graph, h, vertices),
        }
    }

    pub fn wilson<R: Rng + ?Sized>(&self, graph: &MapGraph, vertices: &[usize], seats: u32, rng: &mut R) -> Result<RegionTree> {
        match self {
            Structure::Flat => wilson_tree(graph, vertices, seats, rng),
            Structure::Hier(h) => hierarchical_wilson(graph, h, vertices, seats, rng),
        }
    }

    /// Edges across which two regions may be joined.
    pub fn boundary(&self, graph: &MapGraph, plan: &Plan, k: usize, k2: usize) -> Result<Vec<usize>> {
        match self {
            Structure::Flat => boundary_edges(graph, plan, k, k2),
            Structure::Hier(h) => hierarchical_boundary(graph, h, plan, k, k2),
        }
    }

    /// Whether the plan is reachable at all under this structure.
    pub fn plan_ok(&self, graph: &MapGraph, plan: &Plan) -> bool {
        match self {
            Structure::Flat => true,
            Structure::Hier(h) => is_hierarchical_plan(graph, h, plan),
        }
    }

    /// Whether merging adjacent regions `k` and `k2` keeps the plan reachable.
    pub fn mergeable(&self, graph: &MapGraph, plan: &Plan, k: usize, k2: usize) -> bool {
        match self {
            Structure::Flat => true,
            Structure::Hier(h) => is_hierarchical_plan(graph, h, &merge_unchecked(plan, k, k2)),
        }
    }

    /// Log number of linking-edge sets compatible with the plan.
    pub fn log_linking_count(&self, graph: &MapGraph, plan: &Plan) -> Result<f64> {
        match self {
            Structure::Flat => log_multigraph_tree_count(&quotient_multigraph(graph, plan)),
            Structure::Hier(h) => log_hier_linking_edge_count(graph, h, plan),
        }
    }
}
