//! Uniform spanning trees, spanning-tree counts and tree cuts.
use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{domain, Result};
use crate::graph::{MapGraph, QuotientMultigraph};
use crate::target::PopBounds;

/// A graph on local indices `0..n` whose adjacency entries carry an edge id.
///
/// Parallel edges are stored as separate entries, so a walk that picks an
/// entry uniformly moves along each parallel edge with equal probability.
#[derive(Clone, Debug)]
pub struct LocalGraph {
    /// Global identifier of each local node.
    pub nodes: Vec<usize>,
    /// `(local neighbour, edge id)` per node.
    pub adjacency: Vec<Vec<(usize, usize)>>,
}

impl LocalGraph {
    /// Subgraph of `graph` induced by `vertices`.
    pub fn induced(graph: &MapGraph, vertices: &[usize]) -> Self {
        Self::induced_filtered(graph, vertices, |_| true)
    }

    /// Induced subgraph keeping only edges accepted by `keep`.
    pub fn induced_filtered(graph: &MapGraph, vertices: &[usize], keep: impl Fn(usize) -> bool) -> Self {
        let mut local = vec![usize::MAX; graph.n_vertices()];
        for (i, &v) in vertices.iter().enumerate() {
            local[v] = i;
        }
        let adjacency = vertices
            .iter()
            .map(|&v| {
                graph
                    .neighbors(v)
                    .iter()
                    .filter(|&&(w, e)| local[w] != usize::MAX && keep(e))
                    .map(|&(w, e)| (local[w], e))
                    .collect()
            })
            .collect();
        LocalGraph { nodes: vertices.to_vec(), adjacency }
    }

    /// Graph on `n` nodes from `(a, b, edge id)` triples; parallel edges allowed.
    pub fn from_edges(n: usize, edges: &[(usize, usize, usize)]) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b, e) in edges {
            if a != b {
                adjacency[a].push((b, e));
                adjacency[b].push((a, e));
            }
        }
        LocalGraph { nodes: (0..n).collect(), adjacency }
    }

    pub fn from_multigraph(q: &QuotientMultigraph) -> Self {
        let mut edges = Vec::new();
        for (&(i, j), &m) in &q.multiplicity {
            for _ in 0..m {
                edges.push((i, j, edges.len()));
            }
        }
        Self::from_edges(q.nodes, &edges)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.len();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &(w, _) in &self.adjacency[u] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == n
    }
}

/// Draws a uniform spanning tree of `local` by loop-erased random walks and
/// returns the edge ids of the tree.
pub fn wilson<R: Rng + ?Sized>(local: &LocalGraph, rng: &mut R) -> Result<Vec<usize>> {
    let n = local.len();
    if !local.is_connected() {
        return domain("spanning trees need a connected, non-empty graph");
    }
    let mut in_tree = vec![false; n];
    let mut next = vec![(usize::MAX, usize::MAX); n];
    in_tree[0] = true;
    for start in 1..n {
        let mut u = start;
        while !in_tree[u] {
            let nbrs = &local.adjacency[u];
            next[u] = nbrs[rng.gen_range(0..nbrs.len())];
            u = next[u].0;
        }
        u = start;
        while !in_tree[u] {
            in_tree[u] = true;
            u = next[u].0;
        }
    }
    let mut edges: Vec<usize> = (1..n).map(|v| next[v].1).collect();
    edges.sort_unstable();
    Ok(edges)
}

/// Natural log of the number of spanning trees, from a Cholesky factor of a
/// reduced Laplacian. Parallel edges count with multiplicity.
pub fn log_tree_count_local(local: &LocalGraph) -> Result<f64> {
    if !local.is_connected() {
        return domain("spanning tree count of a disconnected graph is zero");
    }
    let n = local.len();
    if n == 1 {
        return Ok(0.0);
    }
    let m = n - 1;
    let mut lap = DMatrix::<f64>::zeros(m, m);
    for (u, nbrs) in local.adjacency.iter().enumerate().take(m) {
        for &(w, _) in nbrs {
            lap[(u, u)] += 1.0;
            if w < m {
                lap[(u, w)] -= 1.0;
            }
        }
    }
    let chol = lap
        .cholesky()
        .ok_or_else(|| crate::Error::Domain("reduced Laplacian is not positive definite".into()))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Log spanning-tree count of the subgraph of `graph` induced by `vertices`.
pub fn log_spanning_tree_count(graph: &MapGraph, vertices: &[usize]) -> Result<f64> {
    log_tree_count_local(&LocalGraph::induced(graph, vertices))
}

/// Log spanning-tree count of a multigraph.
pub fn log_multigraph_tree_count(q: &QuotientMultigraph) -> Result<f64> {
    log_tree_count_local(&LocalGraph::from_multigraph(q))
}

/// A spanning tree of one region together with the region's seat count.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RegionTree {
    /// Region vertices, ascending. The first one serves as the root.
    pub vertices: Vec<usize>,
    /// Tree edges as map edge indices, ascending.
    pub edges: Vec<usize>,
    pub seats: u32,
}

impl RegionTree {
    pub fn new(mut vertices: Vec<usize>, mut edges: Vec<usize>, seats: u32) -> Self {
        vertices.sort_unstable();
        edges.sort_unstable();
        RegionTree { vertices, edges, seats }
    }

    pub fn root(&self) -> usize {
        self.vertices[0]
    }

    /// Joins two trees with the edge `e` into a tree on the union.
    pub fn joined(a: &RegionTree, b: &RegionTree, e: usize) -> RegionTree {
        let mut vertices = a.vertices.clone();
        vertices.extend_from_slice(&b.vertices);
        let mut edges = a.edges.clone();
        edges.extend_from_slice(&b.edges);
        edges.push(e);
        RegionTree::new(vertices, edges, a.seats + b.seats)
    }

    /// Parent of every vertex when rooted at [`RegionTree::root`], in BFS order.
    pub fn rooted(&self, graph: &MapGraph) -> RootedTree {
        RootedTree::new(graph, self)
    }

    /// Checks that the edges form a spanning tree of the vertex set.
    pub fn is_spanning_tree(&self, graph: &MapGraph) -> bool {
        if self.edges.len() + 1 != self.vertices.len() {
            return false;
        }
        let mut inside = vec![false; graph.n_vertices()];
        for &v in &self.vertices {
            inside[v] = true;
        }
        if self.edges.iter().any(|&e| {
            let (u, v) = graph.edge(e);
            !inside[u] || !inside[v]
        }) {
            return false;
        }
        self.rooted(graph).order.len() == self.vertices.len()
    }
}

/// BFS view of a [`RegionTree`].
#[derive(Clone, Debug)]
pub struct RootedTree {
    /// Vertices in BFS order, root first.
    pub order: Vec<usize>,
    /// `(parent vertex, edge)` for each entry of `order` except the root.
    pub parent: Vec<Option<(usize, usize)>>,
}

impl RootedTree {
    fn new(graph: &MapGraph, tree: &RegionTree) -> Self {
        let mut in_tree = vec![false; graph.n_edges()];
        for &e in &tree.edges {
            in_tree[e] = true;
        }
        let mut seen = vec![false; graph.n_vertices()];
        let root = tree.root();
        let mut order = vec![root];
        let mut parent = vec![None];
        seen[root] = true;
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &(w, e) in graph.neighbors(u) {
                if in_tree[e] && !seen[w] {
                    seen[w] = true;
                    order.push(w);
                    parent.push(Some((u, e)));
                }
            }
        }
        RootedTree { order, parent }
    }
}

/// Expands unordered schedule pairs into the ordered size assignments a cut
/// can take: `(a, b)` and `(b, a)` when `a != b`, `(a, a)` once.
pub fn oriented_pairs(pairs: &[(u32, u32)]) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(2 * pairs.len());
    for &(a, b) in pairs {
        out.push((a, b));
        if a != b {
            out.push((b, a));
        }
    }
    out
}

/// One edge of a region tree together with a seat assignment for both sides.
///
/// The "below" side is the subtree hanging off `child`; the "above" side
/// contains the tree root.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeCut {
    pub edge: usize,
    pub child: usize,
    pub pair_index: usize,
    pub below_seats: u32,
    pub above_seats: u32,
    pub below_pop: u64,
    pub above_pop: u64,
    pub max_abs_dev: f64,
    pub balanced: bool,
}

/// All `(edge, ordered size pair)` cuts of `tree`, ordered by edge index then
/// pair index.
pub fn enumerate_tree_cuts(
    graph: &MapGraph,
    tree: &RegionTree,
    ordered_pairs: &[(u32, u32)],
    bounds: &PopBounds,
) -> Vec<TreeCut> {
    let rooted = tree.rooted(graph);
    let mut sub = vec![0u64; graph.n_vertices()];
    for &v in &rooted.order {
        sub[v] = graph.pop(v);
    }
    for (i, &v) in rooted.order.iter().enumerate().rev() {
        if let Some((p, _)) = rooted.parent[i] {
            sub[p] += sub[v];
        }
    }
    let total = sub[tree.root()];
    let mut children: Vec<(usize, usize)> = rooted
        .order
        .iter()
        .zip(&rooted.parent)
        .filter_map(|(&v, p)| p.map(|(_, e)| (e, v)))
        .collect();
    children.sort_unstable();
    let mut cuts = Vec::with_capacity(children.len() * ordered_pairs.len());
    for (edge, child) in children {
        let below_pop = sub[child];
        let above_pop = total - below_pop;
        for (pair_index, &(below_seats, above_seats)) in ordered_pairs.iter().enumerate() {
            let dev = bounds
                .deviation(below_pop, below_seats)
                .abs()
                .max(bounds.deviation(above_pop, above_seats).abs());
            cuts.push(TreeCut {
                edge,
                child,
                pair_index,
                below_seats,
                above_seats,
                below_pop,
                above_pop,
                max_abs_dev: dev,
                balanced: bounds.contains(below_pop, below_seats)
                    && bounds.contains(above_pop, above_seats),
            });
        }
    }
    cuts
}

/// Number of balanced cuts, without materialising the cut list.
pub fn count_balanced_cuts(
    graph: &MapGraph,
    tree: &RegionTree,
    ordered_pairs: &[(u32, u32)],
    bounds: &PopBounds,
) -> usize {
    enumerate_tree_cuts(graph, tree, ordered_pairs, bounds)
        .iter()
        .filter(|c| c.balanced)
        .count()
}

/// Splits `tree` at `cut` into the (below, above) region trees.
pub fn cut_sides(graph: &MapGraph, tree: &RegionTree, cut: &TreeCut) -> (RegionTree, RegionTree) {
    let mut in_tree = vec![false; graph.n_edges()];
    for &e in &tree.edges {
        in_tree[e] = true;
    }
    in_tree[cut.edge] = false;
    let mut below = vec![false; graph.n_vertices()];
    below[cut.child] = true;
    let mut stack = vec![cut.child];
    while let Some(u) = stack.pop() {
        for &(w, e) in graph.neighbors(u) {
            if in_tree[e] && !below[w] {
                below[w] = true;
                stack.push(w);
            }
        }
    }
    let (bv, av): (Vec<usize>, Vec<usize>) = tree.vertices.iter().partition(|&&v| below[v]);
    let (be, ae): (Vec<usize>, Vec<usize>) = tree
        .edges
        .iter()
        .filter(|&&e| e != cut.edge)
        .partition(|&&e| below[graph.edge(e).0]);
    (
        RegionTree { vertices: bv, edges: be, seats: cut.below_seats },
        RegionTree { vertices: av, edges: ae, seats: cut.above_seats },
    )
}

/// Draws a uniform spanning tree of the region induced by `vertices`.
pub fn wilson_tree<R: Rng + ?Sized>(
    graph: &MapGraph,
    vertices: &[usize],
    seats: u32,
    rng: &mut R,
) -> Result<RegionTree> {
    let local = LocalGraph::induced(graph, vertices);
    let edges = wilson(&local, rng)?;
    Ok(RegionTree::new(vertices.to_vec(), edges, seats))
}
