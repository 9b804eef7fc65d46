//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::Write;

use gsmc::graph::{MapGraph, Plan};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Writes straight to stderr so the line survives output capture.
pub fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        self.0[x] = r;
        r
    }
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

/// Every spanning tree of a multigraph on `0..n`, as sorted positions into `edges`.
pub fn spanning_trees(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    fn go(n: usize, edges: &[(usize, usize)], start: usize, chosen: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if chosen.len() + 1 == n {
            let mut d = Dsu::new(n);
            if chosen.iter().all(|&i| d.union(edges[i].0, edges[i].1)) {
                out.push(chosen.clone());
            }
            return;
        }
        for i in start..edges.len() {
            if edges.len() - i < n - 1 - chosen.len() {
                break;
            }
            chosen.push(i);
            go(n, edges, i + 1, chosen, out);
            chosen.pop();
        }
    }
    let mut out = Vec::new();
    if n <= 1 {
        out.push(Vec::new());
        return out;
    }
    go(n, edges, 0, &mut Vec::new(), &mut out);
    out
}

/// Spanning trees of the subgraph induced on `vertices`, as graph edge ids.
pub fn induced_spanning_trees(graph: &MapGraph, vertices: &[usize]) -> Vec<Vec<usize>> {
    let local: BTreeMap<usize, usize> = vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut ids = Vec::new();
    let mut edges = Vec::new();
    for (e, &(a, b)) in graph.edges().iter().enumerate() {
        if let (Some(&x), Some(&y)) = (local.get(&a), local.get(&b)) {
            ids.push(e);
            edges.push((x, y));
        }
    }
    spanning_trees(vertices.len(), &edges).into_iter().map(|t| t.into_iter().map(|i| ids[i]).collect()).collect()
}

/// Whether `vertices` induce a connected subgraph.
pub fn connected(graph: &MapGraph, vertices: &[usize]) -> bool {
    if vertices.is_empty() {
        return false;
    }
    let inside: std::collections::HashSet<usize> = vertices.iter().copied().collect();
    let mut seen = std::collections::HashSet::from([vertices[0]]);
    let mut stack = vec![vertices[0]];
    while let Some(v) = stack.pop() {
        for &(a, b) in graph.edges() {
            let w = if a == v { b } else if b == v { a } else { continue };
            if inside.contains(&w) && seen.insert(w) {
                stack.push(w);
            }
        }
    }
    seen.len() == inside.len()
}

/// Every partition of the vertices into `regions` connected blocks, as
/// restricted-growth assignment vectors.
pub fn connected_partitions(graph: &MapGraph, regions: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, regions: usize, a: &mut Vec<usize>, used: usize, out: &mut Vec<Vec<usize>>) {
        if a.len() == n {
            if used == regions {
                out.push(a.clone());
            }
            return;
        }
        if regions - used > n - a.len() {
            return;
        }
        for l in 0..=used.min(regions - 1) {
            a.push(l);
            go(n, regions, a, used.max(l + 1), out);
            a.pop();
        }
    }
    let mut all = Vec::new();
    go(graph.n_vertices(), regions, &mut Vec::new(), 0, &mut all);
    all.retain(|a| (0..regions).all(|k| connected(graph, &block(a, k))));
    all
}

pub fn block(assignment: &[usize], k: usize) -> Vec<usize> {
    (0..assignment.len()).filter(|&v| assignment[v] == k).collect()
}

/// Whether the edge set `tree` is a spanning tree of `vertices`.
pub fn is_tree_on(graph: &MapGraph, vertices: &[usize], tree: &[usize]) -> bool {
    if tree.len() + 1 != vertices.len() {
        return false;
    }
    let local: BTreeMap<usize, usize> = vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut d = Dsu::new(vertices.len());
    tree.iter().all(|&e| {
        let (a, b) = graph.edge(e);
        matches!((local.get(&a), local.get(&b)), (Some(&x), Some(&y)) if d.union(x, y))
    })
}

/// Hierarchical-tree check written from the definition: spanning tree on
/// `vertices`, spanning tree within every unit met, and a spanning tree on
/// the unit quotient.
pub fn is_hier_tree_on(graph: &MapGraph, units: &[usize], vertices: &[usize], tree: &[usize]) -> bool {
    if !is_tree_on(graph, vertices, tree) {
        return false;
    }
    let mut met: Vec<usize> = vertices.iter().map(|&v| units[v]).collect();
    met.sort_unstable();
    met.dedup();
    for &u in &met {
        let inner: Vec<usize> = vertices.iter().copied().filter(|&v| units[v] == u).collect();
        let within: Vec<usize> = tree.iter().copied().filter(|&e| {
            let (a, b) = graph.edge(e);
            units[a] == u && units[b] == u
        }).collect();
        if !is_tree_on(graph, &inner, &within) {
            return false;
        }
    }
    let index: BTreeMap<usize, usize> = met.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let cross: Vec<(usize, usize)> = tree
        .iter()
        .map(|&e| graph.edge(e))
        .filter(|&(a, b)| units[a] != units[b])
        .map(|(a, b)| (index[&units[a]], index[&units[b]]))
        .collect();
    if cross.len() + 1 != met.len() {
        return false;
    }
    let mut d = Dsu::new(met.len());
    cross.iter().all(|&(a, b)| d.union(a, b))
}

/// Whether some hierarchical spanning tree of the map restricts to a
/// hierarchical tree on every region of `assignment`.
pub fn brute_hierarchical_plan(graph: &MapGraph, units: &[usize], assignment: &[usize], trees: &[Vec<usize>]) -> bool {
    let all: Vec<usize> = (0..graph.n_vertices()).collect();
    let regions = assignment.iter().max().map_or(0, |m| m + 1);
    let blocks: Vec<Vec<usize>> = (0..regions).map(|k| block(assignment, k)).collect();
    trees.iter().any(|t| {
        is_hier_tree_on(graph, units, &all, t)
            && blocks.iter().all(|b| {
                let inside: Vec<usize> = t.iter().copied().filter(|&e| {
                    let (x, y) = graph.edge(e);
                    assignment[x] == assignment[b[0]] && assignment[y] == assignment[b[0]]
                }).collect();
                is_hier_tree_on(graph, units, b, &inside)
            })
    })
}

/// Upper-tail p-value of Pearson's statistic against `probs`.
pub fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

pub fn plan_key(plan: &Plan) -> (Vec<usize>, Vec<u32>) {
    let c = plan.canonical();
    (c.assignment(), c.sizes().to_vec())
}

/// Grid with its vertices grouped into units by `unit_of(row, col)`.
pub fn grid_with_units(rows: usize, cols: usize, unit_of: impl Fn(usize, usize) -> usize) -> MapGraph {
    let units = (0..rows * cols).map(|v| unit_of(v / cols, v % cols)).collect();
    MapGraph::grid(rows, cols).with_units(units).unwrap()
}
