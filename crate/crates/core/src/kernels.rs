//! Forward splitting kernels for the three sampling spaces.
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{configuration, domain, Result};
use crate::graph::Plan;
use crate::particle::{ForestPlan, LinkingPlan, Particle};
use crate::problem::Problem;
use crate::scheme::DistrictingScheme;
use crate::trees::{cut_sides, enumerate_tree_cuts, oriented_pairs, RegionTree, TreeCut};

/// How the region to split is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhiRule {
    #[default]
    Uniform,
    ProportionalToSize,
}

/// How a cut is chosen from the cuts of a drawn tree.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutRule {
    /// Uniform among the `K` cuts of smallest maximum deviation (graph space).
    TopK(usize),
    /// Uniform among balanced cuts.
    #[default]
    UniformBalanced,
    /// Probability proportional to `exp(-alpha * max_abs_dev)`.
    Softmax { alpha: f64 },
}

/// Regions that still have to be split.
pub fn multidistricts(scheme: &DistrictingScheme, plan: &Plan) -> Vec<usize> {
    (0..plan.n_regions()).filter(|&k| scheme.is_multidistrict(plan.size(k))).collect()
}

/// `log phi(k | plan)`, or `-inf` if `k` is not a multidistrict.
pub fn phi_log_prob(phi: PhiRule, scheme: &DistrictingScheme, plan: &Plan, k: usize) -> f64 {
    let md = multidistricts(scheme, plan);
    if !md.contains(&k) {
        return f64::NEG_INFINITY;
    }
    match phi {
        PhiRule::Uniform => -(md.len() as f64).ln(),
        PhiRule::ProportionalToSize => {
            let total: u32 = md.iter().map(|&j| plan.size(j)).sum();
            (plan.size(k) as f64 / total as f64).ln()
        }
    }
}

/// Draws the region to split and returns it with its log probability.
pub fn select_multidistrict<R: Rng + ?Sized>(
    phi: PhiRule,
    scheme: &DistrictingScheme,
    plan: &Plan,
    rng: &mut R,
) -> Result<(usize, f64)> {
    let md = multidistricts(scheme, plan);
    if md.is_empty() {
        return domain("plan has no multidistrict left to split");
    }
    let k = match phi {
        PhiRule::Uniform => md[rng.gen_range(0..md.len())],
        PhiRule::ProportionalToSize => {
            let w: Vec<u32> = md.iter().map(|&j| plan.size(j)).collect();
            md[WeightedIndex::new(&w).expect("sizes are positive").sample(rng)]
        }
    };
    Ok((k, phi_log_prob(phi, scheme, plan, k)))
}

/// Ordered size pairs allowed when splitting region `k` during SMC.
pub fn split_pairs(problem: &Problem, plan: &Plan, k: usize) -> Result<Vec<(u32, u32)>> {
    Ok(oriented_pairs(&problem.schedule.pairs(plan.size(k), plan.sizes())?))
}

/// Log probability of each cut under a cut rule.
pub fn cut_log_probs(cuts: &[TreeCut], rule: CutRule) -> Result<Vec<f64>> {
    match rule {
        CutRule::TopK(_) => configuration("top-K cut selection has no closed-form cut distribution"),
        CutRule::UniformBalanced => {
            let b = cuts.iter().filter(|c| c.balanced).count();
            let lp = -(b as f64).ln();
            Ok(cuts.iter().map(|c| if c.balanced { lp } else { f64::NEG_INFINITY }).collect())
        }
        CutRule::Softmax { alpha } => {
            let logits: Vec<f64> = cuts.iter().map(|c| -alpha * c.max_abs_dev).collect();
            let norm = crate::weights::log_sum_exp(&logits);
            Ok(logits.into_iter().map(|l| l - norm).collect())
        }
    }
}

/// Picks a cut index, or `None` for a rejection.
fn choose_cut<R: Rng + ?Sized>(cuts: &mut [TreeCut], rule: CutRule, rng: &mut R) -> Result<Option<usize>> {
    let pick = match rule {
        CutRule::TopK(k) => {
            if k == 0 {
                return configuration("K must be at least 1");
            }
            cuts.sort_by(|a, b| a.max_abs_dev.total_cmp(&b.max_abs_dev));
            let u = rng.gen_range(0..k);
            (u < cuts.len()).then_some(u)
        }
        CutRule::UniformBalanced => {
            let balanced: Vec<usize> = (0..cuts.len()).filter(|&i| cuts[i].balanced).collect();
            (!balanced.is_empty()).then(|| balanced[rng.gen_range(0..balanced.len())])
        }
        CutRule::Softmax { alpha } => {
            if cuts.is_empty() {
                None
            } else {
                let lp: Vec<f64> = cuts.iter().map(|c| -alpha * c.max_abs_dev).collect();
                let m = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = lp.iter().map(|l| (l - m).exp()).collect();
                Some(WeightedIndex::new(&w).expect("softmax weights are positive").sample(rng))
            }
        }
    };
    Ok(pick.filter(|&i| cuts[i].balanced))
}

/// Draws a tree on `vertices` and a cut of it; returns the (below, above)
/// trees and the cut edge, or `None` on rejection.
pub(crate) fn draw_cut<R: Rng + ?Sized>(
    problem: &Problem,
    vertices: &[usize],
    seats: u32,
    pairs: &[(u32, u32)],
    rule: CutRule,
    rng: &mut R,
) -> Result<Option<(RegionTree, RegionTree, usize)>> {
    let tree = problem.structure().wilson(&problem.graph, vertices, seats, rng)?;
    let mut cuts = enumerate_tree_cuts(&problem.graph, &tree, pairs, &problem.target.pop_bounds);
    Ok(choose_cut(&mut cuts, rule, rng)?.map(|i| {
        let (below, above) = cut_sides(&problem.graph, &tree, &cuts[i]);
        (below, above, cuts[i].edge)
    }))
}

/// Replaces region `k` by the two sides of a cut; `None` if the result is not
/// a valid plan for the problem.
fn apply_split(problem: &Problem, plan: &Plan, k: usize, below: &RegionTree, above: &RegionTree) -> Option<Plan> {
    let next = plan.split_region(k, &below.vertices, below.seats, above.seats);
    problem.structure().plan_ok(&problem.graph, &next).then_some(next)
}

/// Top-K split of region `k` in graph space.
pub fn split_graph_space<R: Rng + ?Sized>(
    problem: &Problem,
    plan: &Plan,
    k: usize,
    top_k: usize,
    rng: &mut R,
) -> Result<Option<Plan>> {
    if !problem.scheme().is_multidistrict(plan.size(k)) {
        return domain(format!("region {k} is not a multidistrict"));
    }
    let pairs = split_pairs(problem, plan, k)?;
    let vertices = plan.region_vertices(k);
    let drawn = draw_cut(problem, &vertices, plan.size(k), &pairs, CutRule::TopK(top_k), rng)?;
    Ok(drawn.and_then(|(below, above, _)| apply_split(problem, plan, k, &below, &above)))
}

fn check_tree_rule(rule: CutRule) -> Result<()> {
    if let CutRule::TopK(_) = rule {
        return configuration("top-K cut selection is only available in graph space");
    }
    Ok(())
}

/// Split of region `k` in forest space; the region's old tree is replaced.
pub fn split_forest_space<R: Rng + ?Sized>(
    problem: &Problem,
    forest: &ForestPlan,
    k: usize,
    rule: CutRule,
    rng: &mut R,
) -> Result<Option<ForestPlan>> {
    Ok(split_with_edge(problem, forest, k, rule, rng)?.map(|(f, _)| f))
}

fn split_with_edge<R: Rng + ?Sized>(
    problem: &Problem,
    forest: &ForestPlan,
    k: usize,
    rule: CutRule,
    rng: &mut R,
) -> Result<Option<(ForestPlan, usize)>> {
    check_tree_rule(rule)?;
    let plan = &forest.plan;
    if !problem.scheme().is_multidistrict(plan.size(k)) {
        return domain(format!("region {k} is not a multidistrict"));
    }
    let pairs = split_pairs(problem, plan, k)?;
    let drawn = draw_cut(problem, &forest.trees[k].vertices, plan.size(k), &pairs, rule, rng)?;
    let Some((below, above, edge)) = drawn else { return Ok(None) };
    let Some(next) = apply_split(problem, plan, k, &below, &above) else { return Ok(None) };
    let mut trees = forest.trees.clone();
    trees[k] = above;
    trees.push(below);
    Ok(Some((ForestPlan { plan: next, trees }, edge)))
}

/// Split in linking-edge space: as in forest space, and the cut edge joins
/// the linking set.
pub fn split_linking_space<R: Rng + ?Sized>(
    problem: &Problem,
    linking: &LinkingPlan,
    k: usize,
    rule: CutRule,
    rng: &mut R,
) -> Result<Option<LinkingPlan>> {
    Ok(split_with_edge(problem, &linking.forest, k, rule, rng)?.map(|(forest, edge)| {
        let mut links = linking.links.clone();
        links.push(edge);
        LinkingPlan { forest, links }
    }))
}

/// One forward-kernel draw: choose a multidistrict and split it.
pub fn propose_split<R: Rng + ?Sized>(
    problem: &Problem,
    particle: &Particle,
    phi: PhiRule,
    rule: CutRule,
    rng: &mut R,
) -> Result<Option<Particle>> {
    let (k, _) = select_multidistrict(phi, problem.scheme(), particle.plan(), rng)?;
    Ok(match (particle, rule) {
        (Particle::Graph(p), CutRule::TopK(top_k)) => split_graph_space(problem, p, k, top_k, rng)?.map(Particle::Graph),
        (Particle::Graph(_), _) => return configuration("graph space needs top-K cut selection"),
        (Particle::Forest(f), _) => split_forest_space(problem, f, k, rule, rng)?.map(Particle::Forest),
        (Particle::Linking(l), _) => split_linking_space(problem, l, k, rule, rng)?.map(Particle::Linking),
    })
}

/// Largest number of balanced cuts seen over `n_probe` trees drawn on
/// multidistricts of the given plans, at least 1.
pub fn estimate_k<R: Rng + ?Sized>(
    problem: &Problem,
    plans: &[&Plan],
    weights: &[f64],
    phi: PhiRule,
    n_probe: usize,
    rng: &mut R,
) -> Result<usize> {
    let pick = WeightedIndex::new(weights).map_err(|e| crate::Error::Argument(format!("probe weights: {e}")))?;
    let mut best = 1;
    for _ in 0..n_probe {
        let plan = plans[pick.sample(rng)];
        let (k, _) = select_multidistrict(phi, problem.scheme(), plan, rng)?;
        let pairs = split_pairs(problem, plan, k)?;
        let tree = problem.structure().wilson(&problem.graph, &plan.region_vertices(k), plan.size(k), rng)?;
        let count = enumerate_tree_cuts(&problem.graph, &tree, &pairs, &problem.target.pop_bounds)
            .iter()
            .filter(|c| c.balanced)
            .count();
        best = best.max(count);
    }
    Ok(best)
}

/// How `new` arises from `old` by splitting one region: `(old region,
/// new region, new region)`.
pub fn find_split(old: &Plan, new: &Plan) -> Option<(usize, usize, usize)> {
    if new.n_regions() != old.n_regions() + 1 || new.n_vertices() != old.n_vertices() {
        return None;
    }
    let mut parent = vec![usize::MAX; new.n_regions()];
    for v in 0..new.n_vertices() {
        let (j, o) = (new.region_of(v), old.region_of(v));
        if parent[j] == usize::MAX {
            parent[j] = o;
        } else if parent[j] != o {
            return None;
        }
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); old.n_regions()];
    for (j, &o) in parent.iter().enumerate() {
        children[o].push(j);
    }
    let mut split = None;
    for (o, ch) in children.iter().enumerate() {
        match ch.as_slice() {
            [j] if new.size(*j) == old.size(o) => {}
            [a, b] if split.is_none() && new.size(*a) + new.size(*b) == old.size(o) => split = Some((o, *a, *b)),
            _ => return None,
        }
    }
    split
}

/// Log probability that cutting `joined` at `edge` gives the sides `a` and
/// `b`, under `rule` and ordered size pairs `pairs`.
pub(crate) fn log_pcut_join(
    problem: &Problem,
    a: &RegionTree,
    b: &RegionTree,
    edge: usize,
    pairs: &[(u32, u32)],
    rule: CutRule,
) -> Result<f64> {
    let joined = RegionTree::joined(a, b, edge);
    let cuts = enumerate_tree_cuts(&problem.graph, &joined, pairs, &problem.target.pop_bounds);
    let lp = cut_log_probs(&cuts, rule)?;
    for (c, p) in cuts.iter().zip(lp) {
        if c.edge != edge {
            continue;
        }
        let child_side = if a.vertices.binary_search(&c.child).is_ok() { a } else { b };
        let other = if std::ptr::eq(child_side, a) { b } else { a };
        if c.below_seats == child_side.seats && c.above_seats == other.seats {
            return Ok(p);
        }
    }
    Ok(f64::NEG_INFINITY)
}

/// Log effective boundary: log of the summed probability, over edges `e`
/// joining the two trees, of cutting `a + e + b` back into `a` and `b`.
pub fn log_effective_boundary(
    problem: &Problem,
    a: &RegionTree,
    b: &RegionTree,
    boundary: &[usize],
    pairs: &[(u32, u32)],
    rule: CutRule,
) -> Result<f64> {
    check_tree_rule(rule)?;
    let terms = boundary
        .iter()
        .map(|&e| log_pcut_join(problem, a, b, e, pairs, rule))
        .collect::<Result<Vec<f64>>>()?;
    Ok(crate::weights::log_sum_exp(&terms))
}

/// Closed-form log probability of the forward kernel moving `old` to `new`;
/// `-inf` when `new` is not reachable in one split.
///
/// For top-K selection the formula assumes `K` is at least the number of
/// balanced cuts of every tree of the split region.
pub fn forward_log_prob(problem: &Problem, old: &Particle, new: &Particle, phi: PhiRule, rule: CutRule) -> Result<f64> {
    let (op, np) = (old.plan(), new.plan());
    let Some((l, a, b)) = find_split(op, np) else { return Ok(f64::NEG_INFINITY) };
    if !problem.plan_valid(np) {
        return Ok(f64::NEG_INFINITY);
    }
    let (sa, sb) = (np.size(a), np.size(b));
    if !problem.schedule.pairs(op.size(l), op.sizes())?.contains(&(sa.min(sb), sa.max(sb))) {
        return Ok(f64::NEG_INFINITY);
    }
    let s = problem.structure();
    let g = &problem.graph;
    let log_phi = phi_log_prob(phi, problem.scheme(), op, l);
    let log_tau_h = s.log_tau(g, &op.region_vertices(l))?;
    match (old, new, rule) {
        (Particle::Graph(_), Particle::Graph(_), CutRule::TopK(top_k)) => {
            let boundary = s.boundary(g, np, a, b)?.len();
            if boundary == 0 {
                return Ok(f64::NEG_INFINITY);
            }
            Ok(log_phi - (top_k as f64).ln() + s.log_tau(g, &np.region_vertices(a))? + s.log_tau(g, &np.region_vertices(b))?
                - log_tau_h
                + (boundary as f64).ln())
        }
        (Particle::Forest(of), Particle::Forest(nf), _) => {
            if !untouched_trees_equal(of, nf, l, a, b) {
                return Ok(f64::NEG_INFINITY);
            }
            let pairs = oriented_pairs(&problem.schedule.pairs(op.size(l), op.sizes())?);
            let boundary = s.boundary(g, np, a, b)?;
            Ok(log_phi - log_tau_h + log_effective_boundary(problem, &nf.trees[a], &nf.trees[b], &boundary, &pairs, rule)?)
        }
        (Particle::Linking(ol), Particle::Linking(nl), _) => {
            if !untouched_trees_equal(&ol.forest, &nl.forest, l, a, b) {
                return Ok(f64::NEG_INFINITY);
            }
            let mut added = nl.links.clone();
            for e in &ol.links {
                match added.iter().position(|x| x == e) {
                    Some(i) => {
                        added.remove(i);
                    }
                    None => return Ok(f64::NEG_INFINITY),
                }
            }
            let [edge] = added[..] else { return Ok(f64::NEG_INFINITY) };
            let (u, v) = g.edge(edge);
            let (ru, rv) = (np.region_of(u), np.region_of(v));
            if !((ru == a && rv == b) || (ru == b && rv == a)) {
                return Ok(f64::NEG_INFINITY);
            }
            let pairs = oriented_pairs(&problem.schedule.pairs(op.size(l), op.sizes())?);
            Ok(log_phi - log_tau_h + log_pcut_join(problem, &nl.forest.trees[a], &nl.forest.trees[b], edge, &pairs, rule)?)
        }
        _ => configuration("particles and cut rule do not belong to the same space"),
    }
}

fn untouched_trees_equal(old: &ForestPlan, new: &ForestPlan, l: usize, a: usize, b: usize) -> bool {
    let mut old_trees: Vec<&RegionTree> = (0..old.trees.len()).filter(|&k| k != l).map(|k| &old.trees[k]).collect();
    let mut new_trees: Vec<&RegionTree> = (0..new.trees.len()).filter(|&k| k != a && k != b).map(|k| &new.trees[k]).collect();
    old_trees.sort_by_key(|t| t.vertices[0]);
    new_trees.sort_by_key(|t| t.vertices[0]);
    old_trees == new_trees
        && new.trees[a].vertices == new.plan.region_vertices(a)
        && new.trees[b].vertices == new.plan.region_vertices(b)
}
