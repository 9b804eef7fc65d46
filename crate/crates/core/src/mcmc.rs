//! Merge-split Metropolis-Hastings moves that leave each stage's target
//! invariant.
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{configuration, Error, Result};
use crate::graph::{adjacent_region_pairs, merge_unchecked, Plan};
use crate::hierarchy::{admin_adjacency_components, Structure};
use crate::kernels::{draw_cut, log_effective_boundary, log_pcut_join, CutRule};
use crate::particle::{ForestPlan, LinkingPlan, Particle};
use crate::problem::Problem;
use crate::trees::{enumerate_tree_cuts, oriented_pairs, RegionTree};

/// Distribution over the pairs of regions a move may merge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairPhiRule {
    #[default]
    Uniform,
    BoundaryWeighted,
}

#[derive(Clone, Copy, Debug)]
pub struct McmcContext<'a> {
    pub problem: &'a Problem,
    pub pair_phi: PairPhiRule,
    /// `TopK(K)` in graph space, a cut distribution otherwise.
    pub rule: CutRule,
    /// Under a hierarchy, also try pairs in the same administrative-adjacency
    /// component whose merge is not itself hierarchical.
    pub same_component_merges: bool,
}

/// A candidate move: merge regions `a` and `b`, optionally through link `link`.
#[derive(Clone, Copy, Debug)]
struct Candidate {
    a: usize,
    b: usize,
    link: Option<usize>,
    weight: f64,
}

impl<'a> McmcContext<'a> {
    fn structure(&self) -> Structure<'a> {
        self.problem.structure()
    }

    /// Ordered size pairs for re-splitting the merge of `a` and `b`, empty if
    /// the pair may not be merged.
    fn resplit(&self, plan: &Plan, a: usize, b: usize) -> Vec<(u32, u32)> {
        let p = self.problem;
        let merged = merge_unchecked(plan, a, b);
        if !p.schedule.admits(merged.sizes()) {
            return Vec::new();
        }
        let h = a.min(b);
        let others: Vec<u32> = merged.sizes().iter().enumerate().filter(|&(k, _)| k != h).map(|(_, &s)| s).collect();
        oriented_pairs(&p.schedule.resplit_pairs(merged.size(h), &others))
    }

    fn eligible(&self, plan: &Plan, a: usize, b: usize, components: Option<&[usize]>) -> bool {
        let hier_ok = match self.structure() {
            Structure::Flat => true,
            Structure::Hier(_) => {
                self.structure().mergeable(&self.problem.graph, plan, a, b)
                    || (self.same_component_merges && components.is_some_and(|c| c[a] == c[b]))
            }
        };
        hier_ok && !self.resplit(plan, a, b).is_empty()
    }

    fn candidates(&self, particle: &Particle) -> Result<Vec<Candidate>> {
        let plan = particle.plan();
        let g = &self.problem.graph;
        let components = self.structure().hierarchy().map(|h| admin_adjacency_components(g, h, plan));
        let comp = components.as_deref();
        let weight = |a: usize, b: usize| -> Result<f64> {
            Ok(match self.pair_phi {
                PairPhiRule::Uniform => 1.0,
                PairPhiRule::BoundaryWeighted => self.structure().boundary(g, plan, a, b)?.len() as f64,
            })
        };
        let mut out = Vec::new();
        match particle {
            Particle::Linking(l) => {
                for &e in &l.links {
                    let (u, v) = g.edge(e);
                    let (a, b) = (plan.region_of(u), plan.region_of(v));
                    if self.eligible(plan, a, b, comp) {
                        out.push(Candidate { a, b, link: Some(e), weight: weight(a, b)? });
                    }
                }
            }
            _ => {
                for pair in adjacent_region_pairs(g, plan) {
                    if self.eligible(plan, pair.a, pair.b, comp) {
                        out.push(Candidate { a: pair.a, b: pair.b, link: None, weight: weight(pair.a, pair.b)? });
                    }
                }
            }
        }
        out.retain(|c| c.weight > 0.0);
        Ok(out)
    }

    /// Log probability of choosing the pair `(a, b)` (through `link` in
    /// linking space).
    fn pair_log_prob(&self, particle: &Particle, a: usize, b: usize, link: Option<usize>) -> Result<f64> {
        let cands = self.candidates(particle)?;
        let total: f64 = cands.iter().map(|c| c.weight).sum();
        let hit = cands
            .iter()
            .find(|c| c.link == link && ((c.a == a && c.b == b) || (c.a == b && c.b == a)));
        Ok(hit.map_or(f64::NEG_INFINITY, |c| (c.weight / total).ln()))
    }

    fn log_tau_pair(&self, plan: &Plan, a: usize, b: usize) -> Result<f64> {
        let s = self.structure();
        let g = &self.problem.graph;
        Ok(s.log_tau(g, &plan.region_vertices(a))? + s.log_tau(g, &plan.region_vertices(b))?)
    }

    /// One merge-split proposal and accept/reject step.
    pub fn step<R: Rng + ?Sized>(&self, particle: &Particle, rng: &mut R) -> Result<(Particle, bool)> {
        match (particle, self.rule) {
            (Particle::Graph(_), CutRule::TopK(_)) => {}
            (Particle::Graph(_), _) => return configuration("graph-space moves need top-K cut selection"),
            (_, CutRule::TopK(_)) => return configuration("top-K cut selection is only available in graph space"),
            _ => {}
        }
        let cands = self.candidates(particle)?;
        if cands.is_empty() {
            return Ok((particle.clone(), false));
        }
        let w: Vec<f64> = cands.iter().map(|c| c.weight).collect();
        let total: f64 = w.iter().sum();
        let pick = cands[WeightedIndex::new(&w).expect("positive pair weights").sample(rng)];
        let log_phi = (pick.weight / total).ln();
        let (a, b) = (pick.a, pick.b);
        let plan = particle.plan();
        let merged = merge_unchecked(plan, a, b);
        let h = a.min(b);
        let pairs = self.resplit(plan, a, b);
        let drawn = match draw_cut(self.problem, &merged.region_vertices(h), merged.size(h), &pairs, self.rule, rng) {
            Ok(d) => d,
            Err(Error::Domain(_)) => None,
            Err(e) => return Err(e),
        };
        let Some((below, above, edge)) = drawn else { return Ok((particle.clone(), false)) };
        let next_plan = merged.split_region(h, &below.vertices, below.seats, above.seats);
        if !self.structure().plan_ok(&self.problem.graph, &next_plan) {
            return Ok((particle.clone(), false));
        }
        let last = next_plan.n_regions() - 1;
        let proposal = match particle {
            Particle::Graph(_) => Particle::Graph(next_plan.clone()),
            Particle::Forest(f) => Particle::Forest(merged_forest(f, &next_plan, a, b, above.clone(), below.clone())),
            Particle::Linking(l) => {
                let forest = merged_forest(&l.forest, &next_plan, a, b, above.clone(), below.clone());
                let mut links: Vec<usize> = l.links.iter().copied().filter(|&e| Some(e) != pick.link).collect();
                links.push(edge);
                Particle::Linking(LinkingPlan { forest, links })
            }
        };
        let reverse_link = pick.link.map(|_| edge);
        let log_phi_rev = self.pair_log_prob(&proposal, h, last, reverse_link)?;
        if log_phi_rev == f64::NEG_INFINITY {
            return Ok((particle.clone(), false));
        }
        let p = self.problem;
        let g = &p.graph;
        let s = self.structure();
        let mut log_ratio = log_phi_rev - log_phi;
        if p.target.has_score() {
            log_ratio += p.target.score(g, plan)? - p.target.score(g, &next_plan)?;
        }
        if p.target.rho != 1.0 {
            log_ratio += (p.target.rho - 1.0) * (self.log_tau_pair(&next_plan, h, last)? - self.log_tau_pair(plan, a, b)?);
        }
        log_ratio += match (particle, &proposal) {
            (Particle::Graph(_), _) => {
                let c_old = s.boundary(g, plan, a, b)?.len() as f64;
                let c_new = s.boundary(g, &next_plan, h, last)?.len() as f64;
                c_old.ln() - c_new.ln()
            }
            (Particle::Forest(f), Particle::Forest(nf)) => {
                let old = log_effective_boundary(p, &f.trees[a], &f.trees[b], &s.boundary(g, plan, a, b)?, &pairs, self.rule)?;
                let new = log_effective_boundary(p, &nf.trees[h], &nf.trees[last], &s.boundary(g, &next_plan, h, last)?, &pairs, self.rule)?;
                old - new
            }
            (Particle::Linking(l), Particle::Linking(nl)) => {
                let e = pick.link.expect("linking moves go through a link");
                let old = log_pcut_join(p, &l.forest.trees[a], &l.forest.trees[b], e, &pairs, self.rule)?;
                let new = log_pcut_join(p, &nl.forest.trees[h], &nl.forest.trees[last], edge, &pairs, self.rule)?;
                s.log_linking_count(g, plan)? - s.log_linking_count(g, &next_plan)? + old - new
            }
            _ => unreachable!("proposal stays in the particle's space"),
        };
        if log_ratio.is_nan() {
            return Ok((particle.clone(), false));
        }
        if log_ratio >= 0.0 || rng.gen::<f64>().ln() < log_ratio {
            Ok((proposal, true))
        } else {
            Ok((particle.clone(), false))
        }
    }

    /// Largest number of balanced re-split cuts seen over `n_probe` trees
    /// drawn on merged pairs of the given plans, at least 1.
    pub fn estimate_k<R: Rng + ?Sized>(&self, particles: &[&Particle], weights: &[f64], n_probe: usize, rng: &mut R) -> Result<usize> {
        let pick = WeightedIndex::new(weights).map_err(|e| Error::Argument(format!("probe weights: {e}")))?;
        let mut best = 1;
        for _ in 0..n_probe {
            let particle = particles[pick.sample(rng)];
            let cands = self.candidates(particle)?;
            if cands.is_empty() {
                continue;
            }
            let c = cands[rng.gen_range(0..cands.len())];
            let plan = particle.plan();
            let merged = merge_unchecked(plan, c.a, c.b);
            let h = c.a.min(c.b);
            let pairs = self.resplit(plan, c.a, c.b);
            let tree = match self.structure().wilson(&self.problem.graph, &merged.region_vertices(h), merged.size(h), rng) {
                Ok(t) => t,
                Err(Error::Domain(_)) => continue,
                Err(e) => return Err(e),
            };
            let count = enumerate_tree_cuts(&self.problem.graph, &tree, &pairs, &self.problem.target.pop_bounds)
                .iter()
                .filter(|c| c.balanced)
                .count();
            best = best.max(count);
        }
        Ok(best)
    }
}

/// Trees of a forest after merging `a` and `b` and re-splitting the merged
/// region into `above` (kept at the merged label) and `below` (new last label).
fn merged_forest(forest: &ForestPlan, next_plan: &Plan, a: usize, b: usize, above: RegionTree, below: RegionTree) -> ForestPlan {
    let (keep, gone) = (a.min(b), a.max(b));
    let mut trees = forest.trees.clone();
    trees.remove(gone);
    trees[keep] = above;
    trees.push(below);
    ForestPlan { plan: next_plan.clone(), trees }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::MapGraph;
    use crate::scheme::{DistrictingScheme, ScheduleKind, SplittingSchedule};
    use crate::target::{PopBounds, Space, TargetSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_by_two_moves_always_accept() {
        let schedule = SplittingSchedule::new(ScheduleKind::DistrictOnly, DistrictingScheme::single_member(2)).unwrap();
        let target = TargetSpec::new(1.0, PopBounds::from_tolerance(4, 2, 0.0), Space::Graph).unwrap();
        let p = Problem::new(MapGraph::grid(2, 2), schedule, target).unwrap();
        let ctx = McmcContext { problem: &p, pair_phi: PairPhiRule::Uniform, rule: CutRule::TopK(1), same_component_merges: true };
        let mut state = Particle::Graph(Plan::new(vec![0, 0, 1, 1], vec![1, 1]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (next, accepted) = ctx.step(&state, &mut rng).unwrap();
            assert!(accepted);
            assert!(p.plan_valid(next.plan()));
            state = next;
        }
    }
}
