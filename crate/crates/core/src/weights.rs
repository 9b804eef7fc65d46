//! Minimum-variance incremental weights, in log space.
use crate::error::{domain, Error, Result};
use crate::graph::{adjacent_region_pairs, merge_unchecked, Plan};
use crate::hierarchy::Structure;
use crate::kernels::{log_effective_boundary, log_pcut_join, phi_log_prob, CutRule, PhiRule};
use crate::particle::{ForestPlan, LinkingPlan, Particle};
use crate::problem::Problem;
use crate::trees::oriented_pairs;

/// `log(sum(exp(xs)))`, `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log(mean(exp(xs)))`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// Log of the mean incremental weight, which estimates the ratio of
/// successive normalising constants.
pub fn normalizing_constant_estimate(log_weights: &[f64]) -> Result<f64> {
    let v = log_mean_exp(log_weights);
    if v == f64::NEG_INFINITY || v.is_nan() {
        return Err(Error::DegenerateWeights { stage: 0 });
    }
    Ok(v)
}

/// Settings shared by every weight evaluation in one stage.
#[derive(Clone, Copy, Debug)]
pub struct WeightContext<'a> {
    pub problem: &'a Problem,
    pub phi: PhiRule,
    /// `TopK(K)` in graph space, a cut distribution otherwise.
    pub rule: CutRule,
}

/// A merged ancestor candidate for one adjacent pair of regions.
struct MergeTerm {
    a: usize,
    b: usize,
    /// Merged plan, with the merged region at label `min(a, b)`.
    merged: Plan,
    /// Everything except the boundary factor.
    log_base: f64,
    /// Ordered size pairs that could have produced the split.
    pairs: Vec<(u32, u32)>,
}

impl<'a> WeightContext<'a> {
    fn structure(&self) -> Structure<'a> {
        self.problem.structure()
    }

    /// The plan-level part of the term for merging `a` and `b`, or `None` if
    /// the merged plan could not have been an ancestor.
    fn merge_term(&self, plan: &Plan, pops: &[u64], j_now: f64, a: usize, b: usize) -> Result<Option<MergeTerm>> {
        let p = self.problem;
        let s_h = plan.size(a) + plan.size(b);
        if !p.target.pop_bounds.contains(pops[a] + pops[b], s_h) {
            return Ok(None);
        }
        let merged = merge_unchecked(plan, a, b);
        if !p.schedule.admits(merged.sizes()) {
            return Ok(None);
        }
        let h = a.min(b);
        let others: Vec<u32> = merged.sizes().iter().enumerate().filter(|&(k, _)| k != h).map(|(_, &s)| s).collect();
        let unordered = p.schedule.pairs_given_others(s_h, &others);
        let (sa, sb) = (plan.size(a), plan.size(b));
        if !unordered.contains(&(sa.min(sb), sa.max(sb))) {
            return Ok(None);
        }
        if !self.structure().mergeable(&p.graph, plan, a, b) {
            return Ok(None);
        }
        let mut log_base = phi_log_prob(self.phi, p.scheme(), &merged, h);
        if p.target.has_score() {
            let j_merged = p.target.score(&p.graph, &merged)?;
            if !j_merged.is_finite() {
                return Ok(None);
            }
            log_base += j_now - j_merged;
        }
        let rho = p.target.rho;
        if rho != 1.0 {
            let s = self.structure();
            let g = &p.graph;
            log_base += (rho - 1.0)
                * (s.log_tau(g, &merged.region_vertices(h))?
                    - s.log_tau(g, &plan.region_vertices(a))?
                    - s.log_tau(g, &plan.region_vertices(b))?);
        }
        Ok(Some(MergeTerm { a, b, merged, log_base, pairs: oriented_pairs(&unordered) }))
    }

    fn plan_prelude(&self, plan: &Plan) -> Result<(Vec<u64>, f64)> {
        if !self.problem.plan_valid(plan) {
            return domain("weights are only defined for valid plans");
        }
        let j = if self.problem.target.has_score() { self.problem.target.score(&self.problem.graph, plan)? } else { 0.0 };
        Ok((plan.region_pops(&self.problem.graph), j))
    }

    fn adjacent_terms(&self, plan: &Plan) -> Result<Vec<MergeTerm>> {
        let (pops, j) = self.plan_prelude(plan)?;
        let mut out = Vec::new();
        for pair in adjacent_region_pairs(&self.problem.graph, plan) {
            if let Some(t) = self.merge_term(plan, &pops, j, pair.a, pair.b)? {
                out.push(t);
            }
        }
        Ok(out)
    }

    /// Graph space: `log K - log sum(phi * exp(dJ) * tau ratio^(rho-1) * |C|)`.
    pub fn log_weight_graph(&self, plan: &Plan) -> Result<f64> {
        let CutRule::TopK(k) = self.rule else {
            return Err(Error::Configuration("graph-space weights need top-K selection".into()));
        };
        let g = &self.problem.graph;
        let s = self.structure();
        let mut logs = Vec::new();
        for t in self.adjacent_terms(plan)? {
            let c = s.boundary(g, plan, t.a, t.b)?.len();
            if c > 0 {
                logs.push(t.log_base + (c as f64).ln());
            }
        }
        finish((k as f64).ln(), &logs)
    }

    /// Forest space: the boundary factor becomes the effective boundary.
    pub fn log_weight_forest(&self, forest: &ForestPlan) -> Result<f64> {
        let plan = &forest.plan;
        let g = &self.problem.graph;
        let s = self.structure();
        let mut logs = Vec::new();
        for t in self.adjacent_terms(plan)? {
            let boundary = s.boundary(g, plan, t.a, t.b)?;
            let eff = log_effective_boundary(self.problem, &forest.trees[t.a], &forest.trees[t.b], &boundary, &t.pairs, self.rule)?;
            logs.push(t.log_base + eff);
        }
        finish(0.0, &logs)
    }

    /// Linking-edge space: one term per linking edge, with the change in the
    /// number of compatible linking sets.
    pub fn log_weight_linking(&self, linking: &LinkingPlan) -> Result<f64> {
        let plan = &linking.forest.plan;
        let g = &self.problem.graph;
        let s = self.structure();
        let (pops, j) = self.plan_prelude(plan)?;
        let log_links_now = s.log_linking_count(g, plan)?;
        let mut logs = Vec::new();
        for &e in &linking.links {
            let (u, v) = g.edge(e);
            let (a, b) = (plan.region_of(u), plan.region_of(v));
            if a == b {
                return domain("linking edge inside a region");
            }
            let Some(t) = self.merge_term(plan, &pops, j, a, b)? else { continue };
            let pc = log_pcut_join(self.problem, &linking.forest.trees[a], &linking.forest.trees[b], e, &t.pairs, self.rule)?;
            if pc == f64::NEG_INFINITY {
                continue;
            }
            logs.push(t.log_base + log_links_now - s.log_linking_count(g, &t.merged)? + pc);
        }
        finish(0.0, &logs)
    }

    /// Incremental log weight of a freshly split particle.
    pub fn log_weight(&self, particle: &Particle) -> Result<f64> {
        match particle {
            Particle::Graph(p) => self.log_weight_graph(p),
            Particle::Forest(f) => self.log_weight_forest(f),
            Particle::Linking(l) => self.log_weight_linking(l),
        }
    }
}

fn finish(offset: f64, logs: &[f64]) -> Result<f64> {
    let total = log_sum_exp(logs);
    if total == f64::NEG_INFINITY {
        return domain("no valid ancestor for this plan");
    }
    Ok(offset - total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::MapGraph;
    use crate::scheme::{DistrictingScheme, ScheduleKind, SplittingSchedule};
    use crate::target::{PopBounds, Space, TargetSpec};
    use crate::trees::RegionTree;

    fn problem(space: Space) -> Problem {
        let schedule = SplittingSchedule::new(ScheduleKind::DistrictOnly, DistrictingScheme::single_member(2)).unwrap();
        let target = TargetSpec::new(1.0, PopBounds::from_tolerance(4, 2, 0.0), space).unwrap();
        Problem::new(MapGraph::grid(2, 2), schedule, target).unwrap()
    }

    #[test]
    fn lse_and_mean() {
        assert!((log_mean_exp(&[1f64.ln(), 3f64.ln()]) - 2f64.ln()).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!(normalizing_constant_estimate(&[f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn graph_weight_two_by_two() {
        let p = problem(Space::Graph);
        let ctx = WeightContext { problem: &p, phi: PhiRule::Uniform, rule: CutRule::TopK(1) };
        let rows = Plan::new(vec![0, 0, 1, 1], vec![1, 1]).unwrap();
        assert!((ctx.log_weight_graph(&rows).unwrap() - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn forest_and_linking_weights_two_by_two() {
        let p = problem(Space::Forest);
        let ctx = WeightContext { problem: &p, phi: PhiRule::Uniform, rule: CutRule::UniformBalanced };
        let rows = Plan::new(vec![0, 0, 1, 1], vec![1, 1]).unwrap();
        let trees = vec![RegionTree::new(vec![0, 1], vec![0], 1), RegionTree::new(vec![2, 3], vec![3], 1)];
        let forest = ForestPlan::new(rows, trees).unwrap();
        // Both joining edges give a 4-path whose middle edge is the joining edge.
        assert!((ctx.log_weight_forest(&forest).unwrap() + 2f64.ln()).abs() < 1e-12);
        let linking = LinkingPlan::new(forest, vec![1]).unwrap();
        // tau(G/xi) = 2 over tau of a single node, times p_cut = 1.
        assert!((ctx.log_weight_linking(&linking).unwrap() + 2f64.ln()).abs() < 1e-12);
    }
}
