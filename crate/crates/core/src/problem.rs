//! A sampling problem: map, schedule, target and optional hierarchy.
use crate::error::{argument, configuration, Result};
use crate::graph::{MapGraph, Plan};
use crate::hierarchy::{AdminHierarchy, Structure};
use crate::particle::{ForestPlan, LinkingPlan, Particle};
use crate::scheme::{DistrictingScheme, SplittingSchedule};
use crate::target::TargetSpec;

/// Everything the kernels and weights need besides run settings.
#[derive(Clone, Debug)]
pub struct Problem {
    pub graph: MapGraph,
    pub schedule: SplittingSchedule,
    pub target: TargetSpec,
    pub hierarchy: Option<AdminHierarchy>,
}

impl Problem {
    pub fn new(graph: MapGraph, schedule: SplittingSchedule, target: TargetSpec) -> Result<Self> {
        target.validate()?;
        let b = target.pop_bounds;
        let per_seat = graph.total_pop() as f64 / schedule.scheme.seats as f64;
        if per_seat < b.lower - 1e-9 * per_seat || per_seat > b.upper + 1e-9 * per_seat {
            return argument("population bounds must contain the ideal per-seat population");
        }
        let hierarchy = if target.hierarchical { Some(AdminHierarchy::from_graph(&graph)?) } else { None };
        if target.has_score() && graph.units().is_none() {
            return configuration("score terms need administrative units on the map");
        }
        Ok(Problem { graph, schedule, target, hierarchy })
    }

    pub fn scheme(&self) -> &DistrictingScheme {
        &self.schedule.scheme
    }

    pub fn districts(&self) -> usize {
        self.schedule.scheme.districts as usize
    }

    pub fn structure(&self) -> Structure<'_> {
        match &self.hierarchy {
            Some(h) => Structure::Hier(h),
            None => Structure::Flat,
        }
    }

    /// Hard constraints on a partial plan: admissible sizes, connected and
    /// balanced regions, and hierarchy when required.
    pub fn plan_valid(&self, plan: &Plan) -> bool {
        if plan.n_vertices() != self.graph.n_vertices() || plan.total_seats() != self.scheme().seats {
            return false;
        }
        if !self.schedule.admits(plan.sizes()) {
            return false;
        }
        let pops = plan.region_pops(&self.graph);
        if pops.iter().zip(plan.sizes()).any(|(&p, &s)| !self.target.pop_bounds.contains(p, s)) {
            return false;
        }
        (0..plan.n_regions()).all(|k| self.graph.is_connected(&plan.region_vertices(k)))
            && self.structure().plan_ok(&self.graph, plan)
    }

    /// Log of the unnormalised target of a plan: `-J + rho * sum log tau`,
    /// or `-inf` when a hard constraint fails.
    pub fn log_plan_density(&self, plan: &Plan) -> Result<f64> {
        if !self.plan_valid(plan) {
            return Ok(f64::NEG_INFINITY);
        }
        let mut total = -self.target.score(&self.graph, plan)?;
        if self.target.rho != 0.0 {
            let s = self.structure();
            for k in 0..plan.n_regions() {
                total += self.target.rho * s.log_tau(&self.graph, &plan.region_vertices(k))?;
            }
        }
        Ok(total)
    }

    fn log_forest_density(&self, forest: &ForestPlan) -> Result<f64> {
        let base = self.log_plan_density(&forest.plan)?;
        if base == f64::NEG_INFINITY || !self.forest_trees_ok(forest) {
            return Ok(f64::NEG_INFINITY);
        }
        let s = self.structure();
        let mut total = base;
        for k in 0..forest.plan.n_regions() {
            total -= s.log_tau(&self.graph, &forest.trees[k].vertices)?;
        }
        Ok(total)
    }

    fn forest_trees_ok(&self, forest: &ForestPlan) -> bool {
        forest.trees.len() == forest.plan.n_regions()
            && forest.trees.iter().enumerate().all(|(k, t)| {
                t.seats == forest.plan.size(k)
                    && t.vertices == forest.plan.region_vertices(k)
                    && match &self.hierarchy {
                        Some(h) => crate::hierarchy::is_hierarchical_tree(&self.graph, h, t),
                        None => t.is_spanning_tree(&self.graph),
                    }
            })
    }

    fn log_linking_density(&self, linking: &LinkingPlan) -> Result<f64> {
        let base = self.log_forest_density(&linking.forest)?;
        if base == f64::NEG_INFINITY || !linking.is_spanning(&self.graph) {
            return Ok(f64::NEG_INFINITY);
        }
        let plan = &linking.forest.plan;
        if let Some(h) = &self.hierarchy {
            let mut edges: Vec<usize> = linking.forest.trees.iter().flat_map(|t| t.edges.iter().copied()).collect();
            edges.extend_from_slice(&linking.links);
            let whole = crate::trees::RegionTree::new((0..self.graph.n_vertices()).collect(), edges, 0);
            if !crate::hierarchy::is_hierarchical_tree(&self.graph, h, &whole) {
                return Ok(f64::NEG_INFINITY);
            }
        }
        Ok(base - self.structure().log_linking_count(&self.graph, plan)?)
    }

    /// Log target density of a particle in the problem's sampling space.
    pub fn log_target_density(&self, particle: &Particle) -> Result<f64> {
        if particle.space() != self.target.space {
            return argument(format!(
                "particle lives in {:?} space but the target is in {:?} space",
                particle.space(),
                self.target.space
            ));
        }
        match particle {
            Particle::Graph(p) => self.log_plan_density(p),
            Particle::Forest(f) => self.log_forest_density(f),
            Particle::Linking(l) => self.log_linking_density(l),
        }
    }
}
