//! Plans augmented with region trees and linking edges.
use crate::error::{argument, Result};
use crate::graph::{MapGraph, Plan};
use crate::target::Space;
use crate::trees::RegionTree;

/// A plan with one spanning tree per region, indexed by region label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForestPlan {
    pub plan: Plan,
    pub trees: Vec<RegionTree>,
}

impl ForestPlan {
    pub fn new(plan: Plan, trees: Vec<RegionTree>) -> Result<Self> {
        if trees.len() != plan.n_regions() {
            return argument("a forest plan needs one tree per region");
        }
        for (k, t) in trees.iter().enumerate() {
            if t.seats != plan.size(k) || t.vertices != plan.region_vertices(k) {
                return argument(format!("tree {k} does not match its region"));
            }
        }
        Ok(ForestPlan { plan, trees })
    }

    /// Checks that every tree spans its region.
    pub fn trees_valid(&self, graph: &MapGraph) -> bool {
        self.trees.iter().all(|t| t.is_spanning_tree(graph))
    }

    /// Forest with regions relabelled canonically; used as a hashable key.
    pub fn canonical(&self) -> ForestPlan {
        let plan = self.plan.canonical();
        let mut trees = self.trees.clone();
        trees.sort_by_key(|t| t.vertices[0]);
        ForestPlan { plan, trees }
    }
}

/// A forest plan plus the edges that join its trees into a spanning tree of
/// the whole map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkingPlan {
    pub forest: ForestPlan,
    /// Linking edges in the order they were added.
    pub links: Vec<usize>,
}

impl LinkingPlan {
    pub fn new(forest: ForestPlan, links: Vec<usize>) -> Result<Self> {
        if links.len() + 1 != forest.plan.n_regions() {
            return argument("a linking plan needs one fewer linking edge than regions");
        }
        Ok(LinkingPlan { forest, links })
    }

    pub fn plan(&self) -> &Plan {
        &self.forest.plan
    }

    /// Whether trees plus linking edges form a spanning tree of the map.
    pub fn is_spanning(&self, graph: &MapGraph) -> bool {
        let mut edges: Vec<usize> = self.forest.trees.iter().flat_map(|t| t.edges.iter().copied()).collect();
        edges.extend_from_slice(&self.links);
        RegionTree::new((0..graph.n_vertices()).collect(), edges, 0).is_spanning_tree(graph)
    }

    /// Canonical relabelling with sorted linking edges.
    pub fn canonical(&self) -> LinkingPlan {
        let mut links = self.links.clone();
        links.sort_unstable();
        LinkingPlan { forest: self.forest.canonical(), links }
    }
}

/// One SMC particle in whichever space the run samples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Particle {
    Graph(Plan),
    Forest(ForestPlan),
    Linking(LinkingPlan),
}

impl Particle {
    pub fn plan(&self) -> &Plan {
        match self {
            Particle::Graph(p) => p,
            Particle::Forest(f) => &f.plan,
            Particle::Linking(l) => &l.forest.plan,
        }
    }

    pub fn space(&self) -> Space {
        match self {
            Particle::Graph(_) => Space::Graph,
            Particle::Forest(_) => Space::Forest,
            Particle::Linking(_) => Space::Linking,
        }
    }

    pub fn forest(&self) -> Option<&ForestPlan> {
        match self {
            Particle::Graph(_) => None,
            Particle::Forest(f) => Some(f),
            Particle::Linking(l) => Some(&l.forest),
        }
    }
}
