//! Exhaustive enumeration of balanced plans on small maps.
use std::collections::BTreeMap;

use crate::error::{argument, Error, Result};
use crate::graph::{MapGraph, Plan};
use crate::problem::Problem;
use crate::scheme::DistrictingScheme;
use crate::target::PopBounds;
use crate::weights::log_sum_exp;

struct Search<'a, F: FnMut(&[u8], &[u32])> {
    nbr: Vec<u64>,
    pops: Vec<u64>,
    scheme: &'a DistrictingScheme,
    bounds: &'a PopBounds,
    max_pop: f64,
    assignment: Vec<u8>,
    sizes: Vec<u32>,
    nodes: u64,
    budget: Option<u64>,
    found: usize,
    visit: F,
}

fn bits(mut m: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        (m != 0).then(|| {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            i
        })
    })
}

impl<'a, F: FnMut(&[u8], &[u32])> Search<'a, F> {
    fn pop(&self, m: u64) -> u64 {
        bits(m).map(|v| self.pops[v]).sum()
    }

    fn component(&self, start: usize, allowed: u64) -> u64 {
        let mut comp = 1u64 << start;
        let mut frontier = comp;
        while frontier != 0 {
            let mut next = 0;
            for v in bits(frontier) {
                next |= self.nbr[v];
            }
            next &= allowed & !comp;
            comp |= next;
            frontier = next;
        }
        comp
    }

    /// Seat counts a region of population `pop` could carry.
    fn seat_options(&self, pop: u64) -> impl Iterator<Item = u32> + '_ {
        (self.scheme.min_size..=self.scheme.max_size).filter(move |&d| self.bounds.contains(pop, d))
    }

    /// Necessary conditions for the unassigned vertices `rest` to be split
    /// into `districts` districts holding `seats` seats.
    fn feasible(&self, rest: u64, districts: u32, seats: u32) -> bool {
        if rest == 0 {
            return districts == 0 && seats == 0;
        }
        if districts == 0 {
            return false;
        }
        let (mut slo, mut shi, mut dlo, mut dhi) = (0u32, 0u32, 0u32, 0u32);
        let mut left = rest;
        while left != 0 {
            let comp = self.component(left.trailing_zeros() as usize, left);
            left &= !comp;
            let p = self.pop(comp) as f64;
            let lo = (p / (self.bounds.upper * (1.0 + 1e-9))).ceil().max(1.0) as u32;
            let hi = (p / (self.bounds.lower * (1.0 - 1e-9))).floor().min(seats as f64) as u32;
            if lo > hi {
                return false;
            }
            slo += lo;
            shi += hi;
            dlo += lo.div_ceil(self.scheme.max_size);
            dhi += hi / self.scheme.min_size;
        }
        slo <= seats && seats <= shi && dlo <= districts && districts <= dhi
    }

    fn place(&mut self, region: u64, d: u32, rest: u64, districts: u32, seats: u32) -> Result<()> {
        let label = self.sizes.len() as u8;
        for v in bits(region) {
            self.assignment[v] = label;
        }
        self.sizes.push(d);
        let r = self.next_region(rest, districts - 1, seats - d);
        self.sizes.pop();
        r
    }

    fn next_region(&mut self, rest: u64, districts: u32, seats: u32) -> Result<()> {
        if rest == 0 {
            if districts == 0 && seats == 0 {
                self.found += 1;
                (self.visit)(&self.assignment, &self.sizes);
            }
            return Ok(());
        }
        if districts == 1 {
            let v = rest.trailing_zeros() as usize;
            if self.component(v, rest) == rest && self.scheme.is_district(seats) && self.bounds.contains(self.pop(rest), seats) {
                self.place(rest, seats, 0, 1, seats)?;
            }
            return Ok(());
        }
        let v = rest.trailing_zeros() as usize;
        let start = 1u64 << v;
        let cand = self.nbr[v] & rest;
        self.grow(start, self.pops[v], cand, 0, rest, districts, seats)
    }

    /// Visits every connected set containing `set` obtained by adding
    /// vertices from `cand` and its later neighbourhoods, never `banned`.
    #[allow(clippy::too_many_arguments)]
    fn grow(&mut self, set: u64, pop: u64, cand: u64, banned: u64, rest: u64, districts: u32, seats: u32) -> Result<()> {
        self.nodes += 1;
        if let Some(b) = self.budget {
            if self.nodes > b {
                return Err(Error::Budget { found: self.found });
            }
        }
        let options: Vec<u32> = self.seat_options(pop).filter(|&d| d < seats).collect();
        for d in options {
            let remaining = rest & !set;
            if self.feasible(remaining, districts - 1, seats - d) {
                self.place(set, d, remaining, districts, seats)?;
            }
        }
        let mut banned = banned;
        for w in bits(cand) {
            let p = pop + self.pops[w];
            if p as f64 <= self.max_pop {
                let next = set | (1 << w);
                let next_cand = (cand | (self.nbr[w] & rest)) & !next & !banned & !(1 << w);
                self.grow(next, p, next_cand, banned, rest, districts, seats)?;
            }
            banned |= 1 << w;
        }
        Ok(())
    }
}

/// Calls `visit(assignment, sizes)` for every balanced plan, regions
/// labelled by their smallest vertex. Returns the number of plans.
///
/// `budget` caps the number of search nodes.
pub fn for_each_balanced_plan<F: FnMut(&[u8], &[u32])>(
    graph: &MapGraph,
    scheme: &DistrictingScheme,
    bounds: &PopBounds,
    budget: Option<u64>,
    visit: F,
) -> Result<usize> {
    let n = graph.n_vertices();
    if n > 64 {
        return argument("enumeration supports at most 64 vertices");
    }
    if scheme.districts > 255 {
        return argument("enumeration supports at most 255 districts");
    }
    let mut nbr = vec![0u64; n];
    for &(a, b) in graph.edges() {
        nbr[a] |= 1 << b;
        nbr[b] |= 1 << a;
    }
    let max_pop = scheme.max_size as f64 * bounds.upper * (1.0 + 1e-9);
    let mut s = Search {
        nbr,
        pops: graph.pops().to_vec(),
        scheme,
        bounds,
        max_pop,
        assignment: vec![0; n],
        sizes: Vec::new(),
        nodes: 0,
        budget,
        found: 0,
        visit,
    };
    let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    s.next_region(all, scheme.districts, scheme.seats)?;
    Ok(s.found)
}

/// All balanced, connected, size-valid plans in canonical form and a fixed
/// order.
pub fn enumerate_balanced_plans(graph: &MapGraph, scheme: &DistrictingScheme, bounds: &PopBounds, budget: Option<u64>) -> Result<Vec<Plan>> {
    let mut plans = Vec::new();
    for_each_balanced_plan(graph, scheme, bounds, budget, |a, s| {
        plans.push(Plan::new(a.iter().map(|&x| x as usize).collect(), s.to_vec()).expect("search emits valid plans"));
    })?;
    Ok(plans)
}

/// Exact target probabilities over an enumerated plan set.
#[derive(Clone, Debug)]
pub struct ExactDistribution {
    pub plans: Vec<Plan>,
    /// Unnormalised log target of each plan.
    pub log_gamma: Vec<f64>,
    pub log_z: f64,
    pub probs: Vec<f64>,
}

impl ExactDistribution {
    /// Distribution of an integer-valued statistic.
    pub fn histogram(&self, stat: impl Fn(&Plan) -> i64) -> BTreeMap<i64, f64> {
        let mut out = BTreeMap::new();
        for (p, &w) in self.plans.iter().zip(&self.probs) {
            *out.entry(stat(p)).or_insert(0.0) += w;
        }
        out
    }

    /// Probability of each plan, keyed by canonical plan.
    pub fn by_plan(&self) -> std::collections::HashMap<Plan, f64> {
        self.plans.iter().cloned().zip(self.probs.iter().copied()).collect()
    }
}

/// Normalises the plan-space target of `problem` over `plans`.
pub fn exact_distribution(problem: &Problem, plans: Vec<Plan>) -> Result<ExactDistribution> {
    let log_gamma = plans.iter().map(|p| problem.log_plan_density(p)).collect::<Result<Vec<f64>>>()?;
    let log_z = log_sum_exp(&log_gamma);
    if log_z == f64::NEG_INFINITY {
        return argument("no plan has positive target density");
    }
    let probs = log_gamma.iter().map(|g| (g - log_z).exp()).collect();
    Ok(ExactDistribution { plans, log_gamma, log_z, probs })
}
