//! Population bounds, score terms and the target specification.
use serde::{Deserialize, Serialize};

use crate::error::{argument, Result};
use crate::graph::{admin_splits, split_units, MapGraph, Plan};

/// Per-seat population bounds and the ideal per-seat population.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopBounds {
    pub lower: f64,
    pub upper: f64,
    /// Total population divided by total seats.
    pub ideal: f64,
}

impl PopBounds {
    pub fn new(lower: f64, upper: f64, ideal: f64) -> Result<Self> {
        if !(lower <= ideal && ideal <= upper) || lower < 0.0 || !upper.is_finite() {
            return argument("population bounds must bracket the ideal per-seat population");
        }
        Ok(PopBounds { lower, upper, ideal })
    }

    /// Symmetric bounds `ideal * (1 ± tolerance)`.
    pub fn from_tolerance(total_pop: u64, seats: u32, tolerance: f64) -> Self {
        let ideal = total_pop as f64 / seats as f64;
        PopBounds { lower: ideal * (1.0 - tolerance), upper: ideal * (1.0 + tolerance), ideal }
    }

    /// Whether a region of `seats` seats and population `pop` is balanced.
    pub fn contains(&self, pop: u64, seats: u32) -> bool {
        let s = seats as f64;
        let slack = 1e-9 * s * self.ideal;
        let p = pop as f64;
        p >= s * self.lower - slack && p <= s * self.upper + slack
    }

    /// Relative deviation of a region from its ideal population.
    pub fn deviation(&self, pop: u64, seats: u32) -> f64 {
        pop as f64 / (seats as f64 * self.ideal) - 1.0
    }
}

/// Which state space particles live in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Space {
    Graph,
    Forest,
    Linking,
}

/// A registered component of the score function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreComponent {
    /// Sum of unit/region intersection components minus the number of units.
    AdminSplits,
    /// Number of units intersecting more than one region.
    SplitUnits,
}

impl ScoreComponent {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "admin-splits" | "admin_splits" => Some(ScoreComponent::AdminSplits),
            "split-units" | "split_units" | "total-splits" | "total_splits" => Some(ScoreComponent::SplitUnits),
            _ => None,
        }
    }

    pub fn evaluate(&self, graph: &MapGraph, plan: &Plan) -> Result<f64> {
        Ok(match self {
            ScoreComponent::AdminSplits => admin_splits(graph, plan)? as f64,
            ScoreComponent::SplitUnits => split_units(graph, plan)? as f64,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTerm {
    pub component: ScoreComponent,
    pub coefficient: f64,
}

/// Everything that defines the family of target distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    /// Exponent on the spanning-tree count of each region.
    pub rho: f64,
    pub pop_bounds: PopBounds,
    #[serde(default)]
    pub soft_terms: Vec<ScoreTerm>,
    pub space: Space,
    #[serde(default)]
    pub hierarchical: bool,
}

impl TargetSpec {
    pub fn new(rho: f64, pop_bounds: PopBounds, space: Space) -> Result<Self> {
        let spec = TargetSpec { rho, pop_bounds, soft_terms: Vec::new(), space, hierarchical: false };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rho.is_finite() || self.rho < 0.0 {
            return argument("rho must be finite and non-negative");
        }
        if self.soft_terms.iter().any(|t| !t.coefficient.is_finite()) {
            return argument("score coefficients must be finite");
        }
        let b = self.pop_bounds;
        if !(b.lower <= b.ideal && b.ideal <= b.upper) {
            return argument("population bounds must bracket the ideal per-seat population");
        }
        Ok(())
    }

    /// Exponents far from one make the intermediate targets hard to sample.
    pub fn rho_is_extreme(&self) -> bool {
        (self.rho - 1.0).abs() > 0.3
    }

    /// The score `J` of a plan.
    pub fn score(&self, graph: &MapGraph, plan: &Plan) -> Result<f64> {
        let mut j = 0.0;
        for t in &self.soft_terms {
            if t.coefficient != 0.0 {
                j += t.coefficient * t.component.evaluate(graph, plan)?;
            }
        }
        Ok(j)
    }

    pub fn has_score(&self) -> bool {
        self.soft_terms.iter().any(|t| t.coefficient != 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_and_deviation() {
        let b = PopBounds::from_tolerance(4, 2, 0.0);
        assert!(b.contains(2, 1));
        assert!(!b.contains(3, 1));
        assert!(b.contains(4, 2));
        assert!((b.deviation(1, 1) + 0.5).abs() < 1e-12);
        let loose = PopBounds::from_tolerance(10, 2, 0.1);
        assert!(loose.contains(5, 1) && !loose.contains(4, 1));
    }
}
