//! Convergence diagnostics across runs and per-plan summary statistics.
use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{argument, Error, Result};
use crate::graph::{admin_splits, edges_removed, split_units, MapGraph, Plan};
use crate::rng::{stream, Purpose};

/// One run's values of a statistic with normalised weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub n: usize,
    pub config_digest: String,
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RunSummary {
    pub fn new(run_id: impl Into<String>, config_digest: impl Into<String>, values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.len() != weights.len() || values.is_empty() {
            return argument("values and weights must be non-empty and of equal length");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return argument("statistic values must be finite");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return argument("weights must sum to one");
        }
        Ok(RunSummary { run_id: run_id.into(), n: values.len(), config_digest: config_digest.into(), values, weights })
    }

    pub fn weighted_mean(&self) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// `n` equal-weight draws by multinomial resampling.
    pub fn resampled(&self, seed: u64, index: usize) -> Vec<f64> {
        let mut rng = stream(seed, Purpose::Resample, 0, index);
        let dist = WeightedIndex::new(&self.weights).expect("weights were validated");
        (0..self.n).map(|_| self.values[dist.sample(&mut rng)]).collect()
    }
}

/// Average ranks (1-based) with ties sharing their mean rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let flat: Vec<f64> = chains.iter().flatten().copied().collect();
    let s = flat.len() as f64;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let z: Vec<f64> = ranks(&flat).into_iter().map(|r| normal.inverse_cdf((r - 0.375) / (s + 0.25))).collect();
    let mut out = Vec::with_capacity(chains.len());
    let mut at = 0;
    for c in chains {
        out.push(z[at..at + c.len()].to_vec());
        at += c.len();
    }
    out
}

/// Classic R-hat on equal-length chains.
fn basic_rhat(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

/// Rank-normalised split R-hat, the larger of the bulk and folded versions,
/// computed on equal-weight draws resampled from each run.
pub fn rhat(runs: &[RunSummary], seed: u64) -> Result<f64> {
    if runs.len() < 2 {
        return argument("R-hat needs at least two runs");
    }
    let draws: Vec<Vec<f64>> = runs.iter().enumerate().map(|(i, r)| r.resampled(seed, i)).collect();
    rhat_from_draws(&draws)
}

/// R-hat from equal-weight draws, one vector per run.
pub fn rhat_from_draws(draws: &[Vec<f64>]) -> Result<f64> {
    if draws.len() < 2 {
        return argument("R-hat needs at least two runs");
    }
    let len = draws.iter().map(|d| d.len()).min().unwrap_or(0);
    if len < 4 {
        return argument("each run needs at least four draws");
    }
    let half = len / 2;
    let mut split = Vec::with_capacity(2 * draws.len());
    for d in draws {
        split.push(d[..half].to_vec());
        split.push(d[len - half..len].to_vec());
    }
    let first = split[0][0];
    if split.iter().flatten().all(|&x| x == first) {
        return Ok(1.0);
    }
    let bulk = basic_rhat(&rank_normalize(&split));
    let mut flat: Vec<f64> = split.iter().flatten().copied().collect();
    flat.sort_by(f64::total_cmp);
    let median = if flat.len() % 2 == 1 {
        flat[flat.len() / 2]
    } else {
        (flat[flat.len() / 2 - 1] + flat[flat.len() / 2]) / 2.0
    };
    let folded: Vec<Vec<f64>> = split.iter().map(|c| c.iter().map(|x| (x - median).abs()).collect()).collect();
    let tail = if folded.iter().flatten().all(|&x| x == folded[0][0]) { 1.0 } else { basic_rhat(&rank_normalize(&folded)) };
    Ok(bulk.max(tail))
}

/// Standard error of the across-run mean of weighted estimates.
pub fn weighted_se(runs: &[RunSummary]) -> Result<f64> {
    let means: Vec<f64> = runs.iter().map(|r| r.weighted_mean()).collect();
    se_of_means(&means)
}

/// Sample standard deviation of `means` divided by the square root of their count.
pub fn se_of_means(means: &[f64]) -> Result<f64> {
    if means.len() < 2 {
        return argument("standard errors need at least two runs");
    }
    let m = means.len() as f64;
    let mu = means.iter().sum::<f64>() / m;
    let var = means.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (m - 1.0);
    Ok((var / m).sqrt())
}

/// Single-run standard error of a weighted mean, grouping particles by the
/// initial particle they descend from.
pub fn lineage_standard_error(values: &[f64], weights: &[f64], origins: &[usize]) -> f64 {
    let mean: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    let mut groups: BTreeMap<usize, f64> = BTreeMap::new();
    for ((v, w), &o) in values.iter().zip(weights).zip(origins) {
        *groups.entry(o).or_insert(0.0) += w * (v - mean);
    }
    groups.values().map(|g| g * g).sum::<f64>().sqrt()
}

/// A registered per-plan statistic.
#[derive(Clone, Debug, PartialEq)]
pub enum Statistic {
    EdgesRemoved,
    EdgesRemovedFraction,
    AdminSplits,
    TotalSplits,
    /// Sorted per-region sums of an attribute.
    Sum(String),
    /// Sorted per-region shares `a / (a + b)`.
    Share(String, String),
    /// Regions whose share `a / (a + b)` exceeds a threshold.
    SeatsAbove(String, String, f64),
}

impl Statistic {
    /// Parses `edges-removed`, `edges-removed-fraction`, `admin-splits`,
    /// `total-splits`, `sum:A`, `share:A:B` or `seats-above:A:B:T`.
    pub fn parse(name: &str) -> Result<Self> {
        let parts: Vec<&str> = name.split(':').collect();
        Ok(match parts.as_slice() {
            ["edges-removed"] => Statistic::EdgesRemoved,
            ["edges-removed-fraction"] => Statistic::EdgesRemovedFraction,
            ["admin-splits"] => Statistic::AdminSplits,
            ["total-splits"] => Statistic::TotalSplits,
            ["sum", a] => Statistic::Sum(a.to_string()),
            ["share", a, b] => Statistic::Share(a.to_string(), b.to_string()),
            ["seats-above", a, b, t] => {
                let t: f64 = t.parse().map_err(|_| Error::Argument(format!("bad threshold in {name}")))?;
                Statistic::SeatsAbove(a.to_string(), b.to_string(), t)
            }
            _ => return argument(format!("unknown statistic {name}")),
        })
    }
}

fn region_sums(graph: &MapGraph, plan: &Plan, attr: &str) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; plan.n_regions()];
    for v in 0..graph.n_vertices() {
        let x = graph
            .attribute(v, attr)
            .ok_or_else(|| Error::Argument(format!("vertex {} has no attribute {attr}", graph.id(v))))?;
        sums[plan.region_of(v)] += x;
    }
    Ok(sums)
}

fn region_shares(graph: &MapGraph, plan: &Plan, a: &str, b: &str) -> Result<Vec<f64>> {
    let sa = region_sums(graph, plan, a)?;
    let sb = region_sums(graph, plan, b)?;
    sa.iter()
        .zip(&sb)
        .map(|(x, y)| {
            if x + y == 0.0 {
                argument(format!("share of {a} is undefined in a region with no {a} or {b}"))
            } else {
                Ok(x / (x + y))
            }
        })
        .collect()
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Values of the requested statistics for one plan. Vector statistics are
/// sorted and reported as `name[i]`.
pub fn summary_statistics(plan: &Plan, graph: &MapGraph, requested: &[&str]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for &name in requested {
        let vector = match Statistic::parse(name)? {
            Statistic::EdgesRemoved => {
                out.insert(name.to_string(), edges_removed(graph, plan).count as f64);
                continue;
            }
            Statistic::EdgesRemovedFraction => {
                out.insert(name.to_string(), edges_removed(graph, plan).fraction);
                continue;
            }
            Statistic::AdminSplits => {
                out.insert(name.to_string(), admin_splits(graph, plan)? as f64);
                continue;
            }
            Statistic::TotalSplits => {
                out.insert(name.to_string(), split_units(graph, plan)? as f64);
                continue;
            }
            Statistic::SeatsAbove(a, b, t) => {
                let n = region_shares(graph, plan, &a, &b)?.into_iter().filter(|&s| s > t).count();
                out.insert(name.to_string(), n as f64);
                continue;
            }
            Statistic::Sum(a) => sorted(region_sums(graph, plan, &a)?),
            Statistic::Share(a, b) => sorted(region_shares(graph, plan, &a, &b)?),
        };
        for (i, x) in vector.into_iter().enumerate() {
            out.insert(format!("{name}[{i}]"), x);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::VertexRecord;

    fn summary(values: Vec<f64>) -> RunSummary {
        let n = values.len();
        RunSummary::new("r", "d", values, vec![1.0 / n as f64; n]).unwrap()
    }

    #[test]
    fn rhat_extremes() {
        let a = summary((0..100).map(|i| (i % 7) as f64).collect());
        assert!((rhat(&[a.clone(), a.clone()], 1).unwrap() - 1.0).abs() < 0.05);
        let draws = vec![(0..100).map(|i| (i % 7) as f64).collect::<Vec<_>>(); 2];
        assert!((rhat_from_draws(&draws).unwrap() - 1.0).abs() < 0.05);
        let b = summary((0..100).map(|i| 100.0 + (i % 7) as f64).collect());
        assert!(rhat(&[a.clone(), b], 1).unwrap() > 1.5);
        let c = summary(vec![3.0; 50]);
        assert_eq!(rhat(&[c.clone(), c], 1).unwrap(), 1.0);
        assert!(rhat(&[a], 1).is_err());
    }

    #[test]
    fn se_examples() {
        assert_eq!(se_of_means(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!((se_of_means(&[0.0, 2.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vote_shares() {
        let mut vs = Vec::new();
        for (i, (d, r)) in [(1.0, 0.0), (0.0, 1.0), (1.0, 0.0), (0.0, 1.0)].into_iter().enumerate() {
            let mut v = VertexRecord::new(format!("v{i}"), 1);
            v.attributes.insert("dem".into(), d);
            v.attributes.insert("rep".into(), r);
            vs.push(v);
        }
        let g = MapGraph::new(vs, vec![(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        let plan = Plan::new(vec![0, 1, 0, 1], vec![1, 1]).unwrap();
        let s = summary_statistics(&plan, &g, &["share:dem:rep", "seats-above:dem:rep:0.5", "edges-removed"]).unwrap();
        assert_eq!(s["share:dem:rep[0]"], 0.0);
        assert_eq!(s["share:dem:rep[1]"], 1.0);
        assert_eq!(s["seats-above:dem:rep:0.5"], 1.0);
        assert_eq!(s["edges-removed"], 2.0);
        assert!(summary_statistics(&plan, &g, &["nope"]).is_err());
        assert!(summary_statistics(&plan, &g, &["sum:missing"]).is_err());
    }
}
