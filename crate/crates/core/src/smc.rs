//! The sequential Monte Carlo driver.
use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{argument, configuration, Error, Result};
use crate::graph::Plan;
use crate::kernels::{estimate_k, propose_split, CutRule, PhiRule};
use crate::mcmc::{McmcContext, PairPhiRule};
use crate::particle::{ForestPlan, LinkingPlan, Particle};
use crate::problem::Problem;
use crate::rng::{stream, Purpose};
use crate::target::Space;
use crate::weights::{log_sum_exp, WeightContext};

/// How `K` is chosen for top-K splitting in graph space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KRule {
    /// Largest balanced-cut count over `n_probe` probe trees, times `multiplier`.
    Estimate { n_probe: usize, multiplier: f64 },
    Fixed(usize),
}

impl Default for KRule {
    fn default() -> Self {
        KRule::Estimate { n_probe: 20, multiplier: 1.0 }
    }
}

/// When parents are resampled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResamplePolicy {
    /// Draw parents by weight at every stage, redrawing after each rejection.
    #[default]
    EveryStage,
    /// Resample only when the effective sample size falls below
    /// `ess_threshold * N`; otherwise each particle extends itself once and
    /// a rejection zeroes its weight.
    Defer { ess_threshold: f64 },
}

fn default_max_rejections() -> usize {
    10_000
}

fn default_threads() -> usize {
    1
}

fn default_true() -> bool {
    true
}

/// Run settings that are not part of the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_particles: usize,
    pub seed: u64,
    #[serde(default)]
    pub phi: PhiRule,
    /// Cut distribution in forest and linking-edge space.
    #[serde(default)]
    pub cut_rule: CutRule,
    #[serde(default)]
    pub k_rule: KRule,
    /// Expected accepted merge-split moves per particle after each split.
    #[serde(default)]
    pub mcmc_successes: usize,
    #[serde(default)]
    pub pair_phi: PairPhiRule,
    #[serde(default)]
    pub resample: ResamplePolicy,
    #[serde(default = "default_max_rejections")]
    pub max_rejections: usize,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default = "default_true")]
    pub same_component_merges: bool,
    /// Record wall times in stage statistics.
    #[serde(default)]
    pub timings: bool,
    /// Progress lines on standard error.
    #[serde(default)]
    pub verbose: bool,
}

impl RunConfig {
    pub fn new(n_particles: usize, seed: u64) -> Self {
        RunConfig {
            n_particles,
            seed,
            phi: PhiRule::default(),
            cut_rule: CutRule::default(),
            k_rule: KRule::default(),
            mcmc_successes: 0,
            pair_phi: PairPhiRule::default(),
            resample: ResamplePolicy::default(),
            max_rejections: default_max_rejections(),
            threads: 1,
            same_component_merges: true,
            timings: false,
            verbose: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return argument("need at least one particle");
        }
        if self.max_rejections == 0 {
            return argument("max_rejections must be positive");
        }
        match self.k_rule {
            KRule::Fixed(0) => return argument("K must be at least 1"),
            KRule::Estimate { n_probe: 0, .. } => return argument("n_probe must be at least 1"),
            KRule::Estimate { multiplier, .. } if multiplier.is_nan() || multiplier < 1.0 => return argument("K multiplier must be at least 1"),
            _ => {}
        }
        if let CutRule::TopK(_) = self.cut_rule {
            return configuration("cut_rule applies to forest and linking-edge space; use k_rule for top-K");
        }
        if let ResamplePolicy::Defer { ess_threshold } = self.resample {
            if !(0.0..=1.0).contains(&ess_threshold) {
                return argument("ess_threshold must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// Per-stage diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    /// Number of regions after the stage.
    pub stage: usize,
    pub k: Option<usize>,
    /// Split proposals made, including rejected ones.
    pub proposals: u64,
    /// Proposals that produced a valid plan.
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub resampled: bool,
    pub ess: f64,
    pub log_z_increment: f64,
    pub mcmc_k: Option<usize>,
    pub mcmc_attempts: u64,
    pub mcmc_accepted: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
}

/// A weighted population of particles at one stage.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub particles: Vec<Particle>,
    /// Log weights accumulated since the last resampling.
    pub log_weights: Vec<f64>,
    /// Number of regions in every live particle.
    pub stage: usize,
    /// Parent index of every particle, one vector per completed split stage.
    pub ancestry: Vec<Vec<usize>>,
    /// Index of the initial particle each particle descends from.
    pub origins: Vec<usize>,
    /// Running log estimate of the normalising constant.
    pub log_z: f64,
    pub stats: Vec<StageStats>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn normalized_weights(&self) -> Vec<f64> {
        normalize(&self.log_weights)
    }

    pub fn ess(&self) -> f64 {
        effective_sample_size(&self.normalized_weights())
    }

    pub fn plans(&self) -> Vec<&Plan> {
        self.particles.iter().map(|p| p.plan()).collect()
    }
}

fn normalize(log_w: &[f64]) -> Vec<f64> {
    let total = log_sum_exp(log_w);
    log_w.iter().map(|w| (w - total).exp()).collect()
}

/// `1 / sum(W_i^2)`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Multinomial draw of `count` indices with probabilities `weights`.
pub fn resample_parents<R: Rng + ?Sized>(weights: &[f64], count: usize, rng: &mut R) -> Result<Vec<usize>> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || (total - 1.0).abs() > 1e-9 || weights.iter().any(|&w| w.is_nan() || w < 0.0) {
        return argument("parent weights must be non-negative and sum to one");
    }
    let dist = WeightedIndex::new(weights).map_err(|e| Error::Argument(e.to_string()))?;
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

/// Stage-by-stage driver; [`run_gsmc`] runs all stages.
pub struct Sampler<'a> {
    problem: &'a Problem,
    config: RunConfig,
    pool: rayon::ThreadPool,
    mcmc_rate: Option<f64>,
}

struct Extension {
    particle: Particle,
    parent: usize,
    log_weight: f64,
    proposals: u64,
}

impl<'a> Sampler<'a> {
    pub fn new(problem: &'a Problem, config: RunConfig) -> Result<Self> {
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads.max(1))
            .build()
            .map_err(|e| Error::Configuration(format!("thread pool: {e}")))?;
        Ok(Sampler { problem, config, pool, mcmc_rate: None })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// N copies of the one-region plan, with fresh trees outside graph space.
    pub fn initialize(&self) -> Result<Ensemble> {
        let p = self.problem;
        let n = self.config.n_particles;
        let single = Plan::single(p.graph.n_vertices(), p.scheme().seats);
        let log_z = p.log_plan_density(&single)?;
        if log_z == f64::NEG_INFINITY {
            return configuration("the one-region plan violates the target's hard constraints");
        }
        let all: Vec<usize> = (0..p.graph.n_vertices()).collect();
        let seed = self.config.seed;
        let particles = self.pool.install(|| {
            (0..n)
                .into_par_iter()
                .map(|i| -> Result<Particle> {
                    if p.target.space == Space::Graph {
                        return Ok(Particle::Graph(single.clone()));
                    }
                    let mut rng = stream(seed, Purpose::Proposal, 1, i);
                    let tree = p.structure().wilson(&p.graph, &all, single.size(0), &mut rng)?;
                    let forest = ForestPlan { plan: single.clone(), trees: vec![tree] };
                    Ok(match p.target.space {
                        Space::Forest => Particle::Forest(forest),
                        _ => Particle::Linking(LinkingPlan { forest, links: Vec::new() }),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        Ok(Ensemble {
            particles,
            log_weights: vec![0.0; n],
            stage: 1,
            ancestry: Vec::new(),
            origins: (0..n).collect(),
            log_z,
            stats: Vec::new(),
        })
    }

    fn cut_rule_for_stage(&self, ens: &Ensemble, weights: &[f64], next: usize) -> Result<CutRule> {
        if self.problem.target.space != Space::Graph {
            return Ok(self.config.cut_rule);
        }
        Ok(CutRule::TopK(match self.config.k_rule {
            KRule::Fixed(k) => k,
            KRule::Estimate { n_probe, multiplier } => {
                let mut rng = stream(self.config.seed, Purpose::Probe, next, 0);
                let plans = ens.plans();
                let k = estimate_k(self.problem, &plans, weights, self.config.phi, n_probe, &mut rng)?;
                ((k as f64 * multiplier).ceil() as usize).max(1)
            }
        }))
    }

    fn weight_context(&self, rule: CutRule) -> WeightContext<'a> {
        WeightContext { problem: self.problem, phi: self.config.phi, rule }
    }

    /// Splits every particle once, moving the ensemble from `r` to `r + 1`
    /// regions.
    pub fn split_stage(&mut self, ens: &mut Ensemble) -> Result<()> {
        let started = Instant::now();
        let next = ens.stage + 1;
        if next > self.problem.districts() {
            return argument("the ensemble is already complete");
        }
        let n = ens.len();
        let weights = ens.normalized_weights();
        if weights.iter().any(|w| w.is_nan()) {
            return Err(Error::DegenerateWeights { stage: ens.stage });
        }
        let ess = effective_sample_size(&weights);
        let resample = match self.config.resample {
            ResamplePolicy::EveryStage => true,
            ResamplePolicy::Defer { ess_threshold } => ess < ess_threshold * n as f64,
        };
        let rule = self.cut_rule_for_stage(ens, &weights, next)?;
        let wctx = self.weight_context(rule);
        let seed = self.config.seed;
        let cap = self.config.max_rejections;
        let phi = self.config.phi;
        let problem = self.problem;
        let particles = &ens.particles;
        let log_weights = &ens.log_weights;

        let results: Vec<Result<Extension>> = if resample {
            let dist = WeightedIndex::new(&weights).map_err(|_| Error::DegenerateWeights { stage: ens.stage })?;
            self.pool.install(|| {
                (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let mut parent_rng = stream(seed, Purpose::Parent, next, i);
                        let mut rng = stream(seed, Purpose::Proposal, next, i);
                        for attempt in 1..=cap {
                            let j = dist.sample(&mut parent_rng);
                            if let Some(child) = propose_split(problem, &particles[j], phi, rule, &mut rng)? {
                                let log_weight = wctx.log_weight(&child)?;
                                return Ok(Extension { particle: child, parent: j, log_weight, proposals: attempt as u64 });
                            }
                        }
                        Err(Error::RejectionCap { stage: next, particle: i, cap })
                    })
                    .collect()
            })
        } else {
            self.pool.install(|| {
                (0..n)
                    .into_par_iter()
                    .map(|i| {
                        if log_weights[i] == f64::NEG_INFINITY {
                            return Ok(Extension { particle: particles[i].clone(), parent: i, log_weight: f64::NEG_INFINITY, proposals: 0 });
                        }
                        let mut rng = stream(seed, Purpose::Proposal, next, i);
                        Ok(match propose_split(problem, &particles[i], phi, rule, &mut rng)? {
                            Some(child) => {
                                let w = wctx.log_weight(&child)?;
                                Extension { particle: child, parent: i, log_weight: w, proposals: 1 }
                            }
                            None => Extension { particle: particles[i].clone(), parent: i, log_weight: f64::NEG_INFINITY, proposals: 1 },
                        })
                    })
                    .collect()
            })
        };

        let mut new_particles = Vec::with_capacity(n);
        let mut parents = Vec::with_capacity(n);
        let mut incr = Vec::with_capacity(n);
        let mut proposals = 0u64;
        for r in results {
            let ext = r?;
            proposals += ext.proposals;
            parents.push(ext.parent);
            incr.push(ext.log_weight);
            new_particles.push(ext.particle);
        }
        let accepted = incr.iter().filter(|w| w.is_finite()).count();
        let log_z_increment = if resample {
            log_sum_exp(&incr) - (n as f64).ln() + (n as f64 / proposals as f64).ln()
        } else {
            let terms: Vec<f64> = weights.iter().zip(&incr).map(|(w, x)| w.ln() + x).collect();
            log_sum_exp(&terms)
        };
        if log_z_increment == f64::NEG_INFINITY || log_z_increment.is_nan() {
            return Err(Error::DegenerateWeights { stage: next });
        }
        ens.log_weights = if resample {
            incr
        } else {
            log_weights.iter().zip(&incr).map(|(a, b)| a + b).collect()
        };
        ens.origins = parents.iter().map(|&j| ens.origins[j]).collect();
        ens.ancestry.push(parents);
        ens.particles = new_particles;
        ens.stage = next;
        ens.log_z += log_z_increment;
        let stats = StageStats {
            stage: next,
            k: match rule {
                CutRule::TopK(k) => Some(k),
                _ => None,
            },
            proposals,
            accepted,
            acceptance_rate: accepted as f64 / proposals.max(1) as f64,
            resampled: resample,
            ess: ens.ess(),
            log_z_increment,
            wall_seconds: self.config.timings.then(|| started.elapsed().as_secs_f64()),
            ..StageStats::default()
        };
        if self.config.verbose {
            eprintln!(
                "stage {next}: acceptance {:.4}, ESS {:.1}, log Z {:.4}{}",
                stats.acceptance_rate,
                stats.ess,
                ens.log_z,
                stats.k.map(|k| format!(", K {k}")).unwrap_or_default()
            );
        }
        ens.stats.push(stats);
        Ok(())
    }

    fn mcmc_rule(&self, ctx: &McmcContext, ens: &Ensemble, weights: &[f64]) -> Result<CutRule> {
        if self.problem.target.space != Space::Graph {
            return Ok(self.config.cut_rule);
        }
        Ok(CutRule::TopK(match self.config.k_rule {
            KRule::Fixed(k) => k,
            KRule::Estimate { n_probe, multiplier } => {
                let mut rng = stream(self.config.seed, Purpose::McmcProbe, ens.stage, 0);
                let parts: Vec<&Particle> = ens.particles.iter().collect();
                let k = ctx.estimate_k(&parts, weights, n_probe, &mut rng)?;
                ((k as f64 * multiplier).ceil() as usize).max(1)
            }
        }))
    }

    fn mcmc_block(&self, ctx: &McmcContext, ens: &mut Ensemble, attempts: usize, purpose: Purpose) -> Result<u64> {
        let seed = self.config.seed;
        let stage = ens.stage;
        let log_weights = &ens.log_weights;
        let particles = &ens.particles;
        let results: Vec<Result<(Particle, u64)>> = self.pool.install(|| {
            (0..particles.len())
                .into_par_iter()
                .map(|i| {
                    if log_weights[i] == f64::NEG_INFINITY {
                        return Ok((particles[i].clone(), 0));
                    }
                    let mut rng = stream(seed, purpose, stage, i);
                    let mut state = particles[i].clone();
                    let mut accepted = 0;
                    for _ in 0..attempts {
                        let (next, ok) = ctx.step(&state, &mut rng)?;
                        state = next;
                        accepted += ok as u64;
                    }
                    Ok((state, accepted))
                })
                .collect()
        });
        let mut total = 0;
        let mut out = Vec::with_capacity(results.len());
        for r in results {
            let (p, a) = r?;
            total += a;
            out.push(p);
        }
        ens.particles = out;
        Ok(total)
    }

    /// Merge-split moves on every live particle, aiming for `expected`
    /// accepted moves each. Weights are left untouched.
    pub fn interleave_mcmc(&mut self, ens: &mut Ensemble, expected: usize) -> Result<()> {
        if expected == 0 || ens.stage < 2 {
            return Ok(());
        }
        let weights = ens.normalized_weights();
        let alive = ens.log_weights.iter().filter(|w| w.is_finite()).count() as u64;
        let base = McmcContext {
            problem: self.problem,
            pair_phi: self.config.pair_phi,
            rule: self.config.cut_rule,
            same_component_merges: self.config.same_component_merges,
        };
        let rule = self.mcmc_rule(&McmcContext { rule: CutRule::TopK(1), ..base }, ens, &weights)?;
        let ctx = McmcContext { rule, ..base };
        let budget = |rate: f64| (expected as f64 / rate.max(0.01)).ceil() as usize;
        let (attempts, accepted) = match self.mcmc_rate {
            None => {
                let pilot = expected;
                let first = self.mcmc_block(&ctx, ens, pilot, Purpose::Mcmc)?;
                let rate = first as f64 / (pilot as u64 * alive).max(1) as f64;
                let extra = budget(rate).saturating_sub(pilot);
                let second = self.mcmc_block(&ctx, ens, extra, Purpose::McmcExtra)?;
                (pilot + extra, first + second)
            }
            Some(rate) => {
                let total = budget(rate);
                (total, self.mcmc_block(&ctx, ens, total, Purpose::Mcmc)?)
            }
        };
        let tried = attempts as u64 * alive;
        self.mcmc_rate = Some(accepted as f64 / tried.max(1) as f64);
        if let Some(s) = ens.stats.last_mut() {
            s.mcmc_k = match rule {
                CutRule::TopK(k) => Some(k),
                _ => None,
            };
            s.mcmc_attempts = tried;
            s.mcmc_accepted = accepted;
        }
        if self.config.verbose {
            eprintln!("stage {}: {attempts} merge-split attempts per particle, acceptance {:.4}", ens.stage, self.mcmc_rate.unwrap_or(0.0));
        }
        Ok(())
    }

    /// All stages from one region to a complete plan.
    pub fn run(&mut self) -> Result<Ensemble> {
        let mut ens = self.initialize()?;
        while ens.stage < self.problem.districts() {
            self.split_stage(&mut ens)?;
            self.interleave_mcmc(&mut ens, self.config.mcmc_successes)?;
        }
        Ok(ens)
    }
}

/// Runs the sampler to completion.
pub fn run_gsmc(problem: &Problem, config: RunConfig) -> Result<Ensemble> {
    Sampler::new(problem, config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ess_examples() {
        assert!((effective_sample_size(&[0.01; 100]) - 100.0).abs() < 1e-9);
        assert!((effective_sample_size(&[1.0, 0.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!((effective_sample_size(&[0.5, 0.25, 0.25]) - 1.0 / 0.375).abs() < 1e-12);
    }

    #[test]
    fn resampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(resample_parents(&[1.0, 0.0, 0.0], 50, &mut rng).unwrap(), vec![0; 50]);
        let draws = resample_parents(&[0.75, 0.25], 100_000, &mut rng).unwrap();
        let f = draws.iter().filter(|&&i| i == 0).count() as f64 / 1e5;
        assert!((f - 0.75).abs() < 0.005);
        assert!(resample_parents(&[0.5, 0.6], 1, &mut rng).is_err());
    }
}
