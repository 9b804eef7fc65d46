//! `gsmc` command-line front end.
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gsmc::diagnostics::{rhat, se_of_means, summary_statistics, RunSummary};
use gsmc::enumerate::{enumerate_balanced_plans, exact_distribution};
use gsmc::io::{
    load_graph, manifest_path, read_manifest, read_plans, write_exact, write_manifest, write_plans, RunManifest,
    SampleConfig, TargetConfig,
};
use gsmc::problem::Problem;
use gsmc::scheme::{DistrictingScheme, ScheduleKind, SplittingSchedule};
use gsmc::smc::{RunConfig, Sampler};
use gsmc::target::{PopBounds, Space, TargetSpec};

#[derive(Parser)]
#[command(name = "gsmc", version, about = "Sequential Monte Carlo sampler for redistricting plans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a weighted ensemble of plans.
    Sample(SampleArgs),
    /// Enumerate every balanced plan of a small map with exact probabilities.
    Enumerate(EnumerateArgs),
    /// R-hat and standard errors across independent runs.
    Diagnose(DiagnoseArgs),
    /// Per-plan statistics of one plan archive as tidy CSV.
    Stats(StatsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceArg {
    Graph,
    Forest,
    Linking,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    DistrictOnly,
    AnyValid,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    graph: PathBuf,
    /// JSON configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of single-member districts when no configuration file is given.
    #[arg(long)]
    districts: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum)]
    space: Option<SpaceArg>,
    #[arg(long, value_enum)]
    schedule: Option<ScheduleArg>,
    #[arg(long)]
    mcmc_successes: Option<usize>,
    #[arg(long)]
    hierarchical: bool,
    /// Plan archive; the manifest is written next to it.
    #[arg(long, default_value = "plans.jsonl")]
    out: PathBuf,
    #[arg(long, env = "GSMC_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    verbose: bool,
    /// Record wall-clock times in the manifest.
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct EnumerateArgs {
    #[arg(long)]
    graph: PathBuf,
    /// `D` for D single-member districts, or `D/S/MIN/MAX`.
    #[arg(long)]
    scheme: String,
    #[arg(long, default_value_t = 0.0)]
    tolerance: f64,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value = "exact.jsonl")]
    out: PathBuf,
    /// Maximum number of search nodes.
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Glob matching plan archives, one per run.
    #[arg(long)]
    runs: String,
    /// Statistic names, comma separated or repeated.
    #[arg(long = "stat", value_delimiter = ',', default_value = "edges-removed")]
    stats: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    fail_above_rhat: Option<f64>,
    /// Seed for resampling weighted runs to equal-weight draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    plans: PathBuf,
    #[arg(long = "stat", value_delimiter = ',', default_value = "edges-removed")]
    stats: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Runtime(anyhow::Error),
    Threshold(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Sample(a) => sample(a).map_err(Failure::from),
        Command::Enumerate(a) => enumerate(a).map_err(Failure::from),
        Command::Diagnose(a) => diagnose(a),
        Command::Stats(a) => stats(a).map_err(Failure::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Threshold(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(3)
        }
    }
}

fn sample(a: SampleArgs) -> anyhow::Result<()> {
    let graph = load_graph(&a.graph).with_context(|| format!("loading {}", a.graph.display()))?;
    let mut config = match (&a.config, a.districts) {
        (Some(path), _) => SampleConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        (None, Some(d)) => SampleConfig {
            scheme: DistrictingScheme::single_member(d),
            schedule: ScheduleKind::DistrictOnly,
            target: TargetConfig::default(),
            run: RunConfig::new(1000, 0),
        },
        (None, None) => bail!("give --config or --districts"),
    };
    if let Some(d) = a.districts {
        if d != config.scheme.districts {
            config.scheme = DistrictingScheme::single_member(d);
        }
    }
    if let Some(s) = a.seed {
        config.run.seed = s;
    }
    if let Some(n) = a.n {
        config.run.n_particles = n;
    }
    if let Some(s) = a.space {
        config.target.space = match s {
            SpaceArg::Graph => Space::Graph,
            SpaceArg::Forest => Space::Forest,
            SpaceArg::Linking => Space::Linking,
        };
    }
    if let Some(s) = a.schedule {
        config.schedule = match s {
            ScheduleArg::DistrictOnly => ScheduleKind::DistrictOnly,
            ScheduleArg::AnyValid => ScheduleKind::AnyValid,
        };
    }
    if let Some(m) = a.mcmc_successes {
        config.run.mcmc_successes = m;
    }
    if a.hierarchical {
        config.target.hierarchical = true;
    }
    if let Some(t) = a.threads {
        config.run.threads = t;
    }
    config.run.verbose |= a.verbose;
    config.run.timings |= a.timings;

    let problem = config.build_problem(graph)?;
    let start = Instant::now();
    let ensemble = Sampler::new(&problem, config.run.clone())?.run()?;
    let wall = config.run.timings.then(|| start.elapsed().as_secs_f64());
    write_plans(&ensemble, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let manifest = RunManifest::new(&config, &ensemble, wall);
    write_manifest(&manifest, &manifest_path(&a.out))?;
    if config.run.verbose {
        eprintln!("log normalising constant {:.6}, final ESS {:.1}", ensemble.log_z, ensemble.ess());
    }
    Ok(())
}

fn parse_scheme(text: &str) -> anyhow::Result<DistrictingScheme> {
    let parts: Vec<u32> = text
        .split('/')
        .map(|p| p.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|_| anyhow!("--scheme must be `D` or `D/S/MIN/MAX`, got `{text}`"))?;
    Ok(match parts[..] {
        [d] => DistrictingScheme::single_member(d),
        [d, s, lo, hi] => DistrictingScheme::new(d, s, lo, hi)?,
        _ => bail!("--scheme must be `D` or `D/S/MIN/MAX`, got `{text}`"),
    })
}

fn enumerate(a: EnumerateArgs) -> anyhow::Result<()> {
    let graph = load_graph(&a.graph).with_context(|| format!("loading {}", a.graph.display()))?;
    let scheme = parse_scheme(&a.scheme)?;
    let bounds = PopBounds::from_tolerance(graph.total_pop(), scheme.seats, a.tolerance);
    let plans = enumerate_balanced_plans(&graph, &scheme, &bounds, a.budget)?;
    let schedule = SplittingSchedule::new(ScheduleKind::AnyValid, scheme)?;
    let target = TargetSpec::new(a.rho, bounds, Space::Graph)?;
    let problem = Problem::new(graph, schedule, target)?;
    let exact = exact_distribution(&problem, plans)?;
    write_exact(&exact.plans, &exact.probs, &a.out)?;
    eprintln!("{} balanced plans written to {}", exact.plans.len(), a.out.display());
    Ok(())
}

fn open_out(out: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

type StatRows = Vec<BTreeMap<String, f64>>;

/// Statistic values and weights of every plan in one archive.
fn archive_statistics(graph: &gsmc::graph::MapGraph, path: &Path, names: &[&str]) -> anyhow::Result<(StatRows, Vec<f64>)> {
    let records = read_plans(path)?;
    let mut rows = Vec::with_capacity(records.len());
    let mut weights = Vec::with_capacity(records.len());
    for r in &records {
        rows.push(summary_statistics(&r.plan()?, graph, names)?);
        weights.push(r.normalized_weight);
    }
    Ok((rows, weights))
}

fn diagnose(a: DiagnoseArgs) -> Result<(), Failure> {
    let graph = load_graph(&a.graph).with_context(|| format!("loading {}", a.graph.display()))?;
    let mut paths: Vec<PathBuf> = glob::glob(&a.runs)
        .map_err(|e| anyhow!("bad --runs pattern: {e}"))?
        .collect::<Result<_, _>>()
        .map_err(|e| anyhow!("{e}"))?;
    paths.retain(|p| !p.to_string_lossy().ends_with(".manifest.json"));
    paths.sort();
    if paths.len() < 2 {
        return Err(anyhow!("--runs matched {} archives; need at least two", paths.len()).into());
    }
    let names: Vec<&str> = a.stats.iter().map(String::as_str).collect();
    let mut per_stat: BTreeMap<String, Vec<RunSummary>> = BTreeMap::new();
    for path in &paths {
        let digest = read_manifest(&manifest_path(path)).map(|m| m.config_digest).unwrap_or_default();
        let (rows, weights) = archive_statistics(&graph, path, &names)?;
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let keys: Vec<String> = rows.first().map(|r| r.keys().cloned().collect()).unwrap_or_default();
        for key in keys {
            let values = rows.iter().map(|r| r.get(&key).copied().unwrap_or(f64::NAN)).collect();
            let run = RunSummary::new(path.display().to_string(), digest.clone(), values, weights.clone()).map_err(anyhow::Error::from)?;
            per_stat.entry(key).or_default().push(run);
        }
    }
    let mut out = open_out(&a.out)?;
    writeln!(out, "statistic,runs,mean,se,rhat").map_err(anyhow::Error::from)?;
    let mut worst: Option<(String, f64)> = None;
    for (key, runs) in &per_stat {
        let means: Vec<f64> = runs.iter().map(RunSummary::weighted_mean).collect();
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        let se = se_of_means(&means).map_err(anyhow::Error::from)?;
        let r = rhat(runs, a.seed).map_err(anyhow::Error::from)?;
        writeln!(out, "{key},{},{mean},{se},{r}", runs.len()).map_err(anyhow::Error::from)?;
        if worst.as_ref().is_none_or(|(_, w)| r > *w) {
            worst = Some((key.clone(), r));
        }
    }
    out.flush().map_err(anyhow::Error::from)?;
    if let (Some(limit), Some((key, r))) = (a.fail_above_rhat, worst) {
        if r.is_nan() || r > limit {
            return Err(Failure::Threshold(format!("R-hat of {key} is {r:.4}, above {limit}")));
        }
    }
    Ok(())
}

fn stats(a: StatsArgs) -> anyhow::Result<()> {
    let graph = load_graph(&a.graph).with_context(|| format!("loading {}", a.graph.display()))?;
    let names: Vec<&str> = a.stats.iter().map(String::as_str).collect();
    let (rows, weights) = archive_statistics(&graph, &a.plans, &names)?;
    let mut out = open_out(&a.out)?;
    writeln!(out, "plan,weight,statistic,value")?;
    for (i, (row, w)) in rows.iter().zip(&weights).enumerate() {
        for (k, v) in row {
            writeln!(out, "{i},{w},{k},{v}")?;
        }
    }
    out.flush()?;
    Ok(())
}
