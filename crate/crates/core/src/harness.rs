//! Experiment orchestration: JSON configs, seeded runs, CSV outputs.
//!
//! Run `i` uses seed `base_seed + i`. From that seed two ChaCha8 streams are
//! derived: stream 0 draws contexts, stream 1 drives the policy (arm draw,
//! ball draw, reward noise). Every policy in a run therefore sees the same
//! context sequence, and runs are independent of each other and of the
//! order they execute in.
//!
//! Output layout under `output_dir`:
//!
//! - `runs/<policy>_run<i>.csv`: `t,x,y,ball_id,delta,cumulative_regret,child_created,front_size`
//! - `aggregate.csv`: `t` then `<policy>_mean,<policy>_se` per policy
//! - `fairness.csv`: `policy,bin1,..,bin6,pareto_selections` (pooled over runs)
//!
//! Each file starts with a `# <schema>` comment line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{Policy, PolicyKind};
use crate::envs::{ContextGenerator, ContextOracle, Environment, MeanSurface, MeanTable, Noise};
use crate::error::{Error, Result};
use crate::metrics::{
    fairness_bins, summarize_runs, FairnessReport, RegretSeries, RegretSummary, FAIRNESS_BINS,
};
use crate::pcz::{PczConfig, RoundRecord, DEFAULT_ARM_GRID_SIZE};
use crate::similarity_space::{ArmGrid, Metric, MetricKind};

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "PCZ_OUTPUT_DIR";

pub const DEFAULT_HORIZON: u64 = 100_000;
pub const DEFAULT_RUNS: usize = 100;

pub const TRACE_SCHEMA: &str = "# pcz-trace v1";
pub const AGGREGATE_SCHEMA: &str = "# pcz-aggregate v1";
pub const FAIRNESS_SCHEMA: &str = "# pcz-fairness v1";
pub const ORACLE_SCHEMA: &str = "# pcz-oracle v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum EnvSpec {
    AppendixD {
        #[serde(default = "default_noise")]
        noise: Noise,
    },
    IdenticalObjectives {
        objectives: usize,
        #[serde(default = "default_noise")]
        noise: Noise,
    },
    Table {
        /// Relative paths resolve against the config file's directory.
        path: PathBuf,
        #[serde(default = "default_noise")]
        noise: Noise,
    },
}

fn default_noise() -> Noise {
    Noise::Bernoulli
}

impl EnvSpec {
    pub fn build(&self, base_dir: &Path) -> Result<Environment> {
        match self {
            EnvSpec::AppendixD { noise } => Environment::new(MeanSurface::AppendixD, *noise),
            EnvSpec::IdenticalObjectives { objectives, noise } => Environment::new(
                MeanSurface::IdenticalObjectives {
                    base: Box::new(MeanSurface::AppendixD),
                    objectives: *objectives,
                },
                *noise,
            ),
            EnvSpec::Table { path, noise } => {
                let table = MeanTable::from_json_file(base_dir.join(path))?;
                Environment::new(MeanSurface::Table(table), *noise)
            }
        }
    }
}

/// Experiment description, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    #[serde(default = "default_contexts")]
    pub contexts: ContextGenerator,
    pub policies: Vec<PolicyKind>,
    #[serde(default = "default_horizon")]
    pub horizon: i64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_grid")]
    pub arm_grid_size: usize,
    /// Defaults to `1/horizon`.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_metric")]
    pub metric: MetricKind,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Defaults to `arm_grid_size`.
    #[serde(default)]
    pub oracle_grid_size: Option<usize>,
    /// Check the full partition invariants every round.
    #[serde(default)]
    pub audit_invariants: bool,
}

fn default_contexts() -> ContextGenerator {
    ContextGenerator::Uniform
}
fn default_horizon() -> i64 {
    DEFAULT_HORIZON as i64
}
fn default_runs() -> usize {
    DEFAULT_RUNS
}
fn default_grid() -> usize {
    DEFAULT_ARM_GRID_SIZE
}
fn default_metric() -> MetricKind {
    MetricKind::ScaledEuclidean
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// A validated config with every default filled in.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub env: Environment,
    pub horizon: u64,
    pub delta: f64,
    pub oracle_grid_size: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Parse {
            path: origin.to_string(),
            source,
        })
    }

    /// Validates and resolves defaults. `base_dir` anchors relative paths.
    pub fn resolve(self, base_dir: &Path) -> Result<Experiment> {
        if self.horizon < 1 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        let horizon = self.horizon as u64;
        if self.runs == 0 {
            return Err(Error::config("runs", "must be at least 1"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("policies", "need at least one policy"));
        }
        let mut seen = self.policies.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.policies.len() {
            return Err(Error::config("policies", "duplicate policy"));
        }
        self.base_seed
            .checked_add(self.runs as u64)
            .ok_or_else(|| Error::config("base_seed", "base_seed + runs overflows"))?;
        let delta = self.delta.unwrap_or(1.0 / horizon as f64);
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config(
                "delta",
                if horizon == 1 && self.delta.is_none() {
                    "default 1/T is 1 when T = 1; set delta explicitly".to_string()
                } else {
                    "must lie in (0, 1)".to_string()
                },
            ));
        }
        if self.arm_grid_size < 2 {
            return Err(Error::config("arm_grid_size", "must be at least 2"));
        }
        let oracle_grid_size = self.oracle_grid_size.unwrap_or(self.arm_grid_size);
        if oracle_grid_size < 2 {
            return Err(Error::config("oracle_grid_size", "must be at least 2"));
        }
        self.contexts.validate(horizon)?;
        let env = self.env.build(base_dir)?;
        Ok(Experiment {
            config: self,
            env,
            horizon,
            delta,
            oracle_grid_size,
        })
    }
}

/// Reads, validates and resolves a JSON config. Defaults are logged.
pub fn load_config(path: impl AsRef<Path>) -> Result<Experiment> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config = ExperimentConfig::from_json(&text, &path.display().to_string())?;
    let base = path.parent().unwrap_or(Path::new("."));
    let exp = config.resolve(base)?;
    log::info!(
        "config {}: T={} runs={} base_seed={} M={} delta={} oracle_grid={} output={}",
        path.display(),
        exp.horizon,
        exp.config.runs,
        exp.config.base_seed,
        exp.config.arm_grid_size,
        exp.delta,
        exp.oracle_grid_size,
        exp.config.output_dir.display()
    );
    Ok(exp)
}

/// Everything one policy produced in one run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub policy: PolicyKind,
    pub run: usize,
    pub records: Vec<RoundRecord>,
    pub regret: RegretSeries,
    pub fairness: Option<FairnessReport>,
}

/// Results of a whole experiment, before anything is written.
#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub runs: Vec<RunResult>,
}

impl ExperimentResults {
    pub fn for_policy(&self, policy: PolicyKind) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.policy == policy)
    }

    pub fn summary(&self, policy: PolicyKind) -> Option<RegretSummary> {
        let series: Vec<RegretSeries> = self.for_policy(policy).map(|r| r.regret.clone()).collect();
        (!series.is_empty()).then(|| summarize_runs(&series))
    }

    pub fn pooled_fairness(&self, policy: PolicyKind) -> Option<FairnessReport> {
        let reports: Vec<&FairnessReport> = self
            .for_policy(policy)
            .filter_map(|r| r.fairness.as_ref())
            .collect();
        (!reports.is_empty()).then(|| FairnessReport::pooled(reports))
    }
}

impl Experiment {
    pub fn pcz_config(&self, seed: u64) -> Result<PczConfig> {
        let (dx, dy) = (self.env.context_dim(), self.env.arm_dim());
        let metric = match self.config.metric {
            MetricKind::ScaledEuclidean => Metric::scaled_euclidean(dx, dy),
            MetricKind::MaxOfPerAxis => Metric::max_of_per_axis(dx, dy),
        };
        let config = PczConfig {
            horizon: self.horizon,
            delta: self.delta,
            objectives: self.env.objectives(),
            arm_grid_size: self.config.arm_grid_size,
            metric,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.config.base_seed + run as u64
    }

    /// Context sequence of one run.
    pub fn contexts(&self, run: usize) -> Result<Vec<Vec<f64>>> {
        let mut rng = stream(self.run_seed(run), 0);
        (1..=self.horizon)
            .map(|t| self.config.contexts.sample_context(&mut rng, t))
            .collect()
    }

    /// Plays every policy for run `run`. Invariant violations carry the
    /// learner snapshot in `Failure::snapshot`.
    pub fn run_one(&self, run: usize) -> std::result::Result<Vec<RunResult>, Failure> {
        let seed = self.run_seed(run);
        let contexts = self.contexts(run)?;
        let oracle_grid = ArmGrid::new(self.oracle_grid_size, self.env.arm_dim())?;
        let oracles = contexts
            .iter()
            .map(|x| ContextOracle::new(&self.env, x, &oracle_grid))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(self.config.policies.len());
        for &kind in &self.config.policies {
            let mut policy = Policy::new(kind, self.pcz_config(seed)?, &self.env)?;
            let mut rng = stream(seed, 1);
            let mut records = Vec::with_capacity(contexts.len());
            let mut increments = Vec::with_capacity(contexts.len());
            for (x, oracle) in contexts.iter().zip(&oracles) {
                let step = policy.step(x, &self.env, &mut rng).and_then(|rec| {
                    if self.config.audit_invariants {
                        if let Some(state) = policy.state() {
                            state.check_invariants(x)?;
                        }
                    }
                    Ok(rec)
                });
                let rec = match step {
                    Ok(rec) => rec,
                    Err(error) => {
                        return Err(Failure {
                            snapshot: policy.state().map(|s| Box::new(s.snapshot())),
                            policy: Some(kind),
                            run: Some(run),
                            error,
                        })
                    }
                };
                increments.push(oracle.gap(&self.env.mean_reward(x, &rec.arm)?));
                records.push(rec);
            }
            let fairness = self
                .env
                .pareto_band(0.0)
                .map(|_| fairness_bins(&records, &self.env))
                .transpose()?;
            out.push(RunResult {
                policy: kind,
                run,
                regret: RegretSeries::from_increments(seed, increments),
                records,
                fairness,
            });
        }
        Ok(out)
    }

    /// Plays every policy for every run.
    pub fn simulate(&self) -> std::result::Result<ExperimentResults, Failure> {
        let mut runs = Vec::new();
        for run in 0..self.config.runs {
            runs.extend(self.run_one(run)?);
            log::debug!("run {run} done");
        }
        Ok(ExperimentResults { runs })
    }

    /// Output directory after the environment override.
    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.config.output_dir.clone())
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// A failed experiment, with the learner state when one existed.
#[derive(Debug)]
pub struct Failure {
    pub error: Error,
    pub policy: Option<PolicyKind>,
    pub run: Option<usize>,
    pub snapshot: Option<Box<crate::pcz::Snapshot>>,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure {
            error,
            policy: None,
            run: None,
            snapshot: None,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.policy, self.run) {
            (Some(p), Some(r)) => write!(f, "{p} run {r}: {}", self.error),
            _ => write!(f, "{}", self.error),
        }
    }
}

/// Simulates and writes every CSV. On an invariant violation the learner
/// snapshot is written to `failure_snapshot.json` before returning.
pub fn run_experiment(exp: &Experiment) -> std::result::Result<ExperimentResults, Failure> {
    let dir = exp.output_dir();
    let results = match exp.simulate() {
        Ok(r) => r,
        Err(failure) => {
            if let Some(snapshot) = &failure.snapshot {
                let path = dir.join("failure_snapshot.json");
                let json = serde_json::to_string_pretty(snapshot).expect("snapshot serializes");
                if fs::create_dir_all(&dir).and_then(|_| fs::write(&path, json)).is_ok() {
                    log::error!("state snapshot written to {}", path.display());
                }
            }
            return Err(failure);
        }
    };
    write_outputs(exp, &results, &dir)?;
    Ok(results)
}

pub fn write_outputs(exp: &Experiment, results: &ExperimentResults, dir: &Path) -> Result<()> {
    let runs_dir = dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    for r in &results.runs {
        let path = runs_dir.join(format!("{}_run{:03}.csv", r.policy, r.run));
        write_file(&path, &trace_csv(r))?;
    }
    let summaries: Vec<(PolicyKind, RegretSummary)> = exp
        .config
        .policies
        .iter()
        .filter_map(|&p| results.summary(p).map(|s| (p, s)))
        .collect();
    write_file(&dir.join("aggregate.csv"), &aggregate_csv(&summaries))?;
    if exp.env.pareto_band(0.0).is_some() {
        let rows: Vec<(PolicyKind, FairnessReport)> = exp
            .config
            .policies
            .iter()
            .filter_map(|&p| results.pooled_fairness(p).map(|f| (p, f)))
            .collect();
        write_file(&dir.join("fairness.csv"), &fairness_csv(&rows))?;
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn join_coords(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn trace_csv(r: &RunResult) -> String {
    let mut s = String::new();
    writeln!(s, "{TRACE_SCHEMA}").unwrap();
    writeln!(s, "t,x,y,ball_id,delta,cumulative_regret,child_created,front_size").unwrap();
    for (i, rec) in r.records.iter().enumerate() {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            rec.t,
            join_coords(&rec.context),
            join_coords(&rec.arm),
            opt(rec.ball_id),
            r.regret.increments[i],
            r.regret.cumulative[i],
            opt(rec.child_created),
            opt(rec.front_size)
        )
        .unwrap();
    }
    s
}

pub fn aggregate_csv(summaries: &[(PolicyKind, RegretSummary)]) -> String {
    let mut s = String::new();
    writeln!(s, "{AGGREGATE_SCHEMA}").unwrap();
    let mut header = String::from("t");
    for (p, _) in summaries {
        write!(header, ",{p}_mean,{p}_se").unwrap();
    }
    writeln!(s, "{header}").unwrap();
    let len = summaries.first().map_or(0, |(_, x)| x.mean.len());
    for t in 0..len {
        write!(s, "{}", t + 1).unwrap();
        for (_, x) in summaries {
            write!(s, ",{},{}", x.mean[t], x.std_err[t]).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn fairness_csv(rows: &[(PolicyKind, FairnessReport)]) -> String {
    let mut s = String::new();
    writeln!(s, "{FAIRNESS_SCHEMA}").unwrap();
    let bins: Vec<String> = (1..=FAIRNESS_BINS).map(|b| format!("bin{b}")).collect();
    writeln!(s, "policy,{},pareto_selections", bins.join(",")).unwrap();
    for (p, f) in rows {
        let ratios: Vec<String> = f.ratios.iter().map(f64::to_string).collect();
        writeln!(s, "{p},{},{}", ratios.join(","), f.pareto_selections).unwrap();
    }
    s
}

/// Grid means, front membership and gaps for `contexts` evenly spaced
/// contexts, one row per context-arm pair.
pub fn oracle_csv(exp: &Experiment, contexts: usize) -> Result<String> {
    let grid = ArmGrid::new(exp.oracle_grid_size, exp.env.arm_dim())?;
    let objectives = exp.env.objectives();
    let mut s = String::new();
    writeln!(s, "{ORACLE_SCHEMA}").unwrap();
    let mus: Vec<String> = (1..=objectives).map(|i| format!("mu{i}")).collect();
    writeln!(s, "x,y,{},on_front,psg", mus.join(",")).unwrap();
    let contexts = contexts.max(2);
    for i in 0..contexts {
        let x = if i + 1 == contexts {
            1.0
        } else {
            i as f64 / (contexts - 1) as f64
        };
        let oracle = ContextOracle::new(&exp.env, &[x], &grid)?;
        for (k, y) in grid.iter().enumerate() {
            let mu: Vec<String> = oracle.means()[k].iter().map(f64::to_string).collect();
            writeln!(
                s,
                "{x},{},{},{},{}",
                join_coords(y),
                mu.join(","),
                u8::from(oracle.front().binary_search(&k).is_ok()),
                oracle.gap_of_arm(k)
            )
            .unwrap();
        }
    }
    Ok(s)
}
