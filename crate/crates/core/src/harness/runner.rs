//! Replication runner.

use serde::Serialize;

use super::config::{Algorithm, ExperimentConfig, Setting};
use super::HarnessError;
use crate::env::{CombEnv, Environment, KArmedEnv, LinearEnv};
use crate::gate::{Agent, ConservativeConfig, GenCb, LcbGatedUcb, MvConfig, MvCucb, Unconstrained};
use crate::metrics::{self, Envelope, RunRecord};
use crate::policy::{C2Ucb, LinUcb, MvUcb, Ucb};
use crate::rng;

/// How replications are scheduled. Results never depend on the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    /// Rayon pool with the given thread count (rayon's default when `None`).
    /// Runs serially when the `parallel` feature is off.
    #[default]
    Parallel,
    Threads(usize),
}

impl Execution {
    pub fn from_threads(threads: Option<usize>) -> Self {
        match threads {
            Some(1) => Execution::Serial,
            Some(n) => Execution::Threads(n),
            None => Execution::Parallel,
        }
    }
}

/// The environment a config describes.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvInstance {
    KArmed(KArmedEnv),
    Linear(LinearEnv),
    Comb(CombEnv),
}

impl EnvInstance {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let seed = cfg.master_seed;
        Ok(match cfg.setting {
            Setting::Cmab | Setting::Mvcbp => EnvInstance::KArmed(KArmedEnv::cmab_grid(
                cfg.num_arms(),
                cfg.mu0.unwrap_or_default(),
                cfg.mu_hi,
                cfg.mu_lo,
                seed,
            )?),
            Setting::Clb => EnvInstance::Linear(LinearEnv::generate(
                cfg.d.unwrap_or_default(),
                cfg.num_arms(),
                seed,
                cfg.mu0_fraction,
            )?),
            Setting::Cccb => EnvInstance::Comb(CombEnv::generate(
                cfg.d.unwrap_or_default(),
                cfg.num_arms(),
                cfg.cardinality,
                seed,
                cfg.mu0_fraction,
            )?),
        })
    }

    pub fn default_mean(&self) -> f64 {
        match self {
            EnvInstance::KArmed(e) => e.default_mean(),
            EnvInstance::Linear(e) => e.default_mean(),
            EnvInstance::Comb(e) => e.default_mean(),
        }
    }

    pub fn best_mean(&self) -> f64 {
        match self {
            EnvInstance::KArmed(e) => e.best_mean(),
            EnvInstance::Linear(e) => e.best_mean(),
            EnvInstance::Comb(e) => e.best_mean(),
        }
    }

    pub fn reward_cap(&self) -> f64 {
        match self {
            EnvInstance::KArmed(e) => e.reward_cap(),
            EnvInstance::Linear(e) => e.reward_cap(),
            EnvInstance::Comb(e) => e.reward_cap(),
        }
    }
}

fn drive<A: Agent>(mut agent: A, horizon: u64, run_seed: u64) -> Result<RunRecord, HarnessError> {
    let mut record = RunRecord::with_capacity(horizon as usize, run_seed);
    for _ in 0..horizon {
        let step = agent.step()?;
        record.push(step.action, step.reward);
    }
    Ok(record)
}

fn mv_config(cfg: &ExperimentConfig, env: &EnvInstance) -> Result<MvConfig, HarnessError> {
    // Validation has already enforced the precondition where it applies.
    Ok(MvConfig::new(
        cfg.alpha,
        env.default_mean(),
        cfg.rho.unwrap_or_default(),
        true,
    )?)
}

/// Simulates replication `run_index` of `cfg` on `env`.
pub fn simulate(cfg: &ExperimentConfig, env: &EnvInstance, run_index: usize) -> Result<RunRecord, HarnessError> {
    let run = rng::run_seed(cfg.master_seed, run_index as u64);
    let t = cfg.horizon;
    let alpha = cfg.alpha;
    match (env, cfg.algorithm) {
        (EnvInstance::KArmed(e), Algorithm::Gencb) => drive(GenCb::new(e, run, Ucb::new(e.num_arms()), alpha)?, t, run),
        (EnvInstance::KArmed(e), Algorithm::Base) => drive(Unconstrained::new(e, run, Ucb::new(e.num_arms())), t, run),
        (EnvInstance::KArmed(e), Algorithm::LcbGate) => drive(LcbGatedUcb::new(e, run, e.num_arms(), alpha)?, t, run),
        (EnvInstance::KArmed(e), Algorithm::Mvcucb) => drive(MvCucb::new(e, run, mv_config(cfg, env)?), t, run),
        (EnvInstance::KArmed(e), Algorithm::Mvucb) => {
            let rho = cfg.rho.unwrap_or_default();
            drive(Unconstrained::new(e, run, MvUcb::new(e.num_arms(), rho)), t, run)
        }
        (EnvInstance::Linear(e), Algorithm::Gencb | Algorithm::Base) => {
            let policy = LinUcb::new(e.arms().to_vec(), e.feature_bound(), e.param_bound())?;
            if cfg.algorithm == Algorithm::Gencb {
                drive(GenCb::new(e, run, policy, alpha)?, t, run)
            } else {
                drive(Unconstrained::new(e, run, policy), t, run)
            }
        }
        (EnvInstance::Comb(e), Algorithm::Gencb | Algorithm::Base) => {
            let policy = C2Ucb::new(e.base_arms().to_vec(), e.cardinality(), e.feature_bound(), e.param_bound())?;
            if cfg.algorithm == Algorithm::Gencb {
                drive(GenCb::new(e, run, policy, alpha)?, t, run)
            } else {
                drive(Unconstrained::new(e, run, policy), t, run)
            }
        }
        (_, algorithm) => Err(HarnessError::Config(format!(
            "algorithm {algorithm} is not available for setting {:?}",
            cfg.setting
        ))),
    }
}

/// Per-run metrics kept after the trace is dropped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub run: usize,
    pub run_seed: u64,
    /// Cumulative pseudo-regret per step. In the mean-variance setting this
    /// is the cumulative form `t · R̃ᴹⱽ_t`.
    pub regret: Vec<f64>,
    /// `N₀` after each step.
    pub default_pulls: Vec<u64>,
    pub first_violation: Option<u64>,
    /// Largest shortfall below the constraint floor over the run (0 if none).
    pub max_deficit: f64,
}

impl RunOutcome {
    pub fn final_regret(&self) -> f64 {
        self.regret.last().copied().unwrap_or(0.0)
    }

    pub fn final_default_pulls(&self) -> u64 {
        self.default_pulls.last().copied().unwrap_or(0)
    }
}

/// Regret curve, audit verdict and deficit for one trace.
pub fn evaluate(cfg: &ExperimentConfig, env: &EnvInstance, run: usize, record: &RunRecord) -> Result<RunOutcome, HarnessError> {
    let (regret, first_violation, max_deficit) = match (cfg.setting, env) {
        (Setting::Mvcbp, EnvInstance::KArmed(e)) => {
            let mv = mv_config(cfg, env)?;
            let normalized = metrics::mv_pseudo_regret(record, e, mv.rho())?;
            let cumulative = normalized
                .iter()
                .enumerate()
                .map(|(i, r)| (i + 1) as f64 * r)
                .collect();
            (
                cumulative,
                metrics::audit_mv_constraint(record, &mv),
                metrics::mv_constraint_deficit(record, &mv),
            )
        }
        _ => {
            let cc = ConservativeConfig::new(cfg.alpha, env.default_mean(), env.reward_cap())?;
            let regret = match env {
                EnvInstance::KArmed(e) => metrics::pseudo_regret(record, e)?,
                EnvInstance::Linear(e) => metrics::pseudo_regret(record, e)?,
                EnvInstance::Comb(e) => metrics::pseudo_regret(record, e)?,
            };
            (
                regret,
                metrics::audit_constraint(record, &cc),
                metrics::constraint_deficit(record, &cc),
            )
        }
    };
    Ok(RunOutcome {
        run,
        run_seed: record.run_seed,
        regret,
        default_pulls: record.default_pull_curve(),
        first_violation,
        max_deficit,
    })
}

/// Every replication of one config, in run order.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub env: EnvInstance,
    pub runs: Vec<RunOutcome>,
    pub envelope: Envelope,
}

impl ExperimentResult {
    pub fn mean_final_regret(&self) -> f64 {
        mean(self.runs.iter().map(RunOutcome::final_regret))
    }

    pub fn mean_final_default_pulls(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.final_default_pulls() as f64))
    }

    /// Runs whose audit found a violation.
    pub fn violations(&self) -> usize {
        self.runs.iter().filter(|r| r.first_violation.is_some()).count()
    }

    pub fn max_deficit(&self) -> f64 {
        self.runs.iter().map(|r| r.max_deficit).fold(0.0, f64::max)
    }

    /// Whether the audit must come back clean for this experiment: not for
    /// negative controls, and not for a mean-variance run that overrode the
    /// precondition.
    pub fn audit_required(&self) -> bool {
        if self.config.algorithm.is_negative_control() {
            return false;
        }
        if self.config.setting == Setting::Mvcbp {
            return self.config.alpha * self.config.rho.unwrap_or_default() * self.env.default_mean()
                > crate::gate::EXPLORATION_RISK;
        }
        true
    }

    pub fn audits_pass(&self) -> bool {
        !self.audit_required() || self.violations() == 0
    }
}

fn mean<I: Iterator<Item = f64>>(values: I) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn run_one(cfg: &ExperimentConfig, env: &EnvInstance, run: usize) -> Result<RunOutcome, HarnessError> {
    let record = simulate(cfg, env, run)?;
    evaluate(cfg, env, run, &record)
}

fn map_runs(cfg: &ExperimentConfig, env: &EnvInstance, exec: Execution) -> Result<Vec<RunOutcome>, HarnessError> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let par = |cfg: &ExperimentConfig, env: &EnvInstance| {
            (0..cfg.runs)
                .into_par_iter()
                .map(|run| run_one(cfg, env, run))
                .collect::<Result<Vec<_>, _>>()
        };
        match exec {
            Execution::Serial => {}
            Execution::Parallel => return par(cfg, env),
            Execution::Threads(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
                return pool.install(|| par(cfg, env));
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = exec;

    (0..cfg.runs).map(|run| run_one(cfg, env, run)).collect()
}

/// Runs every replication of `cfg`, audits each trace and aggregates the
/// regret envelope. Output is identical for every [`Execution`].
pub fn run_experiment(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let env = EnvInstance::build(cfg)?;
    let runs = map_runs(cfg, &env, exec)?;
    let envelope = metrics::aggregate(&runs.iter().map(|r| r.regret.as_slice()).collect::<Vec<_>>())?;
    Ok(ExperimentResult {
        config: cfg.clone(),
        env,
        runs,
        envelope,
    })
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub algorithm: Algorithm,
    pub final_mean_regret: f64,
    pub mean_n0: f64,
    pub max_deficit: f64,
    pub violations: usize,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub results: Vec<ExperimentResult>,
    pub rows: Vec<ComparisonRow>,
    /// `Some(holds)` when both GenCB and the LCB gate were compared:
    /// whether GenCB's mean `N₀(T)` is no larger.
    pub dominance: Option<bool>,
}

impl Comparison {
    pub fn passes(&self) -> bool {
        self.dominance.unwrap_or(true) && self.results.iter().all(ExperimentResult::audits_pass)
    }
}

/// Runs several algorithms on one environment with common random numbers.
pub fn compare(cfgs: &[ExperimentConfig], exec: Execution) -> Result<Comparison, HarnessError> {
    let first = cfgs
        .first()
        .ok_or_else(|| HarnessError::Config("compare needs at least one config".into()))?;
    let key = first.environment_key();
    if let Some(bad) = cfgs.iter().position(|c| c.environment_key() != key) {
        return Err(HarnessError::MismatchedEnvironments(bad));
    }

    let results = cfgs
        .iter()
        .map(|c| run_experiment(c, exec))
        .collect::<Result<Vec<_>, _>>()?;

    let labels = unique_labels(cfgs);
    let rows: Vec<ComparisonRow> = results
        .iter()
        .zip(labels)
        .map(|(r, label)| ComparisonRow {
            label,
            algorithm: r.config.algorithm,
            final_mean_regret: r.mean_final_regret(),
            mean_n0: r.mean_final_default_pulls(),
            max_deficit: r.max_deficit(),
            violations: r.violations(),
        })
        .collect();

    let n0_of = |alg: Algorithm| rows.iter().find(|r| r.algorithm == alg).map(|r| r.mean_n0);
    let dominance = match (n0_of(Algorithm::Gencb), n0_of(Algorithm::LcbGate)) {
        (Some(gencb), Some(lcb)) if first.setting == Setting::Cmab => Some(gencb <= lcb),
        _ => None,
    };

    Ok(Comparison {
        results,
        rows,
        dominance,
    })
}

/// Algorithm names, suffixed with `_2`, `_3`, ... when repeated.
pub fn unique_labels(cfgs: &[ExperimentConfig]) -> Vec<String> {
    let mut seen = std::collections::HashMap::<&str, usize>::new();
    cfgs.iter()
        .map(|c| {
            let n = seen.entry(c.algorithm.name()).or_insert(0);
            *n += 1;
            if *n == 1 {
                c.algorithm.name().to_string()
            } else {
                format!("{}_{}", c.algorithm.name(), n)
            }
        })
        .collect()
}
