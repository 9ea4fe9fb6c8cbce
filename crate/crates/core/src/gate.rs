//! Conservative wrappers around a base policy.
//!
//! [`GenCb`] plays a regular arm only when the realized budget can absorb a
//! worst-case zero reward, so the sample-path constraint
//! `Σ_{s≤t} r_s ≥ (1−α) μ₀ t` holds with certainty. [`LcbGatedUcb`] is the
//! comparison baseline that checks the same inequality with lower
//! confidence bounds in place of realized rewards. [`MvCucb`] does the same
//! for the trajectory's empirical mean-variance, reserving a per-pull
//! exploration-risk slack of 2.
//!
//! All clocks here count completed steps (0-based); the step about to be
//! taken is `t + 1`.

use thiserror::Error;

use crate::env::{Action, EnvError, Environment, KArmedEnv};
use crate::policy::{ArmStats, BasePolicy, MvUcb, PolicyError, Ucb};

/// Per-pull bound on the drop of `t · MV̂_t` for rewards in `[0, 1]`.
pub const EXPLORATION_RISK: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error("alpha must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("default mean mu0 must be positive, got {0}")]
    DefaultMean(f64),
    #[error("reward cap must be positive, got {0}")]
    RewardCap(f64),
    #[error("rho must be positive, got {0}")]
    Rho(f64),
    #[error("alpha * rho * mu0 = {0} must exceed 2 for the mean-variance guarantee (pass unsafe_mv to override)")]
    MvPrecondition(f64),
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservativeConfig {
    alpha: f64,
    mu0: f64,
    reward_cap: f64,
}

impl ConservativeConfig {
    pub fn new(alpha: f64, mu0: f64, reward_cap: f64) -> Result<Self, GateError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(GateError::Alpha(alpha));
        }
        if !(mu0 > 0.0 && mu0.is_finite()) {
            return Err(GateError::DefaultMean(mu0));
        }
        if !(reward_cap > 0.0 && reward_cap.is_finite()) {
            return Err(GateError::RewardCap(reward_cap));
        }
        Ok(Self {
            alpha,
            mu0,
            reward_cap,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn reward_cap(&self) -> f64 {
        self.reward_cap
    }

    /// `(1 − α) μ₀ t`, the reward floor after `t` steps.
    pub fn floor(&self, t: u64) -> f64 {
        (1.0 - self.alpha) * self.mu0 * t as f64
    }
}

/// Budget bookkeeping for the realized-reward gate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BudgetLedger {
    /// Cumulative reward from regular pulls.
    pub r_s: f64,
    /// Default-arm pulls.
    pub n0: u64,
    /// Regular pulls.
    pub m: u64,
    /// Completed steps, always `n0 + m`.
    pub t: u64,
}

impl BudgetLedger {
    pub fn record_regular(&mut self, reward: f64) {
        self.r_s += reward;
        self.m += 1;
        self.t += 1;
    }

    pub fn record_default(&mut self) {
        self.n0 += 1;
        self.t += 1;
    }

    /// Realized cumulative reward `r_S + N₀ μ₀`.
    pub fn total_reward(&self, mu0: f64) -> f64 {
        self.r_s + self.n0 as f64 * mu0
    }

    /// `total_reward − (1 − α) μ₀ t`; nonnegative while the constraint holds.
    pub fn slack(&self, cfg: &ConservativeConfig) -> f64 {
        self.total_reward(cfg.mu0) - cfg.floor(self.t)
    }
}

/// `r_S + N₀ μ₀ ≥ (1−α) μ₀ (t+1)`: a regular pull returning zero would still
/// leave the constraint satisfied at the next step.
pub fn gencb_gate(ledger: &BudgetLedger, cfg: &ConservativeConfig) -> bool {
    ledger.total_reward(cfg.mu0) >= cfg.floor(ledger.t + 1)
}

/// Lower-confidence-bound credit `Σ_i N_i max(0, μ̂_i − √(2 ln t / N_i))`.
pub fn lcb_credit(stats: &[ArmStats], t: u64) -> f64 {
    let log_t = (t.max(1) as f64).ln();
    stats
        .iter()
        .filter_map(|s| {
            let mu = s.mean()?;
            let n = s.count as f64;
            Some(n * (mu - (2.0 * log_t / n).sqrt()).max(0.0))
        })
        .sum()
}

/// The baseline gate: like [`gencb_gate`] but credits regular pulls with
/// their lower confidence bounds instead of realized rewards.
pub fn lcb_gate(stats: &[ArmStats], ledger: &BudgetLedger, cfg: &ConservativeConfig) -> bool {
    lcb_credit(stats, ledger.t) + ledger.n0 as f64 * cfg.mu0 >= cfg.floor(ledger.t + 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvConfig {
    alpha: f64,
    mu0: f64,
    rho: f64,
}

impl MvConfig {
    /// Rejects `α ρ μ₀ ≤ 2` unless `allow_unsafe` is set.
    pub fn new(alpha: f64, mu0: f64, rho: f64, allow_unsafe: bool) -> Result<Self, GateError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(GateError::Alpha(alpha));
        }
        if !(mu0 > 0.0 && mu0.is_finite()) {
            return Err(GateError::DefaultMean(mu0));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(GateError::Rho(rho));
        }
        let margin = alpha * rho * mu0;
        if margin <= EXPLORATION_RISK && !allow_unsafe {
            return Err(GateError::MvPrecondition(margin));
        }
        Ok(Self { alpha, mu0, rho })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `MV₀ = ρ μ₀`.
    pub fn mv0(&self) -> f64 {
        self.rho * self.mu0
    }

    /// Whether `α MV₀ > 2`, i.e. the hard guarantee applies.
    pub fn guaranteed(&self) -> bool {
        self.alpha * self.mv0() > EXPLORATION_RISK
    }
}

/// Trajectory statistics for `MV̂_t = ρ μ̂_t − σ̂_t²`.
///
/// Mean and squared deviations are accumulated with Welford's update, which
/// keeps a constant stream at exactly zero variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MvLedger {
    mean: f64,
    sq_dev: f64,
    pub n0: u64,
    pub m: u64,
    pub t: u64,
}

impl MvLedger {
    fn push(&mut self, reward: f64) {
        self.t += 1;
        let delta = reward - self.mean;
        self.mean += delta / self.t as f64;
        self.sq_dev += delta * (reward - self.mean);
    }

    pub fn record_regular(&mut self, reward: f64) {
        self.m += 1;
        self.push(reward);
    }

    pub fn record_default(&mut self, mu0: f64) {
        self.n0 += 1;
        self.push(mu0);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance of the rewards so far.
    pub fn variance(&self) -> f64 {
        if self.t == 0 {
            0.0
        } else {
            (self.sq_dev / self.t as f64).max(0.0)
        }
    }

    /// `MV̂_t`, defined as 0 before the first step.
    pub fn empirical_mv(&self, rho: f64) -> f64 {
        if self.t == 0 {
            0.0
        } else {
            rho * self.mean - self.variance()
        }
    }
}

/// `t · MV̂_t − 2 ≥ (1−α) MV₀ (t+1)`.
pub fn mvcucb_gate(ledger: &MvLedger, cfg: &MvConfig) -> bool {
    let t = ledger.t as f64;
    t * ledger.empirical_mv(cfg.rho) - EXPLORATION_RISK
        >= (1.0 - cfg.alpha) * cfg.mv0() * (t + 1.0)
}

/// One completed step of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub action: Action,
    pub reward: f64,
}

/// Anything that can be stepped through a run.
pub trait Agent {
    fn step(&mut self) -> Result<Step, StepError>;

    /// Default pulls so far.
    fn default_pulls(&self) -> u64;
}

/// Plays the base policy, sampling `env` and feeding back the outcome.
fn play_regular<E, P>(env: &E, run: u64, t: u64, policy: &mut P) -> Result<(Action, f64), StepError>
where
    E: Environment,
    P: BasePolicy<Choice = E::Choice>,
{
    let choice = policy.choose()?;
    let outcome = env.sample(run, t, &choice)?;
    policy.update(&choice, &outcome)?;
    Ok((E::to_action(choice), outcome.reward))
}

/// The realized-reward budget gate wrapped around any base policy.
#[derive(Debug, Clone)]
pub struct GenCb<'e, E, P> {
    env: &'e E,
    run: u64,
    policy: P,
    ledger: BudgetLedger,
    cfg: ConservativeConfig,
}

impl<'e, E, P> GenCb<'e, E, P>
where
    E: Environment,
    P: BasePolicy<Choice = E::Choice>,
{
    pub fn new(env: &'e E, run: u64, policy: P, alpha: f64) -> Result<Self, GateError> {
        let cfg = ConservativeConfig::new(alpha, env.default_mean(), env.reward_cap())?;
        Ok(Self {
            env,
            run,
            policy,
            ledger: BudgetLedger::default(),
            cfg,
        })
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    pub fn config(&self) -> &ConservativeConfig {
        &self.cfg
    }

    pub fn policy(&self) -> &P {
        &self.policy
    }
}

impl<E, P> Agent for GenCb<'_, E, P>
where
    E: Environment,
    P: BasePolicy<Choice = E::Choice>,
{
    fn step(&mut self) -> Result<Step, StepError> {
        if gencb_gate(&self.ledger, &self.cfg) {
            let t = self.ledger.t + 1;
            let (action, reward) = play_regular(self.env, self.run, t, &mut self.policy)?;
            self.ledger.record_regular(reward);
            Ok(Step { action, reward })
        } else {
            let reward = self.env.sample_default();
            self.ledger.record_default();
            Ok(Step {
                action: Action::Default,
                reward,
            })
        }
    }

    fn default_pulls(&self) -> u64 {
        self.ledger.n0
    }
}

/// UCB gated by lower confidence bounds.
#[derive(Debug, Clone)]
pub struct LcbGatedUcb<'e, E> {
    env: &'e E,
    run: u64,
    policy: Ucb,
    ledger: BudgetLedger,
    cfg: ConservativeConfig,
}

impl<'e, E> LcbGatedUcb<'e, E>
where
    E: Environment<Choice = usize>,
{
    pub fn new(env: &'e E, run: u64, num_arms: usize, alpha: f64) -> Result<Self, GateError> {
        let cfg = ConservativeConfig::new(alpha, env.default_mean(), env.reward_cap())?;
        Ok(Self {
            env,
            run,
            policy: Ucb::new(num_arms),
            ledger: BudgetLedger::default(),
            cfg,
        })
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }
}

impl<E> Agent for LcbGatedUcb<'_, E>
where
    E: Environment<Choice = usize>,
{
    fn step(&mut self) -> Result<Step, StepError> {
        if lcb_gate(self.policy.stats(), &self.ledger, &self.cfg) {
            let t = self.ledger.t + 1;
            let (action, reward) = play_regular(self.env, self.run, t, &mut self.policy)?;
            self.ledger.record_regular(reward);
            Ok(Step { action, reward })
        } else {
            let reward = self.env.sample_default();
            self.ledger.record_default();
            Ok(Step {
                action: Action::Default,
                reward,
            })
        }
    }

    fn default_pulls(&self) -> u64 {
        self.ledger.n0
    }
}

/// The base policy with no gate at all; the negative control.
#[derive(Debug, Clone)]
pub struct Unconstrained<'e, E, P> {
    env: &'e E,
    run: u64,
    policy: P,
    t: u64,
}

impl<'e, E, P> Unconstrained<'e, E, P>
where
    E: Environment,
    P: BasePolicy<Choice = E::Choice>,
{
    pub fn new(env: &'e E, run: u64, policy: P) -> Self {
        Self {
            env,
            run,
            policy,
            t: 0,
        }
    }
}

impl<E, P> Agent for Unconstrained<'_, E, P>
where
    E: Environment,
    P: BasePolicy<Choice = E::Choice>,
{
    fn step(&mut self) -> Result<Step, StepError> {
        self.t += 1;
        let (action, reward) = play_regular(self.env, self.run, self.t, &mut self.policy)?;
        Ok(Step { action, reward })
    }

    fn default_pulls(&self) -> u64 {
        0
    }
}

/// MV-UCB behind the mean-variance budget gate.
#[derive(Debug, Clone)]
pub struct MvCucb<'e> {
    env: &'e KArmedEnv,
    run: u64,
    policy: MvUcb,
    ledger: MvLedger,
    cfg: MvConfig,
}

impl<'e> MvCucb<'e> {
    pub fn new(env: &'e KArmedEnv, run: u64, cfg: MvConfig) -> Self {
        Self {
            env,
            run,
            policy: MvUcb::new(env.num_arms(), cfg.rho()),
            ledger: MvLedger::default(),
            cfg,
        }
    }

    pub fn ledger(&self) -> &MvLedger {
        &self.ledger
    }

    pub fn policy(&self) -> &MvUcb {
        &self.policy
    }
}

impl Agent for MvCucb<'_> {
    fn step(&mut self) -> Result<Step, StepError> {
        if mvcucb_gate(&self.ledger, &self.cfg) {
            let t = self.ledger.t + 1;
            let (action, reward) = play_regular(self.env, self.run, t, &mut self.policy)?;
            self.ledger.record_regular(reward);
            Ok(Step { action, reward })
        } else {
            let reward = self.env.sample_default();
            self.ledger.record_default(reward);
            Ok(Step {
                action: Action::Default,
                reward,
            })
        }
    }

    fn default_pulls(&self) -> u64 {
        self.ledger.n0
    }
}
