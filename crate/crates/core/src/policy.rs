//! Non-conservative base policies: UCB, LinUCB, C2UCB and MV-UCB.
//!
//! Each policy owns its clock `m`, the number of regular pulls it has made.
//! `choose` advances the clock before selecting, so a conservative wrapper
//! that routes some steps to the default arm never advances it on those
//! steps. Ties are always broken towards the lowest index.

use thiserror::Error;

use crate::env::SampleOutcome;
use crate::linalg::{LinalgError, RidgeState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("semi-bandit feedback missing or misaligned with the played super arm")]
    MissingFeedback,
    #[error("arm index {index} out of range for {arms} arms")]
    UnknownArm { index: usize, arms: usize },
    #[error("invalid policy parameter: {0}")]
    Invalid(String),
}

/// Number of regular pulls made so far.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct PolicyClock(u64);

impl PolicyClock {
    pub fn m(self) -> u64 {
        self.0
    }

    pub fn tick(&mut self) -> u64 {
        self.0 += 1;
        self.0
    }
}

/// Per-arm sufficient statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ArmStats {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl ArmStats {
    pub fn push(&mut self, reward: f64) {
        self.count += 1;
        self.sum += reward;
        self.sum_sq += reward * reward;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }

    /// Population variance `E[z²] − μ̂²`, clamped at zero.
    pub fn variance(&self) -> Option<f64> {
        self.mean().map(|mu| {
            let v = self.sum_sq / self.count as f64 - mu * mu;
            v.max(0.0)
        })
    }
}

/// Per-arm statistics plus the risk weight `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MvStats {
    pub arms: Vec<ArmStats>,
    pub rho: f64,
}

impl MvStats {
    pub fn new(num_arms: usize, rho: f64) -> Self {
        Self {
            arms: vec![ArmStats::default(); num_arms],
            rho,
        }
    }

    /// `ρ μ̂_i − σ̂_i²`, or `None` for an unpulled arm.
    pub fn empirical_mv(&self, arm: usize) -> Option<f64> {
        let s = &self.arms[arm];
        Some(self.rho * s.mean()? - s.variance()?)
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax_first<I: IntoIterator<Item = f64>>(values: I) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// UCB index `μ̂ + √(2 ln m / N)`; `+∞` for an unpulled arm.
pub fn ucb_index(stats: &ArmStats, m: u64) -> f64 {
    match stats.mean() {
        None => f64::INFINITY,
        Some(mu) => mu + (2.0 * (m as f64).ln() / stats.count as f64).sqrt(),
    }
}

pub fn ucb_choose(stats: &[ArmStats], clock: PolicyClock) -> usize {
    argmax_first(stats.iter().map(|s| ucb_index(s, clock.m())))
}

/// Confidence radius `√(d ln(2m²(1 + m·scale·L²/λ))) + √λ S`.
///
/// `scale` is 1 for LinUCB and K for C2UCB.
fn ellipsoid_radius(ridge: &RidgeState, m: u64, scale: f64) -> f64 {
    let d = ridge.dim() as f64;
    let m = m as f64;
    let l2 = ridge.feature_bound() * ridge.feature_bound();
    let inner = 2.0 * m * m * (1.0 + m * scale * l2 / ridge.lambda());
    (d * inner.ln()).sqrt() + ridge.lambda().sqrt() * ridge.param_bound()
}

pub fn linucb_radius(ridge: &RidgeState, m: u64) -> f64 {
    ellipsoid_radius(ridge, m, 1.0)
}

pub fn c2ucb_radius(ridge: &RidgeState, m: u64, num_base_arms: usize) -> f64 {
    ellipsoid_radius(ridge, m, num_base_arms as f64)
}

/// Optimistic value `xᵀθ̂ + β‖x‖_{V⁻¹}` of every arm.
fn optimistic_values(
    ridge: &RidgeState,
    arms: &[Vec<f64>],
    radius: f64,
) -> Result<Vec<f64>, PolicyError> {
    arms.iter()
        .map(|x| Ok(ridge.predict(x)? + radius * ridge.mahalanobis_inverse_norm(x)?))
        .collect()
}

/// `argmax_x xᵀθ̂ + β_m ‖x‖_{V⁻¹}`, the maximizer of `xᵀθ` over arms and the
/// confidence ellipsoid.
pub fn linucb_choose(
    ridge: &RidgeState,
    arms: &[Vec<f64>],
    clock: PolicyClock,
) -> Result<usize, PolicyError> {
    let radius = linucb_radius(ridge, clock.m());
    Ok(argmax_first(optimistic_values(ridge, arms, radius)?))
}

/// Upper confidence weights `w̄_e` for every base arm.
pub fn c2ucb_weights(
    ridge: &RidgeState,
    base_arms: &[Vec<f64>],
    clock: PolicyClock,
) -> Result<Vec<f64>, PolicyError> {
    let radius = c2ucb_radius(ridge, clock.m(), base_arms.len());
    optimistic_values(ridge, base_arms, radius)
}

/// Exact oracle for `f(A, w) = Σ_{e∈A} w_e`: the `k` largest weights,
/// lowest index first among ties. Returned in ascending index order.
pub fn top_k(weights: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = order.into_iter().take(k).collect();
    chosen.sort_unstable();
    chosen
}

pub fn c2ucb_choose(
    ridge: &RidgeState,
    base_arms: &[Vec<f64>],
    cardinality: usize,
    clock: PolicyClock,
) -> Result<Vec<usize>, PolicyError> {
    let w = c2ucb_weights(ridge, base_arms, clock)?;
    Ok(top_k(&w, cardinality))
}

/// MV index `MV̂_i + (5 + ρ)√(ln(12 K m³) / (2 N_i))`; `+∞` when unpulled.
pub fn mvucb_index(stats: &MvStats, arm: usize, m: u64) -> f64 {
    match stats.empirical_mv(arm) {
        None => f64::INFINITY,
        Some(mv) => {
            let k = stats.arms.len() as f64;
            let m = m as f64;
            let n = stats.arms[arm].count as f64;
            mv + (5.0 + stats.rho) * ((12.0 * k * m * m * m).ln() / (2.0 * n)).sqrt()
        }
    }
}

pub fn mvucb_choose(stats: &MvStats, clock: PolicyClock) -> usize {
    argmax_first((0..stats.arms.len()).map(|i| mvucb_index(stats, i, clock.m())))
}

/// A standard bandit algorithm that a conservative gate can wrap.
pub trait BasePolicy {
    type Choice: Clone;

    fn clock(&self) -> PolicyClock;

    /// Advances the clock by one and picks a regular action.
    fn choose(&mut self) -> Result<Self::Choice, PolicyError>;

    /// Feeds back the outcome of the last chosen action.
    fn update(&mut self, choice: &Self::Choice, outcome: &SampleOutcome) -> Result<(), PolicyError>;
}

#[derive(Debug, Clone)]
pub struct Ucb {
    stats: Vec<ArmStats>,
    clock: PolicyClock,
}

impl Ucb {
    pub fn new(num_arms: usize) -> Self {
        Self {
            stats: vec![ArmStats::default(); num_arms],
            clock: PolicyClock::default(),
        }
    }

    pub fn stats(&self) -> &[ArmStats] {
        &self.stats
    }
}

impl BasePolicy for Ucb {
    type Choice = usize;

    fn clock(&self) -> PolicyClock {
        self.clock
    }

    fn choose(&mut self) -> Result<usize, PolicyError> {
        self.clock.tick();
        Ok(ucb_choose(&self.stats, self.clock))
    }

    fn update(&mut self, &arm: &usize, outcome: &SampleOutcome) -> Result<(), PolicyError> {
        let arms = self.stats.len();
        self.stats
            .get_mut(arm)
            .ok_or(PolicyError::UnknownArm { index: arm, arms })?
            .push(outcome.reward);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LinUcb {
    ridge: RidgeState,
    arms: Vec<Vec<f64>>,
    clock: PolicyClock,
}

impl LinUcb {
    /// Uses `λ = max(1, L²)`.
    pub fn new(arms: Vec<Vec<f64>>, feature_bound: f64, param_bound: f64) -> Result<Self, PolicyError> {
        let dim = arms.first().map_or(0, Vec::len);
        let lambda = f64::max(1.0, feature_bound * feature_bound);
        Ok(Self {
            ridge: RidgeState::new(dim, lambda, feature_bound, param_bound)?,
            arms,
            clock: PolicyClock::default(),
        })
    }

    pub fn ridge(&self) -> &RidgeState {
        &self.ridge
    }
}

impl BasePolicy for LinUcb {
    type Choice = usize;

    fn clock(&self) -> PolicyClock {
        self.clock
    }

    fn choose(&mut self) -> Result<usize, PolicyError> {
        self.clock.tick();
        linucb_choose(&self.ridge, &self.arms, self.clock)
    }

    fn update(&mut self, &arm: &usize, outcome: &SampleOutcome) -> Result<(), PolicyError> {
        let x = self.arms.get(arm).ok_or(PolicyError::UnknownArm {
            index: arm,
            arms: self.arms.len(),
        })?;
        self.ridge.update(x, outcome.reward)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct C2Ucb {
    ridge: RidgeState,
    base_arms: Vec<Vec<f64>>,
    cardinality: usize,
    clock: PolicyClock,
}

impl C2Ucb {
    /// Uses `λ = max(1, L²)`.
    pub fn new(
        base_arms: Vec<Vec<f64>>,
        cardinality: usize,
        feature_bound: f64,
        param_bound: f64,
    ) -> Result<Self, PolicyError> {
        if cardinality == 0 || cardinality > base_arms.len() {
            return Err(PolicyError::Invalid(format!(
                "cardinality {cardinality} must be in 1..={}",
                base_arms.len()
            )));
        }
        let dim = base_arms.first().map_or(0, Vec::len);
        let lambda = f64::max(1.0, feature_bound * feature_bound);
        Ok(Self {
            ridge: RidgeState::new(dim, lambda, feature_bound, param_bound)?,
            base_arms,
            cardinality,
            clock: PolicyClock::default(),
        })
    }

    pub fn ridge(&self) -> &RidgeState {
        &self.ridge
    }
}

impl BasePolicy for C2Ucb {
    type Choice = Vec<usize>;

    fn clock(&self) -> PolicyClock {
        self.clock
    }

    fn choose(&mut self) -> Result<Vec<usize>, PolicyError> {
        self.clock.tick();
        c2ucb_choose(&self.ridge, &self.base_arms, self.cardinality, self.clock)
    }

    /// One ridge update per observed base arm.
    fn update(&mut self, set: &Vec<usize>, outcome: &SampleOutcome) -> Result<(), PolicyError> {
        let feedback = outcome
            .per_base_rewards
            .as_ref()
            .filter(|w| w.len() == set.len())
            .ok_or(PolicyError::MissingFeedback)?;
        for (&e, &w) in set.iter().zip(feedback) {
            let x = self.base_arms.get(e).ok_or(PolicyError::UnknownArm {
                index: e,
                arms: self.base_arms.len(),
            })?;
            self.ridge.update(x, w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MvUcb {
    stats: MvStats,
    clock: PolicyClock,
}

impl MvUcb {
    pub fn new(num_arms: usize, rho: f64) -> Self {
        Self {
            stats: MvStats::new(num_arms, rho),
            clock: PolicyClock::default(),
        }
    }

    pub fn stats(&self) -> &MvStats {
        &self.stats
    }
}

impl BasePolicy for MvUcb {
    type Choice = usize;

    fn clock(&self) -> PolicyClock {
        self.clock
    }

    fn choose(&mut self) -> Result<usize, PolicyError> {
        self.clock.tick();
        Ok(mvucb_choose(&self.stats, self.clock))
    }

    fn update(&mut self, &arm: &usize, outcome: &SampleOutcome) -> Result<(), PolicyError> {
        let arms = self.stats.arms.len();
        self.stats
            .arms
            .get_mut(arm)
            .ok_or(PolicyError::UnknownArm { index: arm, arms })?
            .push(outcome.reward);
        Ok(())
    }
}
