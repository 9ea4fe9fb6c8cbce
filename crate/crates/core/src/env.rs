//! Seeded Bernoulli environments for the four problem families.
//!
//! Rewards are a pure function of `(env seed, run seed, t, arm)` so
//! replications are independent and any single step can be regenerated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::dot;
use crate::rng::{self, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("arm index {index} out of range for {arms} arms")]
    UnknownArm { index: usize, arms: usize },
    #[error("super arm must contain {expected} distinct base arms, got {got:?}")]
    InvalidSuperArm { expected: usize, got: Vec<usize> },
    #[error("action {0} does not belong to this environment")]
    WrongActionKind(String),
    #[error("invalid environment: {0}")]
    Invalid(String),
}

/// What was played at one step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    /// The default arm `x₀` with known constant reward `μ₀`.
    Default,
    /// A single regular arm (0-based).
    Arm(usize),
    /// A super arm: sorted base-arm indices (0-based).
    Super(Vec<usize>),
}

impl Action {
    pub fn is_default(&self) -> bool {
        matches!(self, Action::Default)
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Action::Default => f.write_str("default"),
            Action::Arm(i) => write!(f, "{i}"),
            Action::Super(set) => {
                for (k, e) in set.iter().enumerate() {
                    if k > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{e}")?;
                }
                // A trailing separator keeps singleton super arms distinct from `Arm`.
                if set.len() == 1 {
                    f.write_str(";")?;
                }
                Ok(())
            }
        }
    }
}

impl std::str::FromStr for Action {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || EnvError::WrongActionKind(s.to_string());
        if s == "default" {
            return Ok(Action::Default);
        }
        if s.contains(';') {
            let set = s
                .split(';')
                .filter(|p| !p.trim().is_empty())
                .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(Action::Super(set));
        }
        s.parse::<usize>().map(Action::Arm).map_err(|_| bad())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub reward: f64,
    /// Semi-bandit feedback, aligned with the played super arm.
    pub per_base_rewards: Option<Vec<f64>>,
}

/// Ground truth shared by every setting.
pub trait Environment: Sync {
    /// What a base policy hands back to be played.
    type Choice;

    /// Realized reward of a regular choice at 1-based step `t` of run `run`.
    fn sample(&self, run: u64, t: u64, choice: &Self::Choice) -> Result<SampleOutcome, EnvError>;

    fn to_action(choice: Self::Choice) -> Action;

    /// True expected reward of any action, `μ₀` for the default arm.
    fn mean_of(&self, action: &Action) -> Result<f64, EnvError>;

    /// `μ_{x*}`, the best regular mean.
    fn best_mean(&self) -> f64;

    fn default_mean(&self) -> f64;

    /// Upper bound on a single regular reward.
    fn reward_cap(&self) -> f64;

    /// Known constant reward of the default arm.
    fn sample_default(&self) -> f64 {
        self.default_mean()
    }
}

/// K-armed Bernoulli bandit (CMAB and the mean-variance setting).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KArmedEnv {
    means: Vec<f64>,
    default_mean: f64,
    seed: u64,
}

impl KArmedEnv {
    pub fn new(means: Vec<f64>, default_mean: f64, seed: u64) -> Result<Self, EnvError> {
        if means.is_empty() {
            return Err(EnvError::Invalid("at least one regular arm is required".into()));
        }
        if let Some(m) = means.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return Err(EnvError::Invalid(format!("arm mean {m} outside [0, 1]")));
        }
        let best = max_of(&means);
        if !(default_mean > 0.0 && default_mean < best) {
            return Err(EnvError::Invalid(format!(
                "default mean must satisfy 0 < mu0 < max mean ({best}), got {default_mean}"
            )));
        }
        Ok(Self {
            means,
            default_mean,
            seed,
        })
    }

    /// Means on an arithmetic grid from `mu_hi` down to `mu_lo`.
    pub fn cmab_grid(
        arms: usize,
        mu0: f64,
        mu_hi: f64,
        mu_lo: f64,
        seed: u64,
    ) -> Result<Self, EnvError> {
        if arms < 2 {
            return Err(EnvError::Invalid(format!("K >= 2 required, got {arms}")));
        }
        if !(0.0 < mu_lo && mu_lo < mu_hi && mu_hi <= 1.0) {
            return Err(EnvError::Invalid(format!(
                "0 < mu_lo < mu_hi <= 1 required, got mu_lo={mu_lo}, mu_hi={mu_hi}"
            )));
        }
        if mu0 >= mu_hi {
            return Err(EnvError::Invalid(format!(
                "mu0={mu0} >= mu_hi={mu_hi}: the default arm would be optimal"
            )));
        }
        let span = (arms - 1) as f64;
        let means = (0..arms)
            .map(|i| (mu_hi * (span - i as f64) + mu_lo * i as f64) / span)
            .collect();
        Self::new(means, mu0, seed)
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Bernoulli variance `μ(1 − μ)` of regular arm `arm`.
    pub fn variance(&self, arm: usize) -> f64 {
        let m = self.means[arm];
        m * (1.0 - m)
    }

    fn check_arm(&self, arm: usize) -> Result<(), EnvError> {
        if arm >= self.means.len() {
            return Err(EnvError::UnknownArm {
                index: arm,
                arms: self.means.len(),
            });
        }
        Ok(())
    }
}

impl Environment for KArmedEnv {
    type Choice = usize;

    fn sample(&self, run: u64, t: u64, &arm: &usize) -> Result<SampleOutcome, EnvError> {
        self.check_arm(arm)?;
        Ok(SampleOutcome {
            reward: rng::bernoulli(self.means[arm], self.seed, run, t, arm as u64),
            per_base_rewards: None,
        })
    }

    fn to_action(choice: usize) -> Action {
        Action::Arm(choice)
    }

    fn mean_of(&self, action: &Action) -> Result<f64, EnvError> {
        match action {
            Action::Default => Ok(self.default_mean),
            Action::Arm(i) => {
                self.check_arm(*i)?;
                Ok(self.means[*i])
            }
            other => Err(EnvError::WrongActionKind(other.to_string())),
        }
    }

    fn best_mean(&self) -> f64 {
        max_of(&self.means)
    }

    fn default_mean(&self) -> f64 {
        self.default_mean
    }

    fn reward_cap(&self) -> f64 {
        1.0
    }
}

/// Finite-arm linear bandit: `μ_x = xᵀθ*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEnv {
    arms: Vec<Vec<f64>>,
    theta_star: Vec<f64>,
    means: Vec<f64>,
    default_mean: f64,
    feature_bound: f64,
    param_bound: f64,
    seed: u64,
}

impl LinearEnv {
    /// Validating constructor. `L` and `S` are taken as the realized maximum
    /// arm norm and `‖θ*‖₂`.
    pub fn new(
        arms: Vec<Vec<f64>>,
        theta_star: Vec<f64>,
        default_mean: f64,
        seed: u64,
    ) -> Result<Self, EnvError> {
        if arms.len() < 2 {
            return Err(EnvError::Invalid(format!("K >= 2 required, got {}", arms.len())));
        }
        let d = theta_star.len();
        if d == 0 || arms.iter().any(|x| x.len() != d) {
            return Err(EnvError::Invalid("arm and parameter dimensions must agree".into()));
        }
        let means: Vec<f64> = arms.iter().map(|x| dot(x, &theta_star)).collect();
        if let Some(m) = means.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return Err(EnvError::Invalid(format!("arm mean {m} outside [0, 1]")));
        }
        let best = max_of(&means);
        if !(default_mean > 0.0 && default_mean < best) {
            return Err(EnvError::Invalid(format!(
                "default mean must satisfy 0 < mu0 < max mean ({best}), got {default_mean}"
            )));
        }
        let feature_bound = arms.iter().map(|x| dot(x, x).sqrt()).fold(0.0, f64::max);
        let param_bound = dot(&theta_star, &theta_star).sqrt();
        Ok(Self {
            arms,
            theta_star,
            means,
            default_mean,
            feature_bound,
            param_bound,
            seed,
        })
    }

    /// Random instance with unit-norm arms and all means in `[0.1, 0.9]`;
    /// `μ₀ = mu0_fraction · max mean`.
    pub fn generate(
        dim: usize,
        arms: usize,
        seed: u64,
        mu0_fraction: f64,
    ) -> Result<Self, EnvError> {
        check_generation(dim, arms, mu0_fraction)?;
        let (features, theta) = generate_linear_instance(dim, arms, seed);
        let means: Vec<f64> = features.iter().map(|x| dot(x, &theta)).collect();
        let mu0 = mu0_fraction * max_of(&means);
        Self::new(features, theta, mu0, seed)
    }

    pub fn arms(&self) -> &[Vec<f64>] {
        &self.arms
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn feature_bound(&self) -> f64 {
        self.feature_bound
    }

    pub fn param_bound(&self) -> f64 {
        self.param_bound
    }

    fn check_arm(&self, arm: usize) -> Result<(), EnvError> {
        if arm >= self.arms.len() {
            return Err(EnvError::UnknownArm {
                index: arm,
                arms: self.arms.len(),
            });
        }
        Ok(())
    }
}

impl Environment for LinearEnv {
    type Choice = usize;

    fn sample(&self, run: u64, t: u64, &arm: &usize) -> Result<SampleOutcome, EnvError> {
        self.check_arm(arm)?;
        Ok(SampleOutcome {
            reward: rng::bernoulli(self.means[arm], self.seed, run, t, arm as u64),
            per_base_rewards: None,
        })
    }

    fn to_action(choice: usize) -> Action {
        Action::Arm(choice)
    }

    fn mean_of(&self, action: &Action) -> Result<f64, EnvError> {
        match action {
            Action::Default => Ok(self.default_mean),
            Action::Arm(i) => {
                self.check_arm(*i)?;
                Ok(self.means[*i])
            }
            other => Err(EnvError::WrongActionKind(other.to_string())),
        }
    }

    fn best_mean(&self) -> f64 {
        max_of(&self.means)
    }

    fn default_mean(&self) -> f64 {
        self.default_mean
    }

    fn reward_cap(&self) -> f64 {
        1.0
    }
}

/// Contextual combinatorial semi-bandit over all size-`cardinality` subsets
/// of the base arms, with `f(A, w) = Σ_{e∈A} w_e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombEnv {
    base_arms: Vec<Vec<f64>>,
    theta_star: Vec<f64>,
    base_means: Vec<f64>,
    cardinality: usize,
    default_mean: f64,
    feature_bound: f64,
    param_bound: f64,
    seed: u64,
}

impl CombEnv {
    pub fn new(
        base_arms: Vec<Vec<f64>>,
        theta_star: Vec<f64>,
        cardinality: usize,
        default_mean: f64,
        seed: u64,
    ) -> Result<Self, EnvError> {
        let k = base_arms.len();
        if cardinality == 0 || cardinality > k {
            return Err(EnvError::Invalid(format!(
                "cardinality must be in 1..={k}, got {cardinality}"
            )));
        }
        let d = theta_star.len();
        if d == 0 || base_arms.iter().any(|x| x.len() != d) {
            return Err(EnvError::Invalid("arm and parameter dimensions must agree".into()));
        }
        let base_means: Vec<f64> = base_arms.iter().map(|x| dot(x, &theta_star)).collect();
        if let Some(m) = base_means.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return Err(EnvError::Invalid(format!("base arm mean {m} outside [0, 1]")));
        }
        let best = top_k_sum(&base_means, cardinality);
        if !(default_mean > 0.0 && default_mean < best) {
            return Err(EnvError::Invalid(format!(
                "default mean must satisfy 0 < mu0 < best super-arm mean ({best}), got {default_mean}"
            )));
        }
        let feature_bound = base_arms.iter().map(|x| dot(x, x).sqrt()).fold(0.0, f64::max);
        let param_bound = dot(&theta_star, &theta_star).sqrt();
        Ok(Self {
            base_arms,
            theta_star,
            base_means,
            cardinality,
            default_mean,
            feature_bound,
            param_bound,
            seed,
        })
    }

    /// Random instance built like [`LinearEnv::generate`]; `μ₀` is a fraction
    /// of the best super-arm mean.
    pub fn generate(
        dim: usize,
        arms: usize,
        cardinality: usize,
        seed: u64,
        mu0_fraction: f64,
    ) -> Result<Self, EnvError> {
        check_generation(dim, arms, mu0_fraction)?;
        if cardinality == 0 || cardinality > arms {
            return Err(EnvError::Invalid(format!(
                "cardinality must be in 1..={arms}, got {cardinality}"
            )));
        }
        let (features, theta) = generate_linear_instance(dim, arms, seed);
        let means: Vec<f64> = features.iter().map(|x| dot(x, &theta)).collect();
        let mu0 = mu0_fraction * top_k_sum(&means, cardinality);
        Self::new(features, theta, cardinality, mu0, seed)
    }

    pub fn base_arms(&self) -> &[Vec<f64>] {
        &self.base_arms
    }

    pub fn base_means(&self) -> &[f64] {
        &self.base_means
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn feature_bound(&self) -> f64 {
        self.feature_bound
    }

    pub fn param_bound(&self) -> f64 {
        self.param_bound
    }

    fn check_super(&self, set: &[usize]) -> Result<(), EnvError> {
        let k = self.base_arms.len();
        let mut seen = vec![false; k];
        let ok = set.len() == self.cardinality
            && set.iter().all(|&e| {
                let fresh = e < k && !seen[e];
                if fresh {
                    seen[e] = true;
                }
                fresh
            });
        if !ok {
            return Err(EnvError::InvalidSuperArm {
                expected: self.cardinality,
                got: set.to_vec(),
            });
        }
        Ok(())
    }
}

impl Environment for CombEnv {
    type Choice = Vec<usize>;

    fn sample(&self, run: u64, t: u64, set: &Vec<usize>) -> Result<SampleOutcome, EnvError> {
        self.check_super(set)?;
        let per_base: Vec<f64> = set
            .iter()
            .map(|&e| rng::bernoulli(self.base_means[e], self.seed, run, t, e as u64))
            .collect();
        Ok(SampleOutcome {
            reward: per_base.iter().sum(),
            per_base_rewards: Some(per_base),
        })
    }

    fn to_action(choice: Vec<usize>) -> Action {
        Action::Super(choice)
    }

    fn mean_of(&self, action: &Action) -> Result<f64, EnvError> {
        match action {
            Action::Default => Ok(self.default_mean),
            Action::Super(set) => {
                self.check_super(set)?;
                Ok(set.iter().map(|&e| self.base_means[e]).sum())
            }
            other => Err(EnvError::WrongActionKind(other.to_string())),
        }
    }

    fn best_mean(&self) -> f64 {
        top_k_sum(&self.base_means, self.cardinality)
    }

    fn default_mean(&self) -> f64 {
        self.default_mean
    }

    fn reward_cap(&self) -> f64 {
        self.cardinality as f64
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Sum of the `k` largest entries.
pub fn top_k_sum(v: &[f64], k: usize) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.iter().take(k).sum()
}

fn check_generation(dim: usize, arms: usize, mu0_fraction: f64) -> Result<(), EnvError> {
    if dim == 0 {
        return Err(EnvError::Invalid("d >= 1 required".into()));
    }
    if arms < 2 {
        return Err(EnvError::Invalid(format!("K >= 2 required, got {arms}")));
    }
    if !(mu0_fraction > 0.0 && mu0_fraction < 1.0) {
        return Err(EnvError::Invalid(format!(
            "0 < mu0_fraction < 1 required, got {mu0_fraction}"
        )));
    }
    Ok(())
}

const MEAN_LO: f64 = 0.1;
const MEAN_HI: f64 = 0.9;

/// Unit-norm arms and a parameter whose scores `xᵀθ*` span exactly
/// `[0.1, 0.9]`.
///
/// Raw directions `u_k` are uniform on the sphere of ℝ^{d−1} and a raw
/// parameter `φ` is uniform in the unit ball. The last coordinate of every
/// arm is a constant `1/√2`, which lets the affine map `a·uᵀφ + c` onto
/// `[0.1, 0.9]` be absorbed into `θ*` while keeping `‖x‖₂ = 1`.
fn generate_linear_instance(dim: usize, arms: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut stream = Stream::new(seed, 0x6c69_6e65_6172);
    let free = dim - 1;
    let (bias, spread) = if free == 0 {
        (1.0, 0.0)
    } else {
        (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2)
    };

    let directions: Vec<Vec<f64>> = (0..arms)
        .map(|_| random_unit(&mut stream, free))
        .collect();
    let phi: Vec<f64> = if free == 0 {
        Vec::new()
    } else {
        let dir = random_unit(&mut stream, free);
        let radius = stream.next_f64().powf(1.0 / free as f64);
        dir.iter().map(|v| v * radius).collect()
    };

    let scores: Vec<f64> = directions.iter().map(|u| dot(u, &phi)).collect();
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = max_of(&scores);
    let (scale, shift) = if hi - lo > 1e-12 {
        let scale = (MEAN_HI - MEAN_LO) / (hi - lo);
        (scale, MEAN_LO - scale * lo)
    } else {
        (0.0, 0.5 * (MEAN_LO + MEAN_HI))
    };

    let features = directions
        .iter()
        .map(|u| {
            let mut x: Vec<f64> = u.iter().map(|v| v * spread).collect();
            x.push(bias);
            x
        })
        .collect();
    let mut theta: Vec<f64> = if free == 0 {
        Vec::new()
    } else {
        phi.iter().map(|v| v * scale / spread).collect()
    };
    theta.push(shift / bias);
    (features, theta)
}

fn random_unit(stream: &mut Stream, dim: usize) -> Vec<f64> {
    if dim == 0 {
        return Vec::new();
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| stream.next_gaussian()).collect();
        let n = dot(&v, &v).sqrt();
        if n > 1e-12 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}
