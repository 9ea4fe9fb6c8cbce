//! JSON experiment configuration.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::HarnessError;
use crate::gate::EXPLORATION_RISK;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Cmab,
    Clb,
    Cccb,
    Mvcbp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Realized-reward budget gate around the setting's base policy.
    Gencb,
    /// The base policy alone (negative control).
    Base,
    /// UCB gated by lower confidence bounds (CMAB only).
    LcbGate,
    /// MV-UCB behind the mean-variance gate.
    Mvcucb,
    /// MV-UCB alone (negative control).
    Mvucb,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gencb => "gencb",
            Algorithm::Base => "base",
            Algorithm::LcbGate => "lcb_gate",
            Algorithm::Mvcucb => "mvcucb",
            Algorithm::Mvucb => "mvucb",
        }
    }

    /// Unconstrained policies are expected to violate the constraint.
    pub fn is_negative_control(self) -> bool {
        matches!(self, Algorithm::Base | Algorithm::Mvucb)
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_mu_hi() -> f64 {
    0.8
}

fn default_mu_lo() -> f64 {
    0.2
}

fn default_mu0_fraction() -> f64 {
    0.9
}

fn default_cardinality() -> usize {
    3
}

/// One experiment: a setting, an algorithm and a replication plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub setting: Setting,
    pub algorithm: Algorithm,
    /// Number of regular (or base) arms. Defaults to `2d` for CLB/CCCB.
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub arms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default = "default_cardinality")]
    pub cardinality: usize,
    pub alpha: f64,
    /// Default-arm reward for CMAB / MV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<f64>,
    /// Default-arm reward as a fraction of the best mean, CLB / CCCB.
    #[serde(default = "default_mu0_fraction")]
    pub mu0_fraction: f64,
    #[serde(default = "default_mu_hi")]
    pub mu_hi: f64,
    #[serde(default = "default_mu_lo")]
    pub mu_lo: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub runs: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub unsafe_mv: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    /// CMAB on the arithmetic grid `mu_hi → mu_lo`.
    pub fn cmab(algorithm: Algorithm, arms: usize, alpha: f64, mu0: f64, horizon: u64, runs: usize, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            setting: Setting::Cmab,
            algorithm,
            arms: Some(arms),
            d: None,
            cardinality: default_cardinality(),
            alpha,
            mu0: Some(mu0),
            mu0_fraction: default_mu0_fraction(),
            mu_hi: default_mu_hi(),
            mu_lo: default_mu_lo(),
            rho: None,
            horizon,
            runs,
            master_seed: seed,
            unsafe_mv: false,
        }
    }

    /// Mean-variance setting on the CMAB grid.
    #[allow(clippy::too_many_arguments)]
    pub fn mvcbp(
        algorithm: Algorithm,
        arms: usize,
        alpha: f64,
        mu0: f64,
        rho: f64,
        horizon: u64,
        runs: usize,
        seed: u64,
    ) -> Self {
        Self {
            setting: Setting::Mvcbp,
            rho: Some(rho),
            ..Self::cmab(algorithm, arms, alpha, mu0, horizon, runs, seed)
        }
    }

    /// Linear bandit with `K = 2d` unless overridden.
    pub fn clb(algorithm: Algorithm, d: usize, alpha: f64, horizon: u64, runs: usize, seed: u64) -> Self {
        Self {
            setting: Setting::Clb,
            arms: None,
            d: Some(d),
            mu0: None,
            ..Self::cmab(algorithm, 2, alpha, 0.5, horizon, runs, seed)
        }
    }

    /// Combinatorial semi-bandit with `K = 2d` base arms.
    pub fn cccb(algorithm: Algorithm, d: usize, cardinality: usize, alpha: f64, horizon: u64, runs: usize, seed: u64) -> Self {
        Self {
            setting: Setting::Cccb,
            cardinality,
            ..Self::clb(algorithm, d, alpha, horizon, runs, seed)
        }
    }

    /// Resolved arm count.
    pub fn num_arms(&self) -> usize {
        match self.setting {
            Setting::Clb | Setting::Cccb => self.arms.unwrap_or(2 * self.d.unwrap_or(0)),
            Setting::Cmab | Setting::Mvcbp => self.arms.unwrap_or(0),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!(
                "schema_version must be {SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.horizon < 1 {
            return fail("T >= 1 required".into());
        }
        if self.runs < 1 {
            return fail("runs >= 1 required".into());
        }

        let allowed: &[Algorithm] = match self.setting {
            Setting::Cmab => &[Algorithm::Gencb, Algorithm::Base, Algorithm::LcbGate],
            Setting::Clb | Setting::Cccb => &[Algorithm::Gencb, Algorithm::Base],
            Setting::Mvcbp => &[Algorithm::Mvcucb, Algorithm::Mvucb],
        };
        if !allowed.contains(&self.algorithm) {
            return fail(format!(
                "algorithm {} is not available for setting {:?}",
                self.algorithm, self.setting
            ));
        }

        match self.setting {
            Setting::Cmab | Setting::Mvcbp => {
                let k = self.arms.unwrap_or(0);
                if k < 2 {
                    return fail(format!("K >= 2 required, got {k}"));
                }
                let Some(mu0) = self.mu0 else {
                    return fail("mu0 is required for this setting".into());
                };
                if !(0.0 < self.mu_lo && self.mu_lo < self.mu_hi && self.mu_hi <= 1.0) {
                    return fail(format!(
                        "0 < mu_lo < mu_hi <= 1 required, got mu_lo={}, mu_hi={}",
                        self.mu_lo, self.mu_hi
                    ));
                }
                if !(0.0 < mu0 && mu0 < self.mu_hi) {
                    return fail(format!("0 < mu0 < mu_hi required, got mu0={mu0}"));
                }
                if self.setting == Setting::Mvcbp {
                    let Some(rho) = self.rho else {
                        return fail("rho is required for mvcbp".into());
                    };
                    if !(rho > 0.0) {
                        return fail(format!("rho must be positive, got {rho}"));
                    }
                    let margin = self.alpha * rho * mu0;
                    if self.algorithm == Algorithm::Mvcucb && margin <= EXPLORATION_RISK && !self.unsafe_mv {
                        return fail(format!(
                            "alpha * rho * mu0 = {margin} <= 2 violates the mean-variance precondition; set unsafe_mv to run anyway"
                        ));
                    }
                }
            }
            Setting::Clb | Setting::Cccb => {
                let d = self.d.unwrap_or(0);
                if d < 1 {
                    return fail("d >= 1 required".into());
                }
                if self.num_arms() < 2 {
                    return fail(format!("K >= 2 required, got {}", self.num_arms()));
                }
                if !(self.mu0_fraction > 0.0 && self.mu0_fraction < 1.0) {
                    return fail(format!(
                        "0 < mu0_fraction < 1 required, got {}",
                        self.mu0_fraction
                    ));
                }
                if self.setting == Setting::Cccb
                    && (self.cardinality < 1 || self.cardinality > self.num_arms())
                {
                    return fail(format!(
                        "cardinality must be in 1..={}, got {}",
                        self.num_arms(),
                        self.cardinality
                    ));
                }
            }
        }
        Ok(())
    }

    /// Everything that determines the environment and the random streams.
    /// Two configs with equal keys run on common random numbers.
    pub fn environment_key(&self) -> String {
        let mut key = self.clone();
        key.algorithm = Algorithm::Gencb;
        key.unsafe_mv = false;
        // α only enters the gate, not the environment.
        key.alpha = 0.5;
        if self.setting != Setting::Mvcbp {
            key.rho = None;
        }
        serde_json::to_string(&key).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_cmab() {
        let text = r#"{
            "schema_version": 1, "setting": "cmab", "algorithm": "gencb",
            "K": 24, "alpha": 0.05, "mu0": 0.7, "T": 1000, "runs": 3, "master_seed": 7
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg, ExperimentConfig::cmab(Algorithm::Gencb, 24, 0.05, 0.7, 1000, 3, 7));
    }

    #[test]
    fn rejects_bad_configs() {
        let base = ExperimentConfig::cmab(Algorithm::Gencb, 24, 0.05, 0.7, 1000, 3, 7);
        let mut c = base.clone();
        c.schema_version = 2;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.mu0 = Some(0.9);
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.runs = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.algorithm = Algorithm::Mvcucb;
        assert!(c.validate().is_err());

        let text = r#"{"schema_version": 1, "setting": "cmab", "algorithm": "gencb",
            "K": 4, "alpha": 0.05, "mu0": 0.7, "T": 10, "runs": 1, "master_seed": 0, "bogus": 1}"#;
        assert!(ExperimentConfig::from_json(text).is_err());
    }

    #[test]
    fn mv_precondition_needs_override() {
        let mut c = ExperimentConfig::mvcbp(Algorithm::Mvcucb, 24, 0.05, 0.7, 10.0, 100, 1, 0);
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("precondition"), "{err}");
        c.unsafe_mv = true;
        c.validate().unwrap();
        let ok = ExperimentConfig::mvcbp(Algorithm::Mvcucb, 24, 0.05, 0.7, 60.0, 100, 1, 0);
        ok.validate().unwrap();
        // The unconstrained policy does not need the precondition.
        ExperimentConfig::mvcbp(Algorithm::Mvucb, 24, 0.05, 0.7, 10.0, 100, 1, 0)
            .validate()
            .unwrap();
    }

    #[test]
    fn linear_defaults() {
        let c = ExperimentConfig::clb(Algorithm::Gencb, 7, 0.01, 100, 2, 0);
        c.validate().unwrap();
        assert_eq!(c.num_arms(), 14);
        let c = ExperimentConfig::cccb(Algorithm::Gencb, 5, 3, 0.01, 100, 2, 0);
        c.validate().unwrap();
        assert_eq!(c.num_arms(), 10);
    }

    #[test]
    fn environment_key_ignores_algorithm_and_alpha() {
        let a = ExperimentConfig::cmab(Algorithm::Gencb, 24, 0.05, 0.7, 1000, 3, 7);
        let b = ExperimentConfig::cmab(Algorithm::LcbGate, 24, 0.1, 0.7, 1000, 3, 7);
        let c = ExperimentConfig::cmab(Algorithm::LcbGate, 24, 0.1, 0.7, 1000, 3, 8);
        assert_eq!(a.environment_key(), b.environment_key());
        assert_ne!(a.environment_key(), c.environment_key());
    }
}
