//! Regret, mean-variance pseudo-regret, constraint audits and cross-run
//! envelopes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, EnvError, Environment, KArmedEnv};
use crate::gate::{ConservativeConfig, MvConfig};

/// Absolute slack allowed when auditing accumulated floating-point sums.
pub const AUDIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("cannot aggregate an empty set of curves")]
    Empty,
    #[error("curve {index} has length {got}, expected {expected}")]
    LengthMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("record has {actions} actions but {rewards} rewards")]
    Ragged { actions: usize, rewards: usize },
}

/// The per-step trace of one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunRecord {
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub run_seed: u64,
}

impl RunRecord {
    pub fn with_capacity(capacity: usize, run_seed: u64) -> Self {
        Self {
            actions: Vec::with_capacity(capacity),
            rewards: Vec::with_capacity(capacity),
            run_seed,
        }
    }

    pub fn push(&mut self, action: Action, reward: f64) {
        self.actions.push(action);
        self.rewards.push(reward);
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn is_default(&self, i: usize) -> bool {
        self.actions[i].is_default()
    }

    /// `N₀` after each step.
    pub fn default_pull_curve(&self) -> Vec<u64> {
        self.actions
            .iter()
            .scan(0u64, |n0, a| {
                *n0 += a.is_default() as u64;
                Some(*n0)
            })
            .collect()
    }

    fn check(&self) -> Result<(), MetricsError> {
        if self.actions.len() != self.rewards.len() {
            return Err(MetricsError::Ragged {
                actions: self.actions.len(),
                rewards: self.rewards.len(),
            });
        }
        Ok(())
    }
}

/// Cumulative pseudo-regret `Σ_{s≤t} (μ_{x*} − μ_{a_s})` along one trace.
pub fn pseudo_regret<E: Environment>(record: &RunRecord, env: &E) -> Result<Vec<f64>, MetricsError> {
    record.check()?;
    let best = env.best_mean();
    let mut total = 0.0;
    record
        .actions
        .iter()
        .map(|a| {
            total += best - env.mean_of(a)?;
            Ok(total)
        })
        .collect()
}

/// True-parameter tables for the mean-variance pseudo-regret. Index 0 is the
/// default arm (mean `μ₀`, variance 0); index `i ≥ 1` is regular arm `i − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MvTables {
    pub means: Vec<f64>,
    /// `Δᴹⱽ_x = MV_{x*} − MV_x`, `x*` the best regular arm by `ρμ − σ²`.
    pub gaps: Vec<f64>,
    /// Table index of `x*`.
    pub best: usize,
}

impl MvTables {
    pub fn new(env: &KArmedEnv, rho: f64) -> Self {
        let mut means = vec![env.default_mean()];
        means.extend_from_slice(env.means());
        let mut mv = vec![rho * env.default_mean()];
        mv.extend((0..env.num_arms()).map(|i| rho * env.means()[i] - env.variance(i)));
        let best = 1 + crate::policy::argmax_first(mv[1..].iter().copied());
        let gaps = mv.iter().map(|v| mv[best] - v).collect();
        Self { means, gaps, best }
    }

    pub fn index_of(&self, action: &Action) -> Result<usize, MetricsError> {
        match action {
            Action::Default => Ok(0),
            Action::Arm(i) if i + 1 < self.means.len() => Ok(i + 1),
            Action::Arm(i) => Err(EnvError::UnknownArm {
                index: *i,
                arms: self.means.len() - 1,
            }
            .into()),
            other => Err(EnvError::WrongActionKind(other.to_string()).into()),
        }
    }
}

/// Normalized pseudo-regret for pull counts `counts` (indexed like
/// [`MvTables`]), summing only over `support`, which must list every index
/// with a nonzero count in ascending order.
fn mv_regret_at(tables: &MvTables, counts: &[u64], support: &[usize]) -> f64 {
    let total: u64 = support.iter().map(|&x| counts[x]).sum();
    let t = total as f64;
    let mut gap_term = 0.0;
    for &x in support {
        if x != tables.best {
            gap_term += counts[x] as f64 * tables.gaps[x];
        }
    }
    let mut risk_term = 0.0;
    for &x in support {
        for &y in support {
            if y != x {
                let gamma = tables.means[x] - tables.means[y];
                risk_term += counts[x] as f64 * counts[y] as f64 * (gamma * gamma);
            }
        }
    }
    gap_term / t + 2.0 / (t * t) * risk_term
}

/// Normalized mean-variance pseudo-regret at every prefix of the trace.
///
/// The default arm takes part in both sums as an arm with mean `μ₀` and
/// zero variance.
pub fn mv_pseudo_regret(record: &RunRecord, env: &KArmedEnv, rho: f64) -> Result<Vec<f64>, MetricsError> {
    record.check()?;
    let tables = MvTables::new(env, rho);
    let mut counts = vec![0u64; tables.means.len()];
    let mut support: Vec<usize> = Vec::new();
    record
        .actions
        .iter()
        .map(|a| {
            let x = tables.index_of(a)?;
            if counts[x] == 0 {
                let pos = support.partition_point(|&s| s < x);
                support.insert(pos, x);
            }
            counts[x] += 1;
            Ok(mv_regret_at(&tables, &counts, &support))
        })
        .collect()
}

/// First 1-based step where `Σ_{s≤t} r_s < (1−α) μ₀ t − tol`, if any.
pub fn audit_constraint(record: &RunRecord, cfg: &ConservativeConfig) -> Option<u64> {
    let mut cumulative = 0.0;
    for (i, &r) in record.rewards.iter().enumerate() {
        let t = i as u64 + 1;
        cumulative += r;
        if cumulative < cfg.floor(t) - AUDIT_TOLERANCE {
            return Some(t);
        }
    }
    None
}

/// First 1-based step where `MV̂_t < (1−α) ρ μ₀ − tol`, with `MV̂_t`
/// recomputed from raw sums of the trace.
pub fn audit_mv_constraint(record: &RunRecord, cfg: &MvConfig) -> Option<u64> {
    let floor = (1.0 - cfg.alpha()) * cfg.mv0() - AUDIT_TOLERANCE;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for (i, &r) in record.rewards.iter().enumerate() {
        let t = (i + 1) as f64;
        sum += r;
        sum_sq += r * r;
        let mean = sum / t;
        let mv = cfg.rho() * mean - (sum_sq / t - mean * mean);
        if mv < floor {
            return Some(i as u64 + 1);
        }
    }
    None
}

/// Largest `(1−α) μ₀ t − Σ_{s≤t} r_s` over the trace, or 0 if the floor is
/// never crossed.
pub fn constraint_deficit(record: &RunRecord, cfg: &ConservativeConfig) -> f64 {
    let mut cumulative = 0.0;
    let mut worst = 0.0_f64;
    for (i, &r) in record.rewards.iter().enumerate() {
        cumulative += r;
        worst = worst.max(cfg.floor(i as u64 + 1) - cumulative);
    }
    worst
}

/// Largest `(1−α) ρ μ₀ − MV̂_t` over the trace, or 0.
pub fn mv_constraint_deficit(record: &RunRecord, cfg: &MvConfig) -> f64 {
    let floor = (1.0 - cfg.alpha()) * cfg.mv0();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut worst = 0.0_f64;
    for (i, &r) in record.rewards.iter().enumerate() {
        let t = (i + 1) as f64;
        sum += r;
        sum_sq += r * r;
        let mean = sum / t;
        let mv = cfg.rho() * mean - (sum_sq / t - mean * mean);
        worst = worst.max(floor - mv);
    }
    worst
}

/// Pointwise mean, maximum and minimum across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub mean: Vec<f64>,
    pub max: Vec<f64>,
    pub min: Vec<f64>,
}

impl Envelope {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Sums in slice order, so the result does not depend on how the runs were
/// scheduled.
pub fn aggregate<C: AsRef<[f64]>>(curves: &[C]) -> Result<Envelope, MetricsError> {
    let first = curves.first().ok_or(MetricsError::Empty)?.as_ref();
    let len = first.len();
    for (index, c) in curves.iter().enumerate() {
        if c.as_ref().len() != len {
            return Err(MetricsError::LengthMismatch {
                index,
                expected: len,
                got: c.as_ref().len(),
            });
        }
    }
    let n = curves.len() as f64;
    let mut sum = first.to_vec();
    let mut max = first.to_vec();
    let mut min = first.to_vec();
    for c in &curves[1..] {
        for (i, &v) in c.as_ref().iter().enumerate() {
            sum[i] += v;
            max[i] = max[i].max(v);
            min[i] = min[i].min(v);
        }
    }
    let mean = sum.into_iter().map(|s| s / n).collect();
    Ok(Envelope { mean, max, min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(actions: Vec<Action>, rewards: Vec<f64>) -> RunRecord {
        RunRecord {
            actions,
            rewards,
            run_seed: 0,
        }
    }

    fn grid() -> KArmedEnv {
        KArmedEnv::new(vec![0.8, 0.5, 0.2], 0.7, 0).unwrap()
    }

    #[test]
    fn optimal_play_has_zero_regret() {
        let env = grid();
        let r = record(vec![Action::Arm(0); 10], vec![1.0; 10]);
        assert!(pseudo_regret(&r, &env).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn default_play_accrues_delta0() {
        let env = grid();
        let r = record(vec![Action::Default; 10], vec![0.7; 10]);
        let curve = pseudo_regret(&r, &env).unwrap();
        assert!((curve[9] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_trace_matches_resummation() {
        let env = grid();
        let actions = vec![
            Action::Default,
            Action::Arm(2),
            Action::Arm(1),
            Action::Default,
            Action::Arm(0),
        ];
        let r = record(actions.clone(), vec![0.0; 5]);
        let curve = pseudo_regret(&r, &env).unwrap();
        let gaps = [0.1, 0.6, 0.3, 0.1, 0.0];
        for t in 0..5 {
            let want: f64 = gaps[..=t].iter().sum();
            assert!((curve[t] - want).abs() < 1e-12);
        }
        let bad = record(vec![Action::Arm(3)], vec![0.0]);
        assert!(pseudo_regret(&bad, &env).is_err());
    }

    #[test]
    fn pseudo_regret_is_additive() {
        let env = grid();
        let a = vec![Action::Arm(1), Action::Default, Action::Arm(2)];
        let b = vec![Action::Arm(0), Action::Arm(2)];
        let ca = pseudo_regret(&record(a.clone(), vec![0.0; 3]), &env).unwrap();
        let cb = pseudo_regret(&record(b.clone(), vec![0.0; 2]), &env).unwrap();
        let joined: Vec<Action> = a.into_iter().chain(b).collect();
        let cj = pseudo_regret(&record(joined, vec![0.0; 5]), &env).unwrap();
        assert!((cj[4] - (ca[2] + cb[1])).abs() < 1e-12);
    }

    #[test]
    fn mv_single_arm_has_no_risk_term() {
        let env = grid();
        let rho = 10.0;
        let r = record(vec![Action::Arm(1); 6], vec![0.0; 6]);
        let curve = mv_pseudo_regret(&r, &env, rho).unwrap();
        let tables = MvTables::new(&env, rho);
        for v in curve {
            assert!((v - tables.gaps[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn mv_two_arm_hand_value() {
        let env = grid();
        let rho = 10.0;
        let tables = MvTables::new(&env, rho);
        let r = record(vec![Action::Arm(0), Action::Arm(2)], vec![0.0; 2]);
        let curve = mv_pseudo_regret(&r, &env, rho).unwrap();
        // (1·Δ_x + 1·Δ_y)/2 + (2/4)·2·Γ².
        let gamma = 0.8 - 0.2;
        let want = (0.0 + tables.gaps[3]) / 2.0 + 0.5 * 2.0 * gamma * gamma;
        assert!((curve[1] - want).abs() < 1e-12);
    }

    #[test]
    fn mv_identical_means_have_no_risk() {
        let env = KArmedEnv::new(vec![0.6, 0.6, 0.6], 0.3, 0).unwrap();
        let r = record(
            vec![Action::Arm(0), Action::Arm(1), Action::Arm(2), Action::Arm(1)],
            vec![0.0; 4],
        );
        let curve = mv_pseudo_regret(&r, &env, 5.0).unwrap();
        assert!(curve.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn audit_examples() {
        let cfg = ConservativeConfig::new(0.05, 0.7, 1.0).unwrap();
        let all_default = record(vec![Action::Default; 1000], vec![0.7; 1000]);
        assert_eq!(audit_constraint(&all_default, &cfg), None);

        let forced = record(
            vec![Action::Arm(0), Action::Default],
            vec![0.0, 0.7],
        );
        assert_eq!(audit_constraint(&forced, &cfg), Some(1));
    }

    #[test]
    fn mv_audit_examples() {
        let cfg = MvConfig::new(0.05, 0.7, 60.0, false).unwrap();
        let all_default = record(vec![Action::Default; 500], vec![0.7; 500]);
        assert_eq!(audit_mv_constraint(&all_default, &cfg), None);

        let alternating = record(
            (0..10).map(|_| Action::Arm(0)).collect(),
            (0..10).map(|i| (i % 2) as f64).collect(),
        );
        let t = audit_mv_constraint(&alternating, &cfg).unwrap();
        // Two steps in, MV̂₂ = 60·0.5 − 0.25 = 29.75 < 0.95·42 = 39.9.
        assert!(t <= 2);
    }

    #[test]
    fn aggregate_examples() {
        let c = vec![1.0, 2.0, 4.0];
        let one = aggregate(std::slice::from_ref(&c)).unwrap();
        assert_eq!(one.mean, c);
        assert_eq!(one.max, c);
        assert_eq!(one.min, c);

        let double: Vec<f64> = c.iter().map(|v| 2.0 * v).collect();
        let two = aggregate(&[c.clone(), double.clone()]).unwrap();
        assert_eq!(two.mean, vec![1.5, 3.0, 6.0]);
        assert_eq!(two.max, double);
        assert_eq!(two.min, c);

        assert_eq!(aggregate::<Vec<f64>>(&[]), Err(MetricsError::Empty));
        assert!(matches!(
            aggregate(&[vec![1.0], vec![1.0, 2.0]]),
            Err(MetricsError::LengthMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn default_pull_curve_counts() {
        let r = record(
            vec![Action::Default, Action::Arm(0), Action::Default],
            vec![0.7, 1.0, 0.7],
        );
        assert_eq!(r.default_pull_curve(), vec![1, 1, 2]);
    }

    proptest! {
        #[test]
        fn envelope_contains_mean(curves in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 8), 1..50)) {
            let env = aggregate(&curves).unwrap();
            for i in 0..8 {
                prop_assert!(env.min[i] <= env.mean[i] + 1e-12);
                prop_assert!(env.mean[i] <= env.max[i] + 1e-12);
            }
        }

        #[test]
        fn audits_are_pure(rewards in prop::collection::vec(prop::bool::ANY, 1..200)) {
            let rewards: Vec<f64> = rewards.into_iter().map(|b| b as u8 as f64).collect();
            let r = record(vec![Action::Arm(0); rewards.len()], rewards);
            let cfg = ConservativeConfig::new(0.1, 0.5, 1.0).unwrap();
            prop_assert_eq!(audit_constraint(&r, &cfg), audit_constraint(&r.clone(), &cfg));
            let mv = MvConfig::new(0.1, 0.5, 60.0, false).unwrap();
            prop_assert_eq!(audit_mv_constraint(&r, &mv), audit_mv_constraint(&r, &mv));
        }

        #[test]
        fn risk_term_symmetric_and_zero_iff_single_arm(
            picks in prop::collection::vec(0usize..4, 1..30),
        ) {
            let env = grid();
            let tables = MvTables::new(&env, 20.0);
            let mut counts = [0u64; 4];
            for &p in &picks {
                counts[p] += 1;
            }
            let mut risk = 0.0;
            for x in 0..4 {
                for y in 0..4 {
                    let g = tables.means[x] - tables.means[y];
                    let a = counts[x] as f64 * counts[y] as f64 * g * g;
                    let b = counts[y] as f64 * counts[x] as f64 * g * g;
                    prop_assert_eq!(a, b);
                    if x != y {
                        risk += a;
                    }
                }
            }
            let distinct = counts.iter().filter(|&&c| c > 0).count();
            prop_assert_eq!(risk == 0.0, distinct <= 1);
        }
    }
}
