//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --test acceptance`.

#![allow(clippy::needless_range_loop)]

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use conbandit::env::{Action, KArmedEnv};
use conbandit::gate::{Agent, MvConfig, MvCucb};
use conbandit::harness::{run_experiment, Algorithm, Execution, ExperimentConfig, ExperimentResult};
use conbandit::linalg::RidgeState;
use conbandit::metrics::{self, RunRecord};
use conbandit::rng::{self, Stream};

const SEED: u64 = 20_240_517;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

type Check = fn(&mut Shared) -> Verdict;

/// Experiments reused by several criteria.
#[derive(Default)]
struct Shared {
    gencb_cmab: Option<(ExperimentResult, Duration)>,
    ucb_cmab: Option<ExperimentResult>,
}

fn cmab(algorithm: Algorithm, horizon: u64, runs: usize) -> ExperimentConfig {
    ExperimentConfig::cmab(algorithm, 24, 0.05, 0.7, horizon, runs, SEED)
}

impl Shared {
    fn gencb(&mut self) -> &(ExperimentResult, Duration) {
        self.gencb_cmab.get_or_insert_with(|| {
            let start = Instant::now();
            let res = run_experiment(&cmab(Algorithm::Gencb, 100_000, 50), Execution::Parallel).expect("gencb run");
            (res, start.elapsed())
        })
    }

    fn ucb(&mut self) -> &ExperimentResult {
        self.ucb_cmab.get_or_insert_with(|| {
            run_experiment(&cmab(Algorithm::Base, 100_000, 50), Execution::Parallel).expect("ucb run")
        })
    }
}

fn hard_safety_cmab(s: &mut Shared) -> Verdict {
    let (res, elapsed) = s.gencb();
    let violations = res.violations();
    let pass = violations == 0 && res.runs.len() == 50 && *elapsed < Duration::from_secs(120);
    verdict(
        pass,
        format!(
            "{violations}/50 runs violate, max deficit {:.3e}, {:.1}s",
            res.max_deficit(),
            elapsed.as_secs_f64()
        ),
    )
}

fn hard_safety_mv(_: &mut Shared) -> Verdict {
    let start = Instant::now();
    let cfg = ExperimentConfig::mvcbp(Algorithm::Mvcucb, 24, 0.05, 0.7, 60.0, 50_000, 20, SEED);
    let res = run_experiment(&cfg, Execution::Parallel).expect("mv run");
    let elapsed = start.elapsed();
    let violations = res.violations();
    verdict(
        violations == 0 && res.runs.len() == 20 && elapsed < Duration::from_secs(120),
        format!(
            "{violations}/20 runs violate, max deficit {:.3e}, {:.1}s",
            res.max_deficit(),
            elapsed.as_secs_f64()
        ),
    )
}

fn negative_control(s: &mut Shared) -> Verdict {
    let res = s.ucb();
    let early: Vec<u64> = res
        .runs
        .iter()
        .filter_map(|r| r.first_violation)
        .filter(|&t| t <= 500)
        .collect();
    verdict(
        !early.is_empty(),
        format!(
            "{}/50 runs violate within 500 steps (earliest t={})",
            early.len(),
            early.iter().min().map_or("-".into(), |t| t.to_string())
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn bounded_default_pulls(s: &mut Shared) -> Verdict {
    // A horizon-T run is a prefix of the 10⁵ run on the same seed.
    let (res, elapsed) = s.gencb();
    let increases: Vec<f64> = res
        .runs
        .iter()
        .map(|r| (r.default_pulls[99_999] - r.default_pulls[49_999]) as f64)
        .collect();
    let med = median(increases.clone());
    let max = increases.iter().copied().fold(0.0, f64::max);
    verdict(
        med <= 2.0 && *elapsed < Duration::from_secs(180),
        format!("median N0 increase {med}, max {max}, mean N0(T) {:.1}", res.mean_final_default_pulls()),
    )
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn regret_sandwich(s: &mut Shared) -> Verdict {
    let ucb_final: Vec<f64> = s.ucb().runs.iter().map(|r| r.final_regret()).collect();
    let (res, _) = s.gencb();
    let gencb_final: Vec<f64> = res.runs.iter().map(|r| r.final_regret()).collect();
    let (g, g_se) = mean_and_se(&gencb_final);
    let (u, u_se) = mean_and_se(&ucb_final);
    let delta0 = res.env.best_mean() - res.env.default_mean();
    let n0 = res.mean_final_default_pulls();
    let bound = u + delta0 * n0 + 2.0 * (g_se * g_se + u_se * u_se).sqrt();
    verdict(
        g <= bound,
        format!("GenCB {g:.2} <= UCB {u:.2} + {delta0:.2}*{n0:.1} + 2SE = {bound:.2}"),
    )
}

fn gate_dominance(_: &mut Shared) -> Verdict {
    let gencb = run_experiment(&cmab(Algorithm::Gencb, 20_000, 20), Execution::Parallel).expect("gencb");
    let lcb = run_experiment(&cmab(Algorithm::LcbGate, 20_000, 20), Execution::Parallel).expect("lcb");
    let mut bad_runs = 0;
    for (g, l) in gencb.runs.iter().zip(&lcb.runs) {
        if g.default_pulls.iter().zip(&l.default_pulls).any(|(a, b)| a > b) {
            bad_runs += 1;
        }
    }
    verdict(
        bad_runs == 0 && gencb.runs.len() == 20,
        format!(
            "{bad_runs}/20 runs with a prefix where GenCB N0 > LCB N0; mean N0(T) {:.1} vs {:.1}",
            gencb.mean_final_default_pulls(),
            lcb.mean_final_default_pulls()
        ),
    )
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

fn ridge_oracle(_: &mut Shared) -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut gen = Stream::new(SEED, 7);
    for instance in 0..100 {
        let d = 1 + (gen.next_u64() % 10) as usize;
        let updates = (gen.next_u64() % 51) as usize;
        let lambda = 1.0 + 4.0 * gen.next_f64();
        let mut ridge = RidgeState::new(d, lambda, 1.0, 1.0).expect("ridge");
        let mut gram: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| if i == j { lambda } else { 0.0 }).collect())
            .collect();
        let mut response = vec![0.0; d];
        for _ in 0..updates {
            let raw: Vec<f64> = (0..d).map(|_| gen.next_gaussian()).collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let scale = gen.next_f64() / norm;
            let x: Vec<f64> = raw.iter().map(|v| v * scale).collect();
            let r = gen.next_f64();
            ridge.update(&x, r).expect("update");
            for i in 0..d {
                for j in 0..d {
                    gram[i][j] += x[i] * x[j];
                }
                response[i] += r * x[i];
            }
        }
        let batch = dense_solve(gram, response);
        let diff = batch
            .iter()
            .zip(ridge.estimate())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = batch.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let rel = if diff == 0.0 { 0.0 } else { diff / scale };
        if rel > worst {
            worst = rel;
        }
        if rel > 1e-9 {
            return verdict(false, format!("instance {instance}: relative error {rel:.3e}"));
        }
    }
    verdict(
        true,
        format!("100 instances, worst relative error {worst:.3e}, {:.2}s", start.elapsed().as_secs_f64()),
    )
}

fn linucb_sublinear(_: &mut Shared) -> Verdict {
    let start = Instant::now();
    let cfg = ExperimentConfig::clb(Algorithm::Gencb, 7, 0.01, 40_000, 20, SEED);
    let res = run_experiment(&cfg, Execution::Parallel).expect("clb run");
    let elapsed = start.elapsed();
    let r10 = res.envelope.mean[9_999];
    let r40 = res.envelope.mean[39_999];
    let ratio = r40 / r10;
    verdict(
        ratio < 2.6 && res.violations() == 0 && elapsed < Duration::from_secs(300),
        format!(
            "R(4e4)/R(1e4) = {r40:.2}/{r10:.2} = {ratio:.3}, mean N0 {:.1}, {:.1}s",
            res.mean_final_default_pulls(),
            elapsed.as_secs_f64()
        ),
    )
}

/// Mean-variance pseudo-regret at one horizon, straight from the pull counts:
/// `(1/T) Σ_{x≠x*} N_x Δ_x + (2/T²) Σ_x Σ_{y≠x} N_x N_y Γ²_{x,y}` over the
/// default arm and every regular arm.
fn brute_mv_regret(means: &[f64], mu0: f64, rho: f64, counts: &[u64]) -> f64 {
    let mut mu = vec![mu0];
    mu.extend_from_slice(means);
    let mut mv = vec![rho * mu0];
    mv.extend(means.iter().map(|m| rho * m - m * (1.0 - m)));
    let mut best = 1;
    for x in 2..mv.len() {
        if mv[x] > mv[best] {
            best = x;
        }
    }
    let t = counts.iter().sum::<u64>() as f64;
    let mut first = 0.0;
    for x in 0..mu.len() {
        if x != best {
            first += counts[x] as f64 * (mv[best] - mv[x]);
        }
    }
    let mut second = 0.0;
    for x in 0..mu.len() {
        for y in 0..mu.len() {
            if y != x {
                let g = mu[x] - mu[y];
                second += counts[x] as f64 * counts[y] as f64 * (g * g);
            }
        }
    }
    first / t + 2.0 / (t * t) * second
}

fn mv_regret_oracle(_: &mut Shared) -> Verdict {
    let envs = [
        (vec![0.8, 0.5, 0.2], 0.7, 60.0),
        (vec![0.3, 0.9, 0.6], 0.4, 10.0),
        (vec![0.5, 0.5, 0.5], 0.3, 1.0),
        (vec![0.1, 0.45, 0.95], 0.2, 0.5),
    ];
    let mut traces = 0usize;
    for (means, mu0, rho) in &envs {
        let env = KArmedEnv::new(means.clone(), *mu0, 1).expect("env");
        let choices = 1 + means.len();
        for len in 1..=6u32 {
            for code in 0..choices.pow(len) {
                let mut record = RunRecord::with_capacity(len as usize, 0);
                let mut c = code;
                for _ in 0..len {
                    let pick = c % choices;
                    c /= choices;
                    // Deterministic rewards: the default arm pays μ₀, regular arms pay 1.
                    if pick == 0 {
                        record.push(Action::Default, *mu0);
                    } else {
                        record.push(Action::Arm(pick - 1), 1.0);
                    }
                }
                let got = metrics::mv_pseudo_regret(&record, &env, *rho).expect("mv regret");
                let mut counts = vec![0u64; choices];
                for (i, a) in record.actions.iter().enumerate() {
                    counts[match a {
                        Action::Default => 0,
                        Action::Arm(k) => k + 1,
                        Action::Super(_) => unreachable!(),
                    }] += 1;
                    let want = brute_mv_regret(means, *mu0, *rho, &counts);
                    if got[i].to_bits() != want.to_bits() {
                        return verdict(
                            false,
                            format!("trace {:?} prefix {}: {} != {}", record.actions, i + 1, got[i], want),
                        );
                    }
                }
                traces += 1;
            }
        }
    }
    verdict(true, format!("{traces} traces over 4 environments, bitwise equal at every prefix"))
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}

fn determinism(_: &mut Shared) -> Verdict {
    let tmp = tempfile::tempdir().expect("tempdir");
    let cfg_path = tmp.path().join("cfg.json");
    let cfg = ExperimentConfig::cmab(Algorithm::Gencb, 24, 0.05, 0.7, 5_000, 16, SEED);
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();

    let run = |name: &str, threads: &str| {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_conbandit"))
            .arg("run")
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out)
            .args(["--threads", threads])
            .output()
            .expect("spawn conbandit");
        assert!(status.status.success(), "conbandit run failed: {status:?}");
        out
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "8");
    let mut diffs = Vec::new();
    for file in ["regret.csv", "runs.csv", "summary.json"] {
        let base = read(&a, file);
        if base != read(&b, file) {
            diffs.push(format!("{file} differs across repeats"));
        }
        if base != read(&c, file) {
            diffs.push(format!("{file} differs between 1 and 8 threads"));
        }
    }
    let rows = read(&a, "regret.csv").iter().filter(|&&c| c == b'\n').count();
    if rows != 5_001 {
        diffs.push(format!("regret.csv has {rows} lines, expected 5001"));
    }
    verdict(
        diffs.is_empty(),
        if diffs.is_empty() {
            "3 invocations (threads 1, 1, 8): regret.csv, runs.csv, summary.json byte-identical".to_string()
        } else {
            diffs.join("; ")
        },
    )
}

fn mv_gate_timing(_: &mut Shared) -> Verdict {
    let (alpha, mu0, rho) = (0.05, 0.7, 60.0);
    // Oracle: pull s happens once t = s - 1 completed default pulls satisfy
    // t·MV₀ − 2 ≥ (1−α)·MV₀·(t+1).
    let mv0 = rho * mu0;
    let expected = (0u64..)
        .find(|&t| t as f64 * mv0 - 2.0 >= (1.0 - alpha) * mv0 * (t + 1) as f64)
        .unwrap()
        + 1;

    let env = KArmedEnv::cmab_grid(24, mu0, 0.8, 0.2, SEED).expect("env");
    let mut observed = Vec::new();
    for run in 0..5 {
        let cfg = MvConfig::new(alpha, mu0, rho, false).expect("mv config");
        let mut agent = MvCucb::new(&env, rng::run_seed(SEED, run), cfg);
        let first = (1..=100u64).find(|_| !matches!(agent.step().expect("step").action, Action::Default));
        observed.push(first);
    }
    let pass = expected == 21 && observed.iter().all(|&f| f == Some(21));
    verdict(
        pass,
        format!("oracle t={expected}, observed first regular pull {observed:?}"),
    )
}

fn main() {
    let criteria: [(&str, Check); 11] = [
        ("hard safety, CMAB", hard_safety_cmab),
        ("hard safety, mean-variance", hard_safety_mv),
        ("negative control, plain UCB", negative_control),
        ("default pulls stop growing", bounded_default_pulls),
        ("regret sandwich", regret_sandwich),
        ("gate dominance over LCB gate", gate_dominance),
        ("ridge vs batch solve", ridge_oracle),
        ("LinUCB sublinear regret", linucb_sublinear),
        ("mean-variance regret oracle", mv_regret_oracle),
        ("determinism", determinism),
        ("mean-variance gate timing", mv_gate_timing),
    ];

    let mut shared = Shared::default();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check(&mut shared);
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<32} {}  {} [{:.1}s]",
            i + 1,
            name,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
