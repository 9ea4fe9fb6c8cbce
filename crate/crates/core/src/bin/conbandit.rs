use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use conbandit::gate::{ConservativeConfig, MvConfig};
use conbandit::harness::{self, output, EnvInstance, Execution, ExperimentConfig, HarnessError};
use conbandit::harness::format::fmt_g10;
use conbandit::metrics;

#[derive(Parser)]
#[command(name = "conbandit", version, about = "Conservative bandit experiments with constraint auditing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write one trace CSV per run under <out>/traces.
        #[arg(long)]
        traces: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run several configs on the same environment and tabulate them.
    Compare {
        #[arg(required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Audit a trace CSV against the reward (or mean-variance) constraint.
    Audit {
        trace: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        mu0: f64,
        /// Audit the mean-variance constraint with this ρ instead.
        #[arg(long)]
        rho: Option<f64>,
    },
}

#[derive(Args, Clone)]
struct Overrides {
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replications (1 runs serially).
    #[arg(long)]
    threads: Option<usize>,
    /// Allow mean-variance runs that violate αρμ₀ > 2.
    #[arg(long)]
    unsafe_mv: bool,
}

impl Overrides {
    fn load(&self, path: &Path) -> Result<ExperimentConfig, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        if let Some(runs) = self.runs {
            cfg.runs = runs;
        }
        if let Some(horizon) = self.horizon {
            cfg.horizon = horizon;
        }
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        cfg.unsafe_mv |= self.unsafe_mv;
        cfg.validate()?;
        Ok(cfg)
    }

    fn execution(&self) -> Execution {
        Execution::from_threads(self.threads)
    }
}

fn run(config: &Path, out: &Path, traces: bool, overrides: &Overrides) -> Result<bool, HarnessError> {
    let cfg = overrides.load(config)?;
    let result = harness::run_experiment(&cfg, overrides.execution())?;
    output::write_experiment(out, &result)?;
    if traces {
        let env = EnvInstance::build(&cfg)?;
        let records = (0..cfg.runs)
            .map(|run| harness::simulate(&cfg, &env, run))
            .collect::<Result<Vec<_>, _>>()?;
        output::write_traces(out, &records)?;
    }
    println!(
        "{}: final mean regret {}, mean N0 {}, violations {}/{}{}",
        cfg.algorithm,
        fmt_g10(result.mean_final_regret()),
        fmt_g10(result.mean_final_default_pulls()),
        result.violations(),
        cfg.runs,
        if result.audit_required() { "" } else { " (not audited)" },
    );
    Ok(result.audits_pass())
}

fn compare(configs: &[PathBuf], out: &Path, overrides: &Overrides) -> Result<bool, HarnessError> {
    let cfgs = configs
        .iter()
        .map(|p| overrides.load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let cmp = harness::compare(&cfgs, overrides.execution())?;
    output::write_comparison(out, &cmp)?;
    print!("{}", output::comparison_csv(&cmp));
    if cmp.dominance == Some(false) {
        eprintln!("gencb used more default pulls than lcb_gate");
    }
    Ok(cmp.passes())
}

fn audit(trace: &Path, alpha: f64, mu0: f64, rho: Option<f64>) -> Result<bool, HarnessError> {
    let text = std::fs::read_to_string(trace).map_err(|e| HarnessError::io(trace, e))?;
    let record = output::parse_trace(&text)?;
    let verdict = match rho {
        Some(rho) => metrics::audit_mv_constraint(&record, &MvConfig::new(alpha, mu0, rho, true)?),
        None => {
            let cap = record.rewards.iter().copied().fold(1.0, f64::max);
            metrics::audit_constraint(&record, &ConservativeConfig::new(alpha, mu0, cap)?)
        }
    };
    match verdict {
        None => println!("ok: {} steps, no violation", record.len()),
        Some(t) => println!("violation at t={t}"),
    }
    Ok(verdict.is_none())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run {
            config,
            out,
            traces,
            overrides,
        } => run(config, out, *traces, overrides),
        Command::Compare { configs, out, overrides } => compare(configs, out, overrides),
        Command::Audit { trace, alpha, mu0, rho } => audit(trace, *alpha, *mu0, *rho),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
