//! CSV and JSON writers, and the trace reader used by `audit`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::format::fmt_g10;
use super::runner::{unique_labels, Comparison, ExperimentResult};
use super::HarnessError;
use crate::env::Action;
use crate::metrics::{Envelope, RunRecord};

/// Builds CSV text with LF line endings.
#[derive(Debug, Default)]
struct Csv(String);

impl Csv {
    fn header(cols: &[&str]) -> Self {
        let mut csv = Csv(String::new());
        csv.row(cols.iter().copied());
        csv
    }

    fn row<I: IntoIterator<Item = S>, S: AsRef<str>>(&mut self, cells: I) {
        for (i, c) in cells.into_iter().enumerate() {
            if i > 0 {
                self.0.push(',');
            }
            self.0.push_str(c.as_ref());
        }
        self.0.push('\n');
    }
}

pub fn envelope_csv(env: &Envelope) -> String {
    let mut csv = Csv::header(&["t", "mean", "max", "min"]);
    for i in 0..env.len() {
        csv.row([
            (i + 1).to_string(),
            fmt_g10(env.mean[i]),
            fmt_g10(env.max[i]),
            fmt_g10(env.min[i]),
        ]);
    }
    csv.0
}

pub fn runs_csv(result: &ExperimentResult) -> String {
    let mut csv = Csv::header(&["run", "final_regret", "N0_final", "first_violation"]);
    for r in &result.runs {
        csv.row([
            r.run.to_string(),
            fmt_g10(r.final_regret()),
            r.final_default_pulls().to_string(),
            r.first_violation.map(|t| t.to_string()).unwrap_or_default(),
        ]);
    }
    csv.0
}

pub fn comparison_csv(cmp: &Comparison) -> String {
    let mut csv = Csv::header(&["algorithm", "final_mean_regret", "mean_N0", "max_deficit", "violations"]);
    for row in &cmp.rows {
        csv.row([
            row.label.clone(),
            fmt_g10(row.final_mean_regret),
            fmt_g10(row.mean_n0),
            fmt_g10(row.max_deficit),
            row.violations.to_string(),
        ]);
    }
    csv.0
}

/// Per-run trace: `t,action,reward,is_default`.
pub fn trace_csv(record: &RunRecord) -> String {
    let mut csv = Csv::header(&["t", "action", "reward", "is_default"]);
    for (i, (a, &r)) in record.actions.iter().zip(&record.rewards).enumerate() {
        let is_default = matches!(a, Action::Default) as u8;
        csv.row([(i + 1).to_string(), a.to_string(), fmt_g10(r), is_default.to_string()]);
    }
    csv.0
}

/// Parses a trace written by [`trace_csv`].
pub fn parse_trace(text: &str) -> Result<RunRecord, HarnessError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::Trace("empty trace".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| HarnessError::Trace(format!("missing column `{name}`")))
    };
    let (action_col, reward_col) = (find("action")?, find("reward")?);

    let mut record = RunRecord::with_capacity(0, 0);
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| HarnessError::Trace(format!("row {}: {what}", n + 1));
        let action: Action = cells
            .get(action_col)
            .ok_or_else(|| bad("missing action"))?
            .parse()
            .map_err(|_| bad("bad action"))?;
        let reward: f64 = cells
            .get(reward_col)
            .ok_or_else(|| bad("missing reward"))?
            .trim()
            .parse()
            .map_err(|_| bad("bad reward"))?;
        record.push(action, reward);
    }
    Ok(record)
}

#[derive(Debug, Serialize)]
pub struct AlgorithmSummary {
    pub final_mean_regret: f64,
    #[serde(rename = "mean_N0")]
    pub mean_n0: f64,
    pub violations: usize,
    pub max_deficit: f64,
    pub audit_required: bool,
    pub audits_pass: bool,
}

impl AlgorithmSummary {
    fn of(r: &ExperimentResult) -> Self {
        AlgorithmSummary {
            final_mean_regret: r.mean_final_regret(),
            mean_n0: r.mean_final_default_pulls(),
            violations: r.violations(),
            max_deficit: r.max_deficit(),
            audit_required: r.audit_required(),
            audits_pass: r.audits_pass(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Summary<C: Serialize> {
    pub config_echo: C,
    pub per_algorithm: BTreeMap<String, AlgorithmSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gencb_dominates_lcb_gate: Option<bool>,
    pub audits_pass: bool,
}

pub fn summary_json(result: &ExperimentResult) -> String {
    let summary = Summary {
        config_echo: &result.config,
        per_algorithm: BTreeMap::from([(result.config.algorithm.name().to_string(), AlgorithmSummary::of(result))]),
        gencb_dominates_lcb_gate: None,
        audits_pass: result.audits_pass(),
    };
    to_json(&summary)
}

pub fn comparison_summary_json(cmp: &Comparison) -> String {
    let configs: Vec<&ExperimentConfig> = cmp.results.iter().map(|r| &r.config).collect();
    let labels = unique_labels(&cmp.results.iter().map(|r| r.config.clone()).collect::<Vec<_>>());
    let summary = Summary {
        config_echo: configs,
        per_algorithm: labels
            .into_iter()
            .zip(&cmp.results)
            .map(|(l, r)| (l, AlgorithmSummary::of(r)))
            .collect(),
        gencb_dominates_lcb_gate: cmp.dominance,
        audits_pass: cmp.passes(),
    };
    to_json(&summary)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("summary serializes");
    s.push('\n');
    s
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), HarnessError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| HarnessError::io(&path, e))
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Writes `regret.csv`, `runs.csv` and `summary.json` into `dir`.
pub fn write_experiment(dir: &Path, result: &ExperimentResult) -> Result<(), HarnessError> {
    create_dir(dir)?;
    write(dir, "regret.csv", &envelope_csv(&result.envelope))?;
    write(dir, "runs.csv", &runs_csv(result))?;
    write(dir, "summary.json", &summary_json(result))
}

/// Writes `<label>_regret.csv` and `<label>_runs.csv` per config, then
/// `comparison.csv` and `summary.json`.
pub fn write_comparison(dir: &Path, cmp: &Comparison) -> Result<(), HarnessError> {
    create_dir(dir)?;
    let labels = cmp.rows.iter().map(|r| r.label.as_str());
    for (label, result) in labels.zip(&cmp.results) {
        write(dir, &format!("{label}_regret.csv"), &envelope_csv(&result.envelope))?;
        write(dir, &format!("{label}_runs.csv"), &runs_csv(result))?;
    }
    write(dir, "comparison.csv", &comparison_csv(cmp))?;
    write(dir, "summary.json", &comparison_summary_json(cmp))
}

/// Writes one trace per run into `dir/traces/run_<index>.csv`.
pub fn write_traces(dir: &Path, records: &[RunRecord]) -> Result<(), HarnessError> {
    let traces = dir.join("traces");
    create_dir(&traces)?;
    let mut name = String::new();
    for (i, rec) in records.iter().enumerate() {
        name.clear();
        write!(name, "run_{i:04}.csv").expect("string write");
        write(&traces, &name, &trace_csv(rec))?;
    }
    Ok(())
}
