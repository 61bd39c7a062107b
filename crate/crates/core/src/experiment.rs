//! Experiment configuration and the (policy × seed) runner.
//!
//! A config is a JSON document (see `README.md` for the schema). Relative
//! paths inside it are resolved against the config file's directory.
//!
//! Outputs, per policy `p` and seed `s`:
//!
//! - `<out>/<p>_<s>_daily.csv`: one row per day and sub-campaign with columns
//!   `day,campaign,budget,cost,reward,oracle_value,regret,cum_regret,cum_clicks`.
//!   `oracle_value` and `regret` are that campaign's share of the day's oracle
//!   value and regret; the cumulative columns run over rows in file order.
//! - `<out>/<p>_meta.json`: the resolved policy configuration.
//! - `<out>/summary.csv`: mean and sample standard deviation over seeds of
//!   cumulative clicks, cumulative regret and CPC.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{generate_logged_campaign, load_criteo, CriteoMapping, ScenarioSpec, CRITEO_CAMPAIGNS};
use crate::error::{Error, Result};
use crate::eval::{oracle_allocate, MetricsTracker};
use crate::gp::RbfKernel;
use crate::knapsack::BudgetGrid;
use crate::policy::{Components, Decision, EfficiencyMetric, Policy, PolicyConfig, Variant};
use crate::sim::{read_logged_csv, EnvConfig, Environment, LoggedRecord};

/// Seeds used when a config does not list any.
pub const DEFAULT_SEEDS: [u64; 3] = [1, 42, 76];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Path to a logged-data CSV.
    LoggedCsv(PathBuf),
    /// Inline synthetic scenario.
    Spec(ScenarioSpec),
    /// Path to a JSON synthetic scenario.
    SpecPath(PathBuf),
    Criteo(CriteoSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteoSource {
    pub path: PathBuf,
    #[serde(default = "default_criteo_ids")]
    pub campaign_ids: Vec<String>,
    #[serde(default)]
    pub mapping: CriteoMapping,
}

fn default_criteo_ids() -> Vec<String> {
    CRITEO_CAMPAIGNS.iter().map(|s| s.to_string()).collect()
}

/// One policy line in a config. Unset fields inherit the experiment defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    #[serde(default)]
    pub name: Option<String>,
    pub variant: Option<Variant>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub sliding_window: Option<usize>,
    #[serde(default)]
    pub discount: Option<f64>,
    #[serde(default)]
    pub efficiency_metric: Option<EfficiencyMetric>,
    #[serde(default)]
    pub components: Option<Components>,
}

impl PolicyEntry {
    pub fn of(variant: Variant) -> Self {
        PolicyEntry {
            variant: Some(variant),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub policies: Vec<PolicyEntry>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_granularity")]
    pub granularity: usize,
    #[serde(default = "default_tp")]
    pub stationary_period: usize,
    #[serde(default = "default_window")]
    pub window_length: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Per-campaign budget floor as a fraction of the daily cap.
    #[serde(default = "default_min_budget_fraction")]
    pub min_budget_fraction: f64,
    #[serde(default = "default_cost_noise")]
    pub cost_noise: f64,
    #[serde(default = "default_reward_noise")]
    pub reward_noise_std: f64,
    #[serde(default = "default_switch")]
    pub switch_threshold: f64,
    #[serde(default)]
    pub kernel: RbfKernel,
    #[serde(default = "default_noise_variance")]
    pub noise_variance: f64,
    /// Truncate the run to this many days.
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Also write every day's knapsack value table.
    #[serde(default)]
    pub trace_acquisitions: bool,
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}
fn default_granularity() -> usize {
    500
}
fn default_tp() -> usize {
    20
}
fn default_window() -> usize {
    7
}
fn default_beta() -> f64 {
    2.0
}
fn default_tau() -> f64 {
    4.0
}
fn default_min_budget_fraction() -> f64 {
    0.02
}
fn default_cost_noise() -> f64 {
    0.25
}
fn default_reward_noise() -> f64 {
    0.1
}
fn default_switch() -> f64 {
    0.2
}
fn default_noise_variance() -> f64 {
    0.01
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, policies: Vec<PolicyEntry>) -> Self {
        ExperimentConfig {
            scenario,
            policies,
            seeds: default_seeds(),
            granularity: default_granularity(),
            stationary_period: default_tp(),
            window_length: default_window(),
            beta: default_beta(),
            tau: default_tau(),
            min_budget_fraction: default_min_budget_fraction(),
            cost_noise: default_cost_noise(),
            reward_noise_std: default_reward_noise(),
            switch_threshold: default_switch(),
            kernel: RbfKernel::default(),
            noise_variance: default_noise_variance(),
            horizon: None,
            output_dir: default_output_dir(),
            trace_acquisitions: false,
        }
    }

    /// Reads a config and resolves its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.scenario {
            Scenario::LoggedCsv(p) | Scenario::SpecPath(p) => fix(p),
            Scenario::Criteo(c) => fix(&mut c.path),
            Scenario::Spec(_) => {}
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| Err(Error::Config(format!("{field}: {reason}")));
        if self.granularity < 2 {
            return bad("granularity", format!("must be >= 2, got {}", self.granularity));
        }
        if self.seeds.is_empty() {
            return bad("seeds", "must not be empty".into());
        }
        if self.policies.is_empty() {
            return bad("policies", "must not be empty".into());
        }
        if self.stationary_period == 0 || self.window_length == 0 {
            return bad("stationary_period/window_length", "must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.min_budget_fraction) {
            return bad(
                "min_budget_fraction",
                format!("must be in [0, 1), got {}", self.min_budget_fraction),
            );
        }
        match &self.scenario {
            Scenario::LoggedCsv(p) | Scenario::SpecPath(p) if !p.exists() => {
                return bad("scenario", format!("{} does not exist", p.display()));
            }
            Scenario::Criteo(c) if !c.path.exists() => {
                return bad("scenario.criteo.path", format!("{} does not exist", c.path.display()));
            }
            _ => {}
        }
        let mut names = std::collections::BTreeSet::new();
        for (i, p) in self.policies.iter().enumerate() {
            if p.variant.is_none() {
                return bad(&format!("policies[{i}].variant"), "missing".into());
            }
            let resolved = self.policy_config(p, 0);
            resolved
                .validate()
                .map_err(|e| Error::Config(format!("policies[{i}]: {e}")))?;
            if !names.insert(self.policy_name(p)) {
                return bad(&format!("policies[{i}].name"), format!("duplicate `{}`", self.policy_name(p)));
            }
        }
        Ok(())
    }

    pub fn policy_name(&self, entry: &PolicyEntry) -> String {
        entry
            .name
            .clone()
            .unwrap_or_else(|| entry.variant.map(|v| v.label().to_string()).unwrap_or_default())
    }

    /// Full policy configuration for `entry`, seeded for Thompson draws.
    pub fn policy_config(&self, entry: &PolicyEntry, seed: u64) -> PolicyConfig {
        let mut cfg = PolicyConfig::new(
            entry.variant.unwrap_or(Variant::TucbMae),
            entry.beta.unwrap_or(self.beta),
            entry.tau.unwrap_or(self.tau),
        );
        cfg.window_length = self.window_length;
        if let Some(w) = entry.sliding_window {
            cfg.sliding_window = w;
        }
        if let Some(d) = entry.discount {
            cfg.discount = d;
        }
        if let Some(m) = entry.efficiency_metric {
            cfg.efficiency_metric = m;
        }
        if let Some(c) = entry.components {
            cfg.components = c;
        }
        cfg.kernel = self.kernel;
        cfg.noise_variance = self.noise_variance;
        cfg.seed = seed;
        cfg
    }

    pub fn run_settings(&self) -> RunSettings {
        RunSettings {
            granularity: self.granularity,
            min_budget_fraction: self.min_budget_fraction,
            horizon: self.horizon,
            env: EnvConfig {
                stationary_period: self.stationary_period,
                cost_noise: self.cost_noise,
                reward_noise_std: self.reward_noise_std,
                switch_threshold: self.switch_threshold,
                seed: 0,
            },
        }
    }

    pub fn load_records(&self) -> Result<Vec<LoggedRecord>> {
        match &self.scenario {
            Scenario::LoggedCsv(p) => read_logged_csv(p),
            Scenario::Spec(spec) => generate_logged_campaign(spec),
            Scenario::SpecPath(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let spec: ScenarioSpec = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                generate_logged_campaign(&spec)
            }
            Scenario::Criteo(c) => {
                let ids: Vec<&str> = c.campaign_ids.iter().map(|s| s.as_str()).collect();
                let load = load_criteo(&c.path, &ids, &c.mapping)?;
                for w in &load.warnings {
                    eprintln!("warning: {w}");
                }
                if load.records.is_empty() {
                    return Err(Error::Config(format!(
                        "scenario.criteo: no rows for the requested campaigns in {}",
                        c.path.display()
                    )));
                }
                Ok(load.records)
            }
        }
    }
}

/// Environment and grid settings shared by all cells of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub granularity: usize,
    pub min_budget_fraction: f64,
    pub horizon: Option<usize>,
    /// Environment settings; the seed is replaced per run.
    pub env: EnvConfig,
}

/// Result of one policy run on one seed.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub policy: String,
    pub seed: u64,
    pub campaign_ids: Vec<String>,
    pub tracker: MetricsTracker,
    pub decisions: Vec<Decision>,
    /// Days on which the simulator switched models, per campaign.
    pub env_breakpoints: Vec<Vec<usize>>,
    /// Days on which the policy detected a change, per campaign.
    pub detected_breakpoints: Vec<Vec<usize>>,
    /// Daily cap used on each day.
    pub caps: Vec<f64>,
}

/// Runs one policy against a fresh simulator built from `records`.
pub fn run_single(
    records: &[LoggedRecord],
    settings: &RunSettings,
    name: &str,
    policy_cfg: &PolicyConfig,
    seed: u64,
    keep_decisions: bool,
) -> Result<RunOutput> {
    let mut env_cfg = settings.env;
    env_cfg.seed = seed;
    let mut env = Environment::from_records(records, env_cfg)?;
    let n = env.num_campaigns();
    if settings.min_budget_fraction * n as f64 > 1.0 {
        return Err(Error::Config(format!(
            "min_budget_fraction: {} x {n} campaigns exceeds the cap",
            settings.min_budget_fraction
        )));
    }
    let mut policy = Policy::new(policy_cfg.clone(), n)?;
    let horizon = settings.horizon.map_or(env.horizon(), |h| h.min(env.horizon()));
    let mut tracker = MetricsTracker::new();
    let mut decisions = Vec::new();
    let mut observations = Vec::new();
    let mut caps = Vec::with_capacity(horizon);
    for day in 0..horizon {
        let cap = env.daily_cap(day);
        caps.push(cap);
        let grid = BudgetGrid::new(settings.min_budget_fraction * cap, cap, settings.granularity)
            .map_err(|e| Error::invalid("daily grid", format!("day {day}, cap {cap}: {e}")))?;
        let decision = policy.allocate_day(&grid, cap, &observations)?;
        let models = env.current_models();
        let oracle = oracle_allocate(&models, &grid, cap)?;
        let budgets = decision.allocation.budgets.clone();
        observations = env.step(&budgets)?;
        let costs: Vec<f64> = observations.iter().map(|o| o.cost).collect();
        let rewards: Vec<f64> = observations.iter().map(|o| o.reward).collect();
        tracker.record(day, &models, &oracle, &budgets, &costs, &rewards);
        if keep_decisions {
            decisions.push(decision);
        }
    }
    Ok(RunOutput {
        policy: name.to_string(),
        seed,
        campaign_ids: env.campaign_ids().iter().map(|s| s.to_string()).collect(),
        env_breakpoints: (0..n).map(|j| env.breakpoints(j).to_vec()).collect(),
        detected_breakpoints: policy.buffers().iter().map(|b| b.breakpoints().to_vec()).collect(),
        tracker,
        decisions,
        caps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRow {
    pub day: usize,
    pub campaign: String,
    pub budget: f64,
    pub cost: f64,
    pub reward: f64,
    pub oracle_value: f64,
    pub regret: f64,
    pub cum_regret: f64,
    pub cum_clicks: f64,
}

impl RunOutput {
    /// Per-day, per-campaign rows in the daily CSV layout.
    pub fn daily_rows(&self) -> Vec<DailyRow> {
        let mut rows = Vec::with_capacity(self.tracker.days().len() * self.campaign_ids.len());
        let (mut cum_regret, mut cum_clicks) = (0.0, 0.0);
        for m in self.tracker.days() {
            for (j, id) in self.campaign_ids.iter().enumerate() {
                let regret = m.oracle_rewards[j] - m.expected_rewards[j];
                cum_regret += regret;
                cum_clicks += m.rewards[j];
                rows.push(DailyRow {
                    day: m.day,
                    campaign: id.clone(),
                    budget: m.budgets[j],
                    cost: m.costs[j],
                    reward: m.rewards[j],
                    oracle_value: m.oracle_rewards[j],
                    regret,
                    cum_regret,
                    cum_clicks,
                });
            }
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub variant: String,
    pub runs: usize,
    pub clicks_mean: f64,
    pub clicks_std: f64,
    pub regret_mean: f64,
    pub regret_std: f64,
    pub cpc_mean: Option<f64>,
    pub cpc_std: Option<f64>,
}

/// Sample mean and standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn daily_csv_path(out: &Path, policy: &str, seed: u64) -> PathBuf {
    out.join(format!("{}_{seed}_daily.csv", file_stem(policy)))
}

pub fn meta_json_path(out: &Path, policy: &str) -> PathBuf {
    out.join(format!("{}_meta.json", file_stem(policy)))
}

pub fn acquisition_csv_path(out: &Path, policy: &str, seed: u64) -> PathBuf {
    out.join(format!("{}_{seed}_acquisitions.csv", file_stem(policy)))
}

pub fn summary_csv_path(out: &Path) -> PathBuf {
    out.join("summary.csv")
}

/// Resolved policy settings written next to the daily CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeta {
    pub name: String,
    pub variant: String,
    pub seeds: Vec<u64>,
    pub granularity: usize,
    pub min_budget_fraction: f64,
    pub config: PolicyConfig,
}

/// In-memory results of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub summary: Vec<SummaryRow>,
    pub runs: Vec<RunOutput>,
    pub output_dir: PathBuf,
}

impl ExperimentReport {
    pub fn summary_for(&self, policy: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.policy == policy)
    }
}

/// Runs every (policy, seed) pair and writes the output files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let records = cfg.load_records()?;
    let report = run_in_memory(cfg, &records)?;
    write_report(cfg, &report)?;
    Ok(report)
}

/// Runs every (policy, seed) pair on `records` without touching the disk.
pub fn run_in_memory(cfg: &ExperimentConfig, records: &[LoggedRecord]) -> Result<ExperimentReport> {
    let settings = cfg.run_settings();
    let cells: Vec<(&PolicyEntry, u64)> = cfg
        .policies
        .iter()
        .flat_map(|p| cfg.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let runs = cells
        .par_iter()
        .map(|&(entry, seed)| {
            let name = cfg.policy_name(entry);
            let pcfg = cfg.policy_config(entry, seed);
            run_single(records, &settings, &name, &pcfg, seed, cfg.trace_acquisitions)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = cfg
        .policies
        .iter()
        .map(|entry| {
            let name = cfg.policy_name(entry);
            let mine: Vec<&RunOutput> = runs.iter().filter(|r| r.policy == name).collect();
            summarize(&name, entry.variant.unwrap_or(Variant::TucbMae), &mine)
        })
        .collect();
    Ok(ExperimentReport {
        summary,
        runs,
        output_dir: cfg.output_dir.clone(),
    })
}

fn summarize(name: &str, variant: Variant, runs: &[&RunOutput]) -> SummaryRow {
    let clicks: Vec<f64> = runs.iter().map(|r| r.tracker.cumulative_clicks()).collect();
    let regret: Vec<f64> = runs.iter().map(|r| r.tracker.cumulative_regret()).collect();
    let cpc: Vec<f64> = runs.iter().filter_map(|r| r.tracker.cpc()).collect();
    let (clicks_mean, clicks_std) = mean_std(&clicks);
    let (regret_mean, regret_std) = mean_std(&regret);
    let (cpc_mean, cpc_std) = if cpc.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&cpc);
        (Some(m), Some(s))
    };
    SummaryRow {
        policy: name.to_string(),
        variant: variant.label().to_string(),
        runs: runs.len(),
        clicks_mean,
        clicks_std,
        regret_mean,
        regret_std,
        cpc_mean,
        cpc_std,
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Serialize)]
struct AcquisitionRow<'a> {
    day: usize,
    campaign: &'a str,
    theta: f64,
    b_max: Option<f64>,
    budget: f64,
    mean: f64,
    std: f64,
    value: f64,
}

/// Writes daily CSVs, metadata and the summary for a finished report.
pub fn write_report(cfg: &ExperimentConfig, report: &ExperimentReport) -> Result<()> {
    let out = &report.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for run in &report.runs {
        write_csv(&daily_csv_path(out, &run.policy, run.seed), run.daily_rows())?;
        if cfg.trace_acquisitions {
            let mut rows = Vec::new();
            for (d, cap) in run.decisions.iter().zip(&run.caps) {
                let grid = BudgetGrid::new(cfg.min_budget_fraction * cap, *cap, cfg.granularity)?;
                for (j, id) in run.campaign_ids.iter().enumerate() {
                    for (i, &budget) in grid.values().iter().enumerate() {
                        rows.push(AcquisitionRow {
                            day: d.day,
                            campaign: id,
                            theta: d.thetas[j],
                            b_max: d.b_max[j],
                            budget,
                            mean: d.means[j][i],
                            std: d.stds[j][i],
                            value: d.acquisitions[j][i],
                        });
                    }
                }
            }
            write_csv(&acquisition_csv_path(out, &run.policy, run.seed), rows)?;
        }
    }
    for entry in &cfg.policies {
        let name = cfg.policy_name(entry);
        let meta = PolicyMeta {
            variant: entry.variant.unwrap_or(Variant::TucbMae).label().to_string(),
            seeds: cfg.seeds.clone(),
            granularity: cfg.granularity,
            min_budget_fraction: cfg.min_budget_fraction,
            config: cfg.policy_config(entry, 0),
            name: name.clone(),
        };
        let path = meta_json_path(out, &name);
        let text = serde_json::to_string_pretty(&meta)?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    }
    write_csv(&summary_csv_path(out), &report.summary)
}

/// Names of the ablation arms, in output order.
pub const ABLATION_ARMS: [&str; 4] = ["TUCB-MAE", "TUCB-MAE-NoSM", "TUCB-MAE-NoCPC", "NoTUCB-MAE-WithCPC"];

/// The four ablation policies derived from `base`.
pub fn ablation_policies(base: &PolicyEntry) -> Vec<PolicyEntry> {
    let full = Components::default();
    let arms = [
        full,
        Components { saturating_mean: false, ..full },
        Components { efficiency: false, ..full },
        Components { targeted_ucb: false, ..full },
    ];
    ABLATION_ARMS
        .iter()
        .zip(arms)
        .map(|(name, components)| PolicyEntry {
            name: Some(name.to_string()),
            variant: Some(Variant::TucbMae),
            components: Some(components),
            ..base.clone()
        })
        .collect()
}

/// Replaces the config's policies with the ablation arms of its first
/// `TUCB_MAE` entry (or a default one) and runs it.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    let base = cfg
        .policies
        .iter()
        .find(|p| p.variant == Some(Variant::TucbMae))
        .cloned()
        .unwrap_or_else(|| PolicyEntry::of(Variant::TucbMae));
    cfg.policies = ablation_policies(&base);
    run_experiment(&cfg)
}
