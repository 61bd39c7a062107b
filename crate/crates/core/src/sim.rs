//! Campaign simulator driven by logged data.
//!
//! Each sub-campaign's cost-to-clicks curve is a power law `α·x^ω` fitted to
//! the logged history. The simulator keeps two fits per campaign: the
//! *current* model that generates rewards, and a *future* model fitted on the
//! next `T_p` days of logs. When the two disagree on `α` by more than the
//! switch threshold (20% by default), and the look-ahead window starts in the
//! new regime, the future model takes over and a breakpoint is recorded.
//! Breakpoints are kept at least `T_p` days apart.
//!
//! Spend does not equal budget: the realized cost is a normal draw around the
//! budget truncated to `[0, 2·budget]`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Exact header of the logged-data CSV.
pub const LOGGED_HEADER: [&str; 7] = [
    "date",
    "group_id",
    "sub_campaign_id",
    "channel",
    "cost",
    "clicks",
    "conversions",
];

/// One day of one sub-campaign's logged delivery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedRecord {
    pub date: NaiveDate,
    pub group_id: String,
    pub sub_campaign_id: String,
    pub channel: String,
    pub cost: f64,
    pub clicks: u64,
    pub conversions: u64,
}

impl LoggedRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.cost >= 0.0) || !self.cost.is_finite() {
            return Err(format!("cost must be a finite value >= 0, got {}", self.cost));
        }
        if self.sub_campaign_id.is_empty() {
            return Err("empty sub_campaign_id".into());
        }
        Ok(())
    }
}

pub fn write_logged<W: Write>(writer: W, records: &[LoggedRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

pub fn write_logged_csv(path: &Path, records: &[LoggedRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_logged(std::io::BufWriter::new(file), records)
}

/// Parses logged records; `origin` only labels error messages.
pub fn read_logged<R: Read>(reader: R, origin: &Path) -> Result<Vec<LoggedRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(LOGGED_HEADER.iter().copied()) {
        return Err(Error::MalformedRow {
            path: origin.to_path_buf(),
            row: 0,
            reason: format!(
                "header must be `{}`, got `{}`",
                LOGGED_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<LoggedRecord>().enumerate() {
        let malformed = |reason: String| Error::MalformedRow {
            path: origin.to_path_buf(),
            row: i + 1,
            reason,
        };
        let rec = row.map_err(|e| malformed(e.to_string()))?;
        rec.validate().map_err(malformed)?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_logged_csv(path: &Path) -> Result<Vec<LoggedRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_logged(std::io::BufReader::new(file), path)
}

/// Ground-truth curve `α·x^ω` for one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawModel {
    pub alpha: f64,
    pub omega: f64,
}

impl PowerLawModel {
    pub fn new(alpha: f64, omega: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid("power law", format!("alpha must be > 0, got {alpha}")));
        }
        if !(omega > 0.0 && omega <= 1.0) {
            return Err(Error::invalid(
                "power law",
                format!("omega must be in (0, 1], got {omega}"),
            ));
        }
        Ok(PowerLawModel { alpha, omega })
    }

    /// Noise-free clicks at `cost`.
    pub fn expected_reward(&self, cost: f64) -> f64 {
        if cost <= 0.0 {
            0.0
        } else {
            self.alpha * cost.powf(self.omega)
        }
    }

    /// Clicks at `cost` plus `N(0, noise_std²)` noise, clamped at zero.
    pub fn realize_reward<R: Rng + ?Sized>(&self, cost: f64, noise_std: f64, rng: &mut R) -> f64 {
        let eps = if noise_std > 0.0 {
            Normal::new(0.0, noise_std)
                .expect("noise std is positive and finite")
                .sample(rng)
        } else {
            0.0
        };
        (self.expected_reward(cost) + eps).max(0.0)
    }
}

/// Smallest `ω` a fit may return.
pub const MIN_OMEGA: f64 = 1e-6;

/// Least-squares fit of `log y = log α + ω log x`.
///
/// Points with non-positive cost or reward are dropped. `ω` is clamped into
/// `(0, 1]` so every fitted curve is increasing with diminishing returns.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawModel> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = logs.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let nf = n as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 1e-12 * nf) {
        return Err(Error::InsufficientData { needed: 2, got: 1 });
    }
    let omega = (sxy / sxx).clamp(MIN_OMEGA, 1.0);
    // intercept re-solved for the clamped slope
    let alpha = (my - omega * mx).exp();
    PowerLawModel::new(alpha, omega)
}

/// Normal around `budget` truncated to `[0, 2·budget]`, by rejection.
pub fn sample_cost<R: Rng + ?Sized>(budget: f64, sigma: f64, rng: &mut R) -> f64 {
    if budget <= 0.0 {
        return 0.0;
    }
    if sigma <= 0.0 {
        return budget;
    }
    let dist = Normal::new(budget, sigma).expect("sigma is positive and finite");
    loop {
        let x = dist.sample(rng);
        if (0.0..=2.0 * budget).contains(&x) {
            return x;
        }
    }
}

pub fn days_in_month(year: i32, month: u32) -> u32 {
    let first = NaiveDate::from_ymd_opt(year, month, 1).expect("valid month");
    let next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)
    }
    .expect("valid month");
    (next - first).num_days() as u32
}

/// Group daily cap for one month: the month's total logged cost spread evenly
/// over its calendar days.
pub fn daily_budget_cap(records: &[LoggedRecord], year: i32, month: u32) -> Result<f64> {
    let month_records: Vec<&LoggedRecord> = records
        .iter()
        .filter(|r| r.date.year() == year && r.date.month() == month)
        .collect();
    if month_records.is_empty() {
        return Err(Error::EmptyMonth(format!("{year:04}-{month:02}")));
    }
    let total: f64 = month_records.iter().map(|r| r.cost).sum();
    Ok(total / days_in_month(year, month) as f64)
}

/// The `α`-gap rule: switch when `|α_c − α_f| / α_c` exceeds `threshold` and
/// at least `min_gap` days have passed since the previous switch.
pub fn switch_rule(
    current: &PowerLawModel,
    future: &PowerLawModel,
    days_since_switch: usize,
    min_gap: usize,
    threshold: f64,
) -> bool {
    days_since_switch >= min_gap && (current.alpha - future.alpha).abs() / current.alpha > threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Minimum stationary period `T_p`; also the look-ahead window length.
    pub stationary_period: usize,
    /// Cost noise standard deviation as a fraction of the allocated budget.
    pub cost_noise: f64,
    /// Standard deviation of the additive click noise.
    pub reward_noise_std: f64,
    pub switch_threshold: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            stationary_period: 20,
            cost_noise: 0.25,
            reward_noise_std: 0.1,
            switch_threshold: 0.2,
            seed: 1,
        }
    }
}

/// What the platform reports back for one campaign on one day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub campaign: usize,
    pub day: usize,
    pub budget: f64,
    pub cost: f64,
    pub reward: f64,
    pub conversions: f64,
}

#[derive(Debug, Clone)]
struct CampaignState {
    id: String,
    channel: String,
    /// Logged `(cost, clicks, conversions)` per simulation day.
    logged: Vec<Vec<(f64, f64, f64)>>,
    current: PowerLawModel,
    future: Option<PowerLawModel>,
    /// Points the current model is fitted on: the logged seed window of the
    /// phase followed by realized observations.
    phase_points: Vec<(f64, f64)>,
    conversion_rate: f64,
    phase: usize,
    breakpoints: Vec<usize>,
    last_switch: usize,
    /// Set by [`Environment::plant_model`]; disables log-driven switches.
    pinned: bool,
}

/// Simulation state for one experiment run.
#[derive(Debug, Clone)]
pub struct Environment {
    config: EnvConfig,
    group_id: String,
    start: NaiveDate,
    horizon: usize,
    day: usize,
    caps: Vec<f64>,
    campaigns: Vec<CampaignState>,
}

fn window_points(logged: &[Vec<(f64, f64, f64)>], from: usize, len: usize) -> Vec<(f64, f64)> {
    logged
        .iter()
        .skip(from)
        .take(len)
        .flatten()
        .map(|&(c, k, _)| (c, k))
        .collect()
}

fn window_conversion_rate(logged: &[Vec<(f64, f64, f64)>], from: usize, len: usize) -> f64 {
    let (clicks, conv) = logged
        .iter()
        .skip(from)
        .take(len)
        .flatten()
        .fold((0.0, 0.0), |(a, b), &(_, k, v)| (a + k, b + v));
    if clicks > 0.0 {
        conv / clicks
    } else {
        0.0
    }
}

/// How much worse than its own fit the look-ahead window must be explained
/// by the current model before a switch. The `α` gap alone fires on noise
/// because `α` and `ω` trade off in a log-log fit.
const MISFIT_RATIO: f64 = 2.0;

fn log_sse(model: &PowerLawModel, points: &[(f64, f64)]) -> f64 {
    points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|&(x, y)| {
            let r = y.ln() - model.expected_reward(x).ln();
            r * r
        })
        .sum()
}

impl Environment {
    /// Builds the simulator for one campaign group.
    ///
    /// The horizon runs from the earliest to the latest logged date. The
    /// initial model of each sub-campaign is fitted on its first `T_p` days.
    pub fn from_records(records: &[LoggedRecord], config: EnvConfig) -> Result<Self> {
        if config.stationary_period == 0 {
            return Err(Error::invalid("env config", "stationary period must be >= 1"));
        }
        if !(config.cost_noise >= 0.0) || !(config.reward_noise_std >= 0.0) {
            return Err(Error::invalid("env config", "noise levels must be >= 0"));
        }
        let first = records
            .first()
            .ok_or_else(|| Error::invalid("logged data", "no records"))?;
        let group_id = first.group_id.clone();
        if let Some(r) = records.iter().find(|r| r.group_id != group_id) {
            return Err(Error::invalid(
                "logged data",
                format!("records span several groups ({group_id}, {})", r.group_id),
            ));
        }
        let start = records.iter().map(|r| r.date).min().expect("nonempty");
        let end = records.iter().map(|r| r.date).max().expect("nonempty");
        let horizon = (end - start).num_days() as usize + 1;

        let mut month_caps: BTreeMap<(i32, u32), f64> = BTreeMap::new();
        let mut caps = Vec::with_capacity(horizon);
        for d in 0..horizon {
            let date = start + chrono::Days::new(d as u64);
            let key = (date.year(), date.month());
            let cap = match month_caps.get(&key) {
                Some(c) => *c,
                None => {
                    let c = daily_budget_cap(records, key.0, key.1)?;
                    month_caps.insert(key, c);
                    c
                }
            };
            caps.push(cap);
        }

        let mut order: Vec<(String, String)> = Vec::new();
        for r in records {
            if !order.iter().any(|(id, _)| *id == r.sub_campaign_id) {
                order.push((r.sub_campaign_id.clone(), r.channel.clone()));
            }
        }
        let tp = config.stationary_period;
        let mut campaigns = Vec::with_capacity(order.len());
        for (id, channel) in order {
            let mut logged = vec![Vec::new(); horizon];
            for r in records.iter().filter(|r| r.sub_campaign_id == id) {
                let d = (r.date - start).num_days() as usize;
                logged[d].push((r.cost, r.clicks as f64, r.conversions as f64));
            }
            let phase_points = window_points(&logged, 0, tp);
            let current = fit_power_law(&phase_points).map_err(|e| {
                Error::invalid(
                    "logged data",
                    format!("sub-campaign {id}: initial {tp}-day window: {e}"),
                )
            })?;
            let conversion_rate = window_conversion_rate(&logged, 0, tp);
            campaigns.push(CampaignState {
                id,
                channel,
                logged,
                current,
                future: None,
                phase_points,
                conversion_rate,
                phase: 0,
                breakpoints: Vec::new(),
                last_switch: 0,
                pinned: false,
            });
        }
        Ok(Environment {
            config,
            group_id,
            start,
            horizon,
            day: 0,
            caps,
            campaigns,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn group_id(&self) -> &str {
        &self.group_id
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Index of the next day to simulate.
    pub fn day(&self) -> usize {
        self.day
    }

    pub fn num_campaigns(&self) -> usize {
        self.campaigns.len()
    }

    pub fn campaign_ids(&self) -> Vec<&str> {
        self.campaigns.iter().map(|c| c.id.as_str()).collect()
    }

    pub fn channels(&self) -> Vec<&str> {
        self.campaigns.iter().map(|c| c.channel.as_str()).collect()
    }

    pub fn daily_cap(&self, day: usize) -> f64 {
        self.caps[day.min(self.horizon - 1)]
    }

    pub fn caps(&self) -> &[f64] {
        &self.caps
    }

    pub fn current_models(&self) -> Vec<PowerLawModel> {
        self.campaigns.iter().map(|c| c.current).collect()
    }

    pub fn future_model(&self, campaign: usize) -> Option<PowerLawModel> {
        self.campaigns[campaign].future
    }

    pub fn phase(&self, campaign: usize) -> usize {
        self.campaigns[campaign].phase
    }

    /// Days on which a new reward model took effect for `campaign`.
    pub fn breakpoints(&self, campaign: usize) -> &[usize] {
        &self.campaigns[campaign].breakpoints
    }

    /// Replaces the current model of `campaign` from the next simulated day
    /// on, as if a switch had fired: records a breakpoint, restarts the
    /// cooldown and re-seeds the phase with noise-free points of `model` at
    /// the logged costs of the coming window. Used to plant shifts of a known
    /// size in test fixtures. Log-driven switches stay off for this campaign
    /// afterwards, since the logs no longer describe it.
    pub fn plant_model(&mut self, campaign: usize, model: PowerLawModel) {
        let tp = self.config.stationary_period;
        let day = self.day;
        let c = &mut self.campaigns[campaign];
        c.current = model;
        c.phase_points = window_points(&c.logged, day, tp)
            .into_iter()
            .chain(window_points(&c.logged, day.saturating_sub(tp), tp))
            .map(|(x, _)| (x, model.expected_reward(x)))
            .collect();
        c.phase += 1;
        c.breakpoints.push(day);
        c.last_switch = day;
        c.pinned = true;
    }

    /// Simulates one day: realize cost and clicks for every campaign, refit
    /// the models, then apply any model switches for the next day.
    pub fn step(&mut self, budgets: &[f64]) -> Result<Vec<Observation>> {
        if self.day >= self.horizon {
            return Err(Error::HorizonExceeded {
                day: self.day,
                horizon: self.horizon,
            });
        }
        if budgets.len() != self.campaigns.len() {
            return Err(Error::invalid(
                "allocation",
                format!("{} budgets for {} campaigns", budgets.len(), self.campaigns.len()),
            ));
        }
        if let Some(b) = budgets.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
            return Err(Error::invalid("allocation", format!("budget must be >= 0, got {b}")));
        }
        let day = self.day;
        let cfg = self.config;
        let mut out = Vec::with_capacity(budgets.len());
        for (j, (c, &budget)) in self.campaigns.iter_mut().zip(budgets).enumerate() {
            let cost = sample_cost(
                budget,
                cfg.cost_noise * budget,
                &mut rng::stream(cfg.seed, j, day, Purpose::Cost),
            );
            let reward = c.current.realize_reward(
                cost,
                cfg.reward_noise_std,
                &mut rng::stream(cfg.seed, j, day, Purpose::Reward),
            );
            out.push(Observation {
                campaign: j,
                day,
                budget,
                cost,
                reward,
                conversions: reward * c.conversion_rate,
            });
            c.phase_points.push((cost, reward));
            if let Ok(m) = fit_power_law(&c.phase_points) {
                c.current = m;
            }
        }
        self.day += 1;
        for j in 0..self.campaigns.len() {
            self.refit_future(j);
            self.maybe_switch_model(j);
        }
        Ok(out)
    }

    fn refit_future(&mut self, j: usize) {
        let tp = self.config.stationary_period;
        let c = &mut self.campaigns[j];
        // a truncated look-ahead near the end of the log is too noisy to act on
        c.future = if self.day + tp <= c.logged.len() {
            fit_power_law(&window_points(&c.logged, self.day, tp)).ok()
        } else {
            None
        };
    }

    /// Replaces the current model of `campaign` by its future model when the
    /// `α` gap exceeds the threshold, the cooldown has elapsed, the current
    /// model misfits the look-ahead window and that window begins in the new
    /// regime. Records a breakpoint at the current day counter.
    pub fn maybe_switch_model(&mut self, campaign: usize) -> bool {
        let tp = self.config.stationary_period;
        let day = self.day;
        let threshold = self.config.switch_threshold;
        let c = &mut self.campaigns[campaign];
        let Some(future) = c.future.filter(|_| !c.pinned) else {
            return false;
        };
        if !switch_rule(&c.current, &future, day - c.last_switch, tp, threshold) {
            return false;
        }
        let window = window_points(&c.logged, day, tp);
        if log_sse(&c.current, &window) <= MISFIT_RATIO * log_sse(&future, &window) {
            return false;
        }
        if !window_starts_new_regime(&c.current, &future, &c.logged, day, tp) {
            return false;
        }
        c.current = future;
        c.phase_points = window_points(&c.logged, day, tp);
        c.conversion_rate = window_conversion_rate(&c.logged, day, tp);
        c.phase += 1;
        c.breakpoints.push(day);
        c.last_switch = day;
        true
    }
}

/// True when the first day of the look-ahead window is better explained by a
/// model fitted on the rest of the window than by `current`, i.e. the window
/// starts inside the new regime.
fn window_starts_new_regime(
    current: &PowerLawModel,
    future: &PowerLawModel,
    logged: &[Vec<(f64, f64, f64)>],
    from: usize,
    len: usize,
) -> bool {
    let first = window_points(logged, from, 1);
    if first.is_empty() {
        return true;
    }
    let rest = window_points(logged, from + 1, len.saturating_sub(1));
    let ahead = if rest.len() >= 3 {
        fit_power_law(&rest).unwrap_or(*future)
    } else {
        *future
    };
    log_sse(&ahead, &first) < log_sse(current, &first)
}
