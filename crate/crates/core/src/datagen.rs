//! Synthetic logged campaigns and the Criteo attribution adapter.
//!
//! Synthetic logs are piecewise-stationary: every sub-campaign follows a
//! sequence of power-law phases. The operator's daily budget is a clipped
//! Gaussian random walk around the campaign's spend level; realized cost and
//! clicks go through the same noise model the simulator uses.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::NaiveDate;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::sim::{sample_cost, LoggedRecord, PowerLawModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    /// First day (0-based) on which this curve applies.
    pub start: usize,
    pub alpha: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub id: String,
    #[serde(default = "default_channel")]
    pub channel: String,
    /// Average daily budget the operator sets.
    pub spend_level: f64,
    #[serde(default = "default_conversion_rate")]
    pub conversion_rate: f64,
    pub phases: Vec<PhaseSpec>,
}

fn default_channel() -> String {
    "display".into()
}

fn default_conversion_rate() -> f64 {
    0.05
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 1, 1).expect("valid date")
}

fn default_group() -> String {
    "synthetic".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default = "default_group")]
    pub group_id: String,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    pub horizon: usize,
    #[serde(default = "default_tp")]
    pub stationary_period: usize,
    /// Minimum change of expected reward at the cap between adjacent phases.
    #[serde(default)]
    pub tau: f64,
    #[serde(default = "default_cost_noise")]
    pub cost_noise: f64,
    #[serde(default = "default_reward_noise")]
    pub reward_noise_std: f64,
    /// Daily step of the operator budget walk, relative to spend level. The
    /// walk reverts toward the spend level at rate `1 - WALK_PERSISTENCE`.
    #[serde(default = "default_walk")]
    pub budget_walk: f64,
    #[serde(default)]
    pub seed: u64,
    pub campaigns: Vec<CampaignSpec>,
}

fn default_tp() -> usize {
    20
}
fn default_cost_noise() -> f64 {
    0.25
}
fn default_reward_noise() -> f64 {
    0.1
}
fn default_walk() -> f64 {
    0.1
}

/// Bounds of the operator budget walk, relative to the spend level.
const WALK_BOUNDS: (f64, f64) = (0.25, 1.75);
const WALK_PERSISTENCE: f64 = 0.8;

impl ScenarioSpec {
    /// Approximate daily group cap: the sum of spend levels.
    pub fn cap_budget(&self) -> f64 {
        self.campaigns.iter().map(|c| c.spend_level).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::invalid("scenario", reason));
        if self.horizon == 0 {
            return bad("horizon must be >= 1".into());
        }
        if self.campaigns.is_empty() {
            return bad("no campaigns".into());
        }
        if !(self.cost_noise >= 0.0) || !(self.reward_noise_std >= 0.0) || !(self.budget_walk >= 0.0)
        {
            return bad("noise levels must be >= 0".into());
        }
        let cap = self.cap_budget();
        for c in &self.campaigns {
            if !(c.spend_level > 0.0) {
                return bad(format!("{}: spend level must be > 0", c.id));
            }
            if !(0.0..=1.0).contains(&c.conversion_rate) {
                return bad(format!("{}: conversion rate must be in [0, 1]", c.id));
            }
            let Some(first) = c.phases.first() else {
                return bad(format!("{}: no phases", c.id));
            };
            if first.start != 0 {
                return bad(format!("{}: first phase must start on day 0", c.id));
            }
            for p in &c.phases {
                PowerLawModel::new(p.alpha, p.omega)
                    .map_err(|e| Error::invalid("scenario", format!("{}: {e}", c.id)))?;
                if p.start >= self.horizon {
                    return bad(format!("{}: phase starts after horizon", c.id));
                }
            }
            for w in c.phases.windows(2) {
                if w[1].start <= w[0].start {
                    return bad(format!("{}: phase starts must increase", c.id));
                }
                if w[1].start - w[0].start < self.stationary_period {
                    return bad(format!(
                        "{}: phases at days {} and {} closer than {} days",
                        c.id, w[0].start, w[1].start, self.stationary_period
                    ));
                }
                let a = PowerLawModel::new(w[0].alpha, w[0].omega)?.expected_reward(cap);
                let b = PowerLawModel::new(w[1].alpha, w[1].omega)?.expected_reward(cap);
                if (a - b).abs() < self.tau {
                    return bad(format!(
                        "{}: phase change at day {} moves reward at cap by {:.3} < tau {}",
                        c.id,
                        w[1].start,
                        (a - b).abs(),
                        self.tau
                    ));
                }
            }
        }
        Ok(())
    }

    fn phase_at(c: &CampaignSpec, day: usize) -> PowerLawModel {
        let p = c
            .phases
            .iter()
            .rev()
            .find(|p| p.start <= day)
            .expect("first phase starts at day 0");
        PowerLawModel {
            alpha: p.alpha,
            omega: p.omega,
        }
    }
}

/// Draws a full logged history for `spec`, day-major, one record per
/// sub-campaign and day.
pub fn generate_logged_campaign(spec: &ScenarioSpec) -> Result<Vec<LoggedRecord>> {
    spec.validate()?;
    let mut budgets: Vec<f64> = spec.campaigns.iter().map(|c| c.spend_level).collect();
    let mut out = Vec::with_capacity(spec.horizon * spec.campaigns.len());
    for day in 0..spec.horizon {
        let date = spec.start_date + chrono::Days::new(day as u64);
        for (j, c) in spec.campaigns.iter().enumerate() {
            if day > 0 && spec.budget_walk > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng::stream(spec.seed, j, day, Purpose::Budget));
                let drift = WALK_PERSISTENCE * (budgets[j] - c.spend_level);
                budgets[j] = (c.spend_level + drift + spec.budget_walk * c.spend_level * z)
                    .clamp(WALK_BOUNDS.0 * c.spend_level, WALK_BOUNDS.1 * c.spend_level);
            }
            let budget = budgets[j];
            let cost = sample_cost(
                budget,
                spec.cost_noise * budget,
                &mut rng::stream(spec.seed, j, day, Purpose::Cost),
            );
            let model = ScenarioSpec::phase_at(c, day);
            let reward = model.realize_reward(
                cost,
                spec.reward_noise_std,
                &mut rng::stream(spec.seed, j, day, Purpose::Reward),
            );
            let clicks = reward.round() as u64;
            let conversions = if clicks > 0 && c.conversion_rate > 0.0 {
                Binomial::new(clicks, c.conversion_rate)
                    .expect("valid binomial")
                    .sample(&mut rng::stream(spec.seed, j, day, Purpose::Conversion))
            } else {
                0
            };
            out.push(LoggedRecord {
                date,
                group_id: spec.group_id.clone(),
                sub_campaign_id: c.id.clone(),
                channel: c.channel.clone(),
                cost,
                clicks,
                conversions,
            });
        }
    }
    Ok(out)
}

/// Campaign ids combined into one group in the Criteo experiment.
pub const CRITEO_CAMPAIGNS: [&str; 4] = ["22589171", "884761", "18975823", "29427842"];

/// Column mapping from the Criteo attribution log onto logged records.
///
/// Every source row is one impression. Rows are bucketed into calendar days
/// by `timestamp / seconds_per_day` counted from `start_date`, and cost,
/// clicks and conversions are summed per `(day, campaign)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriteoMapping {
    pub timestamp_column: String,
    pub campaign_column: String,
    pub cost_column: String,
    pub click_column: String,
    pub conversion_column: String,
    /// `None` detects tab or comma from the header line.
    pub delimiter: Option<char>,
    pub start_date: NaiveDate,
    pub seconds_per_day: u64,
    /// Rows past this many days are dropped.
    pub max_days: usize,
    pub group_id: String,
    pub channel: String,
}

impl Default for CriteoMapping {
    fn default() -> Self {
        CriteoMapping {
            timestamp_column: "timestamp".into(),
            campaign_column: "campaign".into(),
            cost_column: "cost".into(),
            click_column: "click".into(),
            conversion_column: "conversion".into(),
            delimiter: None,
            start_date: NaiveDate::from_ymd_opt(2017, 1, 1).expect("valid date"),
            seconds_per_day: 86_400,
            max_days: 30,
            group_id: "criteo".into(),
            channel: "display".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriteoLoad {
    pub records: Vec<LoggedRecord>,
    pub warnings: Vec<String>,
}

pub fn load_criteo(path: &Path, campaign_ids: &[&str], mapping: &CriteoMapping) -> Result<CriteoLoad> {
    if campaign_ids.is_empty() {
        return Err(Error::invalid("criteo", "no campaign ids given"));
    }
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let delimiter = match mapping.delimiter {
        Some(c) => c as u8,
        None => {
            let buf = reader.fill_buf().map_err(|e| Error::io(path, e))?;
            let first_line = buf.split(|&b| b == b'\n').next().unwrap_or(&[]);
            if first_line.contains(&b'\t') {
                b'\t'
            } else {
                b','
            }
        }
    };
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        header.iter().position(|h| h == name).ok_or_else(|| Error::MalformedRow {
            path: path.to_path_buf(),
            row: 0,
            reason: format!("missing column `{name}`"),
        })
    };
    let ts_col = col(&mapping.timestamp_column)?;
    let camp_col = col(&mapping.campaign_column)?;
    let cost_col = col(&mapping.cost_column)?;
    let click_col = col(&mapping.click_column)?;
    let conv_col = col(&mapping.conversion_column)?;

    // (day, campaign index) → (cost, clicks, conversions)
    let mut totals: BTreeMap<(usize, usize), (f64, u64, u64)> = BTreeMap::new();
    let mut dropped_late = 0usize;
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let malformed = |reason: String| Error::MalformedRow {
            path: path.to_path_buf(),
            row: row_no,
            reason,
        };
        let row = row.map_err(|e| malformed(e.to_string()))?;
        let field = |c: usize| row.get(c).ok_or_else(|| malformed(format!("missing field {c}")));
        let camp = field(camp_col)?;
        let Some(k) = campaign_ids.iter().position(|id| *id == camp) else {
            continue;
        };
        let ts: u64 = parse_number(field(ts_col)?).map_err(|e| malformed(format!("timestamp: {e}")))?
            as u64;
        let cost = parse_number(field(cost_col)?).map_err(|e| malformed(format!("cost: {e}")))?;
        if cost < 0.0 {
            return Err(malformed(format!("negative cost {cost}")));
        }
        let click = parse_count(field(click_col)?).map_err(|e| malformed(format!("click: {e}")))?;
        let conv =
            parse_count(field(conv_col)?).map_err(|e| malformed(format!("conversion: {e}")))?;
        let day = (ts / mapping.seconds_per_day.max(1)) as usize;
        if day >= mapping.max_days {
            dropped_late += 1;
            continue;
        }
        let t = totals.entry((day, k)).or_insert((0.0, 0, 0));
        t.0 += cost;
        t.1 += click;
        t.2 += conv;
    }

    let mut warnings = Vec::new();
    if dropped_late > 0 {
        warnings.push(format!(
            "dropped {dropped_late} rows beyond day {}",
            mapping.max_days
        ));
    }
    let mut present = vec![false; campaign_ids.len()];
    for &(_, k) in totals.keys() {
        present[k] = true;
    }
    if totals.is_empty() {
        warnings.push(format!(
            "none of the campaigns {} appear in {}",
            campaign_ids.join(", "),
            path.display()
        ));
    } else if let Some(k) = present.iter().position(|p| !p) {
        return Err(Error::MissingCampaign(campaign_ids[k].to_string()));
    }

    let records = totals
        .into_iter()
        .map(|((day, k), (cost, clicks, conversions))| LoggedRecord {
            date: mapping.start_date + chrono::Days::new(day as u64),
            group_id: mapping.group_id.clone(),
            sub_campaign_id: campaign_ids[k].to_string(),
            channel: mapping.channel.clone(),
            cost,
            clicks,
            conversions,
        })
        .collect();
    Ok(CriteoLoad { records, warnings })
}

fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("not a number: `{s}`"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("expected a finite value >= 0, got `{s}`"));
    }
    Ok(v)
}

fn parse_count(s: &str) -> std::result::Result<u64, String> {
    let v = parse_number(s)?;
    if v.fract() != 0.0 {
        return Err(format!("expected an integer count, got `{s}`"));
    }
    Ok(v as u64)
}
