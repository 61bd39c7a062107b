//! Daily budget allocation policies.
//!
//! Every policy follows the same loop: record yesterday's observations, fit
//! one GP per sub-campaign on budget → clicks, turn the posterior into a value
//! per budget level, and hand the value table to the multi-choice knapsack.
//! The variants differ in which observations the GP sees and how values are
//! formed:
//!
//! | variant    | training data                  | value per level               | change points |
//! |------------|--------------------------------|-------------------------------|---------------|
//! | `TUCB_MAE` | current phase                  | saturated mean + targeted bonus | MAE test    |
//! | `UCB_MAE`  | current phase                  | mean + β·σ                    | MAE test      |
//! | `UCB_NCPD` | all observations               | mean + β·σ                    | none          |
//! | `UCB_SW`   | last `sliding_window` days     | mean + β·σ                    | none          |
//! | `TS_SW`    | last `sliding_window` days     | posterior sample              | none          |
//! | `UCB_DS`   | all, noise inflated by age     | mean + β·σ                    | none          |
//!
//! For `TUCB_MAE`, the mean is held flat at its best observed value above the
//! best observed budget, and the exploration bonus `β·(1 − θ)·σ` is only paid
//! above that budget. `θ ∈ [0, 1]` is the campaign's normalized cost per click,
//! so cheap campaigns explore harder. Change points are detected by comparing
//! a GP over the whole phase with a GP over the last `window_length` days; when
//! their mean absolute gap over the grid exceeds `τ`, the phase restarts from
//! the recent window.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{best_observed, saturate_mean, GpDataset, GpPosterior, RbfKernel};
use crate::knapsack::{solve_mck, Allocation, BudgetGrid, RewardTable};
use crate::rng::{self, Purpose};
use crate::sim::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    TucbMae,
    UcbMae,
    UcbNcpd,
    UcbSw,
    TsSw,
    UcbDs,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::TucbMae,
        Variant::UcbMae,
        Variant::UcbNcpd,
        Variant::UcbSw,
        Variant::TsSw,
        Variant::UcbDs,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::TucbMae => "TUCB-MAE",
            Variant::UcbMae => "UCB-MAE",
            Variant::UcbNcpd => "UCB-NCPD",
            Variant::UcbSw => "UCB-SW",
            Variant::TsSw => "TS-SW",
            Variant::UcbDs => "UCB-DS",
        }
    }

    fn detects_changepoints(self) -> bool {
        matches!(self, Variant::TucbMae | Variant::UcbMae)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EfficiencyMetric {
    /// cost per click
    #[default]
    Cpc,
    /// cost per acquisition (conversion)
    Cpa,
}

/// Switches for the three `TUCB_MAE` ingredients. Ignored by other variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Components {
    pub saturating_mean: bool,
    pub targeted_ucb: bool,
    pub efficiency: bool,
}

impl Default for Components {
    fn default() -> Self {
        Components {
            saturating_mean: true,
            targeted_ucb: true,
            efficiency: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub variant: Variant,
    /// Exploration factor β.
    pub beta: f64,
    /// Change-point threshold τ, in reward units.
    pub tau: f64,
    pub window_length: usize,
    pub sliding_window: usize,
    pub discount: f64,
    pub efficiency_metric: EfficiencyMetric,
    pub components: Components,
    pub kernel: RbfKernel,
    pub noise_variance: f64,
    /// Seed for Thompson draws.
    pub seed: u64,
}

impl PolicyConfig {
    pub fn new(variant: Variant, beta: f64, tau: f64) -> Self {
        PolicyConfig {
            variant,
            beta,
            tau,
            window_length: 7,
            sliding_window: 10,
            discount: 0.9,
            efficiency_metric: EfficiencyMetric::Cpc,
            components: Components::default(),
            kernel: RbfKernel::default(),
            noise_variance: 0.01,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        let bad = |reason: String| Err(Error::invalid("policy config", reason));
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if self.window_length == 0 || self.sliding_window == 0 {
            return bad("window lengths must be >= 1".into());
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad(format!("discount must be in (0, 1], got {}", self.discount));
        }
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return bad(format!("noise variance must be >= 0, got {}", self.noise_variance));
        }
        Ok(())
    }

    fn uses_efficiency(&self) -> bool {
        self.variant == Variant::TucbMae && self.components.efficiency
    }

    fn uses_saturation(&self) -> bool {
        self.variant == Variant::TucbMae && self.components.saturating_mean
    }

    fn uses_targeting(&self) -> bool {
        self.variant == Variant::TucbMae && self.components.targeted_ucb
    }
}

/// One observed day of one sub-campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub day: usize,
    pub budget: f64,
    pub cost: f64,
    pub reward: f64,
    pub conversions: f64,
}

impl From<&Observation> for BufferEntry {
    fn from(o: &Observation) -> Self {
        BufferEntry {
            day: o.day,
            budget: o.budget,
            cost: o.cost,
            reward: o.reward,
            conversions: o.conversions,
        }
    }
}

/// Observations of the current phase. Append-only, except that a detected
/// change point keeps only the most recent `window_length` entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CampaignBuffer {
    entries: Vec<BufferEntry>,
    breakpoints: Vec<usize>,
}

impl CampaignBuffer {
    pub fn push(&mut self, entry: BufferEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn recent(&self, n: usize) -> &[BufferEntry] {
        &self.entries[self.entries.len().saturating_sub(n)..]
    }

    /// Starts a new phase at `day` from the last `keep` entries.
    pub fn restart(&mut self, keep: usize, day: usize) {
        let drop = self.entries.len().saturating_sub(keep);
        self.entries.drain(..drop);
        self.breakpoints.push(day);
    }

    /// Days on which a change point was detected.
    pub fn breakpoints(&self) -> &[usize] {
        &self.breakpoints
    }
}

/// Long-history and recent-window GPs of one campaign.
#[derive(Debug, Clone)]
pub struct DualModels {
    pub long: GpPosterior,
    pub short: GpPosterior,
}

/// Normalized efficiency `θ_j` per campaign.
///
/// `ratio_j = Σ_t cost_{j,t} / clicks_{j,t}` over days with positive cost and
/// clicks (conversions for [`EfficiencyMetric::Cpa`]); `θ_j = ratio_j / max_k
/// ratio_k`. A campaign without any such day counts as least efficient.
pub fn compute_efficiency(histories: &[&[BufferEntry]], metric: EfficiencyMetric) -> Vec<f64> {
    let ratios: Vec<Option<f64>> = histories
        .iter()
        .map(|h| {
            let mut sum = 0.0;
            let mut any = false;
            for e in h.iter() {
                let denom = match metric {
                    EfficiencyMetric::Cpc => e.reward,
                    EfficiencyMetric::Cpa => e.conversions,
                };
                if denom > 0.0 && e.cost > 0.0 {
                    sum += e.cost / denom;
                    any = true;
                }
            }
            any.then_some(sum)
        })
        .collect();
    let max = ratios.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    ratios
        .into_iter()
        .map(|r| match r {
            Some(r) if max > 0.0 => r / max,
            _ => 1.0,
        })
        .collect()
}

/// Upper-confidence values for one campaign.
///
/// The bonus `β·(1 − θ)·σ` is added at every level when `target` is `None`,
/// and only at levels strictly above the given budget otherwise.
pub fn acquisition(
    means: &[f64],
    stds: &[f64],
    theta: f64,
    beta: f64,
    target: Option<f64>,
    budgets: &[f64],
) -> Vec<f64> {
    let scale = beta * (1.0 - theta);
    means
        .iter()
        .zip(stds)
        .zip(budgets)
        .map(|((&m, &s), &b)| match target {
            Some(b_max) if b <= b_max => m,
            _ => m + scale * s,
        })
        .collect()
}

/// One joint posterior draw over `points`.
pub fn ts_sample<R: rand::Rng + ?Sized>(
    post: &GpPosterior,
    points: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    post.sample(points, rng)
}

/// Mean absolute gap between two prediction vectors.
pub fn mean_absolute_gap(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// True when the two models' means differ by more than `tau` on average over
/// the grid points.
pub fn detect_changepoint(models: &DualModels, points: &[f64], tau: f64) -> bool {
    let long = models.long.predict_means(points);
    let short = models.short.predict_means(points);
    mean_absolute_gap(&long, &short) > tau
}

/// Everything the policy computed for one day.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub day: usize,
    pub allocation: Allocation,
    /// Value table handed to the knapsack, one row per campaign.
    pub acquisitions: Vec<Vec<f64>>,
    /// Posterior mean per level, after saturation when it applies.
    pub means: Vec<Vec<f64>>,
    /// Posterior standard deviation per level.
    pub stds: Vec<Vec<f64>>,
    pub thetas: Vec<f64>,
    /// Best observed budget per campaign, when defined.
    pub b_max: Vec<Option<f64>>,
    /// Campaigns whose phase restarted today.
    pub changepoints: Vec<bool>,
}

/// Per-run policy state.
#[derive(Debug, Clone)]
pub struct Policy {
    config: PolicyConfig,
    day: usize,
    buffers: Vec<CampaignBuffer>,
    histories: Vec<Vec<BufferEntry>>,
}

impl Policy {
    pub fn new(config: PolicyConfig, campaigns: usize) -> Result<Self> {
        config.validate()?;
        if campaigns == 0 {
            return Err(Error::invalid("policy", "need at least one campaign"));
        }
        Ok(Policy {
            config,
            day: 0,
            buffers: vec![CampaignBuffer::default(); campaigns],
            histories: vec![Vec::new(); campaigns],
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn buffers(&self) -> &[CampaignBuffer] {
        &self.buffers
    }

    pub fn histories(&self) -> &[Vec<BufferEntry>] {
        &self.histories
    }

    /// Index of the next day to allocate.
    pub fn day(&self) -> usize {
        self.day
    }

    fn dataset(&self, entries: &[BufferEntry], scale: f64) -> Result<GpDataset> {
        let inputs = entries.iter().map(|e| e.cost / scale).collect();
        let targets = entries.iter().map(|e| e.reward).collect();
        if self.config.variant == Variant::UcbDs {
            // age 0 for yesterday's observation
            let weights = entries
                .iter()
                .map(|e| {
                    let age = (self.day - 1 - e.day) as i32;
                    self.config.discount.powi(-age)
                })
                .collect();
            GpDataset::with_weights(inputs, targets, self.config.noise_variance, weights)
        } else {
            GpDataset::new(inputs, targets, self.config.noise_variance)
        }
    }

    fn training_entries(&self, j: usize) -> &[BufferEntry] {
        let hist = &self.histories[j];
        match self.config.variant {
            Variant::TucbMae | Variant::UcbMae => self.buffers[j].entries(),
            Variant::UcbNcpd | Variant::UcbDs => hist,
            Variant::UcbSw | Variant::TsSw => {
                &hist[hist.len().saturating_sub(self.config.sliding_window)..]
            }
        }
    }

    /// Runs the change-point test for campaign `j`, restarting its phase on
    /// detection. The test only runs once the phase holds more than two windows
    /// of data and at least one window has passed since the last restart.
    fn check_changepoint(&mut self, j: usize, points: &[f64], scale: f64) -> Result<bool> {
        let wl = self.config.window_length;
        let buf = &self.buffers[j];
        if buf.len() <= 2 * wl {
            return Ok(false);
        }
        if let Some(&last) = buf.breakpoints().last() {
            if self.day - last < wl {
                return Ok(false);
            }
        }
        let kernel = self.config.kernel;
        let models = DualModels {
            long: GpPosterior::fit(&self.dataset(buf.entries(), scale)?, kernel)?,
            short: GpPosterior::fit(&self.dataset(buf.recent(wl), scale)?, kernel)?,
        };
        if detect_changepoint(&models, points, self.config.tau) {
            let day = self.day;
            self.buffers[j].restart(wl, day);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Records yesterday's observations and picks today's budgets.
    pub fn allocate_day(
        &mut self,
        grid: &BudgetGrid,
        cap: f64,
        observations: &[Observation],
    ) -> Result<Decision> {
        let n = self.buffers.len();
        for o in observations {
            if o.campaign >= n {
                return Err(Error::invalid(
                    "observation",
                    format!("campaign {} out of range", o.campaign),
                ));
            }
            let e = BufferEntry::from(o);
            self.buffers[o.campaign].push(e);
            self.histories[o.campaign].push(e);
        }

        let scale = grid.max();
        let points: Vec<f64> = grid.values().iter().map(|b| b / scale).collect();
        let cfg = self.config.clone();

        let thetas = if cfg.uses_efficiency() {
            let hs: Vec<&[BufferEntry]> = self.histories.iter().map(|h| h.as_slice()).collect();
            compute_efficiency(&hs, cfg.efficiency_metric)
        } else {
            vec![0.0; n]
        };

        let mut acquisitions = Vec::with_capacity(n);
        let mut all_means = Vec::with_capacity(n);
        let mut all_stds = Vec::with_capacity(n);
        let mut b_maxes = Vec::with_capacity(n);
        let mut changepoints = Vec::with_capacity(n);
        for j in 0..n {
            let restarted = if cfg.variant.detects_changepoints() {
                self.check_changepoint(j, &points, scale)?
            } else {
                false
            };
            changepoints.push(restarted);

            let post = GpPosterior::fit(&self.dataset(self.training_entries(j), scale)?, cfg.kernel)?;
            let pred = post.predict(&points);
            if cfg.variant == Variant::TsSw {
                let mut r = rng::stream(cfg.seed, j, self.day, Purpose::Policy);
                acquisitions.push(ts_sample(&post, &points, &mut r)?);
                all_means.push(pred.means);
                all_stds.push(pred.stds);
                b_maxes.push(None);
                continue;
            }

            let best = if cfg.variant == Variant::TucbMae {
                best_observed(&post).map(|(x, m)| (x * scale, m))
            } else {
                None
            };
            let means = match best {
                Some((b_max, n_max)) if cfg.uses_saturation() => {
                    saturate_mean(&pred.means, grid.values(), b_max, n_max)
                }
                _ => pred.means,
            };
            let target = best.map(|b| b.0).filter(|_| cfg.uses_targeting());
            acquisitions.push(acquisition(
                &means,
                &pred.stds,
                thetas[j],
                cfg.beta,
                target,
                grid.values(),
            ));
            all_means.push(means);
            all_stds.push(pred.stds);
            b_maxes.push(best.map(|b| b.0));
        }

        let table = RewardTable::new(acquisitions)?;
        let allocation = solve_mck(&table, grid, cap)?;
        let decision = Decision {
            day: self.day,
            allocation,
            acquisitions: table.rows().to_vec(),
            means: all_means,
            stds: all_stds,
            thetas,
            b_max: b_maxes,
            changepoints,
        };
        self.day += 1;
        Ok(decision)
    }
}
