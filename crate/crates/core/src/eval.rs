//! Oracle allocation, regret, cost-per-click and pseudo-conversions.

use crate::error::Result;
use crate::knapsack::{solve_mck, Allocation, BudgetGrid, RewardTable};
use crate::sim::PowerLawModel;

/// Best allocation on `grid` under `cap` given the true curves.
pub fn oracle_allocate(models: &[PowerLawModel], grid: &BudgetGrid, cap: f64) -> Result<Allocation> {
    let rows = models
        .iter()
        .map(|m| grid.values().iter().map(|&b| m.expected_reward(b)).collect())
        .collect();
    solve_mck(&RewardTable::new(rows)?, grid, cap)
}

/// Sum of noise-free rewards at the allocated budgets.
pub fn expected_value(models: &[PowerLawModel], budgets: &[f64]) -> f64 {
    models
        .iter()
        .zip(budgets)
        .map(|(m, &b)| m.expected_reward(b))
        .sum()
}

/// Expected-reward gap between the oracle's and the policy's budgets.
pub fn instantaneous_regret(models: &[PowerLawModel], oracle: &[f64], policy: &[f64]) -> f64 {
    expected_value(models, oracle) - expected_value(models, policy)
}

/// Group-level cost per click: total cost over total clicks. `None` without clicks.
pub fn cpc_metric<'a, I>(history: I) -> Option<f64>
where
    I: IntoIterator<Item = &'a (f64, f64)>,
{
    let (cost, clicks) = history
        .into_iter()
        .fold((0.0, 0.0), |(c, k), &(cost, clicks)| (c + cost, k + clicks));
    (clicks > 0.0).then(|| cost / clicks)
}

/// Number of days in the pseudo-conversion window, including the current day.
pub const PSEUDO_CONVERSION_WINDOW: usize = 7;

/// Clicks over the 7 days ending at `day`, scaled by that window's conversion rate.
///
/// The window is truncated at the start of the series; zero clicks give 0.
pub fn pseudo_conversion(clicks: &[f64], conversions: &[f64], day: usize) -> f64 {
    let end = (day + 1).min(clicks.len()).min(conversions.len());
    let start = end.saturating_sub(PSEUDO_CONVERSION_WINDOW);
    let window_clicks: f64 = clicks[start..end].iter().sum();
    if window_clicks <= 0.0 {
        return 0.0;
    }
    // clicks × (conversions / clicks), simplified so the result is exact
    conversions[start..end].iter().sum()
}

/// Per-day totals for one policy run.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyMetrics {
    pub day: usize,
    pub budgets: Vec<f64>,
    pub costs: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Per-campaign expected reward at the oracle's budgets.
    pub oracle_rewards: Vec<f64>,
    /// Per-campaign expected reward at the policy's budgets.
    pub expected_rewards: Vec<f64>,
    pub oracle_value: f64,
    pub policy_value: f64,
    pub regret: f64,
    pub realized_regret: f64,
    pub cum_clicks: f64,
    pub cum_regret: f64,
    pub running_cpc: Option<f64>,
}

/// Accumulates [`DailyMetrics`] day by day.
#[derive(Debug, Clone, Default)]
pub struct MetricsTracker {
    days: Vec<DailyMetrics>,
    cost: f64,
    clicks: f64,
    regret: f64,
}

impl MetricsTracker {
    pub fn new() -> Self {
        Self::default()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &mut self,
        day: usize,
        models: &[PowerLawModel],
        oracle: &Allocation,
        budgets: &[f64],
        costs: &[f64],
        rewards: &[f64],
    ) -> &DailyMetrics {
        let oracle_rewards: Vec<f64> = models
            .iter()
            .zip(&oracle.budgets)
            .map(|(m, &b)| m.expected_reward(b))
            .collect();
        let expected_rewards: Vec<f64> = models
            .iter()
            .zip(budgets)
            .map(|(m, &b)| m.expected_reward(b))
            .collect();
        let oracle_value: f64 = oracle_rewards.iter().sum();
        let policy_value: f64 = expected_rewards.iter().sum();
        let regret = oracle_value - policy_value;
        let realized: f64 = rewards.iter().sum();
        self.cost += costs.iter().sum::<f64>();
        self.clicks += realized;
        self.regret += regret;
        self.days.push(DailyMetrics {
            day,
            budgets: budgets.to_vec(),
            costs: costs.to_vec(),
            rewards: rewards.to_vec(),
            oracle_rewards,
            expected_rewards,
            oracle_value,
            policy_value,
            regret,
            realized_regret: oracle_value - realized,
            cum_clicks: self.clicks,
            cum_regret: self.regret,
            running_cpc: (self.clicks > 0.0).then(|| self.cost / self.clicks),
        });
        self.days.last().expect("just pushed")
    }

    pub fn days(&self) -> &[DailyMetrics] {
        &self.days
    }

    pub fn cumulative_clicks(&self) -> f64 {
        self.clicks
    }

    pub fn cumulative_regret(&self) -> f64 {
        self.regret
    }

    pub fn cpc(&self) -> Option<f64> {
        (self.clicks > 0.0).then(|| self.cost / self.clicks)
    }
}
