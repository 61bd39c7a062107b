//! Multi-choice knapsack over a shared, evenly spaced budget grid.
//!
//! Each sub-campaign picks exactly one level from the grid; the sum of the
//! picked budgets must stay under the daily cap. Because the grid is evenly
//! spaced, a budget is `min + i·step` and the cap constraint becomes a bound
//! on the sum of level indices, so the table is filled over index sums:
//!
//! ```text
//! M(1, s) = n_1(s)
//! M(j, s) = max_{s' ≤ s} M(j − 1, s') + n_j(s − s')
//! best    = max_{s ≤ S} M(N, s)
//! ```
//!
//! Unreachable cells hold `−∞`, so negative rewards (acquisition values can
//! dip below zero) never lose to a spurious zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SPACING_RTOL: f64 = 1e-9;

/// Evenly spaced budget levels from `min` to `max`, inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetGrid {
    values: Vec<f64>,
}

impl BudgetGrid {
    pub fn new(min: f64, max: f64, levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::invalid("budget grid", format!("need >= 2 levels, got {levels}")));
        }
        if !(min >= 0.0) || !min.is_finite() || !max.is_finite() || !(max > min) {
            return Err(Error::invalid(
                "budget grid",
                format!("need 0 <= min < max, got min={min} max={max}"),
            ));
        }
        let step = (max - min) / (levels - 1) as f64;
        let mut values: Vec<f64> = (0..levels).map(|i| min + step * i as f64).collect();
        values[levels - 1] = max;
        Ok(BudgetGrid { values })
    }

    /// Validates an explicit list of levels.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("budget grid", "need >= 2 levels"));
        }
        if values[0] < 0.0 || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("budget grid", "levels must be finite and >= 0"));
        }
        let step = values[1] - values[0];
        if !(step > 0.0) {
            return Err(Error::invalid("budget grid", "levels must be strictly ascending"));
        }
        let span = values[values.len() - 1] - values[0];
        for (i, w) in values.windows(2).enumerate() {
            let d = w[1] - w[0];
            if !(d > 0.0) {
                return Err(Error::invalid("budget grid", "levels must be strictly ascending"));
            }
            if (d - step).abs() > SPACING_RTOL * span.max(1.0) {
                return Err(Error::invalid(
                    "budget grid",
                    format!("uneven spacing at level {}", i + 1),
                ));
            }
        }
        Ok(BudgetGrid { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn step(&self) -> f64 {
        (self.max() - self.min()) / (self.len() - 1) as f64
    }

    /// Largest index sum `Σ i_j` allowed for `campaigns` picks under `cap`.
    fn index_capacity(&self, campaigns: usize, cap: f64) -> Result<usize> {
        let required = campaigns as f64 * self.min();
        let tol = SPACING_RTOL * self.max().max(1.0);
        if cap + tol < required {
            return Err(Error::Infeasible {
                cap,
                required,
                campaigns,
            });
        }
        let room = ((cap - required).max(0.0) / self.step() + 1e-9).floor();
        let full = campaigns * (self.len() - 1);
        Ok(if room >= full as f64 { full } else { room as usize })
    }
}

/// Per-campaign values on a grid, one row per sub-campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    rows: Vec<Vec<f64>>,
}

impl RewardTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(first) = rows.first() {
            let h = first.len();
            if rows.iter().any(|r| r.len() != h) {
                return Err(Error::invalid("reward table", "rows differ in length"));
            }
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("reward table", "entries must be finite"));
        }
        Ok(RewardTable { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn campaigns(&self) -> usize {
        self.rows.len()
    }

    fn check_grid(&self, grid: &BudgetGrid) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::invalid("reward table", "no campaigns"));
        }
        if self.rows[0].len() != grid.len() {
            return Err(Error::invalid(
                "reward table",
                format!("rows have {} entries, grid has {}", self.rows[0].len(), grid.len()),
            ));
        }
        Ok(())
    }
}

/// One joint budget assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub levels: Vec<usize>,
    pub budgets: Vec<f64>,
    pub total_value: f64,
    pub total_budget: f64,
}

impl Allocation {
    pub fn from_levels(levels: Vec<usize>, table: &RewardTable, grid: &BudgetGrid) -> Self {
        let budgets: Vec<f64> = levels.iter().map(|&i| grid.values()[i]).collect();
        let total_value = levels
            .iter()
            .zip(table.rows())
            .fold(0.0, |acc, (&i, row)| acc + row[i]);
        let total_budget = budgets.iter().sum();
        Allocation {
            levels,
            budgets,
            total_value,
            total_budget,
        }
    }
}

/// Optimal allocation by dynamic programming, `O(N·S·H)` with `S ≤ N·H`.
///
/// Ties: within the recursion the campaign being added keeps its lowest
/// level; at the end the smallest total index sum wins.
pub fn solve_mck(table: &RewardTable, grid: &BudgetGrid, cap: f64) -> Result<Allocation> {
    table.check_grid(grid)?;
    let n = table.campaigns();
    let h = grid.len();
    let cap_idx = grid.index_capacity(n, cap)?;
    let width = cap_idx + 1;
    let rows = table.rows();

    let mut value = vec![f64::NEG_INFINITY; n * width];
    // choice[j][s] = level taken by campaign j when the first j+1 use index sum s
    let mut choice = vec![0usize; n * width];

    for s in 0..width.min(h) {
        value[s] = rows[0][s];
        choice[s] = s;
    }
    for j in 1..n {
        let (prev, cur) = value.split_at_mut(j * width);
        let prev = &prev[(j - 1) * width..];
        let cur = &mut cur[..width];
        let row = &rows[j];
        let ch = &mut choice[j * width..(j + 1) * width];
        for s in 0..width {
            let mut best = f64::NEG_INFINITY;
            let mut best_level = 0;
            // own level ascending, so the first maximum found is the lowest level
            for level in 0..h.min(s + 1) {
                let p = prev[s - level];
                if p == f64::NEG_INFINITY {
                    continue;
                }
                let v = p + row[level];
                if v > best {
                    best = v;
                    best_level = level;
                }
            }
            cur[s] = best;
            ch[s] = best_level;
        }
    }

    let last = &value[(n - 1) * width..n * width];
    let mut best_s = 0;
    for s in 1..width {
        if last[s] > last[best_s] {
            best_s = s;
        }
    }
    if last[best_s] == f64::NEG_INFINITY {
        return Err(Error::NumericalInstability("knapsack table has no reachable cell".into()));
    }

    let mut levels = vec![0usize; n];
    let mut s = best_s;
    for j in (0..n).rev() {
        let level = choice[j * width + s];
        levels[j] = level;
        s -= level;
    }
    let alloc = Allocation::from_levels(levels, table, grid);
    debug_assert_eq!(alloc.total_value, last[best_s]);
    Ok(alloc)
}

/// Exhaustive enumeration of all `Hᴺ` assignments. Test oracle only.
pub fn brute_force_mck(table: &RewardTable, grid: &BudgetGrid, cap: f64) -> Result<Allocation> {
    table.check_grid(grid)?;
    let n = table.campaigns();
    let h = grid.len();
    if n > 5 || h > 15 {
        return Err(Error::SizeGuard {
            campaigns: n,
            levels: h,
        });
    }
    let cap_idx = grid.index_capacity(n, cap)?;
    let rows = table.rows();
    let mut levels = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        if levels.iter().sum::<usize>() <= cap_idx {
            let v = levels
                .iter()
                .zip(rows)
                .fold(0.0, |acc, (&i, row)| acc + row[i]);
            if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                best = Some((v, levels.clone()));
            }
        }
        // odometer increment, last campaign fastest
        let mut j = n;
        loop {
            if j == 0 {
                let (_, lv) = best.expect("all-zero assignment is always feasible");
                return Ok(Allocation::from_levels(lv, table, grid));
            }
            j -= 1;
            levels[j] += 1;
            if levels[j] < h {
                break;
            }
            levels[j] = 0;
        }
    }
}
