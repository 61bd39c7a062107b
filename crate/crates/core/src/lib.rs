//! Budget allocation across advertising sub-campaigns whose click response
//! drifts over time.
//!
//! The crate has three layers:
//!
//! - [`gp`] and [`knapsack`]: Gaussian-process regression of clicks on
//!   spend, and the multi-choice knapsack that turns per-campaign value
//!   tables into a daily allocation.
//! - [`sim`] and [`datagen`]: a piecewise power-law simulator built from
//!   logged data, plus synthetic and Criteo-style data sources.
//! - [`policy`], [`eval`] and [`experiment`]: the bandit allocators, the
//!   metrics, and the (policy × seed) runner behind the `adbudget` binary.
//!
//! ```
//! use adbudget::knapsack::{solve_mck, BudgetGrid, RewardTable};
//!
//! let grid = BudgetGrid::new(0.0, 2.0, 3).unwrap();
//! let table = RewardTable::new(vec![vec![0.0, 5.0, 6.0], vec![0.0, 4.0, 7.0]]).unwrap();
//! let best = solve_mck(&table, &grid, 2.0).unwrap();
//! assert_eq!(best.levels, vec![1, 1]);
//! assert_eq!(best.total_value, 9.0);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gp;
pub mod knapsack;
mod linalg;
pub mod policy;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
