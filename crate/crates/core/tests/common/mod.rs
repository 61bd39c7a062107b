#![allow(dead_code)]

use std::path::PathBuf;

use adbudget::datagen::{generate_logged_campaign, CampaignSpec, PhaseSpec, ScenarioSpec};
use adbudget::experiment::RunSettings;
use adbudget::gp::RbfKernel;
use adbudget::knapsack::BudgetGrid;
use adbudget::policy::{Policy, PolicyConfig, Variant};
use adbudget::sim::{EnvConfig, Environment, LoggedRecord, PowerLawModel};
use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Posterior means and variances from an explicit dense solve.
pub fn dense_gp(
    kernel: RbfKernel,
    x: &[f64],
    y: &[f64],
    noise: f64,
    points: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        kernel.eval(x[i], x[j]) + if i == j { noise } else { 0.0 }
    });
    let k_inv = k.try_inverse().expect("invertible gram matrix");
    let yv = DVector::from_column_slice(y);
    let mut means = Vec::new();
    let mut vars = Vec::new();
    for &p in points {
        let ks = DVector::from_iterator(n, x.iter().map(|&xi| kernel.eval(p, xi)));
        means.push((ks.transpose() * &k_inv * &yv)[0]);
        vars.push(kernel.eval(p, p) - (ks.transpose() * &k_inv * &ks)[0]);
    }
    (means, vars)
}

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// One campaign, spend level 20, single power-law phase.
pub fn single_campaign_spec(seed: u64, horizon: usize, alpha: f64, omega: f64) -> ScenarioSpec {
    ScenarioSpec {
        group_id: "fixture".into(),
        start_date: date(2023, 1, 1),
        horizon,
        stationary_period: 20,
        tau: 0.0,
        cost_noise: 0.25,
        reward_noise_std: 0.1,
        budget_walk: 0.1,
        seed,
        campaigns: vec![CampaignSpec {
            id: "c0".into(),
            channel: "search".into(),
            spend_level: 20.0,
            conversion_rate: 0.05,
            phases: vec![PhaseSpec {
                start: 0,
                alpha,
                omega,
            }],
        }],
    }
}

/// Detection fixture: a stationary single-campaign log whose simulated curve
/// is replaced on `CHANGE_DAY` by one whose expected reward at that day's cap
/// differs by 2τ to 3τ.
pub const CHANGE_DAY: usize = 40;
pub const FIXTURE_DAYS: usize = 80;
pub const FIXTURE_TAU: f64 = 4.0;

pub struct DetectionRun {
    pub detections: Vec<usize>,
    pub shift_at_cap: f64,
}

pub fn detection_policy() -> PolicyConfig {
    let mut p = PolicyConfig::new(Variant::TucbMae, 2.0, FIXTURE_TAU);
    // a single campaign always has θ = 1, which would switch exploration off
    p.components.efficiency = false;
    p
}

pub fn run_detection_fixture(seed: u64, shift: bool) -> DetectionRun {
    let mut r = rng(seed);
    let omega = r.random_range(0.5..0.8);
    let alpha = r.random_range(2.0..4.0);
    let gap: f64 = r.random_range(2.0 * FIXTURE_TAU..3.0 * FIXTURE_TAU);
    let up = r.random_bool(0.5);
    let m0 = PowerLawModel::new(alpha, omega).unwrap();
    let records = generate_logged_campaign(&single_campaign_spec(seed, FIXTURE_DAYS, alpha, omega)).unwrap();
    let mut env = Environment::from_records(
        &records,
        EnvConfig {
            seed,
            ..EnvConfig::default()
        },
    )
    .unwrap();
    env.plant_model(0, m0);
    let mut policy = Policy::new(detection_policy(), 1).unwrap();
    let mut obs = Vec::new();
    let mut shift_at_cap = 0.0;
    for day in 0..FIXTURE_DAYS {
        let cap = env.daily_cap(day);
        if shift && day == CHANGE_DAY {
            let base = m0.expected_reward(cap);
            let target = if up || base - gap <= 1.0 { base + gap } else { base - gap };
            let m1 = PowerLawModel::new(alpha * target / base, omega).unwrap();
            shift_at_cap = (m1.expected_reward(cap) - base).abs();
            env.plant_model(0, m1);
        }
        let grid = BudgetGrid::new(0.02 * cap, cap, 100).unwrap();
        let decision = policy.allocate_day(&grid, cap, &obs).unwrap();
        obs = env.step(&decision.allocation.budgets).unwrap();
    }
    DetectionRun {
        detections: policy.buffers()[0].breakpoints().to_vec(),
        shift_at_cap,
    }
}

/// Logged history with an α jump of `jump` (relative) on `day`.
pub fn planted_jump_records(seed: u64, day: usize, jump: f64) -> Vec<LoggedRecord> {
    let mut spec = single_campaign_spec(seed, 100, 3.0, 0.6);
    spec.campaigns[0].phases.push(PhaseSpec {
        start: day,
        alpha: 3.0 * (1.0 + jump),
        omega: 0.6,
    });
    generate_logged_campaign(&spec).unwrap()
}

/// Stationary campaigns with the given (spend, α, ω).
pub fn stationary_spec(seed: u64, horizon: usize, campaigns: &[(f64, f64, f64)]) -> ScenarioSpec {
    let mut spec = single_campaign_spec(seed, horizon, 1.0, 0.5);
    spec.campaigns = campaigns
        .iter()
        .enumerate()
        .map(|(i, &(spend, alpha, omega))| CampaignSpec {
            id: format!("c{i}"),
            channel: "search".into(),
            spend_level: spend,
            conversion_rate: 0.05,
            phases: vec![PhaseSpec { start: 0, alpha, omega }],
        })
        .collect();
    spec
}

pub fn run_settings(granularity: usize) -> RunSettings {
    RunSettings {
        granularity,
        min_budget_fraction: 0.02,
        horizon: None,
        env: EnvConfig::default(),
    }
}
