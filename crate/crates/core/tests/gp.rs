mod common;

use adbudget::gp::{best_observed, saturate_mean, GpDataset, GpPosterior, RbfKernel};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn predictions_match_dense_solve() {
    for seed in 0..50 {
        let mut r = common::rng(seed);
        let n = r.random_range(1..=30);
        let kernel = RbfKernel::new(r.random_range(0.5..2.0), r.random_range(0.2..1.0)).unwrap();
        let noise = r.random_range(1e-3..0.5);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|&v| (3.0 * v).sin() + r.random_range(-0.1..0.1)).collect();
        let post = GpPosterior::fit(&GpDataset::new(x.clone(), y.clone(), noise).unwrap(), kernel).unwrap();
        assert_eq!(post.jitter(), 0.0);
        let pts: Vec<f64> = (0..25).map(|i| -0.2 + 1.4 * i as f64 / 24.0).collect();
        let pred = post.predict(&pts);
        let (means, vars) = common::dense_gp(kernel, &x, &y, noise, &pts);
        for i in 0..pts.len() {
            assert!((pred.means[i] - means[i]).abs() < 1e-8, "seed {seed} mean {i}");
            assert!((pred.stds[i].powi(2) - vars[i].max(0.0)).abs() < 1e-8, "seed {seed} var {i}");
        }
    }
}

#[test]
fn noiseless_fit_interpolates_separated_points() {
    let kernel = RbfKernel::new(1.0, 0.5).unwrap();
    let x = vec![0.0, 0.5, 1.0, 1.5, 2.0];
    let y = vec![1.0, -2.0, 0.5, 3.0, 0.0];
    let post = GpPosterior::fit(&GpDataset::new(x.clone(), y.clone(), 0.0).unwrap(), kernel).unwrap();
    for (xi, yi) in x.iter().zip(&y) {
        assert!((post.mean_at(*xi) - yi).abs() < 1e-6);
        assert!(post.variance_at(*xi) < 1e-6);
    }
}

#[test]
fn duplicate_noiseless_inputs_need_jitter() {
    let kernel = RbfKernel::default();
    let data = GpDataset::new(vec![0.3, 0.3, 0.3], vec![1.0, 1.0, 1.0], 0.0).unwrap();
    let post = GpPosterior::fit(&data, kernel).unwrap();
    assert!(post.jitter() > 0.0);
    assert!((post.mean_at(0.3) - 1.0).abs() < 1e-3);
}

#[test]
fn posterior_samples_have_posterior_moments() {
    let kernel = RbfKernel::new(1.0, 0.3).unwrap();
    let data = GpDataset::new(vec![0.2, 0.8], vec![1.0, -1.0], 0.05).unwrap();
    let post = GpPosterior::fit(&data, kernel).unwrap();
    let pts = [0.0, 0.2, 0.5, 0.8, 1.0];
    let pred = post.predict(&pts);
    let mut r = common::rng(11);
    let draws = 20_000;
    let mut sum = [0.0; 5];
    let mut sq = [0.0; 5];
    for _ in 0..draws {
        let s = post.sample(&pts, &mut r).unwrap();
        for i in 0..5 {
            sum[i] += s[i];
            sq[i] += s[i] * s[i];
        }
    }
    for i in 0..5 {
        let mean = sum[i] / draws as f64;
        let var = sq[i] / draws as f64 - mean * mean;
        let sd = pred.stds[i];
        assert!((mean - pred.means[i]).abs() < 4.0 * sd / (draws as f64).sqrt() + 1e-9, "mean {i}");
        assert!((var - sd * sd).abs() < 0.05 * sd * sd + 1e-6, "var {i}");
    }
}

#[test]
fn saturation_holds_mean_above_best() {
    let data = GpDataset::new(vec![0.1, 0.4, 0.6], vec![1.0, 3.0, 2.0], 0.01).unwrap();
    let post = GpPosterior::fit(&data, RbfKernel::new(4.0, 0.3).unwrap()).unwrap();
    let (b_max, n_max) = best_observed(&post).unwrap();
    assert_eq!(b_max, 0.4);
    let grid: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
    let means = post.predict_means(&grid);
    let sat = saturate_mean(&means, &grid, b_max, n_max);
    for (i, &b) in grid.iter().enumerate() {
        if b > b_max {
            assert_eq!(sat[i], n_max);
        } else {
            assert_eq!(sat[i], means[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn variance_stays_within_prior(
        xs in prop::collection::vec(0.0f64..1.0, 1..20),
        sf2 in 0.1f64..10.0,
        ls in 0.05f64..2.0,
        q in -1.0f64..2.0,
    ) {
        let kernel = RbfKernel::new(sf2, ls).unwrap();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let post = GpPosterior::fit(&GpDataset::new(xs, ys, 0.01).unwrap(), kernel).unwrap();
        let v = post.variance_at(q);
        prop_assert!(v >= 0.0);
        prop_assert!(v <= sf2 * (1.0 + 1e-9));
    }

    #[test]
    fn far_from_data_reverts_to_prior(xs in prop::collection::vec(0.0f64..1.0, 1..10)) {
        let kernel = RbfKernel::new(2.0, 0.1).unwrap();
        let ys = vec![5.0; xs.len()];
        let post = GpPosterior::fit(&GpDataset::new(xs, ys, 0.01).unwrap(), kernel).unwrap();
        prop_assert!(post.mean_at(50.0).abs() < 1e-9);
        prop_assert!((post.variance_at(50.0) - 2.0).abs() < 1e-9);
    }
}
