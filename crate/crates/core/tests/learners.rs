#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use surveyml::learners::{fit_logistic, fit_wls, BoostingParams, Hyperparameters};
use surveyml::numeric::expit;
use surveyml::{rng, LearnerKind, LearnerSpec, Matrix, Task};

fn gaussian_matrix(n: usize, p: usize, seed: u64) -> Matrix {
    let mut r = rng::stream(seed);
    let data: Vec<f64> = (0..n * p).map(|_| r.sample(StandardNormal)).collect();
    Matrix::new(n, p, data).unwrap()
}

fn uniform(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed);
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

fn bernoulli(x: &Matrix, beta: &[f64], seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed);
    x.iter_rows()
        .map(|row| {
            let eta = beta[0] + row.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
            if r.random::<f64>() < expit(eta) {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Solves `A z = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let q = b.len();
    for c in 0..q {
        let piv = (c..q).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..q {
            let f = a[r][c] / a[c][c];
            for k in c..q {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut z = vec![0.0; q];
    for c in (0..q).rev() {
        let s: f64 = (c + 1..q).map(|k| a[c][k] * z[k]).sum();
        z[c] = (b[c] - s) / a[c][c];
    }
    z
}

fn with_intercept(x: &Matrix, i: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    row.extend_from_slice(x.row(i));
    row
}

#[test]
fn wls_matches_normal_equations() {
    let x = gaussian_matrix(150, 3, 1);
    let w = uniform(150, 0.5, 4.0, 2);
    let noise = uniform(150, -1.0, 1.0, 3);
    let y: Vec<f64> = (0..150).map(|i| 1.0 + 2.0 * x.get(i, 0) - x.get(i, 2) + noise[i]).collect();
    let q = 4;
    let mut xtwx = vec![vec![0.0; q]; q];
    let mut xtwy = vec![0.0; q];
    for i in 0..150 {
        let row = with_intercept(&x, i);
        for a in 0..q {
            xtwy[a] += w[i] * row[a] * y[i];
            for b in 0..q {
                xtwx[a][b] += w[i] * row[a] * row[b];
            }
        }
    }
    let beta = solve(xtwx, xtwy);
    let fit = fit_wls(&x, &y, &w, true).unwrap();
    assert!((fit.intercept - beta[0]).abs() < 1e-10);
    for j in 0..3 {
        assert!((fit.coef[j] - beta[j + 1]).abs() < 1e-10, "coef {j}: {} vs {}", fit.coef[j], beta[j + 1]);
    }
}

#[test]
fn wls_rejects_collinear_columns() {
    let x = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [4.0, 8.0]]).unwrap();
    assert!(fit_wls(&x, &[1.0, 2.0, 3.0, 5.0], &[1.0; 4], true).is_err());
}

/// Plain gradient ascent on the weighted log likelihood with a step below
/// the inverse curvature bound.
fn logistic_by_gradient_ascent(x: &Matrix, r: &[f64], w: &[f64]) -> Vec<f64> {
    let n = x.rows();
    let q = x.cols() + 1;
    let trace: f64 = (0..n).map(|i| w[i] * with_intercept(x, i).iter().map(|v| v * v).sum::<f64>()).sum();
    let step = 4.0 / trace;
    let mut beta = vec![0.0; q];
    for _ in 0..2_000_000 {
        let mut grad = vec![0.0; q];
        for i in 0..n {
            let row = with_intercept(x, i);
            let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let resid = w[i] * (r[i] - expit(eta));
            for a in 0..q {
                grad[a] += resid * row[a];
            }
        }
        if grad.iter().map(|g| g * g).sum::<f64>().sqrt() < 1e-11 {
            break;
        }
        for a in 0..q {
            beta[a] += step * grad[a];
        }
    }
    beta
}

#[test]
fn logistic_matches_gradient_ascent() {
    let x = gaussian_matrix(200, 2, 4);
    let r = bernoulli(&x, &[0.3, 1.0, -0.7], 5);
    let w = uniform(200, 0.5, 2.0, 6);
    let fit = fit_logistic(&x, &r, &w, true, 100, 1e-10).unwrap();
    assert!(fit.converged);
    let oracle = logistic_by_gradient_ascent(&x, &r, &w);
    assert!((fit.model.intercept - oracle[0]).abs() < 1e-6);
    for j in 0..2 {
        assert!((fit.model.coef[j] - oracle[j + 1]).abs() < 1e-6);
    }
}

#[test]
fn logistic_needs_both_classes() {
    let x = gaussian_matrix(10, 1, 7);
    assert!(fit_logistic(&x, &[1.0; 10], &[1.0; 10], true, 100, 1e-10).is_err());
}

#[test]
fn tree_recovers_a_step() {
    let x = gaussian_matrix(200, 2, 8);
    let y: Vec<f64> = x.iter_rows().map(|r| if r[0] > 0.25 { 3.0 } else { -1.0 }).collect();
    let fit = LearnerSpec::new(LearnerKind::RegressionTree, Task::Regression).fit(&x, &y, &[1.0; 200], 0).unwrap();
    assert_eq!(fit.trees().unwrap()[0].n_leaves(), 2);
    for (row, yi) in x.iter_rows().zip(&y) {
        assert_eq!(fit.predict(row), *yi);
    }
}

#[test]
fn forest_without_resampling_equals_the_tree() {
    let x = gaussian_matrix(120, 3, 9);
    let noise = uniform(120, -1.0, 1.0, 10);
    let y: Vec<f64> =
        (0..120).map(|i| x.get(i, 0) * x.get(i, 1) + (x.get(i, 2) > 0.0) as u8 as f64 + noise[i]).collect();
    let w = uniform(120, 1.0, 3.0, 11);
    let forest = LearnerSpec::from_params(
        "forest",
        Task::Regression,
        [("ntree", "3"), ("mtry", "3"), ("nodesize", "4"), ("bootstrap", "false")],
    )
    .unwrap()
    .fit(&x, &y, &w, 12)
    .unwrap();
    let tree = LearnerSpec::from_params(
        "tree",
        Task::Regression,
        [("cp", "0"), ("minsplit", "8"), ("minbucket", "4"), ("max_depth", "1000")],
    )
    .unwrap()
    .fit(&x, &y, &w, 0)
    .unwrap();
    let t = &tree.trees().unwrap()[0];
    for ft in forest.trees().unwrap() {
        assert_eq!(ft, t);
    }
    let probe = gaussian_matrix(50, 3, 13);
    for row in probe.iter_rows() {
        assert!((forest.predict(row) - tree.predict(row)).abs() < 1e-12);
    }
}

#[test]
fn forest_is_reproducible_and_thread_invariant() {
    let x = gaussian_matrix(300, 4, 14);
    let r = bernoulli(&x, &[0.0, 1.0, 1.0, 0.0, 0.0], 15);
    let spec = LearnerSpec::new(LearnerKind::RandomForest, Task::Propensity).with("ntree", "40").unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| spec.fit(&x, &r, &[1.0; 300], 99).unwrap());
    let b = three.install(|| spec.fit(&x, &r, &[1.0; 300], 99).unwrap());
    assert_eq!(a.trees().unwrap(), b.trees().unwrap());
    let c = spec.fit(&x, &r, &[1.0; 300], 100).unwrap();
    assert_ne!(a.trees().unwrap(), c.trees().unwrap());
}

#[test]
fn zero_round_boosting_predicts_the_weighted_rate() {
    let x = gaussian_matrix(80, 2, 16);
    let r = bernoulli(&x, &[0.5, 1.0, 0.0], 17);
    let w = uniform(80, 1.0, 5.0, 18);
    let rate = r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
    let fit = LearnerSpec::new(LearnerKind::GradientBoosting, Task::Propensity)
        .with("max_rounds", "0")
        .unwrap()
        .fit(&x, &r, &w, 1)
        .unwrap();
    assert_eq!(fit.meta().rounds, Some(0));
    assert!(fit.boosted_model().unwrap().trees.is_empty());
    for row in x.iter_rows() {
        assert!((fit.predict(row) - rate).abs() < 1e-12);
    }
}

#[test]
fn boosting_selects_rounds_by_cross_validation() {
    let x = gaussian_matrix(300, 2, 19);
    let r = bernoulli(&x, &[0.0, 2.0, -1.0], 20);
    let spec = LearnerSpec::new(LearnerKind::GradientBoosting, Task::Propensity);
    let fit = spec.fit(&x, &r, &[1.0; 300], 3).unwrap();
    let rounds = fit.meta().rounds.unwrap();
    let Hyperparameters::Boosting(BoostingParams { max_rounds, .. }) = spec.params() else { unreachable!() };
    assert!(rounds >= 1 && rounds <= *max_rounds);
    assert_eq!(fit.boosted_model().unwrap().trees.len(), rounds);
    assert_eq!(spec.fit(&x, &r, &[1.0; 300], 3).unwrap().boosted_model(), fit.boosted_model());
}

#[test]
fn stratification_of_100_units_gives_strata_of_20() {
    let x = gaussian_matrix(100, 2, 21);
    let r = bernoulli(&x, &[0.2, 1.0, 0.5], 22);
    let w = uniform(100, 1.0, 2.0, 23);
    let fit = LearnerSpec::new(LearnerKind::PropensityStratification, Task::Propensity).fit(&x, &r, &w, 0).unwrap();
    let model = fit.stratified_model().unwrap();
    assert_eq!(model.rates.len(), 5);
    let mut count = [0usize; 5];
    let mut num = [0.0; 5];
    let mut den = [0.0; 5];
    for (i, row) in x.iter_rows().enumerate() {
        let s = model.stratum(model.base.predict_raw(row));
        count[s] += 1;
        num[s] += w[i] * r[i];
        den[s] += w[i];
    }
    assert_eq!(count, [20; 5]);
    for s in 0..5 {
        assert!((model.rates[s] - num[s] / den[s]).abs() < 1e-14);
    }
}

#[test]
fn propensities_are_clipped() {
    let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
    let fit = LearnerSpec::new(LearnerKind::RegressionTree, Task::Propensity)
        .with("minsplit", "2")
        .unwrap()
        .with("minbucket", "1")
        .unwrap()
        .fit(&x, &[0.0, 0.0, 1.0, 1.0], &[1.0; 4], 0)
        .unwrap();
    assert_eq!(fit.predict(&[0.0]), 0.0005);
    assert_eq!(fit.predict_raw(&[0.0]), 0.0);
    assert_eq!(fit.predict(&[3.0]), 1.0);
}

#[test]
fn unknown_hyperparameters_are_rejected() {
    assert!(LearnerSpec::from_params("forest", Task::Regression, [("depth", "3")]).is_err());
    assert!(LearnerSpec::from_params("tree", Task::Regression, [("minsplit", "1")]).is_err());
    assert!(LearnerSpec::from_params("boosting", Task::Propensity, [("subsample", "0")]).is_err());
    assert!(LearnerKind::parse("svm").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn wls_is_invariant_to_weight_scale(seed in 0u64..1000, scale in 0.01f64..100.0) {
        let x = gaussian_matrix(40, 2, seed);
        let y = uniform(40, -5.0, 5.0, seed + 1);
        let w = uniform(40, 0.5, 2.0, seed + 2);
        let ws: Vec<f64> = w.iter().map(|v| v * scale).collect();
        let a = fit_wls(&x, &y, &w, true).unwrap();
        let b = fit_wls(&x, &y, &ws, true).unwrap();
        prop_assert!((a.intercept - b.intercept).abs() < 1e-9);
        for j in 0..2 {
            prop_assert!((a.coef[j] - b.coef[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn tree_and_forest_predictions_stay_in_the_target_range(seed in 0u64..1000) {
        let x = gaussian_matrix(60, 3, seed);
        let y = uniform(60, -2.0, 7.0, seed + 1);
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let probe = gaussian_matrix(20, 3, seed + 2);
        for spec in [
            LearnerSpec::new(LearnerKind::RegressionTree, Task::Regression),
            LearnerSpec::new(LearnerKind::RandomForest, Task::Regression).with("ntree", "10").unwrap(),
        ] {
            let fit = spec.fit(&x, &y, &[1.0; 60], seed).unwrap();
            for row in probe.iter_rows() {
                let v = fit.predict(row);
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn propensity_learners_return_probabilities(seed in 0u64..1000, kind in 0usize..4) {
        let x = gaussian_matrix(80, 2, seed);
        let r = bernoulli(&x, &[0.0, 1.5, -1.0], seed + 1);
        prop_assume!(r.contains(&0.0) && r.contains(&1.0));
        let name = ["logistic", "pss", "tree", "boosting"][kind];
        let fit = LearnerSpec::from_params(name, Task::Propensity, []).unwrap().fit(&x, &r, &[1.0; 80], seed).unwrap();
        for row in gaussian_matrix(20, 2, seed + 2).iter_rows() {
            let p = fit.predict(row);
            prop_assert!((0.0005..=1.0).contains(&p));
        }
    }
}
