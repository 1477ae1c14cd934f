#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use surveyml::designs::{
    conditional_inclusion_probs, enumerate_design, make_folds, realized_fold_sizes, FoldLevel, FoldPartition,
};
use surveyml::estimators::{pairwise_quadratic, pairwise_quadratic_exact};
use surveyml::{rng, DesignKind, DesignSpec, Error};

/// First- and second-order inclusion probabilities recovered by enumeration.
fn enumerated_probs(design: &DesignSpec) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = design.population_size();
    let mut first = vec![0.0; n];
    let mut second = vec![vec![0.0; n]; n];
    for (s, p) in enumerate_design(design).unwrap() {
        for &k in s.ids() {
            first[k] += p;
            for &l in s.ids() {
                second[k][l] += p;
            }
        }
    }
    (first, second)
}

fn assert_probabilities_match(design: &DesignSpec) {
    let total: f64 = enumerate_design(design).unwrap().iter().map(|o| o.1).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let (first, second) = enumerated_probs(design);
    let n = design.population_size();
    for k in 0..n {
        assert!((first[k] - design.inclusion_prob(k)).abs() < 1e-12);
        for l in 0..n {
            if k != l {
                assert!((second[k][l] - design.joint_inclusion_prob(k, l).unwrap()).abs() < 1e-12, "pair ({k}, {l})");
            }
        }
    }
}

#[test]
fn enumeration_reproduces_inclusion_probabilities() {
    assert_probabilities_match(&DesignSpec::srswor(7, 3).unwrap());
    assert_probabilities_match(&DesignSpec::poisson(vec![0.1, 0.9, 0.5, 1.0, 0.3]).unwrap());
    assert_probabilities_match(&DesignSpec::stratified(vec![1, 0, 1, 0, 1, 2, 2], vec![1, 2, 1]).unwrap());
    assert_probabilities_match(&DesignSpec::poisson_pps(&[1.0, 2.0, 3.0, 10.0, 4.0], 2.0).unwrap());
}

#[test]
fn enumeration_refuses_large_designs() {
    assert!(matches!(enumerate_design(&DesignSpec::srswor(60, 30).unwrap()), Err(Error::EnumerationLimit { .. })));
    assert!(matches!(
        enumerate_design(&DesignSpec::poisson(vec![0.5; 25]).unwrap()),
        Err(Error::EnumerationLimit { .. })
    ));
}

#[test]
fn draws_respect_the_design() {
    let mut r = rng::stream(3);
    let srs = DesignSpec::srswor(50, 12).unwrap();
    let strat = DesignSpec::stratified((0..50).map(|k| k % 3).collect(), vec![2, 3, 4]).unwrap();
    for _ in 0..50 {
        let s = srs.draw(&mut r);
        assert_eq!(s.len(), 12);
        assert!(s.ids().windows(2).all(|w| w[0] < w[1]));
        assert!(s.weights().iter().all(|&w| (w - 50.0 / 12.0).abs() < 1e-12));
        let t = strat.draw(&mut r);
        let per: Vec<usize> = (0..3).map(|h| t.ids().iter().filter(|&&k| k % 3 == h).count()).collect();
        assert_eq!(per, vec![2, 3, 4]);
    }
}

#[test]
fn poisson_draw_frequencies_match_probabilities() {
    let pi = vec![0.1, 0.5, 0.9, 1.0];
    let d = DesignSpec::poisson(pi.clone()).unwrap();
    let mut r = rng::stream(4);
    let reps = 40_000;
    let mut hits = [0usize; 4];
    for _ in 0..reps {
        for &k in d.draw(&mut r).ids() {
            hits[k] += 1;
        }
    }
    for k in 0..4 {
        let f = hits[k] as f64 / reps as f64;
        // five standard errors
        assert!((f - pi[k]).abs() <= 5.0 * (pi[k] * (1.0 - pi[k]) / reps as f64).sqrt() + 1e-12);
    }
}

#[test]
fn invalid_designs_are_rejected() {
    assert!(DesignSpec::srswor(5, 0).is_err());
    assert!(DesignSpec::srswor(5, 6).is_err());
    assert!(DesignSpec::poisson(vec![0.5, 0.0]).is_err());
    assert!(DesignSpec::poisson(vec![1.2]).is_err());
    assert!(DesignSpec::stratified(vec![0, 0, 1], vec![3, 1]).is_err());
    assert!(DesignSpec::stratified(vec![0, 2], vec![1, 1]).is_err());
    assert!(DesignSpec::poisson_pps(&[1.0, -1.0], 1.0).is_err());
}

#[test]
fn zero_joint_inclusion_blocks_variance_estimation() {
    let d = DesignSpec::stratified(vec![0, 0, 0, 1, 1, 1], vec![2, 1]).unwrap();
    assert_eq!(d.zero_joint_pair(), Some((3, 4)));
    let s = enumerate_design(&d).unwrap().remove(0).0;
    assert!(matches!(pairwise_quadratic(&s, &d, &[1.0, 2.0, 3.0]), Err(Error::ZeroJointInclusion { .. })));
    assert_eq!(DesignSpec::srswor(4, 1).unwrap().zero_joint_pair(), Some((0, 1)));
    assert_eq!(DesignSpec::srswor(4, 2).unwrap().zero_joint_pair(), None);
    assert_eq!(DesignSpec::poisson(vec![0.5; 3]).unwrap().zero_joint_pair(), None);
}

#[test]
fn folds_are_balanced_and_reproducible() {
    let a = make_folds(103, 5, FoldLevel::Sample, &mut rng::stream(9)).unwrap();
    let b = make_folds(103, 5, FoldLevel::Sample, &mut rng::stream(9)).unwrap();
    assert_eq!(a, b);
    let sizes = a.sizes();
    assert_eq!(sizes.iter().sum::<usize>(), 103);
    assert!(sizes.iter().all(|&s| s == 20 || s == 21));
    assert!(make_folds(3, 5, FoldLevel::Sample, &mut rng::stream(0)).is_err());
    assert!(FoldPartition::from_assignment(vec![0, 2], 2, FoldLevel::Sample).is_err());
}

#[test]
fn conditional_probabilities_use_realized_fold_counts() {
    let d = DesignSpec::srswor(8, 4).unwrap();
    let folds = FoldPartition::from_assignment(vec![0, 0, 0, 1, 1, 1, 1, 1], 2, FoldLevel::Population).unwrap();
    let s = surveyml::SampleRealization::from_parts(8, vec![0, 3, 4, 7], vec![2.0; 4]).unwrap();
    let counts = realized_fold_sizes(&folds, &s);
    assert_eq!(counts, vec![1, 3]);
    let pt = conditional_inclusion_probs(&d, &folds, &counts).unwrap();
    assert_eq!(pt, vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.6, 0.6, 0.6, 0.6, 0.6]);
    assert!(conditional_inclusion_probs(&d, &folds, &[2, 1]).is_err());
    let pois = DesignSpec::poisson(vec![0.5; 8]).unwrap();
    assert!(conditional_inclusion_probs(&pois, &folds, &counts).is_err());
}

fn design_strategy() -> impl Strategy<Value = DesignSpec> {
    prop_oneof![
        (2usize..9).prop_flat_map(|n| (Just(n), 2..=n)).prop_map(|(big_n, n)| DesignSpec::srswor(big_n, n).unwrap()),
        prop::collection::vec(0.05f64..1.0, 1..9).prop_map(|pi| DesignSpec::poisson(pi).unwrap()),
        (1usize..4, 1usize..4).prop_map(|(a, b)| {
            let labels: Vec<usize> = (0..a + 2).map(|_| 0).chain((0..b + 2).map(|_| 1)).collect();
            DesignSpec::stratified(labels, vec![2, 2]).unwrap()
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_quadratic_equals_the_double_sum(design in design_strategy(), seed in 0u64..10_000) {
        let s = design.draw(&mut rng::stream(seed));
        let v: Vec<f64> = (0..s.len()).map(|i| ((seed + i as u64) % 13) as f64 - 6.0).collect();
        let a = pairwise_quadratic(&s, &design, &v).unwrap();
        let b = pairwise_quadratic_exact(&s, &design, &v).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
    }

    #[test]
    fn enumerated_probabilities_sum_to_one(design in design_strategy()) {
        let total: f64 = enumerate_design(&design).unwrap().iter().map(|o| o.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        if design.kind() != DesignKind::Poisson {
            let n = design.sample_size().unwrap();
            prop_assert!(enumerate_design(&design).unwrap().iter().all(|o| o.0.len() == n));
        }
    }
}
