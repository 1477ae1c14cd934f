//! Second-order gradient boosting for binary targets with cross-validated
//! early stopping.

use rand::seq::SliceRandom;

use super::tree::{grow, FeatureChoice, GrowParams, SortedColumns, SplitRule, Tree};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numeric::{expit, logit};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, PartialEq)]
pub struct BoostingParams {
    pub eta: f64,
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub subsample: f64,
    pub colsample: f64,
    pub max_rounds: usize,
    /// Folds for choosing the number of rounds; below 2 uses `max_rounds`.
    pub cv_folds: usize,
    pub patience: usize,
}

impl Default for BoostingParams {
    fn default() -> Self {
        Self {
            eta: 0.3,
            max_depth: 6,
            min_child_weight: 1.0,
            lambda: 1.0,
            gamma: 0.0,
            subsample: 1.0,
            colsample: 1.0,
            max_rounds: 100,
            cv_folds: 5,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedModel {
    pub base_score: f64,
    pub eta: f64,
    pub trees: Vec<Tree>,
}

impl BoostedModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.eta * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        expit(self.margin(x))
    }
}

fn base_margin(r: &[f64], w: &[f64], rows: &[usize]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for &i in rows {
        num += w[i] * r[i];
        den += w[i];
    }
    logit((num / den).clamp(1e-6, 1.0 - 1e-6))
}

/// Boosting state on a fixed set of training rows, optionally tracking the
/// loss on held-out rows.
struct Booster<'a> {
    x: &'a Matrix,
    r: &'a [f64],
    w: &'a [f64],
    params: &'a BoostingParams,
    train: Vec<usize>,
    sorted: SortedColumns,
    margin: Vec<f64>,
    test: Vec<usize>,
    test_margin: Vec<f64>,
    base: f64,
    trees: Vec<Tree>,
    rng: StreamRng,
}

impl<'a> Booster<'a> {
    fn new(
        x: &'a Matrix,
        r: &'a [f64],
        w: &'a [f64],
        params: &'a BoostingParams,
        train: Vec<usize>,
        test: Vec<usize>,
        seed: u64,
    ) -> Self {
        let base = base_margin(r, w, &train);
        let sorted = SortedColumns::new(&x.select_rows(&train));
        Booster {
            x,
            r,
            w,
            params,
            margin: vec![base; train.len()],
            test_margin: vec![base; test.len()],
            train,
            sorted,
            test,
            base,
            trees: Vec::new(),
            rng: rng::stream(seed),
        }
    }

    fn round(&mut self) {
        let m = self.train.len();
        let p = self.x.cols();
        let mut counts = vec![1u32; m];
        if self.params.subsample < 1.0 {
            let keep = ((self.params.subsample * m as f64).round() as usize).clamp(1, m);
            let mut order: Vec<usize> = (0..m).collect();
            order.shuffle(&mut self.rng);
            counts.fill(0);
            for &i in &order[..keep] {
                counts[i] = 1;
            }
        }
        let features = if self.params.colsample < 1.0 {
            let keep = ((self.params.colsample * p as f64).round() as usize).clamp(1, p);
            let mut f: Vec<usize> = (0..p).collect();
            f.shuffle(&mut self.rng);
            f.truncate(keep);
            f.sort_unstable();
            FeatureChoice::Subset(f)
        } else {
            FeatureChoice::All
        };
        let (cols, inst_row) = self.sorted.restrict(&counts);
        let stats: Vec<[f64; 2]> = inst_row
            .iter()
            .map(|&li| {
                let li = li as usize;
                let row = self.train[li];
                let prob = expit(self.margin[li]);
                let wt = self.w[row];
                [wt * (prob - self.r[row]), wt * (prob * (1.0 - prob)).max(1e-16)]
            })
            .collect();
        let grow_params = GrowParams {
            min_split: 2,
            min_leaf: 1,
            max_depth: self.params.max_depth,
            features,
            rule: SplitRule::Newton {
                lambda: self.params.lambda,
                gamma: self.params.gamma,
                min_child_weight: self.params.min_child_weight,
            },
        };
        let mult = vec![1u32; inst_row.len()];
        let tree = grow(cols, &stats, &mult, &grow_params, &mut self.rng);
        let eta = self.params.eta;
        for (li, &row) in self.train.iter().enumerate() {
            self.margin[li] += eta * tree.predict(self.x.row(row));
        }
        for (ti, &row) in self.test.iter().enumerate() {
            self.test_margin[ti] += eta * tree.predict(self.x.row(row));
        }
        self.trees.push(tree);
    }

    fn test_logloss(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (ti, &row) in self.test.iter().enumerate() {
            let p = expit(self.test_margin[ti]).clamp(1e-15, 1.0 - 1e-15);
            let y = self.r[row];
            num -= self.w[row] * (y * p.ln() + (1.0 - y) * (1.0 - p).ln());
            den += self.w[row];
        }
        num / den
    }
}

/// Number of rounds minimising the mean held-out log loss across folds,
/// stopping once `patience` rounds pass without improvement.
fn cross_validated_rounds(x: &Matrix, r: &[f64], w: &[f64], params: &BoostingParams, seed: u64) -> usize {
    let n = x.rows();
    let k = params.cv_folds.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(rng::derive(seed, 0xcf)));
    let mut boosters: Vec<Booster> = (0..k)
        .map(|v| {
            let mut train = Vec::with_capacity(n);
            let mut test = Vec::with_capacity(n / k + 1);
            for (pos, &i) in order.iter().enumerate() {
                if pos % k == v {
                    test.push(i);
                } else {
                    train.push(i);
                }
            }
            train.sort_unstable();
            test.sort_unstable();
            Booster::new(x, r, w, params, train, test, rng::derive(seed, 0x100 + v as u64))
        })
        .collect();
    let mut best = (f64::INFINITY, 0usize);
    for round in 1..=params.max_rounds {
        let mut loss = 0.0;
        for b in boosters.iter_mut() {
            b.round();
            loss += b.test_logloss();
        }
        loss /= k as f64;
        if loss < best.0 {
            best = (loss, round);
        } else if round - best.1 >= params.patience {
            break;
        }
    }
    best.1
}

pub(crate) fn fit_boosting(
    x: &Matrix,
    r: &[f64],
    weights: &[f64],
    params: &BoostingParams,
    seed: u64,
) -> Result<(BoostedModel, usize)> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::InsufficientData("boosting needs at least one row".into()));
    }
    if r.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid("boosting targets must be 0 or 1"));
    }
    let wsum: f64 = weights.iter().sum();
    let w: Vec<f64> = weights.iter().map(|v| v * n as f64 / wsum).collect();
    let rounds = if params.cv_folds >= 2 && params.max_rounds > 0 && n >= params.cv_folds {
        cross_validated_rounds(x, r, &w, params, seed)
    } else {
        params.max_rounds
    };
    let mut booster = Booster::new(x, r, &w, params, (0..n).collect(), Vec::new(), rng::derive(seed, 0xf1));
    for _ in 0..rounds {
        booster.round();
    }
    Ok((BoostedModel { base_score: booster.base, eta: params.eta, trees: booster.trees }, rounds))
}
