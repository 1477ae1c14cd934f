use rand::Rng;
use rayon::prelude::*;

use super::tree::{grow, FeatureChoice, GrowParams, SortedColumns, SplitRule, Tree};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub ntree: usize,
    pub mtry: usize,
    /// Minimum number of (resampled) rows in a leaf.
    pub nodesize: usize,
    pub bootstrap: bool,
    pub max_depth: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { ntree: 500, mtry: 2, nodesize: 5, bootstrap: true, max_depth: usize::MAX }
    }
}

/// Grows `ntree` trees, each on its own bootstrap resample of rows with
/// `mtry` candidate features per node. Tree `t` uses the stream derived from
/// `(seed, t)`, so the result does not depend on scheduling.
pub(crate) fn fit_forest(x: &Matrix, y: &[f64], w: &[f64], params: &ForestParams, seed: u64) -> Vec<Tree> {
    let n = x.rows();
    let sorted = SortedColumns::new(x);
    let grow_params = GrowParams {
        min_split: 2 * params.nodesize,
        min_leaf: params.nodesize,
        max_depth: params.max_depth,
        features: FeatureChoice::PerNode(params.mtry),
        rule: SplitRule::Squared { min_gain: 0.0 },
    };
    (0..params.ntree)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(rng::derive(seed, t as u64));
            let mut counts = vec![0u32; n];
            if params.bootstrap {
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1;
                }
            } else {
                counts.fill(1);
            }
            let (cols, inst_row) = sorted.restrict(&counts);
            let mult: Vec<u32> = inst_row.iter().map(|&r| counts[r as usize]).collect();
            let stats: Vec<[f64; 2]> = inst_row
                .iter()
                .map(|&r| {
                    let r = r as usize;
                    let c = counts[r] as f64;
                    [c * w[r], c * w[r] * y[r]]
                })
                .collect();
            grow(cols, &stats, &mult, &grow_params, &mut rng)
        })
        .collect()
}
