use super::FittedPredictor;
use crate::numeric::quantile_sorted;

/// Response rates within strata of a base propensity score.
#[derive(Debug, Clone)]
pub struct StratifiedModel {
    pub base: Box<FittedPredictor>,
    /// Upper stratum boundaries; a score equal to a cut falls in the lower stratum.
    pub cuts: Vec<f64>,
    pub rates: Vec<f64>,
}

impl StratifiedModel {
    pub fn stratum(&self, score: f64) -> usize {
        self.cuts.partition_point(|&c| score > c)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.rates[self.stratum(self.base.predict_raw(x))]
    }
}

/// Cuts the fitted scores at their `C`-quantiles and computes the weighted
/// response rate of each stratum. Empty strata are merged into a neighbour.
pub(crate) fn stratify(base: FittedPredictor, scores: &[f64], r: &[f64], w: &[f64], strata: usize) -> StratifiedModel {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cuts: Vec<f64> = (1..strata).map(|j| quantile_sorted(&sorted, j as f64 / strata as f64)).collect();
    loop {
        let model = StratifiedModel { base: Box::new(base.clone()), cuts: cuts.clone(), rates: Vec::new() };
        let mut weight = vec![0.0; cuts.len() + 1];
        let mut count = vec![0usize; cuts.len() + 1];
        let mut resp = vec![0.0; cuts.len() + 1];
        for i in 0..scores.len() {
            let s = model.stratum(scores[i]);
            weight[s] += w[i];
            resp[s] += w[i] * r[i];
            count[s] += 1;
        }
        if let Some(empty) = count.iter().position(|&c| c == 0) {
            // drop the boundary to the upper neighbour, or the lower one for the last stratum
            cuts.remove(empty.min(cuts.len() - 1));
            continue;
        }
        let rates = resp.iter().zip(&weight).map(|(a, b)| a / b).collect();
        return StratifiedModel { base: Box::new(base), cuts, rates };
    }
}
