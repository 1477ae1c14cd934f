use super::{pairwise_quadratic, weighted_mean, EstimateResult};
use crate::designs::{DesignSpec, SampleRealization};
use crate::error::Result;

/// Horvitz-Thompson mean `N^-1 sum_S w_k y_k`; `y` is in sample order.
pub fn ht_mean(sample: &SampleRealization, y: &[f64]) -> EstimateResult {
    EstimateResult::new("ht", weighted_mean(sample, y))
}

/// Unbiased variance estimator of the HT mean.
pub fn ht_variance(sample: &SampleRealization, y: &[f64], design: &DesignSpec) -> Result<f64> {
    let n = sample.population_size() as f64;
    Ok(pairwise_quadratic(sample, design, y)? / (n * n))
}

/// HT mean with variance estimate and Wald interval.
pub fn ht_estimate(sample: &SampleRealization, y: &[f64], design: &DesignSpec, alpha: f64) -> Result<EstimateResult> {
    let v = ht_variance(sample, y, design)?.max(0.0);
    ht_mean(sample, y).with_variance(v, alpha)
}
