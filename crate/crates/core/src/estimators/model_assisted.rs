use super::{pairwise_quadratic, EstimateResult};
use crate::designs::{DesignSpec, FoldLevel, FoldPartition, SampleRealization};
use crate::error::{Error, Result};
use crate::learners::{fit_crossfitted_by, fit_wls, FittedPredictor, LearnerSpec};
use crate::matrix::Matrix;
use crate::numeric::{self, CompensatedSum};
use crate::population::FinitePopulation;

fn sample_outcomes(pop: &FinitePopulation, sample: &SampleRealization) -> Vec<f64> {
    sample.ids().iter().map(|&k| pop.outcomes()[k]).collect()
}

/// `N^-1 [sum_U m_k + sum_S w_k (y_k - m_k)]` and the residuals `y_k - m_k` over S.
fn difference_estimate(sample: &SampleRealization, y_s: &[f64], pred_total: f64, pred_s: &[f64]) -> (f64, Vec<f64>) {
    let resid: Vec<f64> = y_s.iter().zip(pred_s).map(|(y, m)| y - m).collect();
    let mut s = CompensatedSum::new();
    s.add(pred_total);
    for (w, e) in sample.weights().iter().zip(&resid) {
        s.add(w * e);
    }
    (s.value() / sample.population_size() as f64, resid)
}

fn residual_variance(sample: &SampleRealization, design: &DesignSpec, resid: &[f64]) -> Result<f64> {
    let n = sample.population_size() as f64;
    Ok((pairwise_quadratic(sample, design, resid)? / (n * n)).max(0.0))
}

/// Difference estimator with a fixed working model `m`, evaluated on all of U.
pub fn ma_oracle(
    pop: &FinitePopulation,
    sample: &SampleRealization,
    design: &DesignSpec,
    m: &FittedPredictor,
    alpha: f64,
) -> Result<EstimateResult> {
    let pred_total = numeric::sum(pop.covariates().iter_rows().map(|x| m.predict(x)));
    let pred_s: Vec<f64> = sample.ids().iter().map(|&k| m.predict(pop.x(k))).collect();
    let (point, resid) = difference_estimate(sample, &sample_outcomes(pop, sample), pred_total, &pred_s);
    EstimateResult::new("ma_oracle", point)
        .learner(m.label())
        .with_variance(residual_variance(sample, design, &resid)?, alpha)
}

/// Difference estimator with `m` fitted on the same sample (no cross-fitting).
/// Its variance estimate uses in-sample residuals and is flagged naive.
pub fn ma_feasible(
    pop: &FinitePopulation,
    sample: &SampleRealization,
    design: &DesignSpec,
    learner: &LearnerSpec,
    seed: u64,
    alpha: f64,
) -> Result<EstimateResult> {
    let x_s = pop.covariates().select_rows(sample.ids());
    let y_s = sample_outcomes(pop, sample);
    let m = learner.fit(&x_s, &y_s, sample.weights(), seed)?;
    let pred_total = numeric::sum(pop.covariates().iter_rows().map(|x| m.predict(x)));
    let pred_s = m.predict_matrix(&x_s);
    let (point, resid) = difference_estimate(sample, &y_s, pred_total, &pred_s);
    Ok(EstimateResult::new("ma_feasible", point)
        .learner(learner.id())
        .with_variance(residual_variance(sample, design, &resid)?, alpha)?
        .naive(true))
}

/// Generalized regression estimator from sample covariates and known
/// population covariate totals. With `intercept`, the intercept total is N.
pub fn greg(
    sample: &SampleRealization,
    x_s: &Matrix,
    y_s: &[f64],
    totals: &[f64],
    design: &DesignSpec,
    intercept: bool,
    alpha: f64,
) -> Result<EstimateResult> {
    if totals.len() != x_s.cols() {
        return Err(Error::invalid(format!("{} covariate totals for {} covariates", totals.len(), x_s.cols())));
    }
    let beta = fit_wls(x_s, y_s, sample.weights(), intercept)?;
    let big_n = sample.population_size() as f64;
    let pred_total = beta.intercept * big_n + numeric::sum(beta.coef.iter().zip(totals).map(|(b, t)| b * t));
    let pred_s: Vec<f64> = x_s.iter_rows().map(|x| beta.index(x)).collect();
    let (point, resid) = difference_estimate(sample, y_s, pred_total, &pred_s);
    Ok(EstimateResult::new("greg", point)
        .learner("wls")
        .with_variance(residual_variance(sample, design, &resid)?, alpha)?
        .naive(true))
}

/// Predictions `m^(-v(k))(x_k)` for every unit of U, with predictor `v`
/// trained on the sampled units outside population fold `v`.
fn crossfit_population_predictions(
    pop: &FinitePopulation,
    sample: &SampleRealization,
    folds: &FoldPartition,
    learner: &LearnerSpec,
    empty_fallback: Option<f64>,
    seed: u64,
) -> Result<Vec<f64>> {
    if folds.level() != FoldLevel::Population || folds.len() != pop.n_units() {
        return Err(Error::invalid("cross-fitted MA needs a population-level fold partition over U"));
    }
    let x_s = pop.covariates().select_rows(sample.ids());
    let y_s = sample_outcomes(pop, sample);
    let row_fold: Vec<usize> = sample.ids().iter().map(|&k| folds.fold(k)).collect();
    let k = folds.k_folds();
    let predictors: Vec<FittedPredictor> = match empty_fallback {
        None => fit_crossfitted_by(learner, &x_s, &y_s, sample.weights(), &row_fold, k, None, seed)?,
        Some(c) => (0..k)
            .map(|v| {
                let rows: Vec<usize> = (0..row_fold.len()).filter(|&i| row_fold[i] != v).collect();
                if rows.is_empty() {
                    return Ok(FittedPredictor::constant(c, learner.task()));
                }
                learner
                    .fit_rows(&x_s, &y_s, sample.weights(), &rows, crate::rng::derive(seed, v as u64))
                    .map_err(|e| Error::FoldFit { fold: v, source: Box::new(e) })
            })
            .collect::<Result<_>>()?,
    };
    Ok((0..pop.n_units()).map(|j| predictors[folds.fold(j)].predict(pop.x(j))).collect())
}

/// Cross-fitted model-assisted estimator over population-level folds.
///
/// `empty_fallback`: when a fold's complement holds no sampled unit, use this
/// constant as that fold's predictor instead of failing. The choice depends
/// only on the other folds, so design-unbiasedness under Poisson sampling is
/// preserved.
#[allow(clippy::too_many_arguments)]
pub fn ma_crossfit(
    pop: &FinitePopulation,
    sample: &SampleRealization,
    design: &DesignSpec,
    folds: &FoldPartition,
    learner: &LearnerSpec,
    empty_fallback: Option<f64>,
    seed: u64,
    alpha: f64,
) -> Result<EstimateResult> {
    let pred = crossfit_population_predictions(pop, sample, folds, learner, empty_fallback, seed)?;
    let pred_s: Vec<f64> = sample.ids().iter().map(|&k| pred[k]).collect();
    let (point, resid) =
        difference_estimate(sample, &sample_outcomes(pop, sample), numeric::sum(pred.iter().copied()), &pred_s);
    EstimateResult::new("ma_crossfit", point)
        .learner(learner.id())
        .folds(folds.k_folds())
        .with_variance(residual_variance(sample, design, &resid)?, alpha)
}

/// Cross-fitted estimator with `I_k / pi_tilde_k` in place of `I_k / pi_k`,
/// where `pi_tilde` are inclusion probabilities conditional on the realized
/// fold counts. Point estimate only.
pub fn ma_crossfit_modified(
    pop: &FinitePopulation,
    sample: &SampleRealization,
    folds: &FoldPartition,
    learner: &LearnerSpec,
    pi_tilde: &[f64],
    seed: u64,
) -> Result<EstimateResult> {
    if pi_tilde.len() != pop.n_units() {
        return Err(Error::invalid("one conditional inclusion probability per population unit is required"));
    }
    if let Some(k) = pi_tilde.iter().position(|p| !(*p > 0.0 && *p <= 1.0)) {
        return Err(Error::NonPositiveProbability { unit: k, value: pi_tilde[k] });
    }
    let pred = crossfit_population_predictions(pop, sample, folds, learner, None, seed)?;
    let mut s = CompensatedSum::new();
    s.extend(pred.iter().copied());
    for &k in sample.ids() {
        s.add((pop.outcomes()[k] - pred[k]) / pi_tilde[k]);
    }
    Ok(EstimateResult::new("ma_crossfit_modified", s.value() / pop.n_units() as f64)
        .learner(learner.id())
        .folds(folds.k_folds()))
}
