//! Estimators for item nonresponse: imputation, AIPW and the completed file.

use super::{pairwise_quadratic, weighted_mean, EstimateResult, SurveyData};
use crate::designs::{DesignSpec, FoldLevel, FoldPartition};
use crate::error::{Error, Result};
use crate::learners::{fit_crossfitted_by, FittedPredictor, LearnerSpec};
use crate::nonresponse::ResponseMechanism;
use crate::numeric::{self, CompensatedSum};
use crate::rng;

/// Imputed mean: respondents keep `y_k`, nonrespondents get `m(x_k)` from a
/// fit on respondents. No variance is attached.
pub fn imputed_mean(data: &SurveyData, learner: &LearnerSpec, seed: u64) -> Result<EstimateResult> {
    let resp = data.responses()?;
    let rows = resp.respondents();
    if rows.is_empty() {
        return Err(Error::InsufficientData("no respondents to fit the imputation model".into()));
    }
    let m = learner.fit_rows(&data.x, &data.y, data.weights(), &rows, seed)?;
    let filled: Vec<f64> =
        (0..data.len()).map(|i| if resp.responded(i) { data.y[i] } else { m.predict(data.x.row(i)) }).collect();
    Ok(EstimateResult::new("imputed", weighted_mean(&data.sample, &filled)).learner(learner.id()).naive(true))
}

fn pseudo_values(data: &SurveyData, m: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    let resp = data.responses()?;
    (0..data.len())
        .map(|i| {
            if resp.responded(i) {
                if !(p[i] > 0.0) {
                    return Err(Error::NonPositiveProbability { unit: data.sample.ids()[i], value: p[i] });
                }
                Ok(m[i] + (data.y[i] - m[i]) / p[i])
            } else {
                Ok(m[i])
            }
        })
        .collect()
}

/// AIPW with known outcome model `m` and response mechanism `p`.
///
/// The variance is the design quadratic form on the pseudo-values. When
/// `sigma2` is given, the nonresponse term
/// `sigma2 N^-2 sum_{S_r} w_k (1 - p_k) / p_k^2` is added.
pub fn aipw_oracle(
    data: &SurveyData,
    design: &DesignSpec,
    m: &FittedPredictor,
    p: &ResponseMechanism,
    sigma2: Option<f64>,
    alpha: f64,
) -> Result<EstimateResult> {
    let resp = data.responses()?;
    let mh: Vec<f64> = data.x.iter_rows().map(|x| m.predict(x)).collect();
    let ph: Vec<f64> = data.x.iter_rows().map(|x| p.prob_of(x)).collect();
    for (i, &v) in ph.iter().enumerate() {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::NonPositiveProbability { unit: data.sample.ids()[i], value: v });
        }
    }
    let eta = pseudo_values(data, &mh, &ph)?;
    let big_n = data.population_size() as f64;
    let mut var = pairwise_quadratic(&data.sample, design, &eta)? / (big_n * big_n);
    if let Some(s2) = sigma2 {
        let w = data.weights();
        var += s2 / (big_n * big_n)
            * numeric::sum(resp.respondents().into_iter().map(|i| w[i] * (1.0 - ph[i]) / (ph[i] * ph[i])));
    }
    EstimateResult::new("aipw_oracle", weighted_mean(&data.sample, &eta))
        .learner(m.label())
        .with_variance(var.max(0.0), alpha)
}

/// Cross-fitted nuisance values for every sampled unit.
#[derive(Debug, Clone)]
pub struct Nuisances {
    /// `m^(-v(k))(x_k)`.
    pub m: Vec<f64>,
    /// `p^(-v(k))(x_k)`, clipped.
    pub p: Vec<f64>,
}

/// Fits the outcome model on complement respondents and the propensity model
/// on the whole complement, for each sample-level fold. A complement without
/// nonrespondents gets the propensity 1.
pub fn crossfit_nuisances(
    data: &SurveyData,
    folds: &FoldPartition,
    m_spec: &LearnerSpec,
    p_spec: &LearnerSpec,
    seed: u64,
) -> Result<Nuisances> {
    let resp = data.responses()?;
    if folds.level() != FoldLevel::Sample || folds.len() != data.len() {
        return Err(Error::invalid("cross-fitted AIPW needs a sample-level fold partition over S"));
    }
    let k = folds.k_folds();
    let row_fold = folds.assignment();
    let r: Vec<f64> = resp.indicators().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let m_fits = fit_crossfitted_by(
        m_spec,
        &data.x,
        &data.y,
        data.weights(),
        row_fold,
        k,
        Some(resp.indicators()),
        rng::derive(seed, 1),
    )?;
    let p_fits: Vec<FittedPredictor> = (0..k)
        .map(|v| {
            let rows: Vec<usize> = (0..data.len()).filter(|&i| row_fold[i] != v).collect();
            if rows.is_empty() {
                return Err(Error::FoldFit {
                    fold: v,
                    source: Box::new(Error::InsufficientData("the complement of this fold is empty".into())),
                });
            }
            if rows.iter().all(|&i| r[i] == 1.0) {
                return Ok(FittedPredictor::constant(1.0, p_spec.task()));
            }
            p_spec
                .fit_rows(&data.x, &r, data.weights(), &rows, rng::derive(rng::derive(seed, 2), v as u64))
                .map_err(|e| Error::FoldFit { fold: v, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    let floor = p_spec.clip_floor();
    let m = (0..data.len()).map(|i| m_fits[row_fold[i]].predict(data.x.row(i))).collect();
    let p = (0..data.len()).map(|i| p_fits[row_fold[i]].predict(data.x.row(i)).max(floor).min(1.0)).collect();
    Ok(Nuisances { m, p })
}

/// Cross-fitted AIPW over a sample-level partition shared by both nuisance
/// fits, with the quadratic-form variance on the cross-fitted pseudo-values.
pub fn aipw_crossfit(
    data: &SurveyData,
    design: &DesignSpec,
    folds: &FoldPartition,
    m_spec: &LearnerSpec,
    p_spec: &LearnerSpec,
    seed: u64,
    alpha: f64,
) -> Result<EstimateResult> {
    let nu = crossfit_nuisances(data, folds, m_spec, p_spec, seed)?;
    let eta = pseudo_values(data, &nu.m, &nu.p)?;
    let big_n = data.population_size() as f64;
    let var = pairwise_quadratic(&data.sample, design, &eta)? / (big_n * big_n);
    EstimateResult::new("aipw_crossfit", weighted_mean(&data.sample, &eta))
        .learner(&format!("m={};p={}", m_spec.id(), p_spec.id()))
        .folds(folds.k_folds())
        .with_variance(var.max(0.0), alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletedRow {
    pub id: usize,
    pub weight: f64,
    pub respondent: bool,
    pub value: f64,
}

/// One row per sampled unit; nonrespondents carry adjusted imputed values
/// whose weighted mean reproduces the cross-fitted AIPW estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedFile {
    pub rows: Vec<CompletedRow>,
    pub population_size: usize,
}

impl CompletedFile {
    /// `N^-1 sum_S w_k value_k`.
    pub fn weighted_mean(&self) -> f64 {
        numeric::sum(self.rows.iter().map(|r| r.weight * r.value)) / self.population_size as f64
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        super::write_completed(path.as_ref(), self)
    }
}

/// Completed file from precomputed cross-fitted nuisances.
pub fn completed_file_from(data: &SurveyData, nu: &Nuisances) -> Result<CompletedFile> {
    let resp = data.responses()?;
    let w = data.weights();
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for i in 0..data.len() {
        if resp.responded(i) {
            num.add(w[i] * (1.0 - nu.p[i]) / nu.p[i] * (data.y[i] - nu.m[i]));
        } else {
            den.add(w[i]);
        }
    }
    // With no nonrespondents the correction is never used.
    let correction = if den.value() > 0.0 { num.value() / den.value() } else { 0.0 };
    let rows = (0..data.len())
        .map(|i| CompletedRow {
            id: data.sample.ids()[i],
            weight: w[i],
            respondent: resp.responded(i),
            value: if resp.responded(i) { data.y[i] } else { nu.m[i] + correction },
        })
        .collect();
    Ok(CompletedFile { rows, population_size: data.population_size() })
}

/// Completed data file built from the same cross-fitted nuisances as
/// [`aipw_crossfit`] with the same seed.
pub fn build_completed_file(
    data: &SurveyData,
    folds: &FoldPartition,
    m_spec: &LearnerSpec,
    p_spec: &LearnerSpec,
    seed: u64,
) -> Result<CompletedFile> {
    let nu = crossfit_nuisances(data, folds, m_spec, p_spec, seed)?;
    completed_file_from(data, &nu)
}
