//! Point and variance estimators for the finite-population mean.

mod ht;
mod ipw;
mod missing;
mod model_assisted;

pub use ht::{ht_estimate, ht_mean, ht_variance};
pub use ipw::{ipw_mean, ipw_variance, IpwForm};
pub use missing::{
    aipw_crossfit, aipw_oracle, build_completed_file, crossfit_nuisances, imputed_mean, CompletedFile, CompletedRow,
    Nuisances,
};
pub use model_assisted::{greg, ma_crossfit, ma_crossfit_modified, ma_feasible, ma_oracle};

use std::io::Write;
use std::path::Path;

use crate::designs::{DesignKind, DesignSpec, SampleRealization};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nonresponse::ResponsePattern;
use crate::numeric::{self, CompensatedSum};
use crate::population::FinitePopulation;

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Observed survey data: the realized sample with covariates and outcomes in
/// sample order, plus response indicators when there is nonresponse.
/// Outcomes of nonrespondents are never read.
#[derive(Debug, Clone)]
pub struct SurveyData {
    pub sample: SampleRealization,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub responses: Option<ResponsePattern>,
}

impl SurveyData {
    pub fn new(sample: SampleRealization, x: Matrix, y: Vec<f64>, responses: Option<ResponsePattern>) -> Result<Self> {
        let n = sample.len();
        if x.rows() != n || y.len() != n {
            return Err(Error::invalid(format!(
                "sample has {n} units but data has {} rows and {} outcomes",
                x.rows(),
                y.len()
            )));
        }
        if let Some(r) = &responses {
            if r.len() != n {
                return Err(Error::invalid("response pattern and sample differ in length"));
            }
        }
        Ok(Self { sample, x, y, responses })
    }

    /// Extracts the sampled rows of a population. Outcomes of nonrespondents
    /// are replaced by NaN so that no estimator can use them.
    pub fn from_population(
        pop: &FinitePopulation,
        sample: &SampleRealization,
        responses: Option<ResponsePattern>,
    ) -> Result<Self> {
        let x = pop.covariates().select_rows(sample.ids());
        let y = sample
            .ids()
            .iter()
            .enumerate()
            .map(|(i, &k)| match &responses {
                Some(r) if !r.responded(i) => f64::NAN,
                _ => pop.outcomes()[k],
            })
            .collect();
        Self::new(sample.clone(), x, y, responses)
    }

    pub fn len(&self) -> usize {
        self.sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample.is_empty()
    }

    pub fn responses(&self) -> Result<&ResponsePattern> {
        self.responses.as_ref().ok_or_else(|| Error::invalid("this estimator needs response indicators"))
    }

    pub fn population_size(&self) -> usize {
        self.sample.population_size()
    }

    pub fn weights(&self) -> &[f64] {
        self.sample.weights()
    }
}

/// A point estimate with optional variance and Wald interval, tagged with
/// the estimator and learner that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub estimator: String,
    pub learner: String,
    pub k_folds: Option<usize>,
    pub point: f64,
    pub variance: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub alpha: f64,
    /// Variance computed without cross-fitting from an adaptive fit; known
    /// to understate the true variance.
    pub naive: bool,
}

impl EstimateResult {
    pub fn new(estimator: &str, point: f64) -> Self {
        Self {
            estimator: estimator.to_string(),
            learner: String::new(),
            k_folds: None,
            point,
            variance: None,
            ci: None,
            alpha: DEFAULT_ALPHA,
            naive: false,
        }
    }

    pub fn learner(mut self, learner: &str) -> Self {
        self.learner = learner.to_string();
        self
    }

    pub fn folds(mut self, k: usize) -> Self {
        self.k_folds = Some(k);
        self
    }

    pub fn naive(mut self, naive: bool) -> Self {
        self.naive = naive;
        self
    }

    /// Attaches a variance estimate and the matching Wald interval.
    pub fn with_variance(mut self, variance: f64, alpha: f64) -> Result<Self> {
        self.ci = Some(wald_ci(self.point, variance, alpha)?);
        self.variance = Some(variance);
        self.alpha = alpha;
        Ok(self)
    }

    pub const CSV_HEADER: [&'static str; 8] =
        ["estimator", "learner", "K", "point", "variance", "ci_low", "ci_high", "naive_flag"];

    pub fn csv_record(&self) -> [String; 8] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.estimator.clone(),
            self.learner.clone(),
            self.k_folds.map(|k| k.to_string()).unwrap_or_default(),
            self.point.to_string(),
            opt(self.variance),
            opt(self.ci.map(|c| c.0)),
            opt(self.ci.map(|c| c.1)),
            self.naive.to_string(),
        ]
    }
}

pub fn write_results(path: impl AsRef<Path>, results: &[EstimateResult]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(EstimateResult::CSV_HEADER).map_err(|e| Error::csv(path, e))?;
    for r in results {
        w.write_record(r.csv_record()).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `point -/+ z_{1-alpha/2} sqrt(variance)`.
pub fn wald_ci(point: f64, variance: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::invalid(format!("variance must be a nonnegative real, got {variance}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let half = numeric::normal_quantile(1.0 - alpha / 2.0) * variance.sqrt();
    Ok((point - half, point + half))
}

/// `sum_{k,l in S} (Delta_kl / pi_kl) (v_k / pi_k) (v_l / pi_l)`, with
/// `v` in sample order. Uses the closed forms available for each design.
/// Fails when some pair of units has `pi_kl = 0`.
pub fn pairwise_quadratic(sample: &SampleRealization, design: &DesignSpec, v: &[f64]) -> Result<f64> {
    check_sample(sample, design, v)?;
    if let Some((k, l)) = design.zero_joint_pair() {
        return Err(Error::ZeroJointInclusion { k, l });
    }
    let ids = sample.ids();
    let pi = design.inclusion_probs();
    let a = |i: usize| v[i] / pi[ids[i]];
    match design.kind() {
        DesignKind::Poisson | DesignKind::PoissonPps => {
            Ok(numeric::sum((0..ids.len()).map(|i| (1.0 - pi[ids[i]]) * a(i) * a(i))))
        }
        DesignKind::Srswor => {
            let scores: Vec<f64> = (0..ids.len()).map(a).collect();
            equal_probability_block(&scores, pi.first().copied().unwrap_or(1.0), design, ids)
        }
        DesignKind::StratifiedSrswor => {
            let mut groups: Vec<Vec<(usize, f64)>> = Vec::new();
            for (i, &k) in ids.iter().enumerate() {
                let h = design.stratum_of(k).expect("stratified design");
                if groups.len() <= h {
                    groups.resize(h + 1, Vec::new());
                }
                groups[h].push((k, a(i)));
            }
            let mut total = CompensatedSum::new();
            for g in groups.iter().filter(|g| !g.is_empty()) {
                let scores: Vec<f64> = g.iter().map(|e| e.1).collect();
                let members: Vec<usize> = g.iter().map(|e| e.0).collect();
                total.add(equal_probability_block(&scores, pi[members[0]], design, &members)?);
            }
            Ok(total.value())
        }
    }
}

/// Quadratic form over units sharing one inclusion probability and one
/// joint probability.
fn equal_probability_block(scores: &[f64], pi: f64, design: &DesignSpec, members: &[usize]) -> Result<f64> {
    let s1 = numeric::sum(scores.iter().copied());
    let s2 = numeric::sum(scores.iter().map(|a| a * a));
    let diag = (1.0 - pi) * s2;
    if scores.len() < 2 {
        return Ok(diag);
    }
    let joint = design.joint_inclusion_prob(members[0], members[1])?;
    if joint <= 0.0 {
        return Err(Error::ZeroJointInclusion { k: members[0], l: members[1] });
    }
    let c = (joint - pi * pi) / joint;
    Ok(diag + c * (s1 * s1 - s2))
}

/// The same quadratic form as an explicit double sum over pairs.
pub fn pairwise_quadratic_exact(sample: &SampleRealization, design: &DesignSpec, v: &[f64]) -> Result<f64> {
    check_sample(sample, design, v)?;
    let ids = sample.ids();
    let pi = design.inclusion_probs();
    let mut total = CompensatedSum::new();
    for (i, &k) in ids.iter().enumerate() {
        for (j, &l) in ids.iter().enumerate() {
            total.add(design.delta_ratio(k, l)? * (v[i] / pi[k]) * (v[j] / pi[l]));
        }
    }
    Ok(total.value())
}

fn check_sample(sample: &SampleRealization, design: &DesignSpec, v: &[f64]) -> Result<()> {
    if sample.population_size() != design.population_size() {
        return Err(Error::invalid("sample and design refer to populations of different size"));
    }
    if v.len() != sample.len() {
        return Err(Error::invalid("one value per sampled unit is required"));
    }
    Ok(())
}

/// `N^-1 sum_S w_k v_k`.
pub(crate) fn weighted_mean(sample: &SampleRealization, v: &[f64]) -> f64 {
    numeric::sum(sample.weights().iter().zip(v).map(|(w, y)| w * y)) / sample.population_size() as f64
}

pub(crate) fn write_completed(path: &Path, file: &CompletedFile) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    let io = |e| Error::io(path, e);
    writeln!(w, "id,weight,respondent,value").map_err(io)?;
    for r in &file.rows {
        writeln!(w, "{},{},{},{}", r.id, r.weight, u8::from(r.respondent), r.value).map_err(io)?;
    }
    w.flush().map_err(io)
}
