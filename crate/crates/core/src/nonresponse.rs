//! Response mechanisms that depend on covariates only.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::designs::SampleRealization;
use crate::error::{Error, Result};
use crate::numeric::expit;
use crate::population::FinitePopulation;

#[derive(Debug, Clone, PartialEq)]
pub enum MechanismKind {
    /// `a + (1 - a) expit(eta)` with the eight-indicator score `eta`.
    Appendix {
        floor: f64,
        x3_median: f64,
    },
    Constant(f64),
    Custom(&'static str),
}

type ProbFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Response propensity `p(x)`; reads covariates only, so MAR holds by
/// construction.
#[derive(Clone)]
pub struct ResponseMechanism {
    kind: MechanismKind,
    prob: ProbFn,
}

impl fmt::Debug for ResponseMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ResponseMechanism").field("kind", &self.kind).finish()
    }
}

/// Indicator-based score of the simulation mechanism.
pub fn appendix_score(x: &[f64], x3_median: f64) -> f64 {
    let ind = |c: bool| if c { 1.0 } else { 0.0 };
    let (x1, x2, x3, x4) = (x[0], x[1], x[2], x[3]);
    -0.3 + 1.8 * ind(x1 > 0.0 && x2 > 0.0 && x3 > 0.0) - 1.5 * ind(x1 < -0.5 && x4 > 0.7)
        + 1.2 * ind(x2 > 0.5) * ind(x3 < -0.5)
        - 0.8 * ind(0.3 < x4 && x4 < 0.7) * ind(x1 > 0.0)
        + 0.6 * ind(x1 > 1.0) * ind(x2 < -1.0)
        - 0.5 * ind(x3 > x3_median) * ind(x4 < 0.5)
        + 0.4 * ind(x1.abs() < 0.5) * ind(x2 > 0.0)
        - 0.7 * ind(x1 > 0.0 && x2 < 0.0 && x3 < 0.0)
}

impl ResponseMechanism {
    /// The simulation mechanism with floor 0.1, using the stored population
    /// median of x3.
    pub fn appendix(pop: &FinitePopulation) -> Result<Self> {
        if pop.n_covariates() != 4 {
            return Err(Error::invalid(format!(
                "the simulation mechanism needs 4 covariates, population has {}",
                pop.n_covariates()
            )));
        }
        let med = pop.covariate_median(2);
        let floor = 0.1;
        Ok(Self {
            kind: MechanismKind::Appendix { floor, x3_median: med },
            prob: Arc::new(move |x| floor + (1.0 - floor) * expit(appendix_score(x, med))),
        })
    }

    pub fn constant(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::invalid(format!("response probability {p} outside (0, 1]")));
        }
        Ok(Self { kind: MechanismKind::Constant(p), prob: Arc::new(move |_| p) })
    }

    /// Any covariate function with values in (0, 1]; checked when evaluated.
    pub fn custom(label: &'static str, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { kind: MechanismKind::Custom(label), prob: Arc::new(f) }
    }

    pub fn kind(&self) -> &MechanismKind {
        &self.kind
    }

    pub fn prob_of(&self, x: &[f64]) -> f64 {
        (self.prob)(x)
    }

    /// `p(x_k)` for every sampled unit, in sample order.
    pub fn sample_probs(&self, pop: &FinitePopulation, sample: &SampleRealization) -> Result<Vec<f64>> {
        sample
            .ids()
            .iter()
            .map(|&k| {
                let p = self.prob_of(pop.x(k));
                if p > 0.0 && p <= 1.0 {
                    Ok(p)
                } else {
                    Err(Error::NonPositiveProbability { unit: k, value: p })
                }
            })
            .collect()
    }
}

/// Response indicators over the sample, in sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponsePattern {
    indicators: Vec<bool>,
}

impl ResponsePattern {
    pub fn new(indicators: Vec<bool>) -> Self {
        Self { indicators }
    }

    pub fn full(len: usize) -> Self {
        Self { indicators: vec![true; len] }
    }

    pub fn indicators(&self) -> &[bool] {
        &self.indicators
    }

    pub fn responded(&self, i: usize) -> bool {
        self.indicators[i]
    }

    pub fn len(&self) -> usize {
        self.indicators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indicators.is_empty()
    }

    /// Sample positions of respondents.
    pub fn respondents(&self) -> Vec<usize> {
        (0..self.indicators.len()).filter(|&i| self.indicators[i]).collect()
    }

    /// Sample positions of nonrespondents.
    pub fn nonrespondents(&self) -> Vec<usize> {
        (0..self.indicators.len()).filter(|&i| !self.indicators[i]).collect()
    }

    /// Population ids of respondents.
    pub fn respondent_ids(&self, sample: &SampleRealization) -> Vec<usize> {
        self.respondents().into_iter().map(|i| sample.ids()[i]).collect()
    }

    pub fn nonrespondent_ids(&self, sample: &SampleRealization) -> Vec<usize> {
        self.nonrespondents().into_iter().map(|i| sample.ids()[i]).collect()
    }

    pub fn n_respondents(&self) -> usize {
        self.indicators.iter().filter(|&&r| r).count()
    }
}

/// Independent Bernoulli(p(x_k)) draws for the sampled units.
pub fn draw_responses<R: Rng + ?Sized>(
    mechanism: &ResponseMechanism,
    sample: &SampleRealization,
    pop: &FinitePopulation,
    rng: &mut R,
) -> Result<ResponsePattern> {
    if sample.is_empty() {
        return Err(Error::InsufficientData("cannot draw responses for an empty sample".into()));
    }
    let probs = mechanism.sample_probs(pop, sample)?;
    Ok(ResponsePattern::new(probs.iter().map(|&p| p >= 1.0 || rng.random::<f64>() < p).collect()))
}

/// Every response pattern of a sample with its probability, for exact
/// expectations. Limited to 20 sampled units.
pub fn enumerate_responses(probs: &[f64]) -> Result<Vec<(ResponsePattern, f64)>> {
    let n = probs.len();
    if n > 20 {
        return Err(Error::EnumerationLimit {
            outcomes: 2f64.powi(n as i32),
            limit: crate::designs::ENUMERATION_LIMIT,
        });
    }
    let mut out = Vec::with_capacity(1 << n);
    for mask in 0u32..(1u32 << n) {
        let mut p = 1.0;
        let ind: Vec<bool> = (0..n)
            .map(|i| {
                let r = mask >> i & 1 == 1;
                p *= if r { probs[i] } else { 1.0 - probs[i] };
                r
            })
            .collect();
        if p > 0.0 {
            out.push((ResponsePattern::new(ind), p));
        }
    }
    Ok(out)
}
