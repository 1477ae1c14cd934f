use super::{pairwise_quadratic, EstimateResult, SurveyData};
use crate::designs::DesignSpec;
use crate::error::{Error, Result};
use crate::numeric::{self, CompensatedSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpwForm {
    /// `N^-1 sum_{S_r} (w_k / p_k) y_k`.
    Expansion,
    /// Ratio form normalised by `sum_{S_r} w_k / p_k`.
    Hajek,
}

impl IpwForm {
    pub fn name(self) -> &'static str {
        match self {
            IpwForm::Expansion => "ipw_expansion",
            IpwForm::Hajek => "ipw_hajek",
        }
    }
}

fn check_probs(data: &SurveyData, p: &[f64]) -> Result<()> {
    let resp = data.responses()?;
    if p.len() != data.len() {
        return Err(Error::invalid("one propensity per sampled unit is required"));
    }
    for i in resp.respondents() {
        if !(p[i] > 0.0) {
            return Err(Error::NonPositiveProbability { unit: data.sample.ids()[i], value: p[i] });
        }
    }
    Ok(())
}

/// IPW mean with propensities `p` in sample order (only respondents' entries
/// are read). When `known_p_design` is given and the form is Expansion, the
/// variance estimator for known propensities is attached.
pub fn ipw_mean(
    data: &SurveyData,
    p: &[f64],
    form: IpwForm,
    known_p_design: Option<&DesignSpec>,
    alpha: f64,
) -> Result<EstimateResult> {
    check_probs(data, p)?;
    let resp = data.responses()?;
    let w = data.weights();
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for i in resp.respondents() {
        let a = w[i] / p[i];
        num.add(a * data.y[i]);
        den.add(a);
    }
    let point = match form {
        IpwForm::Expansion => num.value() / data.population_size() as f64,
        IpwForm::Hajek => {
            if den.value() <= 0.0 {
                return Err(Error::InsufficientData("no respondents".into()));
            }
            num.value() / den.value()
        }
    };
    let result = EstimateResult::new(form.name(), point);
    match (form, known_p_design) {
        (IpwForm::Expansion, Some(design)) => {
            let v = ipw_variance(data, p, design)?;
            result.with_variance(v.max(0.0), alpha)
        }
        _ => Ok(result),
    }
}

/// Variance estimator of the expansion IPW mean with known propensities:
/// a sampling component estimated from respondents with the `(1 - pi)`
/// diagonal correction, plus the nonresponse component
/// `sum_{S_r} w_k^2 (1 - p_k) / p_k^2 y_k^2`, all over `N^2`.
pub fn ipw_variance(data: &SurveyData, p: &[f64], design: &DesignSpec) -> Result<f64> {
    check_probs(data, p)?;
    let resp = data.responses()?;
    let pi = design.inclusion_probs();
    let ids = data.sample.ids();
    let w = data.weights();
    let v: Vec<f64> = (0..data.len()).map(|i| if resp.responded(i) { data.y[i] / p[i] } else { 0.0 }).collect();
    let sampling = pairwise_quadratic(&data.sample, design, &v)?;
    let correction = numeric::sum(resp.respondents().into_iter().map(|i| {
        let pk = pi[ids[i]];
        (1.0 - pk) * (1.0 - p[i]) / (p[i] * p[i]) * data.y[i] * data.y[i] / (pk * pk)
    }));
    let nonresponse = numeric::sum(
        resp.respondents().into_iter().map(|i| w[i] * w[i] * (1.0 - p[i]) / (p[i] * p[i]) * data.y[i] * data.y[i]),
    );
    let big_n = data.population_size() as f64;
    Ok((sampling - correction + nonresponse) / (big_n * big_n))
}
