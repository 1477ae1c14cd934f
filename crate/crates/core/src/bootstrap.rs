//! Pseudo-population bootstrap for IPW estimators under SRSWOR.

use rand::seq::index;
use rayon::prelude::*;

use crate::designs::{DesignKind, DesignSpec};
use crate::error::{Error, Result};
use crate::estimators::{IpwForm, SurveyData};
use crate::learners::LearnerSpec;
use crate::numeric::{self, CompensatedSum};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub seed: u64,
    pub form: IpwForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutput {
    /// Sample variance of the replicates (divisor B - 1).
    pub variance: f64,
    /// Replicate estimates ordered by replicate index.
    pub replicates: Vec<f64>,
    /// Bootstrap samples discarded because they held no respondent.
    pub redraws: usize,
}

/// The pseudo-population: every sampled unit repeated `copies` times,
/// carrying its covariates, outcome and response flag.
#[derive(Debug, Clone, Copy)]
pub struct PseudoPopulation {
    pub sample_size: usize,
    pub copies: usize,
}

impl PseudoPopulation {
    pub fn new(data: &SurveyData, design: &DesignSpec) -> Result<Self> {
        if design.kind() != DesignKind::Srswor {
            return Err(Error::UnsupportedDesign { design: design.kind().name(), what: "pseudo-population bootstrap" });
        }
        let big_n = design.population_size();
        let n = data.len();
        if n == 0 || !big_n.is_multiple_of(n) {
            return Err(Error::Bootstrap(format!("N/n = {big_n}/{n} is not an integer")));
        }
        Ok(Self { sample_size: n, copies: big_n / n })
    }

    pub fn size(&self) -> usize {
        self.sample_size * self.copies
    }

    /// Sample row that pseudo-unit `j` copies.
    pub fn row_of(&self, j: usize) -> usize {
        j / self.copies
    }
}

/// IPW estimate on a bootstrap sample given as sample rows; the constant
/// SRSWOR weight cancels in the Hajek form.
fn replicate_estimate(data: &SurveyData, rows: &[usize], p_hat: &[f64], form: IpwForm) -> f64 {
    let resp = data.responses.as_ref().expect("checked by caller");
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for (pos, &i) in rows.iter().enumerate() {
        if resp.responded(i) {
            num.add(data.y[i] / p_hat[pos]);
            den.add(1.0 / p_hat[pos]);
        }
    }
    match form {
        IpwForm::Hajek => num.value() / den.value(),
        IpwForm::Expansion => num.value() / rows.len() as f64,
    }
}

/// Replicates each sampled unit N/n times, draws B SRSWOR samples of size n
/// from the pseudo-population with response flags held fixed, refits the
/// propensity learner on each and recomputes the IPW estimate.
pub fn pseudo_population_bootstrap(
    data: &SurveyData,
    learner: &LearnerSpec,
    design: &DesignSpec,
    config: &BootstrapConfig,
) -> Result<BootstrapOutput> {
    if config.replications < 2 {
        return Err(Error::Bootstrap("at least 2 replications are needed".into()));
    }
    let resp = data.responses()?;
    let pseudo = PseudoPopulation::new(data, design)?;
    let n = pseudo.sample_size;
    let big_n = pseudo.size();
    let r: Vec<f64> = resp.indicators().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let cap = 10 * config.replications;
    let weight = big_n as f64 / n as f64;

    let results: Vec<Result<(f64, usize)>> = (0..config.replications)
        .into_par_iter()
        .map(|b| {
            let base = rng::derive(config.seed, b as u64);
            for attempt in 0..=cap {
                let mut stream = rng::stream(rng::derive(base, attempt as u64));
                let rows: Vec<usize> = index::sample(&mut stream, big_n, n).iter().map(|j| pseudo.row_of(j)).collect();
                if rows.iter().all(|&i| r[i] == 0.0) {
                    continue;
                }
                let x = data.x.select_rows(&rows);
                let rb: Vec<f64> = rows.iter().map(|&i| r[i]).collect();
                let fit = learner.fit(&x, &rb, &vec![weight; n], rng::derive(base, 0xf17 + attempt as u64))?;
                let p_hat: Vec<f64> = x.iter_rows().map(|row| fit.predict(row)).collect();
                return Ok((replicate_estimate(data, &rows, &p_hat, config.form), attempt));
            }
            Err(Error::Bootstrap(format!("replicate {b} found no respondents in {cap} draws")))
        })
        .collect();

    let mut replicates = Vec::with_capacity(config.replications);
    let mut redraws = 0;
    for res in results {
        let (est, extra) = res?;
        replicates.push(est);
        redraws += extra;
    }
    if redraws > cap {
        return Err(Error::Bootstrap(format!("{redraws} redraws exceed the cap of {cap}")));
    }
    Ok(BootstrapOutput { variance: numeric::sample_variance(&replicates), replicates, redraws })
}
