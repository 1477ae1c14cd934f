//! Estimating-equation scores and numerical Gateaux derivatives, with the
//! design and response expectations computed by exhaustive enumeration.
//!
//! Scores that involve response indicators are only exact when the outcome
//! model holds without error (`y_k = m(x_k)`), so the diagnostics are meant
//! for populations generated with zero noise.

use rand::Rng;

use crate::designs::{enumerate_design, DesignSpec, ENUMERATION_LIMIT};
use crate::error::{Error, Result};
use crate::nonresponse::{enumerate_responses, ResponseMechanism};
use crate::numeric::CompensatedSum;
use crate::population::FinitePopulation;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreKind {
    /// `(I/pi)(y - f) + f - theta`
    ModelAssisted,
    /// `(I/pi)(r y + (1 - r) f) - theta`
    Imputed,
    /// `(I/pi)(f + r (y - f) / g) - theta`
    Aipw,
    /// `I r y / (pi f) - theta`, with `f` the propensity
    Ipw,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 4] = [ScoreKind::ModelAssisted, ScoreKind::Imputed, ScoreKind::Aipw, ScoreKind::Ipw];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::ModelAssisted => "MA",
            ScoreKind::Imputed => "Imputed",
            ScoreKind::Aipw => "AIPW",
            ScoreKind::Ipw => "IPW",
        }
    }

    fn uses_response(self) -> bool {
        self != ScoreKind::ModelAssisted
    }

    /// Score of one unit. `m` is the outcome nuisance value, `p` the
    /// propensity nuisance value.
    pub fn evaluate(self, unit: &UnitData, theta: f64, m: f64, p: f64) -> f64 {
        let ip = if unit.sampled { 1.0 / unit.pi } else { 0.0 };
        let r = if unit.responded { 1.0 } else { 0.0 };
        match self {
            ScoreKind::ModelAssisted => ip * (unit.y - m) + m - theta,
            ScoreKind::Imputed => ip * (r * unit.y + (1.0 - r) * m) - theta,
            ScoreKind::Aipw => {
                if unit.sampled && unit.responded {
                    ip * (m + (unit.y - m) / p) - theta
                } else {
                    ip * m - theta
                }
            }
            ScoreKind::Ipw => {
                if unit.sampled && unit.responded {
                    ip * unit.y / p - theta
                } else {
                    -theta
                }
            }
        }
    }
}

/// What a score sees of one unit.
#[derive(Debug, Clone, Copy)]
pub struct UnitData {
    pub sampled: bool,
    pub pi: f64,
    pub responded: bool,
    pub y: f64,
}

/// Nuisance values on every population unit.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceValues {
    pub m: Vec<f64>,
    pub p: Vec<f64>,
}

impl NuisanceValues {
    /// Evaluates nuisance functions on the population covariates.
    pub fn from_fns(pop: &FinitePopulation, m: impl Fn(&[f64]) -> f64, p: impl Fn(&[f64]) -> f64) -> Self {
        let rows = pop.covariates();
        Self { m: rows.iter_rows().map(&m).collect(), p: rows.iter_rows().map(&p).collect() }
    }

    fn shifted(&self, t: f64, dir: &Direction) -> Self {
        let shift = |base: &[f64], d: &Option<Vec<f64>>| match d {
            Some(h) => base.iter().zip(h).map(|(b, hk)| b + t * hk).collect(),
            None => base.to_vec(),
        };
        Self { m: shift(&self.m, &dir.m), p: shift(&self.p, &dir.p) }
    }
}

/// Perturbation direction on the population: `m + t h_m`, `p + t h_p`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Direction {
    pub m: Option<Vec<f64>>,
    pub p: Option<Vec<f64>>,
}

impl Direction {
    pub fn outcome(pop: &FinitePopulation, h: impl Fn(&[f64]) -> f64) -> Self {
        Self { m: Some(pop.covariates().iter_rows().map(h).collect()), p: None }
    }

    pub fn propensity(pop: &FinitePopulation, g: impl Fn(&[f64]) -> f64) -> Self {
        Self { m: None, p: Some(pop.covariates().iter_rows().map(g).collect()) }
    }

    pub fn joint(pop: &FinitePopulation, h: impl Fn(&[f64]) -> f64, g: impl Fn(&[f64]) -> f64) -> Self {
        Self {
            m: Some(pop.covariates().iter_rows().map(h).collect()),
            p: Some(pop.covariates().iter_rows().map(g).collect()),
        }
    }
}

/// A function of the covariates.
pub type CovariateFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A shipped family of direction functions: constants, single coordinates
/// and random-sign steps on one coordinate.
pub fn direction_library(seed: u64, count: usize, n_covariates: usize) -> Vec<CovariateFn> {
    let mut out: Vec<CovariateFn> = Vec::with_capacity(count);
    let mut rng = rng::stream(seed);
    for i in 0..count {
        match i % 3 {
            0 => {
                let c: f64 = rng.random_range(-1.0..1.0);
                out.push(Box::new(move |_| c));
            }
            1 => {
                let j = rng.random_range(0..n_covariates);
                let c: f64 = rng.random_range(-1.0..1.0);
                out.push(Box::new(move |x| c * x[j]));
            }
            _ => {
                let j = rng.random_range(0..n_covariates);
                let cut: f64 = rng.random_range(-0.5..0.5);
                let lo: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let hi = -lo * rng.random_range(0.2..1.0);
                out.push(Box::new(move |x| if x[j] <= cut { lo } else { hi }));
            }
        }
    }
    out
}

/// Exact `E[N^-1 sum_U psi(z_k, theta, eta)]` over the design and, for scores
/// using responses, over independent responses with probabilities from
/// `mechanism`.
pub fn score_expectation(
    kind: ScoreKind,
    pop: &FinitePopulation,
    design: &DesignSpec,
    mechanism: Option<&ResponseMechanism>,
    theta: f64,
    nuisances: &NuisanceValues,
) -> Result<f64> {
    let big_n = pop.n_units();
    if design.population_size() != big_n || nuisances.m.len() != big_n || nuisances.p.len() != big_n {
        return Err(Error::invalid("population, design and nuisances differ in size"));
    }
    let true_p: Option<Vec<f64>> = match (kind.uses_response(), mechanism) {
        (true, Some(mech)) => Some(pop.covariates().iter_rows().map(|x| mech.prob_of(x)).collect()),
        (true, None) => return Err(Error::invalid("this score needs a response mechanism")),
        (false, _) => None,
    };
    let pi = design.inclusion_probs();
    let y = pop.outcomes();
    let samples = enumerate_design(design)?;
    if true_p.is_some() {
        let outcomes: f64 = samples.iter().map(|(s, _)| 2f64.powi(s.len() as i32)).sum();
        if outcomes > ENUMERATION_LIMIT {
            return Err(Error::EnumerationLimit { outcomes, limit: ENUMERATION_LIMIT });
        }
    }
    let mut total = CompensatedSum::new();
    for (sample, prob) in samples {
        let patterns = match &true_p {
            Some(tp) => {
                let sp: Vec<f64> = sample.ids().iter().map(|&k| tp[k]).collect();
                enumerate_responses(&sp)?
            }
            None => vec![(crate::nonresponse::ResponsePattern::full(sample.len()), 1.0)],
        };
        for (pattern, q) in patterns {
            let mut responded = vec![false; big_n];
            for (i, &k) in sample.ids().iter().enumerate() {
                responded[k] = pattern.responded(i);
            }
            let mut s = CompensatedSum::new();
            for k in 0..big_n {
                let unit = UnitData { sampled: sample.contains(k), pi: pi[k], responded: responded[k], y: y[k] };
                s.add(kind.evaluate(&unit, theta, nuisances.m[k], nuisances.p[k]));
            }
            total.add(prob * q * s.value() / big_n as f64);
        }
    }
    Ok(total.value())
}

pub const DEFAULT_STEPS: [f64; 3] = [1e-2, 1e-3, 1e-4];

#[derive(Debug, Clone, PartialEq)]
pub struct GateauxEstimate {
    /// Richardson extrapolation of the two smallest central differences.
    pub value: f64,
    /// `(t, [U(eta + t h) - U(eta - t h)] / 2t)` for each step.
    pub central: Vec<(f64, f64)>,
}

impl GateauxEstimate {
    /// Central difference at the smallest step.
    pub fn finest(&self) -> f64 {
        self.central.last().map_or(f64::NAN, |c| c.1)
    }
}

/// Numerical Gateaux derivative of the expected score in `direction`.
#[allow(clippy::too_many_arguments)]
pub fn gateaux_derivative(
    kind: ScoreKind,
    pop: &FinitePopulation,
    design: &DesignSpec,
    mechanism: Option<&ResponseMechanism>,
    theta: f64,
    nuisances: &NuisanceValues,
    direction: &Direction,
    steps: &[f64],
) -> Result<GateauxEstimate> {
    if steps.is_empty() || steps.windows(2).any(|w| !(w[1] < w[0])) || steps.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::invalid("steps must be positive and strictly decreasing"));
    }
    let mut central = Vec::with_capacity(steps.len());
    for &t in steps {
        let plus = nuisances.shifted(t, direction);
        let minus = nuisances.shifted(-t, direction);
        if matches!(kind, ScoreKind::Aipw | ScoreKind::Ipw) {
            for p in plus.p.iter().chain(&minus.p) {
                if !(*p > 0.0 && *p <= 1.0) {
                    return Err(Error::invalid(format!("perturbed propensity {p} leaves (0, 1] at step {t}")));
                }
            }
        }
        let up = score_expectation(kind, pop, design, mechanism, theta, &plus)?;
        let down = score_expectation(kind, pop, design, mechanism, theta, &minus)?;
        central.push((t, (up - down) / (2.0 * t)));
    }
    let value = match central.len() {
        1 => central[0].1,
        len => {
            let (t1, d1) = central[len - 2];
            let (t2, d2) = central[len - 1];
            let q2 = (t1 / t2) * (t1 / t2);
            (q2 * d2 - d1) / (q2 - 1.0)
        }
    };
    Ok(GateauxEstimate { value, central })
}

/// `N^-1 sum_U (1 - p_k) h_k`: derivative of the imputed score in the outcome model.
pub fn imputed_derivative_closed_form(p: &[f64], h: &[f64]) -> f64 {
    crate::numeric::sum(p.iter().zip(h).map(|(pk, hk)| (1.0 - pk) * hk)) / p.len() as f64
}

/// `-N^-1 sum_U y_k h_k / p_k`: derivative of the IPW score in the propensity.
pub fn ipw_derivative_closed_form(y: &[f64], p: &[f64], h: &[f64]) -> f64 {
    -crate::numeric::sum(y.iter().zip(p).zip(h).map(|((yk, pk), hk)| yk * hk / pk)) / y.len() as f64
}
