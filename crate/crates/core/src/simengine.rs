//! Monte Carlo scenario runner.
//!
//! A scenario fixes one population per `(N, n)` grid point and repeats
//! sample draw, response draw and every configured estimator `R` times.
//! Replication `r` of grid point `g` reads only seeds derived from
//! `(master, g, r)`, so results do not depend on the worker count.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::bootstrap::{pseudo_population_bootstrap, BootstrapConfig};
use crate::config::Config;
use crate::designs::{make_folds, DesignSpec, FoldLevel};
use crate::error::{Error, Result};
use crate::estimators::{
    aipw_crossfit, aipw_oracle, greg, ht_estimate, imputed_mean, ipw_mean, ma_crossfit, ma_feasible, EstimateResult,
    IpwForm, SurveyData,
};
use crate::learners::{FittedPredictor, LearnerSpec, Task};
use crate::nonresponse::{draw_responses, ResponseMechanism};
use crate::numeric;
use crate::population::{generate_population, linear_predictor, DgpConfig, FinitePopulation, DEFAULT_COEFFICIENTS};
use crate::rng;

/// Replications whose failure share exceeds this fail the scenario.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub enum PopulationSource {
    Generate { coefficients: Vec<f64>, noise_sd: f64, seed: Option<u64> },
    Csv(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignChoice {
    Srswor,
    /// Poisson sampling with equal probabilities `n / N`.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MechanismChoice {
    /// Everyone responds; estimators that need responses are rejected.
    None,
    Appendix,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Propensity {
    /// The true response mechanism.
    True,
    /// Fitted once on the full sample with `r` as target.
    Learner(LearnerSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorKind {
    Ht,
    /// Known covariate totals; in simulations they come from the population.
    Greg {
        totals: Option<Vec<f64>>,
    },
    /// Difference estimator with the generating linear mean.
    MaOracle,
    MaFeasible(LearnerSpec),
    MaCrossfit {
        learner: LearnerSpec,
        k: usize,
    },
    Imputed(LearnerSpec),
    Ipw {
        form: IpwForm,
        propensity: Propensity,
        bootstrap: bool,
    },
    AipwOracle {
        nonresponse_term: bool,
    },
    Aipw {
        m: LearnerSpec,
        p: LearnerSpec,
        k: usize,
    },
}

impl EstimatorKind {
    pub fn needs_responses(&self) -> bool {
        matches!(
            self,
            EstimatorKind::Imputed(_)
                | EstimatorKind::Ipw { .. }
                | EstimatorKind::AipwOracle { .. }
                | EstimatorKind::Aipw { .. }
        )
    }

    pub fn learner_label(&self) -> String {
        match self {
            EstimatorKind::Ht => "none".into(),
            EstimatorKind::Greg { .. } => "wls".into(),
            EstimatorKind::MaOracle | EstimatorKind::AipwOracle { .. } => "true".into(),
            EstimatorKind::MaFeasible(l) | EstimatorKind::MaCrossfit { learner: l, .. } | EstimatorKind::Imputed(l) => {
                l.id().into()
            }
            EstimatorKind::Ipw { propensity: Propensity::True, .. } => "true".into(),
            EstimatorKind::Ipw { propensity: Propensity::Learner(l), .. } => l.id().into(),
            EstimatorKind::Aipw { m, p, .. } => format!("m={};p={}", m.id(), p.id()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub id: String,
    pub kind: EstimatorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    /// `(N, n)` pairs.
    pub grid: Vec<(usize, usize)>,
    pub population: PopulationSource,
    pub design: DesignChoice,
    pub mechanism: MechanismChoice,
    pub estimators: Vec<EstimatorConfig>,
    pub replications: usize,
    /// Bootstrap replications; 0 turns the bootstrap off.
    pub bootstrap: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Worker count; `None` uses every available core.
    pub threads: Option<usize>,
}

fn learner_from(cfg: &Config, prefix: &str, task: Task) -> Result<LearnerSpec> {
    let kind = cfg.require(prefix)?.to_string();
    let params = cfg.section(prefix);
    LearnerSpec::from_params(&kind, task, params.iter().map(|(k, v)| (k.as_str(), v.as_str())))
        .map_err(|e| Error::Config(format!("`{prefix}`: {e}")))
}

fn parse_grid(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let bad = || Error::Config(format!("grid entry `{pair}` is not of the form N:n"));
            let (a, b) = pair.split_once(':').ok_or_else(bad)?;
            Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

/// Reads the `estimators` list and each estimator's `<id>.*` keys.
pub fn parse_estimators(cfg: &Config) -> Result<Vec<EstimatorConfig>> {
    let ids: Vec<String> =
        cfg.get_list("estimators")?.ok_or_else(|| Error::Config("missing key `estimators`".into()))?;
    let mut estimators = Vec::with_capacity(ids.len());
    for id in ids {
        let key = |s: &str| format!("{id}.{s}");
        let kind_name: String = cfg.require(&key("kind"))?.to_string();
        let k: usize = cfg.get_or(&key("K"), 5)?;
        let kind = match kind_name.as_str() {
            "ht" => EstimatorKind::Ht,
            "greg" => EstimatorKind::Greg { totals: cfg.get_list(&key("totals"))? },
            "ma_oracle" => EstimatorKind::MaOracle,
            "ma_feasible" => EstimatorKind::MaFeasible(learner_from(cfg, &key("learner"), Task::Regression)?),
            "ma_crossfit" => {
                EstimatorKind::MaCrossfit { learner: learner_from(cfg, &key("learner"), Task::Regression)?, k }
            }
            "imputed" => EstimatorKind::Imputed(learner_from(cfg, &key("learner"), Task::Regression)?),
            "ipw" => {
                let form = match cfg.get_or(&key("form"), "hajek".to_string())?.as_str() {
                    "hajek" => IpwForm::Hajek,
                    "expansion" => IpwForm::Expansion,
                    other => return Err(Error::Config(format!("{}: unknown value `{other}`", key("form")))),
                };
                let propensity = if cfg.contains(&key("learner")) {
                    Propensity::Learner(learner_from(cfg, &key("learner"), Task::Propensity)?)
                } else {
                    Propensity::True
                };
                EstimatorKind::Ipw { form, propensity, bootstrap: cfg.get_bool(&key("bootstrap"), false)? }
            }
            "aipw_oracle" => {
                EstimatorKind::AipwOracle { nonresponse_term: cfg.get_bool(&key("nonresponse_term"), true)? }
            }
            "aipw" => EstimatorKind::Aipw {
                m: learner_from(cfg, &key("m_learner"), Task::Regression)?,
                p: learner_from(cfg, &key("p_learner"), Task::Propensity)?,
                k,
            },
            other => return Err(Error::Config(format!("{}: unknown estimator kind `{other}`", key("kind")))),
        };
        estimators.push(EstimatorConfig { id, kind });
    }
    // Estimator blocks left out of the list are allowed, so that the list can
    // be narrowed with an override.
    let defined: Vec<String> = cfg
        .iter()
        .filter_map(|(k, _)| k.strip_suffix(".kind"))
        .filter(|p| !p.contains('.'))
        .map(String::from)
        .collect();
    for prefix in defined {
        cfg.section(&prefix);
    }
    Ok(estimators)
}

impl ScenarioConfig {
    /// Reads a scenario from flat config keys. Unknown keys are an error.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let name = cfg.get_or("scenario", "scenario".to_string())?;
        let grid = parse_grid(cfg.require("grid")?)?;
        let population = match cfg.get_or("population.source", "generate".to_string())?.as_str() {
            "generate" => PopulationSource::Generate {
                coefficients: cfg.get_list("population.coefficients")?.unwrap_or_else(|| DEFAULT_COEFFICIENTS.to_vec()),
                noise_sd: cfg.get_or("population.noise_sd", 2.0)?,
                seed: cfg.get("population.seed")?,
            },
            "csv" => PopulationSource::Csv(PathBuf::from(cfg.require("population.path")?)),
            other => return Err(Error::Config(format!("population.source: unknown value `{other}`"))),
        };
        let design = match cfg.get_or("design", "srswor".to_string())?.as_str() {
            "srswor" => DesignChoice::Srswor,
            "poisson" => DesignChoice::Poisson,
            other => return Err(Error::Config(format!("design: unknown value `{other}`"))),
        };
        let mechanism = match cfg.get_or("mechanism", "none".to_string())?.as_str() {
            "none" => MechanismChoice::None,
            "appendix" => MechanismChoice::Appendix,
            "constant" => MechanismChoice::Constant(
                cfg.get("mechanism.p")?
                    .ok_or_else(|| Error::Config("mechanism = constant needs mechanism.p".into()))?,
            ),
            other => return Err(Error::Config(format!("mechanism: unknown value `{other}`"))),
        };
        let estimators = parse_estimators(cfg)?;
        let threads: usize = cfg.get_or("threads", 0)?;
        let config = Self {
            name,
            grid,
            population,
            design,
            mechanism,
            estimators,
            replications: cfg.get_or("R", 2000)?,
            bootstrap: cfg.get_or("B", 0)?,
            alpha: cfg.get_or("alpha", crate::estimators::DEFAULT_ALPHA)?,
            seed: cfg.get_or("seed", 1)?,
            threads: (threads > 0).then_some(threads),
        };
        cfg.check_all_read()?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.replications == 0 {
            return bad("R must be at least 1".into());
        }
        if self.grid.is_empty() {
            return bad("the grid is empty".into());
        }
        for &(big_n, n) in &self.grid {
            if n == 0 || n > big_n {
                return bad(format!("grid point N={big_n}, n={n}: need 0 < n <= N"));
            }
        }
        if self.bootstrap == 1 {
            return bad("B must be 0 or at least 2".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.estimators.is_empty() {
            return bad("no estimators configured".into());
        }
        for e in &self.estimators {
            if e.kind.needs_responses() && self.mechanism == MechanismChoice::None {
                return bad(format!("estimator `{}` needs a response mechanism", e.id));
            }
            if let EstimatorKind::Ipw { bootstrap: true, .. } = e.kind {
                if self.bootstrap == 0 {
                    return bad(format!("estimator `{}` asks for the bootstrap but B = 0", e.id));
                }
                if self.design != DesignChoice::Srswor {
                    return bad(format!("estimator `{}`: the bootstrap needs design = srswor", e.id));
                }
            }
            if let EstimatorKind::MaCrossfit { k, .. } | EstimatorKind::Aipw { k, .. } = e.kind {
                if k < 2 {
                    return bad(format!("estimator `{}`: K must be at least 2", e.id));
                }
            }
            if matches!(e.kind, EstimatorKind::MaOracle | EstimatorKind::AipwOracle { .. })
                && !matches!(self.population, PopulationSource::Generate { .. })
            {
                return bad(format!(
                    "estimator `{}` needs a generated population (it uses the true mean function)",
                    e.id
                ));
            }
        }
        Ok(())
    }
}

/// Aggregate metrics of one estimator at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scenario: String,
    pub big_n: usize,
    pub n: usize,
    pub estimator: String,
    pub learner: String,
    /// Replications that entered the aggregates.
    pub replications: usize,
    pub failures: usize,
    pub mu: f64,
    pub rb_pct: f64,
    pub rmse: f64,
    /// Monte Carlo variance of the estimates (divisor R - 1).
    pub mc_variance: f64,
    pub mean_variance: Option<f64>,
    pub var_rb_pct: Option<f64>,
    pub coverage_pct: Option<f64>,
}

impl MetricsRow {
    pub const CSV_HEADER: [&'static str; 11] = [
        "scenario",
        "N",
        "n",
        "R",
        "estimator",
        "learner",
        "RB_pct",
        "RMSE_x100",
        "var_RB_pct",
        "coverage_pct",
        "failures",
    ];

    pub fn failure_rate(&self) -> f64 {
        let total = self.replications + self.failures;
        if total == 0 {
            0.0
        } else {
            self.failures as f64 / total as f64
        }
    }

    pub fn csv_record(&self) -> [String; 11] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.scenario.clone(),
            self.big_n.to_string(),
            self.n.to_string(),
            self.replications.to_string(),
            self.estimator.clone(),
            self.learner.clone(),
            self.rb_pct.to_string(),
            (self.rmse * 100.0).to_string(),
            opt(self.var_rb_pct),
            opt(self.coverage_pct),
            self.failures.to_string(),
        ]
    }
}

/// RB, RMSE, variance RB and coverage from per-replication results.
///
/// `variances` and `covered` are either empty (no variance estimator) or as
/// long as `estimates`.
pub fn compute_metrics(estimates: &[f64], variances: &[f64], covered: &[bool], mu: f64) -> Result<MetricsRow> {
    let r = estimates.len();
    if r == 0 {
        return Err(Error::InsufficientData("no replications to aggregate".into()));
    }
    if (!variances.is_empty() && variances.len() != r) || (!covered.is_empty() && covered.len() != r) {
        return Err(Error::invalid("variances and coverage flags must match the estimates in length"));
    }
    let rf = r as f64;
    let rb = numeric::sum(estimates.iter().map(|e| (e - mu) / mu)) * 100.0 / rf;
    let mse = numeric::sum(estimates.iter().map(|e| (e - mu) * (e - mu))) / rf;
    let mc_variance = if r > 1 { numeric::sample_variance(estimates) } else { f64::NAN };
    let mean_variance = (!variances.is_empty()).then(|| numeric::mean(variances));
    Ok(MetricsRow {
        scenario: String::new(),
        big_n: 0,
        n: 0,
        estimator: String::new(),
        learner: String::new(),
        replications: r,
        failures: 0,
        mu,
        rb_pct: rb,
        rmse: mse.sqrt(),
        mc_variance,
        mean_variance,
        var_rb_pct: mean_variance.map(|v| 100.0 * (v - mc_variance) / mc_variance),
        coverage_pct: (!covered.is_empty()).then(|| 100.0 * covered.iter().filter(|&&c| c).count() as f64 / rf),
    })
}

/// One failed replication, kept for the report.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub big_n: usize,
    pub n: usize,
    pub estimator: String,
    pub replication: usize,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N={} n={} {} replication {}: {}", self.big_n, self.n, self.estimator, self.replication, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub rows: Vec<MetricsRow>,
    pub failures: Vec<Failure>,
}

impl ScenarioOutput {
    /// Rows whose failure share is above [`MAX_FAILURE_RATE`].
    pub fn breaches(&self) -> Vec<&MetricsRow> {
        self.rows.iter().filter(|r| r.failure_rate() > MAX_FAILURE_RATE).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_metrics(path, &self.rows)
    }
}

pub fn write_metrics(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(MetricsRow::CSV_HEADER).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record(r.csv_record()).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Metrics rows as CSV text.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MetricsRow::CSV_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record(r.csv_record()).expect("in-memory write");
    }
    w.flush().expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("CSV is UTF-8")
}

struct Context<'a> {
    config: &'a ScenarioConfig,
    pop: &'a FinitePopulation,
    design: &'a DesignSpec,
    mechanism: Option<&'a ResponseMechanism>,
    true_mean: Option<FittedPredictor>,
    totals: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Outcome {
    point: f64,
    variance: Option<f64>,
    ci: Option<(f64, f64)>,
}

impl From<EstimateResult> for Outcome {
    fn from(r: EstimateResult) -> Self {
        Self { point: r.point, variance: r.variance, ci: r.ci }
    }
}

fn run_estimator(ctx: &Context, est: &EstimatorConfig, data: &ReplicationData, base: u64) -> Result<Outcome> {
    let cfg = ctx.config;
    let sample = &data.sample;
    let tag = rng::tag_of(&est.id);
    let fit_seed = rng::derive_path(base, &[rng::FIT, tag]);
    let out: EstimateResult = match &est.kind {
        EstimatorKind::Ht => ht_estimate(sample, &data.y_full, ctx.design, cfg.alpha)?,
        EstimatorKind::Greg { totals } => {
            greg(sample, &data.x, &data.y_full, totals.as_ref().unwrap_or(&ctx.totals), ctx.design, true, cfg.alpha)?
        }
        EstimatorKind::MaOracle => crate::estimators::ma_oracle(
            ctx.pop,
            sample,
            ctx.design,
            ctx.true_mean.as_ref().expect("validated"),
            cfg.alpha,
        )?,
        EstimatorKind::MaFeasible(l) => ma_feasible(ctx.pop, sample, ctx.design, l, fit_seed, cfg.alpha)?,
        EstimatorKind::MaCrossfit { learner, k } => {
            let mut stream = rng::stream(rng::derive_path(base, &[rng::FOLDS, tag]));
            let folds = make_folds(ctx.pop.n_units(), *k, FoldLevel::Population, &mut stream)?;
            ma_crossfit(ctx.pop, sample, ctx.design, &folds, learner, None, fit_seed, cfg.alpha)?
        }
        EstimatorKind::Imputed(l) => imputed_mean(&data.survey, l, fit_seed)?,
        EstimatorKind::Ipw { form, propensity, bootstrap } => {
            let survey = &data.survey;
            let p: Vec<f64> = match propensity {
                Propensity::True => {
                    let mech = ctx.mechanism.expect("validated");
                    survey.x.iter_rows().map(|x| mech.prob_of(x)).collect()
                }
                Propensity::Learner(spec) => {
                    let r: Vec<f64> =
                        survey.responses()?.indicators().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
                    spec.fit(&survey.x, &r, survey.weights(), fit_seed)?.predict_matrix(&survey.x)
                }
            };
            let known = matches!(propensity, Propensity::True).then_some(ctx.design);
            let result = ipw_mean(survey, &p, *form, known, cfg.alpha)?;
            match (bootstrap, propensity) {
                (true, Propensity::Learner(spec)) => {
                    let boot = pseudo_population_bootstrap(
                        survey,
                        spec,
                        ctx.design,
                        &BootstrapConfig {
                            replications: cfg.bootstrap,
                            seed: rng::derive_path(base, &[rng::BOOTSTRAP, tag]),
                            form: *form,
                        },
                    )?;
                    result.with_variance(boot.variance, cfg.alpha)?
                }
                (true, Propensity::True) => {
                    return Err(Error::Config(format!(
                        "estimator `{}`: the bootstrap needs a propensity learner",
                        est.id
                    )))
                }
                _ => result,
            }
        }
        EstimatorKind::AipwOracle { nonresponse_term } => aipw_oracle(
            &data.survey,
            ctx.design,
            ctx.true_mean.as_ref().expect("validated"),
            ctx.mechanism.expect("validated"),
            nonresponse_term.then(|| ctx.pop.sigma2()),
            cfg.alpha,
        )?,
        EstimatorKind::Aipw { m, p, k } => {
            let mut stream = rng::stream(rng::derive_path(base, &[rng::FOLDS, tag]));
            let folds = make_folds(data.survey.len(), *k, FoldLevel::Sample, &mut stream)?;
            aipw_crossfit(&data.survey, ctx.design, &folds, m, p, fit_seed, cfg.alpha)?
        }
    };
    if !out.point.is_finite() {
        return Err(Error::InsufficientData(format!("non-finite estimate {}", out.point)));
    }
    Ok(out.into())
}

/// The replication's data: the sample with full outcomes (for estimators
/// that ignore nonresponse) and the survey view with responses.
struct ReplicationData {
    sample: crate::designs::SampleRealization,
    x: crate::matrix::Matrix,
    y_full: Vec<f64>,
    survey: SurveyData,
}

fn replicate(ctx: &Context, base: u64) -> Result<Vec<Result<Outcome>>> {
    let mut s_rng = rng::stream(rng::derive(base, rng::SAMPLING));
    let sample = ctx.design.draw(&mut s_rng);
    let responses = match ctx.mechanism {
        Some(mech) => {
            let mut r_rng = rng::stream(rng::derive(base, rng::RESPONSE));
            Some(draw_responses(mech, &sample, ctx.pop, &mut r_rng)?)
        }
        None => None,
    };
    let survey = SurveyData::from_population(ctx.pop, &sample, responses)?;
    let data = ReplicationData {
        x: ctx.pop.covariates().select_rows(sample.ids()),
        y_full: sample.ids().iter().map(|&k| ctx.pop.outcomes()[k]).collect(),
        sample,
        survey,
    };
    Ok(ctx.config.estimators.iter().map(|e| run_estimator(ctx, e, &data, base)).collect())
}

fn load_population(config: &ScenarioConfig, big_n: usize) -> Result<FinitePopulation> {
    match &config.population {
        PopulationSource::Generate { coefficients, noise_sd, seed } => generate_population(&DgpConfig {
            n_units: big_n,
            coefficients: coefficients.clone(),
            noise_sd: *noise_sd,
            seed: seed.unwrap_or_else(|| rng::derive_path(config.seed, &[rng::POPULATION, big_n as u64])),
        }),
        PopulationSource::Csv(path) => {
            let pop = FinitePopulation::read_csv(path)?;
            if pop.n_units() != big_n {
                return Err(Error::Config(format!(
                    "grid asks for N={big_n} but {} holds {} units",
                    path.display(),
                    pop.n_units()
                )));
            }
            Ok(pop)
        }
    }
}

fn run_grid_point(
    config: &ScenarioConfig,
    g: usize,
    progress: Option<&(dyn Fn(&str) + Sync)>,
) -> Result<ScenarioOutput> {
    let (big_n, n) = config.grid[g];
    let pop = load_population(config, big_n)?;
    let design = match config.design {
        DesignChoice::Srswor => DesignSpec::srswor(big_n, n)?,
        DesignChoice::Poisson => DesignSpec::poisson(vec![n as f64 / big_n as f64; big_n])?,
    };
    let mechanism = match config.mechanism {
        MechanismChoice::None => None,
        MechanismChoice::Appendix => Some(ResponseMechanism::appendix(&pop)?),
        MechanismChoice::Constant(p) => Some(ResponseMechanism::constant(p)?),
    };
    let true_mean = match &config.population {
        PopulationSource::Generate { coefficients, .. } => {
            let c = coefficients.clone();
            Some(FittedPredictor::from_fn("true", Task::Regression, move |x| linear_predictor(&c, x)))
        }
        PopulationSource::Csv(_) => None,
    };
    let totals = pop.covariates().column_sums();
    let ctx = Context { config, pop: &pop, design: &design, mechanism: mechanism.as_ref(), true_mean, totals };
    let mu = pop.mean();
    let pair_seed = rng::derive(config.seed, g as u64);

    let results: Vec<Result<Vec<Result<Outcome>>>> =
        (0..config.replications).into_par_iter().map(|r| replicate(&ctx, rng::derive(pair_seed, r as u64))).collect();

    let mut per_est: Vec<Vec<Outcome>> = vec![Vec::with_capacity(config.replications); config.estimators.len()];
    let mut failures = Vec::new();
    let mut fail_counts = vec![0usize; config.estimators.len()];
    for (r, res) in results.into_iter().enumerate() {
        let fail = |e: usize, msg: String, failures: &mut Vec<Failure>| {
            failures.push(Failure {
                big_n,
                n,
                estimator: config.estimators[e].id.clone(),
                replication: r,
                message: msg,
            })
        };
        match res {
            Ok(outcomes) => {
                for (e, o) in outcomes.into_iter().enumerate() {
                    match o {
                        Ok(o) => per_est[e].push(o),
                        Err(err) => {
                            fail_counts[e] += 1;
                            fail(e, err.to_string(), &mut failures);
                        }
                    }
                }
            }
            // Sample or response draw failed: every estimator loses the replication.
            Err(err) => {
                for e in 0..config.estimators.len() {
                    fail_counts[e] += 1;
                    fail(e, err.to_string(), &mut failures);
                }
            }
        }
    }

    let mut rows = Vec::with_capacity(config.estimators.len());
    for (e, est) in config.estimators.iter().enumerate() {
        let outs = &per_est[e];
        let estimates: Vec<f64> = outs.iter().map(|o| o.point).collect();
        let with_var = !outs.is_empty() && outs.iter().all(|o| o.variance.is_some());
        let variances: Vec<f64> =
            if with_var { outs.iter().map(|o| o.variance.unwrap()).collect() } else { Vec::new() };
        let covered: Vec<bool> = if with_var {
            outs.iter().map(|o| o.ci.map(|(lo, hi)| lo <= mu && mu <= hi).unwrap_or(false)).collect()
        } else {
            Vec::new()
        };
        let mut row = if estimates.is_empty() {
            MetricsRow {
                scenario: String::new(),
                big_n: 0,
                n: 0,
                estimator: String::new(),
                learner: String::new(),
                replications: 0,
                failures: 0,
                mu,
                rb_pct: f64::NAN,
                rmse: f64::NAN,
                mc_variance: f64::NAN,
                mean_variance: None,
                var_rb_pct: None,
                coverage_pct: None,
            }
        } else {
            compute_metrics(&estimates, &variances, &covered, mu)?
        };
        row.scenario = config.name.clone();
        row.big_n = big_n;
        row.n = n;
        row.estimator = est.id.clone();
        row.learner = est.kind.learner_label();
        row.failures = fail_counts[e];
        rows.push(row);
    }
    if let Some(p) = progress {
        p(&format!("N={big_n} n={n}: {} replications done", config.replications));
    }
    Ok(ScenarioOutput { rows, failures })
}

/// Runs every grid point and returns one row per (grid point, estimator).
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    run_scenario_with_progress(config, None)
}

/// As [`run_scenario`], calling `progress` after each grid point.
pub fn run_scenario_with_progress(
    config: &ScenarioConfig,
    progress: Option<&(dyn Fn(&str) + Sync)>,
) -> Result<ScenarioOutput> {
    config.validate()?;
    let body = || -> Result<ScenarioOutput> {
        let mut out = ScenarioOutput { rows: Vec::new(), failures: Vec::new() };
        for g in 0..config.grid.len() {
            let part = run_grid_point(config, g, progress)?;
            out.rows.extend(part.rows);
            out.failures.extend(part.failures);
        }
        Ok(out)
    };
    match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {t} worker threads: {e}")))?
            .install(body),
        None => body(),
    }
}

/// Writes failures one per line.
pub fn write_failures(path: impl AsRef<Path>, failures: &[Failure]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for fl in failures {
        writeln!(f, "{fl}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
