//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Criterion 6 (table3 scenario at R=2000, B=100) needs many hours on a single core
//! and runs only with `--ignored` or `--include-ignored`:
//!
//!     cargo test --release -p surveyml-core --test acceptance -- --ignored

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use surveyml::config::Config;
use surveyml::designs::{
    conditional_inclusion_probs, enumerate_design, make_folds, realized_fold_sizes, FoldLevel, FoldPartition,
};
use surveyml::diagnostics::{
    direction_library, gateaux_derivative, imputed_derivative_closed_form, ipw_derivative_closed_form,
    score_expectation, Direction, NuisanceValues, ScoreKind, DEFAULT_STEPS,
};
use surveyml::estimators::{
    aipw_crossfit, aipw_oracle, build_completed_file, ht_mean, ht_variance, ipw_mean, ipw_variance, ma_crossfit,
    ma_crossfit_modified, ma_oracle,
};
use surveyml::nonresponse::{draw_responses, enumerate_responses};
use surveyml::population::{generate_population, linear_predictor, DEFAULT_COEFFICIENTS};
use surveyml::simengine::{metrics_csv, run_scenario, MetricsRow, ScenarioOutput};
use surveyml::{
    rng, DesignSpec, DgpConfig, FinitePopulation, FittedPredictor, IpwForm, LearnerKind, LearnerSpec,
    ResponseMechanism, ScenarioConfig, SurveyData, Task,
};

// Tolerances, pinned.
const EXACT_TOL: f64 = 1e-12;
const ORTHOGONAL_TOL: f64 = 1e-8;
const CLOSED_FORM_TOL: f64 = 1e-6;
const REMARK_TOL: f64 = 1e-10;
const TABLE2_RB_MAX: f64 = 2.5;
const TABLE2_RMSE_REL: f64 = 0.20;
const TABLE3_VAR_RB_PP: f64 = 6.0;
const TABLE3_COVERAGE_PP: f64 = 2.0;
const AIPW_COVERAGE: (f64, f64) = (93.0, 97.0);

/// table2 scenario, N=4000, n=200: reference RMSE x 100.
const TABLE2_RMSE: [(&str, f64); 6] =
    [("oracle", 37.8), ("logistic", 29.7), ("cart", 41.0), ("rf", 35.8), ("xgboost", 37.7), ("pss", 30.1)];

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

fn population(n: usize, seed: u64, noise_sd: f64) -> FinitePopulation {
    generate_population(&DgpConfig { n_units: n, coefficients: DEFAULT_COEFFICIENTS.to_vec(), noise_sd, seed }).unwrap()
}

/// `sum_s P(s) f(s)` over every sample of the design.
fn design_expectation(design: &DesignSpec, mut f: impl FnMut(&surveyml::SampleRealization) -> f64) -> f64 {
    enumerate_design(design).unwrap().iter().map(|(s, p)| p * f(s)).sum()
}

/// Mean and variance of `f` over samples, as (mean of f, variance of f).
fn design_moments(
    design: &DesignSpec,
    mut f: impl FnMut(&surveyml::SampleRealization) -> (f64, f64),
) -> (f64, f64, f64) {
    let outcomes: Vec<(f64, f64, f64)> = enumerate_design(design)
        .unwrap()
        .iter()
        .map(|(s, p)| {
            let (a, b) = f(s);
            (*p, a, b)
        })
        .collect();
    moments(&outcomes)
}

/// From (prob, estimate, variance estimate): (E estimate, Var estimate, E variance estimate).
fn moments(outcomes: &[(f64, f64, f64)]) -> (f64, f64, f64) {
    let mean: f64 = outcomes.iter().map(|o| o.0 * o.1).sum();
    let var: f64 = outcomes.iter().map(|o| o.0 * (o.1 - mean) * (o.1 - mean)).sum();
    let mean_v: f64 = outcomes.iter().map(|o| o.0 * o.2).sum();
    (mean, var, mean_v)
}

/// Joint design x response enumeration: every sample and every response
/// pattern with its probability, as survey data.
fn joint_outcomes(pop: &FinitePopulation, design: &DesignSpec, mech: &ResponseMechanism) -> Vec<(SurveyData, f64)> {
    let mut out = Vec::new();
    for (s, p) in enumerate_design(design).unwrap() {
        let probs = mech.sample_probs(pop, &s).unwrap();
        for (pattern, q) in enumerate_responses(&probs).unwrap() {
            out.push((SurveyData::from_population(pop, &s, Some(pattern)).unwrap(), p * q));
        }
    }
    out
}

/// A response mechanism bounded well away from zero, so enumerated sums
/// stay well scaled.
fn smooth_mechanism() -> ResponseMechanism {
    ResponseMechanism::custom("smooth", |x| 0.35 + 0.5 / (1.0 + (-(x[0] - 0.5 * x[1])).exp()))
}

fn wrong_model() -> FittedPredictor {
    FittedPredictor::from_fn("wrong", Task::Regression, |x| 4.0 + x[0].sin() * 3.0 + x[1] * x[1] - x[3])
}

fn adaptive_tree() -> LearnerSpec {
    LearnerSpec::new(LearnerKind::RegressionTree, Task::Regression)
        .with("minsplit", "2")
        .unwrap()
        .with("minbucket", "1")
        .unwrap()
}

fn designs_n8() -> Vec<(&'static str, DesignSpec)> {
    vec![
        ("srswor", DesignSpec::srswor(8, 3).unwrap()),
        ("poisson", DesignSpec::poisson(vec![0.3, 0.5, 0.7, 0.4, 0.6, 0.35, 0.55, 0.45]).unwrap()),
        ("stratified", DesignSpec::stratified(vec![0, 0, 0, 0, 1, 1, 1, 1], vec![2, 2]).unwrap()),
    ]
}

fn designs_n6() -> Vec<(&'static str, DesignSpec)> {
    vec![
        ("srswor", DesignSpec::srswor(6, 3).unwrap()),
        ("poisson", DesignSpec::poisson(vec![0.3, 0.5, 0.7, 0.4, 0.6, 0.45]).unwrap()),
        ("stratified", DesignSpec::stratified(vec![0, 0, 0, 1, 1, 1], vec![2, 2]).unwrap()),
    ]
}

// ---------------------------------------------------------------------------
// Criterion 1
// ---------------------------------------------------------------------------

fn criterion_1() -> Outcome {
    let pop = population(8, 11, 2.0);
    let mu = pop.mean();
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |name: &'static str, e: f64| {
        let d = (e - mu).abs();
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(d);
    };

    let m = wrong_model();
    for (_, design) in designs_n8() {
        note(
            "ht",
            design_expectation(&design, |s| {
                let y: Vec<f64> = s.ids().iter().map(|&k| pop.outcomes()[k]).collect();
                ht_mean(s, &y).point
            }),
        );
        note("ma_oracle", design_expectation(&design, |s| ma_oracle(&pop, s, &design, &m, 0.05).unwrap().point));
    }

    // Cross-fitted MA with an adaptive tree under Poisson sampling.
    let poisson = &designs_n8()[1].1;
    let tree = adaptive_tree();
    for k in [2, 3] {
        let folds = make_folds(8, k, FoldLevel::Population, &mut rng::stream(k as u64)).unwrap();
        note(
            "ma_crossfit",
            design_expectation(poisson, |s| {
                ma_crossfit(&pop, s, poisson, &folds, &tree, Some(0.0), 5, 0.05).unwrap().point
            }),
        );
    }

    // Modified cross-fitted MA under SRSWOR, conditional on realized fold counts.
    let srs = DesignSpec::srswor(8, 4).unwrap();
    let folds = FoldPartition::from_assignment(vec![0, 1, 0, 1, 0, 1, 0, 1], 2, FoldLevel::Population).unwrap();
    let mut groups: BTreeMap<Vec<usize>, (f64, f64)> = BTreeMap::new();
    for (s, p) in enumerate_design(&srs).unwrap() {
        let counts = realized_fold_sizes(&folds, &s);
        if counts.contains(&0) {
            continue;
        }
        let pi_tilde = conditional_inclusion_probs(&srs, &folds, &counts).unwrap();
        let est = ma_crossfit_modified(&pop, &s, &folds, &tree, &pi_tilde, 9).unwrap().point;
        let g = groups.entry(counts).or_insert((0.0, 0.0));
        g.0 += p * est;
        g.1 += p;
    }
    for (num, den) in groups.values() {
        note("ma_crossfit_modified", num / den);
    }

    // IPW and AIPW with known nuisances, over design and response outcomes.
    let mech = smooth_mechanism();
    let small = population(6, 12, 2.0);
    let mu6 = small.mean();
    for (_, design) in designs_n6() {
        let joint = joint_outcomes(&small, &design, &mech);
        let ipw: f64 = joint
            .iter()
            .map(|(d, q)| {
                let p: Vec<f64> = d.x.iter_rows().map(|x| mech.prob_of(x)).collect();
                q * ipw_mean(d, &p, IpwForm::Expansion, None, 0.05).unwrap().point
            })
            .sum();
        let aipw: f64 =
            joint.iter().map(|(d, q)| q * aipw_oracle(d, &design, &m, &mech, None, 0.05).unwrap().point).sum();
        let w = worst.entry("ipw").or_insert(0.0);
        *w = w.max((ipw - mu6).abs());
        let w = worst.entry("aipw_oracle").or_insert(0.0);
        *w = w.max((aipw - mu6).abs());
    }

    let max = worst.values().cloned().fold(0.0, f64::max);
    let detail = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ");
    check(max <= EXACT_TOL, format!("max |E - mu| = {max:.1e} <= {EXACT_TOL:.0e} ({detail})"))
}

// ---------------------------------------------------------------------------
// Criterion 2
// ---------------------------------------------------------------------------

fn criterion_2() -> Outcome {
    let pop = population(6, 21, 2.0);
    let m = wrong_model();
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |name: &'static str, mean_v: f64, target: f64| {
        let d = (mean_v - target).abs() / target.abs().max(1.0);
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(d);
    };

    for (_, design) in designs_n6() {
        let (_, var, mean_v) = design_moments(&design, |s| {
            let y: Vec<f64> = s.ids().iter().map(|&k| pop.outcomes()[k]).collect();
            (ht_mean(s, &y).point, ht_variance(s, &y, &design).unwrap())
        });
        note("ht_variance", mean_v, var);
        let (_, var, mean_v) = design_moments(&design, |s| {
            let e = ma_oracle(&pop, s, &design, &m, 0.05).unwrap();
            (e.point, e.variance.unwrap())
        });
        note("ma_oracle_variance", mean_v, var);
    }

    // Poisson cross-fitted MA: the target is the expected census sum of
    // squared cross-fitted residuals; the true variance is reported beside it.
    let pi = vec![0.3, 0.5, 0.7, 0.4, 0.6, 0.45];
    let poisson = DesignSpec::poisson(pi.clone()).unwrap();
    let tree = adaptive_tree();
    let folds = FoldPartition::from_assignment(vec![0, 1, 2, 0, 1, 2], 3, FoldLevel::Population).unwrap();
    let big_n = 6.0;
    let mut outcomes = Vec::new();
    let mut target = 0.0;
    for (s, p) in enumerate_design(&poisson).unwrap() {
        let est = ma_crossfit(&pop, &s, &poisson, &folds, &tree, Some(0.0), 3, 0.05).unwrap();
        outcomes.push((p, est.point, est.variance.unwrap()));
        // independent recomputation of the census residuals
        let x_s = pop.covariates().select_rows(s.ids());
        let y_s: Vec<f64> = s.ids().iter().map(|&k| pop.outcomes()[k]).collect();
        let census: f64 = (0..6)
            .map(|k| {
                let v = folds.fold(k);
                let rows: Vec<usize> = (0..s.len()).filter(|&i| folds.fold(s.ids()[i]) != v).collect();
                let pred = if rows.is_empty() {
                    0.0
                } else {
                    tree.fit_rows(&x_s, &y_s, s.weights(), &rows, 0).unwrap().predict(pop.x(k))
                };
                let e = pop.outcomes()[k] - pred;
                (1.0 - pi[k]) / pi[k] * e * e
            })
            .sum();
        target += p * census / (big_n * big_n);
    }
    let (_, true_var, mean_v) = moments(&outcomes);
    note("ma_crossfit_variance", mean_v, target);
    let gap = 100.0 * (target - true_var) / true_var;

    // IPW with known propensities, over design and response outcomes.
    let mech = smooth_mechanism();
    for (_, design) in designs_n6() {
        let outcomes: Vec<(f64, f64, f64)> = joint_outcomes(&pop, &design, &mech)
            .iter()
            .map(|(d, q)| {
                let p: Vec<f64> = d.x.iter_rows().map(|x| mech.prob_of(x)).collect();
                let point = ipw_mean(d, &p, IpwForm::Expansion, None, 0.05).unwrap().point;
                (*q, point, ipw_variance(d, &p, &design).unwrap())
            })
            .collect();
        let (_, var, mean_v) = moments(&outcomes);
        note("ipw_variance", mean_v, var);
    }

    let max = worst.values().cloned().fold(0.0, f64::max);
    let detail = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ");
    check(
        max <= EXACT_TOL,
        format!(
            "max |E Vhat - V| / max(1, V) = {max:.1e} <= {EXACT_TOL:.0e} ({detail}); \
             cross-fitted MA target differs from the true variance by {gap:+.2}%"
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 3
// ---------------------------------------------------------------------------

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let pop = population(6, rng::derive(7, rng::POPULATION), 0.0);
    let design = DesignSpec::poisson(vec![0.5; 6]).unwrap();
    let mech = ResponseMechanism::appendix(&pop).unwrap();
    let truth = NuisanceValues::from_fns(&pop, |x| linear_predictor(&DEFAULT_COEFFICIENTS, x), |x| mech.prob_of(x));
    let theta = pop.mean();
    let mut orth: f64 = 0.0;
    let mut closed: f64 = 0.0;
    for h in direction_library(7, 20, pop.n_covariates()) {
        let hv: Vec<f64> = pop.covariates().iter_rows().map(h).collect();
        let gv: Vec<f64> = hv.iter().zip(&truth.p).map(|(h, p)| 0.5 * h * p * (1.0 - p)).collect();
        let dm = Direction { m: Some(hv.clone()), p: None };
        let dp = Direction { m: None, p: Some(gv.clone()) };
        let dj = Direction { m: Some(hv.clone()), p: Some(gv.clone()) };
        let d = |kind, dir: &Direction| {
            gateaux_derivative(kind, &pop, &design, Some(&mech), theta, &truth, dir, &DEFAULT_STEPS).unwrap().value
        };
        orth = orth.max(d(ScoreKind::ModelAssisted, &dm).abs());
        for dir in [&dm, &dp, &dj] {
            orth = orth.max(d(ScoreKind::Aipw, dir).abs());
        }
        closed = closed.max((d(ScoreKind::Imputed, &dm) - imputed_derivative_closed_form(&truth.p, &hv)).abs());
        closed = closed.max((d(ScoreKind::Ipw, &dp) - ipw_derivative_closed_form(pop.outcomes(), &truth.p, &gv)).abs());
    }
    // the scores are centred at the truth
    let centred = ScoreKind::ALL
        .iter()
        .map(|&k| score_expectation(k, &pop, &design, Some(&mech), theta, &truth).unwrap().abs())
        .fold(0.0, f64::max);
    let secs = started.elapsed().as_secs_f64();
    check(
        orth <= ORTHOGONAL_TOL && closed <= CLOSED_FORM_TOL && centred <= ORTHOGONAL_TOL && secs < 30.0,
        format!(
            "MA/AIPW max |D| = {orth:.1e} <= {ORTHOGONAL_TOL:.0e}; Imputed/IPW max closed-form gap = {closed:.1e} \
             <= {CLOSED_FORM_TOL:.0e}; max |E score| = {centred:.1e}; 20 directions in {secs:.1} s"
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 4
// ---------------------------------------------------------------------------

fn criterion_4() -> Outcome {
    let m_spec = LearnerSpec::new(LearnerKind::WeightedLeastSquares, Task::Regression);
    let p_specs = [
        LearnerSpec::new(LearnerKind::Logistic, Task::Propensity),
        LearnerSpec::new(LearnerKind::PropensityStratification, Task::Propensity),
    ];
    let mut worst: f64 = 0.0;
    for inst in 0..100u64 {
        let seed = rng::derive(0x5eed, inst);
        let big_n = 300 + (inst as usize % 4) * 100;
        let pop = population(big_n, seed, 1.0 + (inst % 3) as f64);
        let n = big_n / 5;
        let design = if inst % 2 == 0 {
            DesignSpec::srswor(big_n, n).unwrap()
        } else {
            let sizes: Vec<f64> = pop.covariates().iter_rows().map(|x| 1.0 + x[3]).collect();
            DesignSpec::poisson_pps(&sizes, n as f64).unwrap()
        };
        let sample = design.draw(&mut rng::stream(rng::derive(seed, rng::SAMPLING)));
        let mech = ResponseMechanism::appendix(&pop).unwrap();
        let resp = draw_responses(&mech, &sample, &pop, &mut rng::stream(rng::derive(seed, rng::RESPONSE))).unwrap();
        let data = SurveyData::from_population(&pop, &sample, Some(resp)).unwrap();
        let k = 2 + (inst as usize % 4);
        let folds =
            make_folds(data.len(), k, FoldLevel::Sample, &mut rng::stream(rng::derive(seed, rng::FOLDS))).unwrap();
        let p_spec = &p_specs[inst as usize % 2];
        let fit_seed = rng::derive(seed, rng::FIT);
        let est = aipw_crossfit(&data, &design, &folds, &m_spec, p_spec, fit_seed, 0.05).unwrap();
        let file = build_completed_file(&data, &folds, &m_spec, p_spec, fit_seed).unwrap();
        worst = worst.max((file.weighted_mean() - est.point).abs());
    }
    check(
        worst <= REMARK_TOL,
        format!("max |completed-file mean - AIPW| = {worst:.1e} <= {REMARK_TOL:.0e} over 100 instances"),
    )
}

// ---------------------------------------------------------------------------
// Monte Carlo criteria
// ---------------------------------------------------------------------------

const TABLE2_CFG: &str = "
scenario = table2
grid = 4000:200
R = 2000
alpha = 0.05
seed = 20260101
design = srswor
mechanism = appendix
estimators = oracle, logistic, cart, rf, xgboost, pss
oracle.kind = ipw
oracle.form = hajek
logistic.kind = ipw
logistic.form = hajek
logistic.learner = logistic
cart.kind = ipw
cart.form = hajek
cart.learner = tree
cart.learner.cp = 0
cart.learner.minsplit = 20
rf.kind = ipw
rf.form = hajek
rf.learner = forest
rf.learner.ntree = 500
rf.learner.mtry = 2
rf.learner.nodesize = 5
xgboost.kind = ipw
xgboost.form = hajek
xgboost.learner = boosting
xgboost.learner.eta = 0.3
xgboost.learner.max_depth = 6
xgboost.learner.max_rounds = 100
xgboost.learner.cv_folds = 5
pss.kind = ipw
pss.form = hajek
pss.learner = pss
pss.learner.strata = 5
";

const TABLE3_CFG: &str = "
scenario = table3
grid = 20000:1000
R = 2000
B = 100
alpha = 0.05
seed = 20260102
design = srswor
mechanism = appendix
estimators = logistic, pss, cart, rf, xgboost
logistic.kind = ipw
logistic.learner = logistic
logistic.bootstrap = true
pss.kind = ipw
pss.learner = pss
pss.bootstrap = true
cart.kind = ipw
cart.learner = tree
cart.bootstrap = true
rf.kind = ipw
rf.learner = forest
rf.bootstrap = true
xgboost.kind = ipw
xgboost.learner = boosting
xgboost.bootstrap = true
";

const AIPW_CFG: &str = "
scenario = aipw
grid = 20000:1000
R = 2000
alpha = 0.05
seed = 20260103
design = srswor
mechanism = appendix
estimators = aipw
aipw.kind = aipw
aipw.K = 5
aipw.m_learner = wls
aipw.p_learner = logistic
";

fn run(text: &str, threads: usize, overrides: &[&str]) -> ScenarioOutput {
    let mut cfg = Config::parse(text).unwrap();
    for o in overrides {
        cfg.set_override(o).unwrap();
    }
    cfg.set("threads", threads);
    run_scenario(&ScenarioConfig::from_config(&cfg).unwrap()).unwrap()
}

fn row<'a>(out: &'a ScenarioOutput, id: &str) -> &'a MetricsRow {
    out.rows.iter().find(|r| r.estimator == id).unwrap_or_else(|| panic!("no row for {id}"))
}

fn no_breach(out: &ScenarioOutput) -> Result<(), String> {
    match out.breaches().first() {
        Some(r) => {
            Err(format!("{} failed in {} of {} replications", r.estimator, r.failures, r.failures + r.replications))
        }
        None => Ok(()),
    }
}

fn criterion_5(out: &ScenarioOutput, secs: f64) -> Outcome {
    no_breach(out)?;
    let mut problems = Vec::new();
    let mut cells = Vec::new();
    for (id, paper) in TABLE2_RMSE {
        let r = row(out, id);
        let rmse = 100.0 * r.rmse;
        cells.push(format!("{id} RB {:+.2} RMSE {rmse:.1}", r.rb_pct));
        if r.rb_pct.abs() > TABLE2_RB_MAX {
            problems.push(format!("{id} |RB| {:.2} > {TABLE2_RB_MAX}", r.rb_pct.abs()));
        }
        if (rmse - paper).abs() > TABLE2_RMSE_REL * paper {
            problems.push(format!("{id} RMSE {rmse:.1} outside {paper} +/- 20%"));
        }
    }
    let v = |id| row(out, id).rmse;
    let ordered = v("logistic").max(v("pss")) < v("rf")
        && v("rf") < v("oracle").min(v("xgboost"))
        && v("oracle").max(v("xgboost")) < v("cart");
    if !ordered {
        problems.push("RMSE ordering Logistic~PSS < RF < Oracle~XGBoost < CART broken".into());
    }
    let detail = format!("{}; {secs:.0} s", cells.join(", "));
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", problems.join("; ")))
    }
}

fn criterion_6(out: &ScenarioOutput, secs: f64) -> Outcome {
    no_breach(out)?;
    let mut problems = Vec::new();
    let mut cells = Vec::new();
    for r in &out.rows {
        cells.push(format!("{} varRB {:+.1} cov {:.1}", r.estimator, r.var_rb_pct.unwrap(), r.coverage_pct.unwrap()));
    }
    let get = |id| {
        let r = row(out, id);
        (r.var_rb_pct.unwrap(), r.coverage_pct.unwrap())
    };
    for (id, rb_ref, cov_ref) in [("logistic", -0.3, 94.8), ("pss", 1.6, 94.9)] {
        let (rb, cov) = get(id);
        if (rb - rb_ref).abs() > TABLE3_VAR_RB_PP || (cov - cov_ref).abs() > TABLE3_COVERAGE_PP {
            problems.push(format!("{id} outside ({rb_ref} +/- 6, {cov_ref} +/- 2)"));
        }
    }
    let (rb, cov) = get("cart");
    if !(rb > 20.0 && cov > 96.0) {
        problems.push("cart needs varRB > 20 and coverage > 96".into());
    }
    let (rb, cov) = get("rf");
    if !(rb > 10.0 && (93.5..=96.5).contains(&cov)) {
        problems.push("rf needs varRB > 10 and coverage in [93.5, 96.5]".into());
    }
    let (rb, cov) = get("xgboost");
    if !(rb < 0.0 && cov < 92.0) {
        problems.push("xgboost needs varRB < 0 and coverage < 92".into());
    }
    let detail = format!("{}; {secs:.0} s", cells.join(", "));
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", problems.join("; ")))
    }
}

fn criterion_7(out: &ScenarioOutput, secs: f64) -> Outcome {
    no_breach(out)?;
    let r = row(out, "aipw");
    let cov = r.coverage_pct.unwrap();
    check(
        (AIPW_COVERAGE.0..=AIPW_COVERAGE.1).contains(&cov),
        format!(
            "coverage {cov:.2}% in [{}, {}] (RB {:+.3}%, varRB {:+.1}%, R={}); {secs:.0} s",
            AIPW_COVERAGE.0,
            AIPW_COVERAGE.1,
            r.rb_pct,
            r.var_rb_pct.unwrap(),
            r.replications
        ),
    )
}

fn timed(text: &str, threads: usize, overrides: &[&str]) -> (ScenarioOutput, f64) {
    let t = Instant::now();
    let out = run(text, threads, overrides);
    (out, t.elapsed().as_secs_f64())
}

fn identical(name: &str, a: &ScenarioOutput, b: &ScenarioOutput) -> Result<(), String> {
    if metrics_csv(&a.rows) == metrics_csv(&b.rows) {
        Ok(())
    } else {
        Err(format!("{name}: metric CSVs differ between worker counts"))
    }
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

fn report(id: u32, title: &str, f: impl FnOnce() -> Outcome) -> bool {
    if !selected(id) {
        return true;
    }
    let started = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let secs = started.elapsed().as_secs_f64();
    let (status, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {id} {status} {title} ({secs:.1} s): {detail}");
    outcome.is_ok()
}

/// Positional arguments that are numbers select criteria; none selects all.
fn selected(id: u32) -> bool {
    let picks: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    picks.is_empty() || picks.contains(&id)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let full = args.iter().any(|a| a == "--ignored" || a == "--include-ignored");
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    panic::set_hook(Box::new(|_| {}));
    let mut ok = true;
    ok &= report(1, "exact unbiasedness by enumeration", criterion_1);
    ok &= report(2, "variance estimators unbiased by enumeration", criterion_2);
    ok &= report(3, "Gateaux derivatives", criterion_3);
    ok &= report(4, "completed file reproduces AIPW", criterion_4);

    let mut t2: Option<ScenarioOutput> = None;
    ok &= report(5, "table2 scenario at N=4000, n=200, R=2000", || {
        let (out, secs) = timed(TABLE2_CFG, 1, &[]);
        let res = criterion_5(&out, secs);
        t2 = Some(out);
        res
    });

    let mut t3: Option<ScenarioOutput> = None;
    if full {
        ok &= report(6, "table3 scenario at N=20000, n=1000, R=2000, B=100", || {
            let (out, secs) = timed(TABLE3_CFG, 1, &[]);
            let res = criterion_6(&out, secs);
            t3 = Some(out);
            res
        });
    } else if selected(6) {
        println!(
            "criterion 6 SKIP table3 scenario at N=20000, n=1000, R=2000, B=100: hours of CPU; run with -- --ignored"
        );
    }

    let mut aipw: Option<ScenarioOutput> = None;
    ok &= report(7, "AIPW coverage at N=20000, n=1000, R=2000", || {
        let (out, secs) = timed(AIPW_CFG, 1, &[]);
        let res = criterion_7(&out, secs);
        aipw = Some(out);
        res
    });

    ok &= report(8, "bit-identical metrics across worker counts", || {
        let mut checked = Vec::new();
        if let Some(a) = &t2 {
            identical("table2", a, &run(TABLE2_CFG, 3, &[]))?;
            checked.push("table2 R=2000");
        }
        if let Some(a) = &aipw {
            identical("aipw", a, &run(AIPW_CFG, 3, &[]))?;
            checked.push("aipw R=2000");
        }
        match &t3 {
            Some(a) => {
                identical("table3", a, &run(TABLE3_CFG, 3, &[]))?;
                checked.push("table3 R=2000");
            }
            None => {
                // the bootstrap path at reduced size
                let small = ["R=6", "B=10"];
                identical("table3", &run(TABLE3_CFG, 1, &small), &run(TABLE3_CFG, 3, &small))?;
                checked.push("table3 R=6 B=10");
            }
        }
        if checked.len() < 3 {
            return Err(format!("only {} compared", checked.join(", ")));
        }
        Ok(format!("1 vs 3 workers identical for {}", checked.join(", ")))
    });

    if !ok {
        std::process::exit(1);
    }
}
