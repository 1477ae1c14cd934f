use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use surveyml::bootstrap::{pseudo_population_bootstrap, BootstrapConfig};
use surveyml::config::Config;
use surveyml::designs::{make_folds, FoldLevel};
use surveyml::diagnostics::{
    direction_library, gateaux_derivative, imputed_derivative_closed_form, ipw_derivative_closed_form,
    score_expectation, Direction, NuisanceValues, ScoreKind, DEFAULT_STEPS,
};
use surveyml::estimators::{
    aipw_crossfit, build_completed_file, greg, ht_estimate, imputed_mean, ipw_mean, write_results, EstimateResult,
    DEFAULT_ALPHA,
};
use surveyml::population::{generate_population, linear_predictor, DgpConfig, DEFAULT_COEFFICIENTS};
use surveyml::simengine::{parse_estimators, run_scenario_with_progress, write_failures, EstimatorKind, Propensity};
use surveyml::{rng, DesignSpec, IpwForm, LearnerSpec, ResponseMechanism, ScenarioConfig, SurveyData, Task};

use crate::data::{read_sample, FileDesign};
use crate::manifest::{beside, Manifest};
use crate::Common;

const GATE_BREACH: u8 = 2;

fn load_config(common: &Common, data: Option<&Path>) -> Result<Config> {
    let mut cfg = Config::load(&common.config)?;
    for o in &common.overrides {
        cfg.set_override(o)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", seed);
    }
    if let Some(t) = common.threads {
        cfg.set("threads", t);
    }
    if let Some(d) = data {
        cfg.set("data", d.display());
    }
    Ok(cfg)
}

/// Sizes the global worker pool from the `threads` key.
fn init_threads(cfg: &Config) -> Result<()> {
    let t: usize = cfg.get_or("threads", 0)?;
    if t > 0 {
        // A second initialisation in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

pub fn simulate(common: &Common, out: &Path) -> Result<u8> {
    let cfg = load_config(common, None)?;
    let scenario = ScenarioConfig::from_config(&cfg)?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    let mut manifest = Manifest::start("simulate");
    let report = |msg: &str| eprintln!("{msg}");
    let output = manifest.stage("run", || run_scenario_with_progress(&scenario, Some(&report)))?;
    let metrics = out.join("metrics.csv");
    output.write_csv(&metrics)?;
    manifest.output(&metrics);
    if !output.failures.is_empty() {
        let path = out.join("failures.txt");
        write_failures(&path, &output.failures)?;
        manifest.output(&path);
    }
    manifest.write(&cfg, &out.join("manifest.cfg"))?;
    print!("{}", surveyml::simengine::metrics_csv(&output.rows));
    let breaches = output.breaches();
    if breaches.is_empty() {
        Ok(0)
    } else {
        for b in breaches {
            eprintln!(
                "quality gate: N={} n={} {} failed {} of {} replications",
                b.big_n,
                b.n,
                b.estimator,
                b.failures,
                b.failures + b.replications
            );
        }
        Ok(GATE_BREACH)
    }
}

struct Loaded {
    cfg: Config,
    data: SurveyData,
    design: DesignSpec,
    ids: Vec<usize>,
    seed: u64,
    alpha: f64,
}

fn load_data(common: &Common, data: Option<&Path>) -> Result<Loaded> {
    let cfg = load_config(common, data)?;
    let path = PathBuf::from(cfg.require("data").map_err(|_| anyhow!("no sample file: pass --data or set `data`"))?);
    let file = read_sample(&path)?;
    let design = match cfg.get_or("design", "srswor".to_string())?.as_str() {
        "srswor" => FileDesign::Srswor,
        "poisson" => FileDesign::Poisson,
        other => bail!("design: unknown value `{other}` (expected srswor or poisson)"),
    };
    let (data, spec) = file.survey(design, cfg.get("population_size")?)?;
    let seed = cfg.get_or("seed", 1)?;
    let alpha = cfg.get_or("alpha", DEFAULT_ALPHA)?;
    init_threads(&cfg)?;
    Ok(Loaded { cfg, data, design: spec, ids: file.ids, seed, alpha })
}

fn seeds(master: u64, id: &str) -> (u64, u64) {
    let tag = rng::tag_of(id);
    (rng::derive_path(master, &[rng::FIT, tag]), rng::derive_path(master, &[rng::FOLDS, tag]))
}

fn response_indicator(data: &SurveyData) -> Result<Vec<f64>> {
    Ok(data.responses()?.indicators().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
}

fn run_bootstrap(
    l: &Loaded,
    spec: &LearnerSpec,
    form: IpwForm,
    b: usize,
    seed: u64,
) -> Result<surveyml::bootstrap::BootstrapOutput> {
    Ok(pseudo_population_bootstrap(&l.data, spec, &l.design, &BootstrapConfig { replications: b, seed, form })?)
}

pub fn estimate(common: &Common, data: Option<&Path>, out: &Path) -> Result<u8> {
    let mut manifest = Manifest::start("estimate");
    let l = load_data(common, data)?;
    let estimators = parse_estimators(&l.cfg)?;
    let b: usize = l.cfg.get_or("B", 100)?;
    l.cfg.check_all_read()?;
    let mut results: Vec<EstimateResult> = Vec::new();
    for est in &estimators {
        let (fit_seed, fold_seed) = seeds(l.seed, &est.id);
        let unavailable =
            || anyhow!("estimator `{}` needs the full population and cannot run on a sample file", est.id);
        let res = match &est.kind {
            EstimatorKind::Ht => {
                if l.data.y.iter().any(|v| v.is_nan()) {
                    bail!("estimator `{}`: ht needs an outcome for every sampled unit", est.id);
                }
                ht_estimate(&l.data.sample, &l.data.y, &l.design, l.alpha)?
            }
            EstimatorKind::Greg { totals } => {
                let totals =
                    totals.as_ref().ok_or_else(|| anyhow!("estimator `{}` needs `{}.totals`", est.id, est.id))?;
                greg(&l.data.sample, &l.data.x, &l.data.y, totals, &l.design, true, l.alpha)?
            }
            EstimatorKind::Imputed(spec) => imputed_mean(&l.data, spec, fit_seed)?,
            EstimatorKind::Ipw { form, propensity: Propensity::Learner(spec), bootstrap } => {
                let r = response_indicator(&l.data)?;
                let p = spec.fit(&l.data.x, &r, l.data.weights(), fit_seed)?.predict_matrix(&l.data.x);
                let point = ipw_mean(&l.data, &p, *form, None, l.alpha)?;
                if *bootstrap {
                    let boot = run_bootstrap(&l, spec, *form, b, rng::derive(l.seed, rng::tag_of(&est.id)))?;
                    point.with_variance(boot.variance, l.alpha)?
                } else {
                    point
                }
            }
            EstimatorKind::Aipw { m, p, k } => {
                let folds = make_folds(l.data.len(), *k, FoldLevel::Sample, &mut rng::stream(fold_seed))?;
                aipw_crossfit(&l.data, &l.design, &folds, m, p, fit_seed, l.alpha)?
            }
            EstimatorKind::Ipw { propensity: Propensity::True, .. }
            | EstimatorKind::MaOracle
            | EstimatorKind::MaFeasible(_)
            | EstimatorKind::MaCrossfit { .. }
            | EstimatorKind::AipwOracle { .. } => return Err(unavailable()),
        };
        results.push(res);
    }
    write_results(out, &results)?;
    manifest.output(out);
    manifest.write(&l.cfg, &beside(out))?;
    Ok(0)
}

pub fn impute(common: &Common, data: Option<&Path>, out: &Path) -> Result<u8> {
    let mut manifest = Manifest::start("impute");
    let l = load_data(common, data)?;
    let estimators = parse_estimators(&l.cfg)?;
    let wanted: Option<String> = l.cfg.get("impute.estimator")?;
    // Shared with `estimate`; unused here.
    let _b: usize = l.cfg.get_or("B", 100)?;
    l.cfg.check_all_read()?;
    let est = estimators
        .iter()
        .find(|e| match &wanted {
            Some(id) => &e.id == id,
            None => matches!(e.kind, EstimatorKind::Aipw { .. }),
        })
        .ok_or_else(|| anyhow!("no aipw estimator configured to build the completed file from"))?;
    let EstimatorKind::Aipw { m, p, k } = &est.kind else {
        bail!("estimator `{}` is not of kind aipw", est.id);
    };
    let (fit_seed, fold_seed) = seeds(l.seed, &est.id);
    let folds = make_folds(l.data.len(), *k, FoldLevel::Sample, &mut rng::stream(fold_seed))?;
    let mut file = build_completed_file(&l.data, &folds, m, p, fit_seed)?;
    for row in &mut file.rows {
        row.id = l.ids[row.id];
    }
    file.write_csv(out)?;
    manifest.output(out);
    manifest.write(&l.cfg, &beside(out))?;
    Ok(0)
}

pub fn bootstrap(common: &Common, data: Option<&Path>, out: &Path) -> Result<u8> {
    let mut manifest = Manifest::start("bootstrap");
    let l = load_data(common, data)?;
    let kind = l.cfg.require("learner")?.to_string();
    let params = l.cfg.section("learner");
    let spec = LearnerSpec::from_params(&kind, Task::Propensity, params.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    let form = match l.cfg.get_or("form", "hajek".to_string())?.as_str() {
        "hajek" => IpwForm::Hajek,
        "expansion" => IpwForm::Expansion,
        other => bail!("form: unknown value `{other}` (expected hajek or expansion)"),
    };
    let b: usize = l.cfg.get_or("B", 100)?;
    l.cfg.check_all_read()?;
    let r = response_indicator(&l.data)?;
    let p = spec.fit(&l.data.x, &r, l.data.weights(), rng::derive(l.seed, rng::FIT))?.predict_matrix(&l.data.x);
    let point = ipw_mean(&l.data, &p, form, None, l.alpha)?;
    let boot =
        manifest.stage("bootstrap", || run_bootstrap(&l, &spec, form, b, rng::derive(l.seed, rng::BOOTSTRAP)))?;
    let result = point.with_variance(boot.variance, l.alpha)?;

    let mut w = csv::Writer::from_path(out).with_context(|| format!("cannot write {}", out.display()))?;
    w.write_record(["b", "estimate"])?;
    for (i, v) in boot.replicates.iter().enumerate() {
        w.write_record([(i + 1).to_string(), v.to_string()])?;
    }
    w.flush()?;
    let (lo, hi) = result.ci.expect("variance attached");
    println!("estimator,learner,B,point,variance,ci_low,ci_high,redraws");
    println!("{},{},{b},{},{},{lo},{hi},{}", form.name(), spec.id(), result.point, boot.variance, boot.redraws);
    manifest.output(out);
    manifest.write(&l.cfg, &beside(out))?;
    Ok(0)
}

/// Absolute tolerance of the derivative table.
const DIAGNOSE_TOL: f64 = 1e-6;

pub fn diagnose(common: &Common, out: Option<&Path>) -> Result<u8> {
    let cfg = load_config(common, None)?;
    let big_n: usize = cfg.get_or("N", 6)?;
    let seed: u64 = cfg.get_or("seed", 1)?;
    let count: usize = cfg.get_or("directions", 20)?;
    let offset: f64 = cfg.get_or("theta_offset", 0.0)?;
    let design = match cfg.get_or("design", "poisson".to_string())?.as_str() {
        "poisson" => DesignSpec::poisson(vec![cfg.get_or("pi", 0.5)?; big_n])?,
        "srswor" => DesignSpec::srswor(big_n, cfg.get_or("n", big_n / 2)?)?,
        other => bail!("design: unknown value `{other}` (expected poisson or srswor)"),
    };
    let _threads: usize = cfg.get_or("threads", 0)?;
    cfg.check_all_read()?;

    // Zero noise keeps the outcome-model expectation exact.
    let pop = generate_population(&DgpConfig {
        n_units: big_n,
        coefficients: DEFAULT_COEFFICIENTS.to_vec(),
        noise_sd: 0.0,
        seed: rng::derive(seed, rng::POPULATION),
    })?;
    let mech = ResponseMechanism::appendix(&pop)?;
    let truth = NuisanceValues::from_fns(&pop, |x| linear_predictor(&DEFAULT_COEFFICIENTS, x), |x| mech.prob_of(x));
    let theta = pop.mean() + offset;

    let mut lines = vec!["score,direction,derivative,reference,abs_diff,status".to_string()];
    let mut failed = false;
    println!("{:<8} {:>12} {:>22}", "score", "theta", "expected score");
    for kind in ScoreKind::ALL {
        let u = score_expectation(kind, &pop, &design, Some(&mech), theta, &truth)?;
        println!("{:<8} {:>12.6} {:>22.3e}", kind.name(), theta, u);
    }
    println!();
    println!("{:<8} {:<14} {:>14} {:>14} {:>10}  status", "score", "direction", "derivative", "reference", "abs_diff");
    for (i, h) in direction_library(seed, count, pop.n_covariates()).iter().enumerate() {
        let hv: Vec<f64> = pop.covariates().iter_rows().map(h).collect();
        // Propensity directions are damped near 0 and 1 so p + t g stays a probability.
        let gv: Vec<f64> = hv.iter().zip(&truth.p).map(|(h, p)| 0.5 * h * p * (1.0 - p)).collect();
        let dir_m = Direction { m: Some(hv.clone()), p: None };
        let dir_p = Direction { m: None, p: Some(gv.clone()) };
        let dir_j = Direction { m: Some(hv.clone()), p: Some(gv.clone()) };
        let cases: [(ScoreKind, &str, &Direction, f64); 6] = [
            (ScoreKind::ModelAssisted, "m", &dir_m, 0.0),
            (ScoreKind::Imputed, "m", &dir_m, imputed_derivative_closed_form(&truth.p, &hv)),
            (ScoreKind::Ipw, "p", &dir_p, ipw_derivative_closed_form(pop.outcomes(), &truth.p, &gv)),
            (ScoreKind::Aipw, "m", &dir_m, 0.0),
            (ScoreKind::Aipw, "p", &dir_p, 0.0),
            (ScoreKind::Aipw, "m+p", &dir_j, 0.0),
        ];
        for (kind, which, dir, reference) in cases {
            let d = gateaux_derivative(kind, &pop, &design, Some(&mech), theta, &truth, dir, &DEFAULT_STEPS)?.value;
            let diff = (d - reference).abs();
            let ok = diff <= DIAGNOSE_TOL;
            failed |= !ok;
            let status = if ok { "pass" } else { "FAIL" };
            let label = format!("{which}#{}", i + 1);
            println!("{:<8} {:<14} {:>14.6e} {:>14.6e} {:>10.2e}  {status}", kind.name(), label, d, reference, diff);
            lines.push(format!("{},{label},{d},{reference},{diff},{status}", kind.name()));
        }
    }
    if let Some(path) = out {
        let mut f = std::fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        for l in &lines {
            writeln!(f, "{l}")?;
        }
        let mut manifest = Manifest::start("diagnose");
        manifest.output(path);
        manifest.write(&cfg, &beside(path))?;
    }
    Ok(if failed { GATE_BREACH } else { 0 })
}
