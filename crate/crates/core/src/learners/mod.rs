//! Regression and propensity learners behind one fit/predict contract.

mod boosting;
mod forest;
mod linear;
mod stratification;
mod tree;

use std::fmt;
use std::sync::Arc;

pub use boosting::{BoostedModel, BoostingParams};
pub use forest::ForestParams;
pub use linear::{fit_logistic, fit_wls, LinearModel, LogisticFit};
pub use stratification::StratifiedModel;
pub use tree::Tree;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use tree::{FeatureChoice, GrowParams, SortedColumns, SplitRule};

/// Lower bound applied to every estimated response propensity.
pub const DEFAULT_CLIP_FLOOR: f64 = 0.0005;

/// `max(p, floor)` capped at one, elementwise.
pub fn clip_probabilities(p: &[f64], floor: f64) -> Vec<f64> {
    p.iter().map(|&v| clip(v, floor)).collect()
}

#[inline]
fn clip(p: f64, floor: f64) -> f64 {
    p.max(floor).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Regression,
    /// Predictions are probabilities, clipped to `[clip_floor, 1]`.
    Propensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LearnerKind {
    Constant,
    WeightedLeastSquares,
    Logistic,
    RegressionTree,
    RandomForest,
    GradientBoosting,
    PropensityStratification,
}

impl LearnerKind {
    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Constant => "constant",
            LearnerKind::WeightedLeastSquares => "wls",
            LearnerKind::Logistic => "logistic",
            LearnerKind::RegressionTree => "tree",
            LearnerKind::RandomForest => "forest",
            LearnerKind::GradientBoosting => "boosting",
            LearnerKind::PropensityStratification => "pss",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "constant" | "constant_mean" | "mean" => LearnerKind::Constant,
            "wls" | "weighted_least_squares" | "linear" => LearnerKind::WeightedLeastSquares,
            "logistic" | "logit" => LearnerKind::Logistic,
            "tree" | "cart" | "regression_tree" => LearnerKind::RegressionTree,
            "forest" | "rf" | "random_forest" => LearnerKind::RandomForest,
            "boosting" | "xgboost" | "gradient_boosting" => LearnerKind::GradientBoosting,
            "pss" | "propensity_stratification" => LearnerKind::PropensityStratification,
            other => return Err(Error::Config(format!("unknown learner kind `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub cp: f64,
    pub minsplit: usize,
    pub minbucket: usize,
    pub max_depth: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { cp: 0.0, minsplit: 20, minbucket: 7, max_depth: 30 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Hyperparameters {
    Constant,
    Wls { intercept: bool },
    Logistic { intercept: bool, max_iter: usize, tol: f64 },
    Tree(TreeParams),
    Forest(ForestParams),
    Boosting(BoostingParams),
    Stratification { strata: usize, intercept: bool },
}

impl Hyperparameters {
    fn defaults(kind: LearnerKind) -> Self {
        match kind {
            LearnerKind::Constant => Hyperparameters::Constant,
            LearnerKind::WeightedLeastSquares => Hyperparameters::Wls { intercept: true },
            LearnerKind::Logistic => Hyperparameters::Logistic { intercept: true, max_iter: 100, tol: 1e-10 },
            LearnerKind::RegressionTree => Hyperparameters::Tree(TreeParams::default()),
            LearnerKind::RandomForest => Hyperparameters::Forest(ForestParams::default()),
            LearnerKind::GradientBoosting => Hyperparameters::Boosting(BoostingParams::default()),
            LearnerKind::PropensityStratification => Hyperparameters::Stratification { strata: 5, intercept: true },
        }
    }
}

/// A learning procedure together with its tuning parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSpec {
    kind: LearnerKind,
    params: Hyperparameters,
    task: Task,
    clip_floor: f64,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind, task: Task) -> Self {
        Self { kind, params: Hyperparameters::defaults(kind), task, clip_floor: DEFAULT_CLIP_FLOOR }
    }

    /// Builds a spec from a kind name and `(name, value)` hyperparameter pairs.
    pub fn from_params<'a>(
        kind: &str,
        task: Task,
        params: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self> {
        let mut spec = Self::new(LearnerKind::parse(kind)?, task);
        for (name, value) in params {
            spec.set(name, value)?;
        }
        Ok(spec)
    }

    pub fn kind(&self) -> LearnerKind {
        self.kind
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn params(&self) -> &Hyperparameters {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Hyperparameters {
        &mut self.params
    }

    pub fn clip_floor(&self) -> f64 {
        self.clip_floor
    }

    pub fn id(&self) -> &'static str {
        self.kind.name()
    }

    pub fn with(mut self, name: &str, value: &str) -> Result<Self> {
        self.set(name, value)?;
        Ok(self)
    }

    /// Sets one hyperparameter by name.
    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        let learner = self.kind.name();
        let bad = |reason: &str| Error::Hyperparameter { learner, name: name.to_string(), reason: reason.to_string() };
        let f = |v: &str| v.trim().parse::<f64>().map_err(|_| bad("expected a number"));
        let u = |v: &str| v.trim().parse::<usize>().map_err(|_| bad("expected a nonnegative integer"));
        let b = |v: &str| match v.trim() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(bad("expected true or false")),
        };
        if name == "clip_floor" {
            let v = f(value)?;
            if !(0.0..1.0).contains(&v) {
                return Err(bad("must lie in [0, 1)"));
            }
            self.clip_floor = v;
            return Ok(());
        }
        match &mut self.params {
            Hyperparameters::Constant => return Err(bad("the constant learner has no hyperparameters")),
            Hyperparameters::Wls { intercept } => match name {
                "intercept" => *intercept = b(value)?,
                _ => return Err(bad("unknown name")),
            },
            Hyperparameters::Logistic { intercept, max_iter, tol } => match name {
                "intercept" => *intercept = b(value)?,
                "max_iter" => *max_iter = u(value)?,
                "tol" => *tol = f(value)?,
                _ => return Err(bad("unknown name")),
            },
            Hyperparameters::Tree(p) => match name {
                "cp" => p.cp = f(value)?,
                "minsplit" => p.minsplit = u(value)?,
                "minbucket" => p.minbucket = u(value)?,
                "max_depth" | "maxdepth" => p.max_depth = u(value)?,
                _ => return Err(bad("unknown name")),
            },
            Hyperparameters::Forest(p) => match name {
                "ntree" => p.ntree = u(value)?,
                "mtry" => p.mtry = u(value)?,
                "nodesize" => p.nodesize = u(value)?,
                "bootstrap" => p.bootstrap = b(value)?,
                "max_depth" => p.max_depth = u(value)?,
                _ => return Err(bad("unknown name")),
            },
            Hyperparameters::Boosting(p) => match name {
                "eta" => p.eta = f(value)?,
                "max_depth" => p.max_depth = u(value)?,
                "min_child_weight" => p.min_child_weight = f(value)?,
                "lambda" => p.lambda = f(value)?,
                "gamma" => p.gamma = f(value)?,
                "subsample" => p.subsample = f(value)?,
                "colsample" | "colsample_bytree" => p.colsample = f(value)?,
                "max_rounds" | "nrounds" => p.max_rounds = u(value)?,
                "cv_folds" | "nfold" => p.cv_folds = u(value)?,
                "patience" | "early_stopping_rounds" => p.patience = u(value)?,
                _ => return Err(bad("unknown name")),
            },
            Hyperparameters::Stratification { strata, intercept } => match name {
                "strata" | "C" => *strata = u(value)?,
                "intercept" => *intercept = b(value)?,
                _ => return Err(bad("unknown name")),
            },
        }
        self.validate().map_err(|e| bad(&e))
    }

    fn validate(&self) -> std::result::Result<(), String> {
        match &self.params {
            Hyperparameters::Logistic { max_iter, tol, .. } if *max_iter == 0 || !(*tol > 0.0) => {
                Err("max_iter and tol must be positive".into())
            }
            Hyperparameters::Tree(p) if p.cp < 0.0 || p.minsplit < 2 || p.minbucket < 1 => {
                Err("need cp >= 0, minsplit >= 2, minbucket >= 1".into())
            }
            Hyperparameters::Forest(p) if p.ntree == 0 || p.mtry == 0 || p.nodesize == 0 => {
                Err("ntree, mtry and nodesize must be positive".into())
            }
            Hyperparameters::Boosting(p)
                if !(p.eta > 0.0)
                    || p.lambda < 0.0
                    || p.gamma < 0.0
                    || p.min_child_weight < 0.0
                    || !(p.subsample > 0.0 && p.subsample <= 1.0)
                    || !(p.colsample > 0.0 && p.colsample <= 1.0) =>
            {
                Err("need eta > 0, lambda, gamma, min_child_weight >= 0 and sampling fractions in (0, 1]".into())
            }
            Hyperparameters::Stratification { strata, .. } if *strata == 0 => Err("need at least one stratum".into()),
            _ => Ok(()),
        }
    }

    /// Fits on all rows of `x`.
    pub fn fit(&self, x: &Matrix, target: &[f64], weights: &[f64], seed: u64) -> Result<FittedPredictor> {
        let n = x.rows();
        if target.len() != n || weights.len() != n {
            return Err(Error::invalid("covariates, target and weights differ in length"));
        }
        if n == 0 {
            return Err(Error::InsufficientData("no training rows".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("training weights must be positive and finite"));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("training targets must be finite"));
        }
        let mut meta = FitMeta { rows: n, fold: None, converged: true, rounds: None };
        let model = match &self.params {
            Hyperparameters::Constant => {
                let wsum: f64 = weights.iter().sum();
                Model::Constant(target.iter().zip(weights).map(|(t, w)| t * w).sum::<f64>() / wsum)
            }
            Hyperparameters::Wls { intercept } => Model::Linear(fit_wls(x, target, weights, *intercept)?),
            Hyperparameters::Logistic { intercept, max_iter, tol } => {
                let fit = fit_logistic(x, target, weights, *intercept, *max_iter, *tol)?;
                meta.converged = fit.converged;
                Model::Logistic(fit.model)
            }
            Hyperparameters::Tree(p) => Model::Tree(fit_tree(x, target, weights, p)),
            Hyperparameters::Forest(p) => {
                if p.mtry > x.cols() {
                    return Err(Error::Hyperparameter {
                        learner: "forest",
                        name: "mtry".into(),
                        reason: format!("{} exceeds the {} covariates", p.mtry, x.cols()),
                    });
                }
                Model::Forest(forest::fit_forest(x, target, weights, p, seed))
            }
            Hyperparameters::Boosting(p) => {
                let (m, rounds) = boosting::fit_boosting(x, target, weights, p, seed)?;
                meta.rounds = Some(rounds);
                Model::Boosted(m)
            }
            Hyperparameters::Stratification { strata, intercept } => {
                let base = LearnerSpec {
                    kind: LearnerKind::Logistic,
                    params: Hyperparameters::Logistic { intercept: *intercept, max_iter: 100, tol: 1e-10 },
                    task: Task::Propensity,
                    clip_floor: self.clip_floor,
                }
                .fit(x, target, weights, seed)?;
                meta.converged = base.meta.converged;
                let scores: Vec<f64> = x.iter_rows().map(|row| base.predict_raw(row)).collect();
                Model::Stratified(stratification::stratify(base, &scores, target, weights, *strata))
            }
        };
        Ok(FittedPredictor { model, label: self.kind.name(), task: self.task, clip_floor: self.clip_floor, meta })
    }

    /// Fits on a subset of rows.
    pub fn fit_rows(
        &self,
        x: &Matrix,
        target: &[f64],
        weights: &[f64],
        rows: &[usize],
        seed: u64,
    ) -> Result<FittedPredictor> {
        let xs = x.select_rows(rows);
        let t: Vec<f64> = rows.iter().map(|&i| target[i]).collect();
        let w: Vec<f64> = rows.iter().map(|&i| weights[i]).collect();
        self.fit(&xs, &t, &w, seed)
    }
}

fn fit_tree(x: &Matrix, y: &[f64], w: &[f64], p: &TreeParams) -> Tree {
    let wsum: f64 = w.iter().sum();
    let mean = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wsum;
    let root_sse: f64 = y.iter().zip(w).map(|(a, b)| b * (a - mean) * (a - mean)).sum();
    let params = GrowParams {
        min_split: p.minsplit,
        min_leaf: p.minbucket,
        max_depth: p.max_depth,
        features: FeatureChoice::All,
        rule: SplitRule::Squared { min_gain: p.cp * root_sse },
    };
    let stats: Vec<[f64; 2]> = y.iter().zip(w).map(|(a, b)| [*b, b * a]).collect();
    tree::grow(SortedColumns::new(x), &stats, &vec![1; y.len()], &params, &mut rng::stream(0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitMeta {
    pub rows: usize,
    pub fold: Option<usize>,
    /// False when an iterative fit stopped before meeting its tolerance.
    pub converged: bool,
    /// Boosting rounds actually used.
    pub rounds: Option<usize>,
}

type PredictFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Model {
    Constant(f64),
    Linear(LinearModel),
    Logistic(LinearModel),
    Tree(Tree),
    Forest(Vec<Tree>),
    Boosted(BoostedModel),
    Stratified(StratifiedModel),
    Function(PredictFn),
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Model::Constant(c) => write!(f, "Constant({c})"),
            Model::Linear(m) => write!(f, "Linear({m:?})"),
            Model::Logistic(m) => write!(f, "Logistic({m:?})"),
            Model::Tree(t) => write!(f, "Tree({} nodes)", t.n_nodes()),
            Model::Forest(ts) => write!(f, "Forest({} trees)", ts.len()),
            Model::Boosted(b) => write!(f, "Boosted({} rounds)", b.trees.len()),
            Model::Stratified(s) => write!(f, "Stratified({} strata)", s.rates.len()),
            Model::Function(_) => write!(f, "Function"),
        }
    }
}

/// A trained prediction rule.
#[derive(Debug, Clone)]
pub struct FittedPredictor {
    model: Model,
    label: &'static str,
    task: Task,
    clip_floor: f64,
    meta: FitMeta,
}

impl FittedPredictor {
    pub fn constant(value: f64, task: Task) -> Self {
        Self {
            model: Model::Constant(value),
            label: "constant",
            task,
            clip_floor: DEFAULT_CLIP_FLOOR,
            meta: FitMeta { rows: 0, fold: None, converged: true, rounds: None },
        }
    }

    /// Wraps a fixed function, for known nuisances.
    pub fn from_fn(label: &'static str, task: Task, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            model: Model::Function(Arc::new(f)),
            label,
            task,
            clip_floor: DEFAULT_CLIP_FLOOR,
            meta: FitMeta { rows: 0, fold: None, converged: true, rounds: None },
        }
    }

    pub fn label(&self) -> &'static str {
        self.label
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn meta(&self) -> &FitMeta {
        &self.meta
    }

    /// Prediction before propensity clipping.
    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        match &self.model {
            Model::Constant(c) => *c,
            Model::Linear(m) => m.index(x),
            Model::Logistic(m) => crate::numeric::expit(m.index(x)),
            Model::Tree(t) => t.predict(x),
            Model::Forest(ts) => ts.iter().map(|t| t.predict(x)).sum::<f64>() / ts.len() as f64,
            Model::Boosted(b) => b.predict(x),
            Model::Stratified(s) => s.predict(x),
            Model::Function(f) => f(x),
        }
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        let v = self.predict_raw(x);
        match self.task {
            Task::Regression => v,
            Task::Propensity => clip(v, self.clip_floor),
        }
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.predict(r)).collect()
    }

    pub fn linear_model(&self) -> Option<&LinearModel> {
        match &self.model {
            Model::Linear(m) | Model::Logistic(m) => Some(m),
            _ => None,
        }
    }

    pub fn boosted_model(&self) -> Option<&BoostedModel> {
        match &self.model {
            Model::Boosted(b) => Some(b),
            _ => None,
        }
    }

    pub fn trees(&self) -> Option<&[Tree]> {
        match &self.model {
            Model::Tree(t) => Some(std::slice::from_ref(t)),
            Model::Forest(ts) => Some(ts),
            _ => None,
        }
    }

    pub fn stratified_model(&self) -> Option<&StratifiedModel> {
        match &self.model {
            Model::Stratified(s) => Some(s),
            _ => None,
        }
    }
}

/// Fits one predictor per fold. Predictor `v` sees only rows whose fold
/// differs from `v` and, when `eligible` is given, whose flag is set.
#[allow(clippy::too_many_arguments)]
pub fn fit_crossfitted_by(
    spec: &LearnerSpec,
    x: &Matrix,
    target: &[f64],
    weights: &[f64],
    row_fold: &[usize],
    k_folds: usize,
    eligible: Option<&[bool]>,
    seed: u64,
) -> Result<Vec<FittedPredictor>> {
    (0..k_folds)
        .map(|v| {
            let rows: Vec<usize> =
                (0..x.rows()).filter(|&i| row_fold[i] != v && eligible.is_none_or(|e| e[i])).collect();
            if rows.is_empty() {
                return Err(Error::FoldFit {
                    fold: v,
                    source: Box::new(Error::InsufficientData(
                        "the complement of this fold has no training rows".into(),
                    )),
                });
            }
            let mut fit = spec
                .fit_rows(x, target, weights, &rows, rng::derive(seed, v as u64))
                .map_err(|e| Error::FoldFit { fold: v, source: Box::new(e) })?;
            fit.meta.fold = Some(v);
            Ok(fit)
        })
        .collect()
}

/// Cross-fitting over a sample-level partition whose units are the rows of `x`.
pub fn fit_crossfitted(
    spec: &LearnerSpec,
    x: &Matrix,
    target: &[f64],
    weights: &[f64],
    folds: &crate::designs::FoldPartition,
    seed: u64,
) -> Result<Vec<FittedPredictor>> {
    if folds.len() != x.rows() {
        return Err(Error::invalid("fold partition and data differ in length"));
    }
    fit_crossfitted_by(spec, x, target, weights, folds.assignment(), folds.k_folds(), None, seed)
}
