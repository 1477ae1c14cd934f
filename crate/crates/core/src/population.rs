//! Fixed finite populations and the linear-Gaussian generator.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numeric;
use crate::rng;

/// Coefficients of the default generator: intercept, then x1..x4.
pub const DEFAULT_COEFFICIENTS: [f64; 5] = [10.0, 2.0, -1.5, 1.0, 3.0];

/// A frozen population of N units with covariates and outcomes.
#[derive(Debug, Clone)]
pub struct FinitePopulation {
    covariates: Matrix,
    outcomes: Vec<f64>,
    sigma2: f64,
    medians: Vec<f64>,
}

impl FinitePopulation {
    pub fn new(covariates: Matrix, outcomes: Vec<f64>, sigma2: f64) -> Result<Self> {
        if covariates.rows() == 0 {
            return Err(Error::invalid("population must have at least one unit"));
        }
        if covariates.rows() != outcomes.len() {
            return Err(Error::invalid(format!(
                "covariates have {} rows but there are {} outcomes",
                covariates.rows(),
                outcomes.len()
            )));
        }
        if let Some(i) = outcomes.iter().position(|y| !y.is_finite()) {
            return Err(Error::invalid(format!("outcome of unit {i} is not finite")));
        }
        if covariates.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariates must be finite"));
        }
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid("sigma2 must be a nonnegative real"));
        }
        let medians = (0..covariates.cols()).map(|j| numeric::median(&covariates.column(j))).collect();
        Ok(Self { covariates, outcomes, sigma2, medians })
    }

    pub fn n_units(&self) -> usize {
        self.outcomes.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.cols()
    }

    pub fn covariates(&self) -> &Matrix {
        &self.covariates
    }

    pub fn x(&self, k: usize) -> &[f64] {
        self.covariates.row(k)
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Population median of covariate column `j`, fixed at construction.
    pub fn covariate_median(&self, j: usize) -> f64 {
        self.medians[j]
    }

    pub fn mean(&self) -> f64 {
        population_mean(self)
    }

    /// Same covariates, different outcomes.
    pub fn with_outcomes(&self, outcomes: Vec<f64>) -> Result<Self> {
        Self::new(self.covariates.clone(), outcomes, self.sigma2)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols.len() < 2 || cols[0] != "id" || cols[cols.len() - 1] != "y" {
            return Err(Error::csv(path, "header must be `id,x1,...,xp,y`"));
        }
        let p = cols.len() - 2;
        for (j, name) in cols[1..=p].iter().enumerate() {
            if *name != format!("x{}", j + 1) {
                return Err(Error::csv(path, format!("column {} should be `x{}`, found `{name}`", j + 2, j + 1)));
            }
        }
        let mut data = Vec::new();
        let mut y = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            for (j, field) in rec.iter().enumerate().skip(1) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::csv(path, format!("row {}: column `{}` is not a number", line + 2, cols[j])))?;
                if j <= p {
                    data.push(v);
                } else {
                    y.push(v);
                }
            }
        }
        let n = y.len();
        Self::new(Matrix::new(n, p, data)?, y, 0.0)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut header = vec!["id".to_string()];
        header.extend((1..=self.n_covariates()).map(|j| format!("x{j}")));
        header.push("y".into());
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for k in 0..self.n_units() {
            let mut rec = vec![k.to_string()];
            rec.extend(self.x(k).iter().map(|v| v.to_string()));
            rec.push(self.outcomes[k].to_string());
            w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn population_mean(pop: &FinitePopulation) -> f64 {
    numeric::mean(pop.outcomes())
}

/// Settings for the linear-Gaussian population generator.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub n_units: usize,
    pub coefficients: Vec<f64>,
    pub noise_sd: f64,
    pub seed: u64,
}

impl DgpConfig {
    pub fn new(n_units: usize, seed: u64) -> Self {
        Self { n_units, coefficients: DEFAULT_COEFFICIENTS.to_vec(), noise_sd: 2.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_units == 0 {
            return Err(Error::invalid("n_units must be positive"));
        }
        if self.coefficients.len() != 5 {
            return Err(Error::invalid(format!(
                "the generator has 4 covariates, so coefficients need 5 entries (got {})",
                self.coefficients.len()
            )));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::invalid("noise_sd must be a nonnegative real"));
        }
        Ok(())
    }
}

/// Linear predictor `b0 + b1 x1 + ...` for one covariate row.
pub fn linear_predictor(coefficients: &[f64], x: &[f64]) -> f64 {
    coefficients[0] + coefficients[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
}

/// Draws x1, x2, x3 ~ N(0,1), x4 ~ U(0,1) and y = linear predictor + N(0, noise_sd^2).
pub fn generate_population(config: &DgpConfig) -> Result<FinitePopulation> {
    config.validate()?;
    let mut rng = rng::stream(config.seed);
    let n = config.n_units;
    let mut x = Vec::with_capacity(4 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row = [
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.random::<f64>(),
        ];
        let eps: f64 = rng.sample(StandardNormal);
        y.push(linear_predictor(&config.coefficients, &row) + config.noise_sd * eps);
        x.extend_from_slice(&row);
    }
    FinitePopulation::new(Matrix::new(n, 4, x)?, y, config.noise_sd * config.noise_sd)
}
