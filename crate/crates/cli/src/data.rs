//! Reader for sample files: `id,weight,x1,...,xp,y[,respondent]`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use surveyml::designs::SampleRealization;
use surveyml::{DesignSpec, Matrix, ResponsePattern, SurveyData};

#[derive(Debug, Clone)]
pub struct SampleFile {
    pub ids: Vec<usize>,
    pub weights: Vec<f64>,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub respondent: Option<Vec<bool>>,
}

fn check_header(header: &csv::StringRecord) -> Result<(usize, bool)> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let expect = |i: usize, want: &str| -> Result<()> {
        match names.get(i) {
            Some(&got) if got == want => Ok(()),
            Some(&got) => bail!("column {}: expected `{want}`, found `{got}`", i + 1),
            None => bail!("column {}: expected `{want}`, header ends early", i + 1),
        }
    };
    expect(0, "id")?;
    expect(1, "weight")?;
    let has_r = names.last() == Some(&"respondent");
    let y_col = if has_r { names.len() - 2 } else { names.len() - 1 };
    if y_col < 3 {
        bail!("header needs at least one covariate column between `weight` and `y`");
    }
    for j in 2..y_col {
        expect(j, &format!("x{}", j - 1))?;
    }
    expect(y_col, "y")?;
    Ok((y_col - 2, has_r))
}

pub fn read_sample(path: &Path) -> Result<SampleFile> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let header = rdr.headers().with_context(|| format!("{}: cannot read header", path.display()))?.clone();
    let (p, has_r) = check_header(&header).with_context(|| format!("{}: malformed header", path.display()))?;
    let mut ids = Vec::new();
    let mut weights = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut resp = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let row = line + 2;
        let rec = rec.with_context(|| format!("{}: row {row}", path.display()))?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let num = |i: usize| -> Result<f64> {
            let s = field(i);
            s.parse::<f64>().ok().filter(|v| v.is_finite()).with_context(|| {
                format!("{}: row {row}, column `{}`: `{s}` is not a finite number", path.display(), &header[i])
            })
        };
        ids.push(
            field(0).parse::<usize>().with_context(|| {
                format!("{}: row {row}, column `id`: expected a nonnegative integer", path.display())
            })?,
        );
        weights.push(num(1)?);
        for j in 0..p {
            x.push(num(2 + j)?);
        }
        let r = if has_r {
            match field(p + 3) {
                "1" | "true" => true,
                "0" | "false" => false,
                other => bail!("{}: row {row}, column `respondent`: expected 0 or 1, found `{other}`", path.display()),
            }
        } else {
            true
        };
        let ys = field(p + 2);
        y.push(if !r && (ys.is_empty() || ys.eq_ignore_ascii_case("na")) { f64::NAN } else { num(p + 2)? });
        resp.push(r);
    }
    if ids.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    let n = ids.len();
    Ok(SampleFile { ids, weights, x: Matrix::new(n, p, x)?, y, respondent: has_r.then_some(resp) })
}

/// How the file's sample was drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileDesign {
    Srswor,
    Poisson,
}

impl SampleFile {
    /// Survey data and design for estimation. Sampled units become units
    /// `0..n` of a population of `population_size`; under Poisson sampling
    /// their inclusion probabilities are the inverse weights.
    pub fn survey(&self, design: FileDesign, population_size: Option<usize>) -> Result<(SurveyData, DesignSpec)> {
        let n = self.ids.len();
        let total: f64 = self.weights.iter().sum();
        let big_n = population_size.unwrap_or(total.round() as usize);
        if big_n < n {
            bail!("population size {big_n} is smaller than the sample size {n}");
        }
        let spec = match design {
            FileDesign::Srswor => DesignSpec::srswor(big_n, n)?,
            FileDesign::Poisson => {
                let mut pi = vec![n as f64 / big_n as f64; big_n];
                for (i, w) in self.weights.iter().enumerate() {
                    if *w < 1.0 {
                        bail!("row {}: weight {w} is below 1, so 1/weight is not a probability", i + 2);
                    }
                    pi[i] = 1.0 / w;
                }
                DesignSpec::poisson(pi)?
            }
        };
        let sample = SampleRealization::from_parts(big_n, (0..n).collect(), self.weights.clone())?;
        let responses = self.respondent.clone().map(ResponsePattern::new);
        Ok((SurveyData::new(sample, self.x.clone(), self.y.clone(), responses)?, spec))
    }
}
