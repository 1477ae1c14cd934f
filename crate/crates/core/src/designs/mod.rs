//! Sampling designs, realized samples, fold partitions and exhaustive
//! enumeration of design outcomes.

mod enumerate;
mod folds;

pub use enumerate::{enumerate_design, ENUMERATION_LIMIT};
pub use folds::{conditional_inclusion_probs, make_folds, realized_fold_sizes, FoldLevel, FoldPartition};

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    Srswor,
    Poisson,
    StratifiedSrswor,
    PoissonPps,
}

impl DesignKind {
    pub fn name(self) -> &'static str {
        match self {
            DesignKind::Srswor => "srswor",
            DesignKind::Poisson => "poisson",
            DesignKind::StratifiedSrswor => "stratified_srswor",
            DesignKind::PoissonPps => "poisson_pps",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Variant {
    Srswor { n: usize },
    Poisson,
    Stratified { labels: Vec<usize>, allocation: Vec<usize>, sizes: Vec<usize> },
    PoissonPps { expected_size: f64 },
}

/// A sampling design over units `0..N` with its first-order inclusion
/// probabilities cached.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    variant: Variant,
    pi: Vec<f64>,
}

impl DesignSpec {
    /// Simple random sampling without replacement of `n` out of `population_size`.
    pub fn srswor(population_size: usize, n: usize) -> Result<Self> {
        if n == 0 || n > population_size {
            return Err(Error::InvalidDesign(format!("SRSWOR needs 1 <= n <= N, got n={n}, N={population_size}")));
        }
        let p = n as f64 / population_size as f64;
        Ok(Self { variant: Variant::Srswor { n }, pi: vec![p; population_size] })
    }

    /// Independent Bernoulli selection with the given probabilities.
    pub fn poisson(pi: Vec<f64>) -> Result<Self> {
        check_probabilities(&pi)?;
        Ok(Self { variant: Variant::Poisson, pi })
    }

    /// SRSWOR within each stratum. `labels[k]` is the stratum of unit k in
    /// `0..allocation.len()`; `allocation[h]` is the stratum sample size.
    pub fn stratified(labels: Vec<usize>, allocation: Vec<usize>) -> Result<Self> {
        let h_count = allocation.len();
        if labels.is_empty() || h_count == 0 {
            return Err(Error::InvalidDesign("stratified design needs units and strata".into()));
        }
        let mut sizes = vec![0usize; h_count];
        for (k, &h) in labels.iter().enumerate() {
            if h >= h_count {
                return Err(Error::InvalidDesign(format!("unit {k} has stratum {h}, but only {h_count} strata")));
            }
            sizes[h] += 1;
        }
        for h in 0..h_count {
            if allocation[h] == 0 || allocation[h] > sizes[h] {
                return Err(Error::InvalidDesign(format!(
                    "stratum {h}: need 1 <= n_h <= N_h, got n_h={}, N_h={}",
                    allocation[h], sizes[h]
                )));
            }
        }
        let pi = labels.iter().map(|&h| allocation[h] as f64 / sizes[h] as f64).collect();
        Ok(Self { variant: Variant::Stratified { labels, allocation, sizes }, pi })
    }

    /// Poisson sampling with probabilities proportional to size,
    /// `pi_k = min(1, n z_k / sum z)`.
    pub fn poisson_pps(sizes: &[f64], expected_size: f64) -> Result<Self> {
        if sizes.is_empty() || sizes.iter().any(|z| !(*z > 0.0 && z.is_finite())) {
            return Err(Error::InvalidDesign("PPS sizes must be positive and finite".into()));
        }
        if !(expected_size > 0.0 && expected_size <= sizes.len() as f64) {
            return Err(Error::InvalidDesign(format!("expected sample size {expected_size} out of range")));
        }
        let total = crate::numeric::sum(sizes.iter().copied());
        let pi = sizes.iter().map(|z| (expected_size * z / total).min(1.0)).collect();
        Ok(Self { variant: Variant::PoissonPps { expected_size }, pi })
    }

    pub fn kind(&self) -> DesignKind {
        match self.variant {
            Variant::Srswor { .. } => DesignKind::Srswor,
            Variant::Poisson => DesignKind::Poisson,
            Variant::Stratified { .. } => DesignKind::StratifiedSrswor,
            Variant::PoissonPps { .. } => DesignKind::PoissonPps,
        }
    }

    pub fn population_size(&self) -> usize {
        self.pi.len()
    }

    /// Fixed sample size, if the design has one.
    pub fn sample_size(&self) -> Option<usize> {
        match &self.variant {
            Variant::Srswor { n } => Some(*n),
            Variant::Stratified { allocation, .. } => Some(allocation.iter().sum()),
            _ => None,
        }
    }

    pub fn expected_sample_size(&self) -> f64 {
        match &self.variant {
            Variant::PoissonPps { expected_size } => *expected_size,
            _ => crate::numeric::sum(self.pi.iter().copied()),
        }
    }

    pub fn inclusion_probs(&self) -> &[f64] {
        &self.pi
    }

    pub fn inclusion_prob(&self, k: usize) -> f64 {
        self.pi[k]
    }

    pub fn stratum_of(&self, k: usize) -> Option<usize> {
        match &self.variant {
            Variant::Stratified { labels, .. } => Some(labels[k]),
            _ => None,
        }
    }

    /// Second-order inclusion probability of two distinct units.
    pub fn joint_inclusion_prob(&self, k: usize, l: usize) -> Result<f64> {
        if k == l {
            return Err(Error::invalid("joint inclusion probability needs two distinct units"));
        }
        let big_n = self.population_size();
        if k >= big_n || l >= big_n {
            return Err(Error::invalid(format!("unit index out of range for N={big_n}")));
        }
        Ok(match &self.variant {
            Variant::Srswor { n } => pair_fraction(*n, big_n),
            Variant::Poisson | Variant::PoissonPps { .. } => self.pi[k] * self.pi[l],
            Variant::Stratified { labels, allocation, sizes } => {
                let (hk, hl) = (labels[k], labels[l]);
                if hk == hl {
                    pair_fraction(allocation[hk], sizes[hk])
                } else {
                    self.pi[k] * self.pi[l]
                }
            }
        })
    }

    /// A pair of distinct units that are never sampled together, if any.
    /// Unbiased variance estimation needs every `pi_kl > 0`.
    pub fn zero_joint_pair(&self) -> Option<(usize, usize)> {
        let big_n = self.population_size();
        match &self.variant {
            Variant::Srswor { n } => (*n < 2 && big_n > 1).then_some((0, 1)),
            Variant::Poisson | Variant::PoissonPps { .. } => None,
            Variant::Stratified { labels, allocation, sizes } => {
                let h = (0..allocation.len()).find(|&h| allocation[h] < 2 && sizes[h] > 1)?;
                let mut members = (0..big_n).filter(|&k| labels[k] == h);
                Some((members.next()?, members.next()?))
            }
        }
    }

    /// `Delta_kl / pi_kl`, with the diagonal `1 - pi_k`.
    pub fn delta_ratio(&self, k: usize, l: usize) -> Result<f64> {
        if k == l {
            return Ok(1.0 - self.pi[k]);
        }
        let joint = self.joint_inclusion_prob(k, l)?;
        if joint <= 0.0 {
            return Err(Error::ZeroJointInclusion { k, l });
        }
        Ok((joint - self.pi[k] * self.pi[l]) / joint)
    }

    /// Draws one sample. SRSWOR uses a partial Fisher-Yates shuffle, Poisson
    /// designs independent Bernoulli trials.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> SampleRealization {
        let big_n = self.population_size();
        let mut ids = match &self.variant {
            Variant::Srswor { n } => partial_shuffle((0..big_n).collect(), *n, rng),
            Variant::Poisson | Variant::PoissonPps { .. } => {
                (0..big_n).filter(|&k| self.pi[k] >= 1.0 || rng.random::<f64>() < self.pi[k]).collect()
            }
            Variant::Stratified { labels, allocation, .. } => {
                let mut members = vec![Vec::new(); allocation.len()];
                for (k, &h) in labels.iter().enumerate() {
                    members[h].push(k);
                }
                let mut ids = Vec::new();
                for (h, m) in members.into_iter().enumerate() {
                    ids.extend(partial_shuffle(m, allocation[h], rng));
                }
                ids
            }
        };
        ids.sort_unstable();
        self.realization(ids)
    }

    /// Realization for a given set of selected units (sorted, distinct).
    pub(crate) fn realization(&self, ids: Vec<usize>) -> SampleRealization {
        let mut indicators = vec![false; self.population_size()];
        for &k in &ids {
            indicators[k] = true;
        }
        let weights = ids.iter().map(|&k| 1.0 / self.pi[k]).collect();
        SampleRealization { population_size: self.population_size(), indicators, ids, weights }
    }
}

fn pair_fraction(n: usize, big_n: usize) -> f64 {
    if big_n < 2 {
        return 0.0;
    }
    (n as f64 * (n as f64 - 1.0)) / (big_n as f64 * (big_n as f64 - 1.0))
}

fn check_probabilities(pi: &[f64]) -> Result<()> {
    if pi.is_empty() {
        return Err(Error::InvalidDesign("inclusion probabilities are empty".into()));
    }
    for (k, &p) in pi.iter().enumerate() {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidDesign(format!("inclusion probability of unit {k} is {p}, outside (0, 1]")));
        }
    }
    Ok(())
}

fn partial_shuffle<R: Rng + ?Sized>(mut pool: Vec<usize>, n: usize, rng: &mut R) -> Vec<usize> {
    let len = pool.len();
    for i in 0..n {
        let j = rng.random_range(i..len);
        pool.swap(i, j);
    }
    pool.truncate(n);
    pool
}

/// One realized sample: indicators over U, the selected ids in increasing
/// order and their design weights `1 / pi_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRealization {
    population_size: usize,
    indicators: Vec<bool>,
    ids: Vec<usize>,
    weights: Vec<f64>,
}

impl SampleRealization {
    /// Builds a realization from explicit ids and weights.
    pub fn from_parts(population_size: usize, ids: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if ids.len() != weights.len() {
            return Err(Error::invalid("ids and weights differ in length"));
        }
        let mut indicators = vec![false; population_size];
        for (i, &k) in ids.iter().enumerate() {
            if k >= population_size {
                return Err(Error::invalid(format!("unit id {k} is outside a population of {population_size}")));
            }
            if indicators[k] {
                return Err(Error::invalid(format!("unit id {k} appears twice")));
            }
            if !(weights[i] > 0.0 && weights[i].is_finite()) {
                return Err(Error::invalid(format!("weight of unit {k} must be positive and finite")));
            }
            indicators[k] = true;
        }
        Ok(Self { population_size, indicators, ids, weights })
    }

    pub fn population_size(&self) -> usize {
        self.population_size
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn indicators(&self) -> &[bool] {
        &self.indicators
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indicators[k]
    }
}
