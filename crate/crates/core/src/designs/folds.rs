use rand::seq::SliceRandom;
use rand::Rng;

use super::{DesignKind, DesignSpec, SampleRealization};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldLevel {
    /// Folds over the population U.
    Population,
    /// Folds over the realized sample, indexed by sample position.
    Sample,
}

/// Balanced K-way split; `fold_of[i]` is in `0..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPartition {
    fold_of: Vec<usize>,
    k_folds: usize,
    level: FoldLevel,
}

impl FoldPartition {
    pub fn from_assignment(fold_of: Vec<usize>, k_folds: usize, level: FoldLevel) -> Result<Self> {
        if k_folds < 2 {
            return Err(Error::invalid(format!("need at least 2 folds, got {k_folds}")));
        }
        if let Some(i) = fold_of.iter().position(|&v| v >= k_folds) {
            return Err(Error::invalid(format!("unit {i} assigned to fold {} of {k_folds}", fold_of[i])));
        }
        Ok(Self { fold_of, k_folds, level })
    }

    pub fn fold(&self, i: usize) -> usize {
        self.fold_of[i]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn k_folds(&self) -> usize {
        self.k_folds
    }

    pub fn level(&self) -> FoldLevel {
        self.level
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k_folds];
        for &v in &self.fold_of {
            s[v] += 1;
        }
        s
    }

    pub fn members(&self, v: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == v).collect()
    }
}

/// Random balanced partition of `count` items into `k` folds: after a shuffle,
/// position `i` goes to fold `i mod k`.
pub fn make_folds<R: Rng + ?Sized>(count: usize, k: usize, level: FoldLevel, rng: &mut R) -> Result<FoldPartition> {
    if k < 2 || k > count {
        return Err(Error::invalid(format!("fold count {k} must lie in 2..={count}")));
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(rng);
    let mut fold_of = vec![0; count];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    FoldPartition::from_assignment(fold_of, k, level)
}

/// Number of sampled units in each population-level fold.
pub fn realized_fold_sizes(folds: &FoldPartition, sample: &SampleRealization) -> Vec<usize> {
    let mut s = vec![0; folds.k_folds()];
    for &k in sample.ids() {
        s[folds.fold(k)] += 1;
    }
    s
}

/// Inclusion probabilities conditional on the realized fold counts under
/// SRSWOR: `n_v / N_v` for every unit of fold v.
pub fn conditional_inclusion_probs(
    design: &DesignSpec,
    folds: &FoldPartition,
    realized_fold_sizes: &[usize],
) -> Result<Vec<f64>> {
    if design.kind() != DesignKind::Srswor {
        return Err(Error::UnsupportedDesign {
            design: design.kind().name(),
            what: "conditional inclusion probabilities",
        });
    }
    if folds.level() != FoldLevel::Population || folds.len() != design.population_size() {
        return Err(Error::invalid("conditional inclusion probabilities need population-level folds over U"));
    }
    if realized_fold_sizes.len() != folds.k_folds() {
        return Err(Error::invalid("one realized size per fold is required"));
    }
    let n = design.sample_size().unwrap_or(0);
    if realized_fold_sizes.iter().sum::<usize>() != n {
        return Err(Error::invalid(format!("realized fold sizes must sum to n={n}")));
    }
    let sizes = folds.sizes();
    for v in 0..folds.k_folds() {
        if realized_fold_sizes[v] > sizes[v] {
            return Err(Error::invalid(format!("fold {v} cannot hold {} sampled units", realized_fold_sizes[v])));
        }
    }
    Ok(folds.assignment().iter().map(|&v| realized_fold_sizes[v] as f64 / sizes[v] as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn balanced_sizes() {
        let mut r = rng::stream(3);
        let f = make_folds(10, 3, FoldLevel::Sample, &mut r).unwrap();
        let mut s = f.sizes();
        s.sort_unstable();
        assert_eq!(s, vec![3, 3, 4]);
        assert!(make_folds(3, 4, FoldLevel::Sample, &mut r).is_err());
        assert!(make_folds(3, 1, FoldLevel::Sample, &mut r).is_err());
    }
}
