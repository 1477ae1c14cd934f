use super::{DesignSpec, SampleRealization, Variant};
use crate::error::{Error, Result};

/// Largest number of outcomes the enumerator will visit.
pub const ENUMERATION_LIMIT: f64 = 1_048_576.0;

/// Every possible sample with its probability under the design.
pub fn enumerate_design(design: &DesignSpec) -> Result<Vec<(SampleRealization, f64)>> {
    let big_n = design.population_size();
    match &design.variant {
        Variant::Srswor { n } => {
            let count = binomial(big_n, *n);
            check_limit(count)?;
            let p = 1.0 / count;
            Ok(combinations(&(0..big_n).collect::<Vec<_>>(), *n)
                .into_iter()
                .map(|ids| (design.realization(ids), p))
                .collect())
        }
        Variant::Poisson | Variant::PoissonPps { .. } => {
            if big_n > 20 {
                return Err(Error::EnumerationLimit { outcomes: 2f64.powi(big_n as i32), limit: ENUMERATION_LIMIT });
            }
            let pi = design.inclusion_probs();
            let mut out = Vec::with_capacity(1 << big_n);
            for mask in 0u32..(1u32 << big_n) {
                let mut p = 1.0;
                let mut ids = Vec::new();
                for (k, &pk) in pi.iter().enumerate() {
                    if mask >> k & 1 == 1 {
                        p *= pk;
                        ids.push(k);
                    } else {
                        p *= 1.0 - pk;
                    }
                }
                if p > 0.0 {
                    out.push((design.realization(ids), p));
                }
            }
            Ok(out)
        }
        Variant::Stratified { labels, allocation, sizes } => {
            if big_n > 20 {
                return Err(Error::EnumerationLimit { outcomes: 2f64.powi(big_n as i32), limit: ENUMERATION_LIMIT });
            }
            let count: f64 = (0..allocation.len()).map(|h| binomial(sizes[h], allocation[h])).product();
            check_limit(count)?;
            let per_stratum: Vec<Vec<Vec<usize>>> = (0..allocation.len())
                .map(|h| {
                    let members: Vec<usize> = (0..big_n).filter(|&k| labels[k] == h).collect();
                    combinations(&members, allocation[h])
                })
                .collect();
            let p = 1.0 / count;
            let mut out = Vec::new();
            let mut idx = vec![0usize; per_stratum.len()];
            loop {
                let mut ids: Vec<usize> =
                    idx.iter().enumerate().flat_map(|(h, &i)| per_stratum[h][i].iter().copied()).collect();
                ids.sort_unstable();
                out.push((design.realization(ids), p));
                let mut h = 0;
                loop {
                    if h == idx.len() {
                        return Ok(out);
                    }
                    idx[h] += 1;
                    if idx[h] < per_stratum[h].len() {
                        break;
                    }
                    idx[h] = 0;
                    h += 1;
                }
            }
        }
    }
}

fn check_limit(count: f64) -> Result<()> {
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationLimit { outcomes: count, limit: ENUMERATION_LIMIT });
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

/// All k-subsets of `items`, in lexicographic order of positions.
fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
