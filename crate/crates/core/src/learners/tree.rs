//! Binary regression trees grown greedily on presorted columns.
//!
//! Each node owns the same index range in every per-feature sorted column;
//! after a split the range is stably partitioned so both children again see
//! sorted segments. Node statistics are pairs: `(sum w, sum w y)` for squared
//! error, `(sum g, sum h)` for second-order boosting.

use rand::Rng;

use crate::matrix::Matrix;

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    feature: Vec<u32>,
    threshold: Vec<f64>,
    left: Vec<u32>,
    right: Vec<u32>,
    value: Vec<f64>,
}

impl Tree {
    fn empty() -> Self {
        Tree { feature: Vec::new(), threshold: Vec::new(), left: Vec::new(), right: Vec::new(), value: Vec::new() }
    }

    fn push_leaf(&mut self, value: f64) -> usize {
        self.feature.push(LEAF);
        self.threshold.push(0.0);
        self.left.push(LEAF);
        self.right.push(LEAF);
        self.value.push(value);
        self.feature.len() - 1
    }

    pub fn single_leaf(value: f64) -> Self {
        let mut t = Tree::empty();
        t.push_leaf(value);
        t
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let f = self.feature[i];
            if f == LEAF {
                return self.value[i];
            }
            i = if x[f as usize] <= self.threshold[i] { self.left[i] } else { self.right[i] } as usize;
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.feature.iter().filter(|&&f| f == LEAF).count()
    }

    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum SplitRule {
    /// Weighted squared error; split accepted when the error reduction
    /// exceeds `min_gain`.
    Squared { min_gain: f64 },
    /// Second-order logistic boosting with L2 leaf penalty.
    Newton { lambda: f64, gamma: f64, min_child_weight: f64 },
}

impl SplitRule {
    #[inline]
    fn score(&self, s: [f64; 2]) -> f64 {
        match *self {
            SplitRule::Squared { .. } => {
                if s[0] > 0.0 {
                    s[1] * s[1] / s[0]
                } else {
                    0.0
                }
            }
            SplitRule::Newton { lambda, .. } => s[0] * s[0] / (s[1] + lambda),
        }
    }

    #[inline]
    fn child_ok(&self, s: [f64; 2]) -> bool {
        match *self {
            SplitRule::Squared { .. } => s[0] > 0.0,
            SplitRule::Newton { min_child_weight, .. } => s[1] >= min_child_weight,
        }
    }

    #[inline]
    fn gain(&self, l: [f64; 2], r: [f64; 2], parent: [f64; 2]) -> (f64, f64) {
        let (sl, sr) = (self.score(l), self.score(r));
        let raw = sl + sr - self.score(parent);
        match *self {
            SplitRule::Squared { .. } => (raw, sl + sr),
            SplitRule::Newton { .. } => (0.5 * raw, 0.5 * (sl + sr)),
        }
    }

    fn accepts(&self, gain: f64, magnitude: f64) -> bool {
        let floor = match *self {
            SplitRule::Squared { min_gain } => min_gain,
            SplitRule::Newton { gamma, .. } => gamma,
        };
        gain > floor && gain > 1e-12 * magnitude
    }

    fn leaf_value(&self, s: [f64; 2]) -> f64 {
        match *self {
            SplitRule::Squared { .. } => {
                if s[0] > 0.0 {
                    s[1] / s[0]
                } else {
                    0.0
                }
            }
            SplitRule::Newton { lambda, .. } => -s[0] / (s[1] + lambda),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum FeatureChoice {
    All,
    /// Only these features (per-tree column subsampling).
    Subset(Vec<usize>),
    /// `mtry` features drawn afresh at every node.
    PerNode(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct GrowParams {
    pub min_split: usize,
    pub min_leaf: usize,
    pub max_depth: usize,
    pub features: FeatureChoice,
    pub rule: SplitRule,
}

/// Per-feature sorted `(value, instance)` columns.
#[derive(Debug, Clone)]
pub(crate) struct SortedColumns {
    pub cols: Vec<Vec<(f64, u32)>>,
}

impl SortedColumns {
    /// Sorts the rows of `x` by each feature; instance `i` is row `i`.
    pub fn new(x: &Matrix) -> Self {
        let cols = (0..x.cols())
            .map(|j| {
                let mut c: Vec<(f64, u32)> = (0..x.rows()).map(|i| (x.get(i, j), i as u32)).collect();
                c.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                c
            })
            .collect();
        SortedColumns { cols }
    }

    /// Columns over the rows with a positive count, renumbered `0..` in row
    /// order. Returns the columns and the instance-to-row map.
    pub fn restrict(&self, counts: &[u32]) -> (SortedColumns, Vec<u32>) {
        let mut inst_of = vec![u32::MAX; counts.len()];
        let mut inst_row = Vec::new();
        for (row, &c) in counts.iter().enumerate() {
            if c > 0 {
                inst_of[row] = inst_row.len() as u32;
                inst_row.push(row as u32);
            }
        }
        let cols = self
            .cols
            .iter()
            .map(|col| {
                col.iter()
                    .filter(|&&(_, row)| counts[row as usize] > 0)
                    .map(|&(v, row)| (v, inst_of[row as usize]))
                    .collect()
            })
            .collect();
        (SortedColumns { cols }, inst_row)
    }
}

/// Grows one tree. `stats[i]` are the statistics of instance `i`, already
/// scaled by its multiplicity `mult[i]` (the number of resampled rows it
/// stands for, which is what the size limits count). `columns` must cover
/// exactly the instances `0..stats.len()`.
pub(crate) fn grow<R: Rng + ?Sized>(
    mut columns: SortedColumns,
    stats: &[[f64; 2]],
    mult: &[u32],
    params: &GrowParams,
    rng: &mut R,
) -> Tree {
    let n_inst = stats.len();
    let p = columns.cols.len();
    let mut tree = Tree::empty();
    if n_inst == 0 {
        tree.push_leaf(0.0);
        return tree;
    }
    let mut goes_left = vec![false; n_inst];
    let mut scratch: Vec<(f64, u32)> = vec![(0.0, 0); n_inst];
    let mut feature_pool: Vec<usize> = (0..p).collect();
    let root = tree.push_leaf(0.0);
    let mut stack = vec![(root, 0usize, n_inst, 0usize)];

    while let Some((node, lo, hi, depth)) = stack.pop() {
        let mut total = [0.0; 2];
        let mut count = 0usize;
        for &(_, i) in &columns.cols[0][lo..hi] {
            let s = stats[i as usize];
            total[0] += s[0];
            total[1] += s[1];
            count += mult[i as usize] as usize;
        }
        tree.value[node] = params.rule.leaf_value(total);
        if count < params.min_split || count < 2 * params.min_leaf || depth >= params.max_depth {
            continue;
        }

        let candidates: &[usize] = match &params.features {
            FeatureChoice::All => &feature_pool,
            FeatureChoice::Subset(f) => f,
            FeatureChoice::PerNode(mtry) if *mtry >= p => &feature_pool,
            FeatureChoice::PerNode(mtry) => {
                for i in 0..*mtry {
                    let j = rng.random_range(i..p);
                    feature_pool.swap(i, j);
                }
                feature_pool[..*mtry].sort_unstable();
                &feature_pool[..*mtry]
            }
        };

        // (gain, magnitude, feature, instances going left, threshold)
        let mut best: Option<(f64, f64, usize, usize, f64)> = None;
        for &f in candidates {
            let col = &columns.cols[f][lo..hi];
            let mut left = [0.0; 2];
            let mut n_left = 0usize;
            for pos in 0..col.len() - 1 {
                let (v, i) = col[pos];
                let s = stats[i as usize];
                left[0] += s[0];
                left[1] += s[1];
                n_left += mult[i as usize] as usize;
                let next = col[pos + 1].0;
                if v == next || n_left < params.min_leaf || count - n_left < params.min_leaf {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                if !params.rule.child_ok(left) || !params.rule.child_ok(right) {
                    continue;
                }
                let (gain, mag) = params.rule.gain(left, right, total);
                if best.is_none_or(|b| gain > b.0) {
                    let mut thr = v + 0.5 * (next - v);
                    if thr >= next {
                        thr = v;
                    }
                    best = Some((gain, mag, f, pos + 1, thr));
                }
            }
        }

        let Some((gain, mag, f, n_left, thr)) = best else { continue };
        if !params.rule.accepts(gain, mag) {
            continue;
        }
        for (pos, &(_, i)) in columns.cols[f][lo..hi].iter().enumerate() {
            goes_left[i as usize] = pos < n_left;
        }
        for col in columns.cols.iter_mut() {
            let seg = &mut col[lo..hi];
            // Branch-free stable partition: every element is written to both
            // places and only the matching cursor advances.
            let (mut w, mut sc) = (0usize, 0usize);
            for r in 0..seg.len() {
                let e = seg[r];
                let left = goes_left[e.1 as usize] as usize;
                seg[w] = e;
                scratch[sc] = e;
                w += left;
                sc += 1 - left;
            }
            seg[w..].copy_from_slice(&scratch[..sc]);
        }
        let l = tree.push_leaf(0.0);
        let r = tree.push_leaf(0.0);
        tree.feature[node] = f as u32;
        tree.threshold[node] = thr;
        tree.left[node] = l as u32;
        tree.right[node] = r as u32;
        let mid = lo + n_left;
        stack.push((r, mid, hi, depth + 1));
        stack.push((l, lo, mid, depth + 1));
    }
    tree
}
