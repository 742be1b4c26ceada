use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binning::BinnedMatrix;
use crate::data::DataView;
use crate::error::{ForestError, Result};

const LEAF: u32 = u32::MAX;
/// Nodes smaller than `SORT_FACTOR * n_bins` find splits by sorting instead of
/// by histogram.
const SORT_FACTOR: usize = 8;

/// Number of candidate features drawn at each node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MaxFeatures {
    All,
    Sqrt,
    Fraction(f64),
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => (n_features as f64).sqrt().round() as usize,
            MaxFeatures::Fraction(f) => (f * n_features as f64).ceil() as usize,
            MaxFeatures::Count(c) => c,
        };
        k.clamp(1, n_features)
    }
}

/// `Best` is the CART variance-reduction split; `Random` draws a random
/// feature and a random cut inside the node's range (completely-random trees).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Splitter {
    Best,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub splitter: Splitter,
    /// L2 penalty on leaf values: a leaf predicts `sum / (count + leaf_l2)`.
    pub leaf_l2: f64,
    pub max_bins: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
            splitter: Splitter::Best,
            leaf_l2: 0.0,
            max_bins: 1024,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_leaf == 0 {
            return Err(ForestError::Param("min_samples_leaf must be >= 1".into()));
        }
        if self.max_depth == Some(0) {
            return Err(ForestError::Param("max_depth must be >= 1".into()));
        }
        if !(self.leaf_l2 >= 0.0) {
            return Err(ForestError::Param("leaf_l2 must be >= 0".into()));
        }
        if let MaxFeatures::Fraction(f) = self.max_features {
            if !(f > 0.0 && f <= 1.0) {
                return Err(ForestError::Param("max_features fraction must be in (0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Flat tree node. Leaves carry `feature == u32::MAX`; splits send
/// `x[feature] <= threshold` to `left`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub value: f64,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    n_features: usize,
    nodes: Vec<Node>,
}

impl RegressionTree {
    /// Fits a single tree on every row of `data`.
    pub fn fit(data: &DataView<'_>, params: &TreeParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let binned = BinnedMatrix::new(data, params.max_bins);
        let rows: Vec<u32> = (0..data.n_rows() as u32).collect();
        Ok(Self::fit_binned(&binned, data.y, rows, params, seed))
    }

    /// Fits on a (possibly repeated) subset of rows of an already binned matrix.
    pub(crate) fn fit_binned(
        binned: &BinnedMatrix,
        targets: &[f64],
        mut rows: Vec<u32>,
        params: &TreeParams,
        seed: u64,
    ) -> Self {
        let max_bins = (0..binned.n_features())
            .map(|f| binned.n_bins(f))
            .max()
            .unwrap_or(1);
        let mut g = Grower {
            binned,
            targets,
            params,
            mtry: params.max_features.resolve(binned.n_features()),
            rng: ChaCha8Rng::seed_from_u64(seed),
            nodes: Vec::new(),
            hist_sum: vec![0.0; max_bins],
            hist_cnt: vec![0; max_bins],
            feature_order: (0..binned.n_features()).collect(),
            pairs: Vec::new(),
        };
        g.grow(&mut rows, 0);
        Self {
            n_features: binned.n_features(),
            nodes: g.nodes,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            let n = &nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + walk(nodes, n.left as usize).max(walk(nodes, n.right as usize))
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    #[inline]
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.feature == LEAF {
                return n.value;
            }
            i = if row[n.feature as usize] <= n.threshold {
                n.left as usize
            } else {
                n.right as usize
            };
        }
    }
}

impl crate::Regressor for RegressionTree {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        RegressionTree::predict_row(self, row)
    }
}

struct Split {
    feature: usize,
    bin: u16,
    gain: f64,
}

struct Grower<'a> {
    binned: &'a BinnedMatrix,
    targets: &'a [f64],
    params: &'a TreeParams,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    hist_sum: Vec<f64>,
    hist_cnt: Vec<u32>,
    feature_order: Vec<usize>,
    pairs: Vec<(u16, f64)>,
}

impl Grower<'_> {
    fn grow(&mut self, rows: &mut [u32], depth: usize) -> u32 {
        let n = rows.len();
        let (mut sum, mut sq) = (0.0, 0.0);
        for &r in rows.iter() {
            let y = self.targets[r as usize];
            sum += y;
            sq += y * y;
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            feature: LEAF,
            threshold: 0.0,
            left: LEAF,
            right: LEAF,
            value: sum / (n as f64 + self.params.leaf_l2),
        });

        let min_leaf = self.params.min_samples_leaf;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        let impurity = sq - sum * sum / n as f64;
        let pure = impurity <= 1e-12 * sq.max(f64::MIN_POSITIVE);
        if depth_capped || n < 2 * min_leaf || pure {
            return id;
        }

        let split = match self.params.splitter {
            Splitter::Best => self.best_split(rows, sum, n),
            Splitter::Random => self.random_split(rows),
        };
        let Some(split) = split else {
            return id;
        };

        let mid = partition(rows, |r| self.binned.bin(split.feature, r as usize) <= split.bin);
        let (left_rows, right_rows) = rows.split_at_mut(mid);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        let node = &mut self.nodes[id as usize];
        node.feature = split.feature as u32;
        node.threshold = self.binned.threshold(split.feature, split.bin);
        node.left = left;
        node.right = right;
        id
    }

    fn best_split(&mut self, rows: &[u32], sum: f64, n: usize) -> Option<Split> {
        let l2 = self.params.leaf_l2;
        let min_leaf = self.params.min_samples_leaf;
        let parent = sum * sum / (n as f64 + l2);
        let n_features = self.binned.n_features();
        if self.mtry < n_features {
            let (head, _) = self.feature_order.partial_shuffle(&mut self.rng, self.mtry);
            head.sort_unstable();
        }
        let mut best: Option<Split> = None;
        // Gains below this are floating-point noise around a pure node.
        let floor = 1e-12 * parent.abs().max(f64::MIN_POSITIVE);
        for k in 0..self.mtry {
            let f = if self.mtry < n_features { self.feature_order[k] } else { k };
            let nb = self.binned.n_bins(f);
            if nb < 2 {
                continue;
            }
            let mut consider = |bin: u16, sl: f64, nl: usize| {
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    return;
                }
                let sr = sum - sl;
                let gain = sl * sl / (nl as f64 + l2) + sr * sr / (nr as f64 + l2) - parent;
                if gain > floor && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Split { feature: f, bin, gain });
                }
            };
            if n < SORT_FACTOR * nb {
                self.pairs.clear();
                self.pairs
                    .extend(rows.iter().map(|&r| (self.binned.bin(f, r as usize), self.targets[r as usize])));
                self.pairs.sort_unstable_by_key(|p| p.0);
                let (mut sl, mut nl) = (0.0, 0usize);
                let mut i = 0;
                while i < self.pairs.len() {
                    let b = self.pairs[i].0;
                    while i < self.pairs.len() && self.pairs[i].0 == b {
                        sl += self.pairs[i].1;
                        nl += 1;
                        i += 1;
                    }
                    if i < self.pairs.len() {
                        consider(b, sl, nl);
                    }
                }
            } else {
                self.hist_sum[..nb].fill(0.0);
                self.hist_cnt[..nb].fill(0);
                for &r in rows {
                    let b = self.binned.bin(f, r as usize) as usize;
                    self.hist_sum[b] += self.targets[r as usize];
                    self.hist_cnt[b] += 1;
                }
                let (mut sl, mut nl) = (0.0, 0usize);
                for b in 0..nb - 1 {
                    if self.hist_cnt[b] == 0 {
                        continue;
                    }
                    sl += self.hist_sum[b];
                    nl += self.hist_cnt[b] as usize;
                    if nl == n {
                        break;
                    }
                    consider(b as u16, sl, nl);
                }
            }
        }
        best
    }

    fn random_split(&mut self, rows: &[u32]) -> Option<Split> {
        let min_leaf = self.params.min_samples_leaf;
        self.feature_order.shuffle(&mut self.rng);
        for k in 0..self.feature_order.len() {
            let f = self.feature_order[k];
            let (mut lo, mut hi) = (u16::MAX, 0u16);
            for &r in rows {
                let b = self.binned.bin(f, r as usize);
                lo = lo.min(b);
                hi = hi.max(b);
            }
            if hi <= lo {
                continue;
            }
            for _ in 0..4 {
                let cut = self.rng.gen_range(lo..hi);
                let nl = rows
                    .iter()
                    .filter(|&&r| self.binned.bin(f, r as usize) <= cut)
                    .count();
                if nl >= min_leaf && rows.len() - nl >= min_leaf {
                    return Some(Split { feature: f, bin: cut, gain: 0.0 });
                }
            }
        }
        None
    }
}

/// In-place partition; returns the count of rows satisfying `pred`, which are
/// moved to the front.
fn partition(rows: &mut [u32], pred: impl Fn(u32) -> bool) -> usize {
    let mut i = 0;
    let mut j = rows.len();
    while i < j {
        if pred(rows[i]) {
            i += 1;
        } else {
            j -= 1;
            rows.swap(i, j);
        }
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n: usize, f: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let y = x.iter().map(|&v| f(v)).collect();
        (x, y)
    }

    #[test]
    fn constant_target_is_a_stump() {
        let (x, _) = data(40, |_| 0.0);
        let y = vec![3.5; 40];
        let d = DataView::new(&x, 1, &y).unwrap();
        let t = RegressionTree::fit(&d, &TreeParams::default(), 1).unwrap();
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(t.predict_row(&[0.3]), 3.5);
        assert_eq!(t.predict_row(&[-100.0]), 3.5);
    }

    #[test]
    fn fully_grown_tree_memorises_distinct_points() {
        let (x, y) = data(200, |v| (6.0 * v).sin());
        let d = DataView::new(&x, 1, &y).unwrap();
        let t = RegressionTree::fit(&d, &TreeParams::default(), 1).unwrap();
        for i in 0..200 {
            assert_eq!(t.predict_row(&x[i..i + 1]), y[i]);
        }
    }

    #[test]
    fn step_function_is_split_at_the_jump() {
        let (x, y) = data(100, |v| if v <= 0.42 { -1.0 } else { 2.0 });
        let d = DataView::new(&x, 1, &y).unwrap();
        let p = TreeParams { max_depth: Some(1), ..Default::default() };
        let t = RegressionTree::fit(&d, &p, 0).unwrap();
        assert_eq!(t.depth(), 1);
        assert!((t.nodes()[0].threshold - 0.42).abs() < 0.011);
        assert_eq!(t.predict_row(&[0.1]), -1.0);
        assert_eq!(t.predict_row(&[0.9]), 2.0);
    }

    #[test]
    fn min_leaf_is_respected() {
        let (x, y) = data(64, |v| v * v);
        let d = DataView::new(&x, 1, &y).unwrap();
        for splitter in [Splitter::Best, Splitter::Random] {
            let p = TreeParams { min_samples_leaf: 5, splitter, ..Default::default() };
            let t = RegressionTree::fit(&d, &p, 9).unwrap();
            let mut counts = vec![0usize; t.nodes().len()];
            for i in 0..64 {
                let mut k = 0;
                while !t.nodes()[k].is_leaf() {
                    let nd = &t.nodes()[k];
                    k = if x[i] <= nd.threshold { nd.left } else { nd.right } as usize;
                }
                counts[k] += 1;
            }
            for (k, nd) in t.nodes().iter().enumerate() {
                if nd.is_leaf() {
                    assert!(counts[k] >= 5, "{splitter:?} leaf {k} holds {}", counts[k]);
                }
            }
        }
    }

    #[test]
    fn histogram_and_sort_paths_agree() {
        // 3000 rows with 1024 bins crosses the histogram threshold at the root only.
        let n = 3000;
        let x: Vec<f64> = (0..n).map(|i| ((i * 7919) % n) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (v / 300.0).floor()).collect();
        let d = DataView::new(&x, 1, &y).unwrap();
        let t = RegressionTree::fit(&d, &TreeParams { max_bins: 64, ..Default::default() }, 0).unwrap();
        let rmse = (x.iter().zip(&y).map(|(a, b)| (t.predict_row(&[*a]) - b).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(rmse < 0.3, "rmse {rmse}");
    }
}
