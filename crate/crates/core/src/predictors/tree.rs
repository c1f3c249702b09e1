//! Histogram regression trees, random forests and gradient boosting.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HyperParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
        samples: u32,
    },
    Split {
        feature: u32,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        /// Reduction in summed squared error from this split.
        gain: f64,
        samples: u32,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    node = if row[*feature as usize] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn add_gains(&self, out: &mut [f64]) {
        if let TreeNode::Split { feature, gain, left, right, .. } = self {
            out[*feature as usize] += gain;
            left.add_gains(out);
            right.add_gains(out);
        }
    }
}

/// Summed split gain per feature over all trees.
pub fn split_gains(trees: &[TreeNode], n_features: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_features];
    for t in trees {
        t.add_gains(&mut out);
    }
    out
}

/// Features quantized to at most `max_bins` ordered bins. Bin `b` holds
/// values in `(thresholds[b−1], thresholds[b]]`.
#[derive(Debug, Clone)]
pub struct Binned {
    pub thresholds: Vec<Vec<f64>>,
    /// Column-major bin codes.
    pub codes: Vec<Vec<u8>>,
}

impl Binned {
    pub fn new(x: &[Vec<f64>], max_bins: usize) -> Self {
        let p = x.first().map_or(0, Vec::len);
        let max_bins = max_bins.clamp(2, 256);
        let mut thresholds = Vec::with_capacity(p);
        let mut codes = Vec::with_capacity(p);
        for j in 0..p {
            let mut vals: Vec<f64> = x.iter().map(|r| r[j]).collect();
            vals.sort_by(f64::total_cmp);
            let mut distinct = vals.clone();
            distinct.dedup();
            let cuts: Vec<f64> = if distinct.len() <= max_bins {
                distinct.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect()
            } else {
                // Cut between order statistics at evenly spaced ranks.
                let n = vals.len();
                let mut c: Vec<f64> = (1..max_bins)
                    .filter_map(|b| {
                        let i = b * n / max_bins;
                        let lo = vals[i - 1];
                        let hi = vals[i];
                        (lo < hi).then(|| lo + (hi - lo) / 2.0)
                    })
                    .collect();
                c.dedup();
                c
            };
            codes.push(x.iter().map(|r| cuts.partition_point(|&t| t < r[j]) as u8).collect());
            thresholds.push(cuts);
        }
        Self { thresholds, codes }
    }

    pub fn n_features(&self) -> usize {
        self.codes.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features examined per split.
    pub max_features: usize,
}

struct Grower<'a> {
    binned: &'a Binned,
    target: &'a [f64],
    params: TreeParams,
    leaf_scale: f64,
    features: Vec<usize>,
    sums: Vec<f64>,
    counts: Vec<u32>,
}

impl Grower<'_> {
    fn leaf(&self, rows: &[u32]) -> TreeNode {
        let s: f64 = rows.iter().map(|&i| self.target[i as usize]).sum();
        TreeNode::Leaf { value: self.leaf_scale * s / rows.len() as f64, samples: rows.len() as u32 }
    }

    fn grow(&mut self, rows: &mut [u32], depth: usize, rng: &mut ChaCha8Rng) -> TreeNode {
        let n = rows.len();
        if depth >= self.params.max_depth || n < 2 * self.params.min_samples_leaf.max(1) {
            return self.leaf(rows);
        }
        let total: f64 = rows.iter().map(|&i| self.target[i as usize]).sum();
        let parent = total * total / n as f64;
        let p = self.binned.n_features();
        let k = self.params.max_features.clamp(1, p);
        if k < p {
            self.features.shuffle(rng);
        }
        let min_leaf = self.params.min_samples_leaf.max(1) as u32;
        let mut best: Option<(usize, usize, f64)> = None;
        // Past the first k draws, keep looking only until a split is found.
        for idx in 0..p {
            if idx >= k && best.is_some() {
                break;
            }
            let f = self.features[idx];
            let nb = self.binned.thresholds[f].len() + 1;
            if nb < 2 {
                continue;
            }
            let codes = &self.binned.codes[f];
            self.sums[..nb].fill(0.0);
            self.counts[..nb].fill(0);
            for &i in rows.iter() {
                let b = codes[i as usize] as usize;
                self.sums[b] += self.target[i as usize];
                self.counts[b] += 1;
            }
            let (mut sl, mut cl) = (0.0, 0u32);
            for b in 0..nb - 1 {
                sl += self.sums[b];
                cl += self.counts[b];
                let cr = n as u32 - cl;
                if cl < min_leaf {
                    continue;
                }
                if cr < min_leaf {
                    break;
                }
                if self.counts[b] == 0 {
                    continue;
                }
                let sr = total - sl;
                let gain = sl * sl / cl as f64 + sr * sr / cr as f64 - parent;
                if gain > 1e-12 && best.is_none_or(|(_, _, g)| gain > g) {
                    best = Some((f, b, gain));
                }
            }
        }
        let Some((f, b, gain)) = best else {
            return self.leaf(rows);
        };
        let codes = &self.binned.codes[f];
        let mut split = 0;
        for i in 0..n {
            if (codes[rows[i] as usize] as usize) <= b {
                rows.swap(i, split);
                split += 1;
            }
        }
        let (l, r) = rows.split_at_mut(split);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        TreeNode::Split {
            feature: f as u32,
            threshold: self.binned.thresholds[f][b],
            gain,
            samples: n as u32,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

/// Grows one variance-reduction tree on `rows` (duplicates allowed). Leaf
/// values are row means of `target` times `leaf_scale`.
pub fn grow_tree(
    binned: &Binned,
    target: &[f64],
    rows: &mut [u32],
    params: TreeParams,
    leaf_scale: f64,
    rng: &mut ChaCha8Rng,
) -> TreeNode {
    let mut g = Grower {
        binned,
        target,
        params,
        leaf_scale,
        features: (0..binned.n_features()).collect(),
        sums: vec![0.0; 256],
        counts: vec![0; 256],
    };
    if rows.is_empty() {
        return TreeNode::Leaf { value: 0.0, samples: 0 };
    }
    g.grow(rows, 0, rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features examined per split.
    pub max_features: f64,
    pub max_bins: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 300, max_depth: 12, min_samples_leaf: 5, max_features: 1.0 / 3.0, max_bins: 64 }
    }
}

impl ForestParams {
    pub fn from_hp(hp: &HyperParams) -> Self {
        let d = Self::default();
        Self {
            n_trees: hp.get_or("n_trees", d.n_trees as f64) as usize,
            max_depth: hp.get_or("max_depth", d.max_depth as f64) as usize,
            min_samples_leaf: hp.get_or("min_samples_leaf", d.min_samples_leaf as f64) as usize,
            max_features: hp.get_or("max_features", d.max_features),
            max_bins: hp.get_or("max_bins", d.max_bins as f64) as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<TreeNode>,
}

impl Forest {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Bootstrap-aggregated trees. Tree `t` draws from stream `t` of the seed.
pub fn fit_forest(x: &[Vec<f64>], y: &[f64], params: &ForestParams, seed: u64) -> Forest {
    let binned = Binned::new(x, params.max_bins);
    let p = binned.n_features();
    let n = y.len();
    let tp = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: ((p as f64 * params.max_features).round() as usize).max(1),
    };
    let trees = (0..params.n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let mut rows: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
            grow_tree(&binned, y, &mut rows, tp, 1.0, &mut rng)
        })
        .collect();
    Forest { trees }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub min_samples_leaf: usize,
    pub max_bins: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self { n_trees: 300, max_depth: 3, learning_rate: 0.05, subsample: 0.8, min_samples_leaf: 5, max_bins: 64 }
    }
}

impl BoostParams {
    pub fn from_hp(hp: &HyperParams) -> Self {
        let d = Self::default();
        Self {
            n_trees: hp.get_or("n_trees", d.n_trees as f64) as usize,
            max_depth: hp.get_or("max_depth", d.max_depth as f64) as usize,
            learning_rate: hp.get_or("learning_rate", d.learning_rate),
            subsample: hp.get_or("subsample", d.subsample),
            min_samples_leaf: hp.get_or("min_samples_leaf", d.min_samples_leaf as f64) as usize,
            max_bins: hp.get_or("max_bins", d.max_bins as f64) as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boost {
    /// Training mean of the target.
    pub base: f64,
    pub learning_rate: f64,
    /// Leaf values already include the learning rate.
    pub trees: Vec<TreeNode>,
}

impl Boost {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.base + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }
}

/// Squared-error boosting with row subsampling. Returns the model and the
/// mean squared training error after each round (index 0 = base score).
pub fn fit_boost(x: &[Vec<f64>], y: &[f64], params: &BoostParams, seed: u64) -> (Boost, Vec<f64>) {
    let binned = Binned::new(x, params.max_bins);
    let n = y.len();
    let base = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base; n];
    let mse = |pred: &[f64]| pred.iter().zip(y).map(|(p, t)| (t - p) * (t - p)).sum::<f64>() / n as f64;
    let mut losses = vec![mse(&pred)];
    let tp = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: binned.n_features(),
    };
    let take = ((n as f64 * params.subsample).round() as usize).clamp(1, n);
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut all: Vec<u32> = (0..n as u32).collect();
    let mut resid = vec![0.0; n];
    for t in 0..params.n_trees {
        for i in 0..n {
            resid[i] = y[i] - pred[i];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let mut rows: Vec<u32> = if take < n {
            let mut r = all.partial_shuffle(&mut rng, take).0.to_vec();
            r.sort_unstable();
            r
        } else {
            all.clone()
        };
        let tree = grow_tree(&binned, &resid, &mut rows, tp, params.learning_rate, &mut rng);
        for i in 0..n {
            pred[i] += tree.predict(&x[i]);
        }
        losses.push(mse(&pred));
        trees.push(tree);
        all.sort_unstable();
    }
    (Boost { base, learning_rate: params.learning_rate, trees }, losses)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stump_matches_hand_trace() {
        // x = 1 2 3 4 5 6, y = 1 1 1 5 5 9. Candidate cut after x=3 gives
        // SSE reduction 9/3 + 361/3 − 484/6 = 42.666…; cut after x=5:
        // 13²/5 + 81 − 484/6 = 34.133…; after x=4: 8²/4+14²/2 − 484/6 = 33.33…
        let x: Vec<Vec<f64>> = (1..=6).map(|v| vec![v as f64]).collect();
        let y = [1.0, 1.0, 1.0, 5.0, 5.0, 9.0];
        let b = Binned::new(&x, 64);
        let mut rows: Vec<u32> = (0..6).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tp = TreeParams { max_depth: 1, min_samples_leaf: 1, max_features: 1 };
        let t = grow_tree(&b, &y, &mut rows, tp, 1.0, &mut rng);
        match &t {
            TreeNode::Split { feature, threshold, gain, left, right, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 3.5);
                assert!((gain - (3.0 + 361.0 / 3.0 - 484.0 / 6.0)).abs() < 1e-12);
                assert_eq!(**left, TreeNode::Leaf { value: 1.0, samples: 3 });
                assert_eq!(**right, TreeNode::Leaf { value: 19.0 / 3.0, samples: 3 });
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(t.predict(&[3.5]), 1.0);
        assert_eq!(t.predict(&[3.6]), 19.0 / 3.0);
    }

    #[test]
    fn binning_respects_order() {
        let x: Vec<Vec<f64>> = (0..1000).map(|i| vec![((i * 37) % 1000) as f64]).collect();
        let b = Binned::new(&x, 16);
        assert!(b.thresholds[0].len() <= 15);
        for i in 0..1000 {
            for k in 0..1000 {
                if x[i][0] < x[k][0] {
                    assert!(b.codes[0][i] <= b.codes[0][k]);
                }
            }
            if i > 20 {
                break;
            }
        }
    }

    #[test]
    fn zero_round_boost_is_mean() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        let p = BoostParams { n_trees: 0, ..Default::default() };
        let (m, losses) = fit_boost(&x, &y, &p, 1);
        assert_eq!(m.predict_row(&[3.0]), 28.5);
        assert_eq!(losses.len(), 1);
    }

    #[test]
    fn boost_loss_non_increasing_without_subsampling() {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![(i % 17) as f64, (i % 5) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| (r[0] - 8.0).abs() + 2.0 * r[1]).collect();
        let p = BoostParams { n_trees: 60, subsample: 1.0, min_samples_leaf: 1, ..Default::default() };
        let (_, losses) = fit_boost(&x, &y, &p, 3);
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} → {}", w[0], w[1]);
        }
        assert!(losses.last().unwrap() < &(losses[0] * 0.2));
    }

    #[test]
    fn forest_is_deterministic_and_fits_signal() {
        let x: Vec<Vec<f64>> = (0..300).map(|i| vec![(i % 23) as f64, ((i * 7) % 11) as f64, (i % 3) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 * r[0] + r[2]).collect();
        let p = ForestParams { n_trees: 20, ..Default::default() };
        let a = fit_forest(&x, &y, &p, 5);
        let b = fit_forest(&x, &y, &p, 5);
        assert_eq!(a, b);
        let c = fit_forest(&x, &y, &p, 6);
        assert_ne!(a, c);
        let err: f64 = x.iter().zip(&y).map(|(r, t)| (a.predict_row(r) - t).abs()).sum::<f64>() / 300.0;
        assert!(err < 5.0, "{err}");
        let g = split_gains(&a.trees, 3);
        assert!(g[0] > g[1] && g[0] > g[2]);
    }
}
