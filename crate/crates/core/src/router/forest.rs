use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FeatureSpace;
use crate::blueprint::EngineId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Bootstrap sample size as a fraction of the training set.
    pub bootstrap_fraction: f64,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 25, max_depth: 6, bootstrap_fraction: 1.0, seed: 0x5eed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
    Leaf { ranking: [EngineId; 3] },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Leaf ranking for `x` and the number of split nodes visited.
    fn eval(&self, x: &[f64]) -> ([EngineId; 3], usize) {
        let mut node = self;
        let mut visited = 0;
        loop {
            match node {
                TreeNode::Leaf { ranking } => return (*ranking, visited),
                TreeNode::Split { feature, threshold, left, right } => {
                    visited += 1;
                    node = if x.get(*feature).copied().unwrap_or(0.0) <= *threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingForest {
    pub space: FeatureSpace,
    pub max_depth: usize,
    pub trees: Vec<TreeNode>,
}

impl RoutingForest {
    pub fn fit(space: FeatureSpace, xs: &[Vec<f64>], labels: &[[EngineId; 3]], cfg: &ForestConfig) -> Self {
        assert_eq!(xs.len(), labels.len());
        assert!(!xs.is_empty(), "forest needs training data");
        let n_trees = cfg.n_trees.max(1);
        let n = xs.len();
        let sample = ((n as f64 * cfg.bootstrap_fraction).round() as usize).max(1);
        let mut trees = Vec::with_capacity(n_trees);
        for t in 0..n_trees {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(t as u64));
            let idx: Vec<usize> = (0..sample).map(|_| rng.gen_range(0..n)).collect();
            trees.push(grow(xs, labels, idx, 0, cfg.max_depth));
        }
        Self { space, max_depth: cfg.max_depth, trees }
    }

    /// Borda aggregation of the leaf rankings, ties broken by engine order.
    pub fn rank(&self, x: &[f64]) -> [EngineId; 3] {
        self.rank_counted(x).0
    }

    /// Ranking plus the number of split nodes touched.
    pub fn rank_counted(&self, x: &[f64]) -> ([EngineId; 3], usize) {
        let mut score = [0usize; 3];
        let mut visited = 0;
        for tree in &self.trees {
            let (ranking, v) = tree.eval(x);
            visited += v;
            for (pos, e) in ranking.iter().enumerate() {
                score[e.index()] += 2 - pos;
            }
        }
        let mut r = EngineId::ALL;
        r.sort_by(|a, b| score[b.index()].cmp(&score[a.index()]).then(a.cmp(b)));
        (r, visited)
    }
}

fn majority_ranking(labels: &[[EngineId; 3]], idx: &[usize]) -> [EngineId; 3] {
    let mut counts: BTreeMap<[EngineId; 3], usize> = BTreeMap::new();
    for &i in idx {
        *counts.entry(labels[i]).or_default() += 1;
    }
    // BTreeMap order makes the tie-break deterministic.
    let mut best = (EngineId::ALL, 0);
    for (r, c) in counts {
        if c > best.1 {
            best = (r, c);
        }
    }
    best.0
}

fn gini(counts: &[usize; 3], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|c| (*c as f64 / n).powi(2)).sum::<f64>()
}

fn grow(xs: &[Vec<f64>], labels: &[[EngineId; 3]], idx: Vec<usize>, depth: usize, max_depth: usize) -> TreeNode {
    let leaf = |idx: &[usize]| TreeNode::Leaf { ranking: majority_ranking(labels, idx) };
    let mut counts = [0usize; 3];
    for &i in &idx {
        counts[labels[i][0].index()] += 1;
    }
    let parent = gini(&counts, idx.len());
    if depth >= max_depth || idx.len() < 2 || parent == 0.0 {
        return leaf(&idx);
    }
    let width = xs[idx[0]].len();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = idx.clone();
    for f in 0..width {
        order.sort_by(|a, b| xs[*a][f].total_cmp(&xs[*b][f]));
        let mut left = [0usize; 3];
        for k in 0..order.len() - 1 {
            left[labels[order[k]][0].index()] += 1;
            let (lo, hi) = (xs[order[k]][f], xs[order[k + 1]][f]);
            if lo == hi {
                continue;
            }
            let nl = k + 1;
            let nr = order.len() - nl;
            let right = [counts[0] - left[0], counts[1] - left[1], counts[2] - left[2]];
            let imp = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / order.len() as f64;
            if best.map_or(true, |(b, _, _)| imp < b - 1e-12) {
                best = Some((imp, f, lo + (hi - lo) / 2.0));
            }
        }
    }
    match best {
        Some((imp, feature, threshold)) if imp < parent - 1e-12 => {
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|i| xs[**i][feature] <= threshold);
            TreeNode::Split {
                feature,
                threshold,
                left: Box::new(grow(xs, labels, l, depth + 1, max_depth)),
                right: Box::new(grow(xs, labels, r, depth + 1, max_depth)),
            }
        }
        _ => leaf(&idx),
    }
}
