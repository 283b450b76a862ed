//! Weighted CART classification trees and random forests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Weighted impurity decrease, as a fraction of the root weight.
        impurity_decrease: f64,
    },
    /// Class weight fractions.
    Leaf { value: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Features tried per split; `None` tries all.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 12,
            max_features: None,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub n_classes: usize,
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts
        .iter()
        .map(|c| (c / total) * (c / total))
        .sum::<f64>()
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    w: &'a [f64],
    n_classes: usize,
    params: TreeParams,
    root_weight: f64,
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
    pos: usize,
}

impl Builder<'_> {
    fn class_weights(&self, idx: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.n_classes];
        for &i in idx {
            c[self.y[i]] += self.w[i];
        }
        c
    }

    fn leaf(&mut self, counts: &[f64], total: f64) -> usize {
        let value = counts
            .iter()
            .map(|c| if total > 0.0 { c / total } else { 0.0 })
            .collect();
        self.nodes.push(Node::Leaf { value });
        self.nodes.len() - 1
    }

    fn build(&mut self, mut idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.class_weights(&idx);
        let total: f64 = counts.iter().sum();
        let impurity = gini(&counts, total);
        if depth >= self.params.max_depth
            || idx.len() < self.params.min_samples_split
            || impurity <= 0.0
        {
            return self.leaf(&counts, total);
        }
        let n_features = self.x[0].len();
        let mtry = self
            .params
            .max_features
            .unwrap_or(n_features)
            .clamp(1, n_features);
        let mut order: Vec<usize> = (0..n_features).collect();
        order.shuffle(&mut self.rng);

        let mut best: Option<BestSplit> = None;
        let mut visited = 0;
        for &f in &order {
            if visited >= mtry {
                break;
            }
            idx.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let first = self.x[idx[0]][f];
            let last = self.x[idx[idx.len() - 1]][f];
            if first == last {
                // constant features do not count towards mtry
                continue;
            }
            visited += 1;
            let mut left = vec![0.0; self.n_classes];
            let mut wl = 0.0;
            for pos in 0..idx.len() - 1 {
                let i = idx[pos];
                left[self.y[i]] += self.w[i];
                wl += self.w[i];
                let (v, next) = (self.x[i][f], self.x[idx[pos + 1]][f]);
                if v == next {
                    continue;
                }
                let right: Vec<f64> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                let wr = total - wl;
                let score = wl * gini(&left, wl) + wr * gini(&right, wr);
                if best.as_ref().is_none_or(|b| score < b.score - 1e-12) {
                    let mut threshold = v + (next - v) / 2.0;
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        score,
                        pos,
                    });
                }
            }
        }
        let Some(split) = best else {
            return self.leaf(&counts, total);
        };
        let f = split.feature;
        idx.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
        let right_idx = idx.split_off(split.pos + 1);
        let decrease = (total * impurity - split.score) / self.root_weight;
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { value: Vec::new() });
        let left = self.build(idx, depth + 1);
        let right = self.build(right_idx, depth + 1);
        self.nodes[me] = Node::Split {
            feature: f,
            threshold: split.threshold,
            left,
            right,
            impurity_decrease: decrease.max(0.0),
        };
        me
    }
}

impl DecisionTree {
    /// Fits on rows with positive weight. Labels are in `0..n_classes`.
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        w: &[f64],
        n_classes: usize,
        params: TreeParams,
        seed: u64,
    ) -> Self {
        let idx: Vec<usize> = (0..x.len()).filter(|&i| w[i] > 0.0).collect();
        let n_features = x.first().map_or(0, Vec::len);
        let root_weight: f64 = idx.iter().map(|&i| w[i]).sum();
        let mut b = Builder {
            x,
            y,
            w,
            n_classes,
            params,
            root_weight: if root_weight > 0.0 { root_weight } else { 1.0 },
            nodes: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        if idx.is_empty() || n_features == 0 {
            let counts = b.class_weights(&idx);
            let total = counts.iter().sum();
            b.leaf(&counts, total);
        } else {
            b.build(idx, 0);
        }
        DecisionTree {
            nodes: b.nodes,
            n_features,
            n_classes,
        }
    }

    pub fn predict_proba(&self, row: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    at = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Most probable class, ties to the lowest class.
    pub fn predict(&self, row: &[f64]) -> usize {
        argmax(self.predict_proba(row))
    }

    /// Impurity decrease per feature, normalized to sum to 1 (all zero for a
    /// single leaf).
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for n in &self.nodes {
            if let Node::Split {
                feature,
                impurity_decrease,
                ..
            } = n
            {
                imp[*feature] += impurity_decrease;
            }
        }
        normalize_sum(&mut imp);
        imp
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &DecisionTree, at: usize) -> usize {
            match &t.nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }
}

pub(crate) fn normalize_sum(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            tree: TreeParams::default(),
            bootstrap: true,
        }
    }
}

impl ForestParams {
    /// Defaults with `max(1, floor(sqrt(F)))` features per split.
    pub fn sqrt_features(n_features: usize) -> Self {
        let mut p = ForestParams::default();
        p.tree.max_features = Some(((n_features as f64).sqrt() as usize).max(1));
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub n_classes: usize,
}

impl RandomForest {
    /// Bootstrap draws multiply the sample weights by their multiplicity.
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        w: &[f64],
        n_classes: usize,
        params: ForestParams,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = x.len();
        let trees = (0..params.n_trees)
            .map(|_| {
                let tree_seed: u64 = rng.random();
                let weights = if params.bootstrap && n > 0 {
                    let mut mult = vec![0.0; n];
                    for _ in 0..n {
                        mult[rng.random_range(0..n)] += 1.0;
                    }
                    w.iter().zip(&mult).map(|(a, b)| a * b).collect()
                } else {
                    w.to_vec()
                };
                DecisionTree::fit(x, y, &weights, n_classes, params.tree, tree_seed)
            })
            .collect();
        RandomForest { trees, n_classes }
    }

    /// Mean of the trees' class probabilities.
    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (acc, v) in p.iter_mut().zip(t.predict_proba(row)) {
                *acc += v;
            }
        }
        let k = self.trees.len().max(1) as f64;
        p.iter_mut().for_each(|v| *v /= k);
        p
    }

    /// Mean of the per-tree normalized importances, renormalized.
    pub fn feature_importances(&self) -> Vec<f64> {
        let f = self.trees.first().map_or(0, |t| t.n_features);
        let mut imp = vec![0.0; f];
        for t in &self.trees {
            for (acc, v) in imp.iter_mut().zip(t.feature_importances()) {
                *acc += v;
            }
        }
        normalize_sum(&mut imp);
        imp
    }
}
