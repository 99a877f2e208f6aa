//! Random forest of CART trees.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForestMode {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features tried per split; `None` uses the mode default.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            mtry: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

pub fn default_mtry(mode: ForestMode, p: usize) -> usize {
    let m = match mode {
        ForestMode::Classification => (p as f64).sqrt().floor() as usize,
        ForestMode::Regression => p.div_ceil(3),
    };
    m.clamp(1, p.max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Regression: mean target. Classification: class index.
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub mode: ForestMode,
    /// Sorted class labels (classification only).
    pub classes: Vec<usize>,
    pub trees: Vec<Tree>,
}

impl RandomForest {
    /// Mean of the tree outputs (regression).
    pub fn predict_value(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }

    /// Majority vote; ties go to the smallest label.
    pub fn predict_class(&self, row: &[f64]) -> usize {
        let mut votes = vec![0usize; self.classes.len()];
        for t in &self.trees {
            votes[t.predict(row) as usize] += 1;
        }
        let mut best = 0;
        for (k, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = k;
            }
        }
        self.classes[best]
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    /// Regression target, or class index as f64.
    y: &'a [f64],
    mode: ForestMode,
    n_classes: usize,
    min_leaf: usize,
    max_depth: Option<usize>,
    mtry: usize,
    nodes: Vec<Node>,
}

struct Split {
    feature: usize,
    threshold: f64,
    /// Impurity score of the children (lower is better).
    score: f64,
    n_left: usize,
}

impl Builder<'_> {
    fn leaf_value(&self, idx: &[usize]) -> f64 {
        match self.mode {
            ForestMode::Regression => idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64,
            ForestMode::Classification => {
                let mut counts = vec![0usize; self.n_classes];
                for &i in idx {
                    counts[self.y[i] as usize] += 1;
                }
                let mut best = 0;
                for (k, &c) in counts.iter().enumerate() {
                    if c > counts[best] {
                        best = k;
                    }
                }
                best as f64
            }
        }
    }

    fn is_pure(&self, idx: &[usize]) -> bool {
        let first = self.y[idx[0]];
        idx.iter().all(|&i| self.y[i] == first)
    }

    fn best_split_on(&self, idx: &mut [usize], feature: usize) -> Option<Split> {
        let x = self.x;
        idx.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]).then(a.cmp(&b)));
        let n = idx.len();
        let min_leaf = self.min_leaf.max(1);
        let mut best: Option<Split> = None;
        let mut consider = |i: usize, score: f64| {
            // Split between positions i-1 and i.
            let lo = x[idx[i - 1]][feature];
            let hi = x[idx[i]][feature];
            if lo == hi {
                return;
            }
            if best.as_ref().is_none_or(|b| score < b.score) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Split {
                    feature,
                    threshold,
                    score,
                    n_left: i,
                });
            }
        };
        match self.mode {
            ForestMode::Regression => {
                let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
                let total_sq: f64 = idx.iter().map(|&i| self.y[i] * self.y[i]).sum();
                let mut s = 0.0;
                let mut sq = 0.0;
                for i in 1..n {
                    let v = self.y[idx[i - 1]];
                    s += v;
                    sq += v * v;
                    if i < min_leaf || n - i < min_leaf {
                        continue;
                    }
                    let (nl, nr) = (i as f64, (n - i) as f64);
                    let sse_l = sq - s * s / nl;
                    let sse_r = (total_sq - sq) - (total - s) * (total - s) / nr;
                    consider(i, sse_l + sse_r);
                }
            }
            ForestMode::Classification => {
                let mut right = vec![0usize; self.n_classes];
                for &i in idx.iter() {
                    right[self.y[i] as usize] += 1;
                }
                let mut left = vec![0usize; self.n_classes];
                for i in 1..n {
                    let c = self.y[idx[i - 1]] as usize;
                    left[c] += 1;
                    right[c] -= 1;
                    if i < min_leaf || n - i < min_leaf {
                        continue;
                    }
                    let gini = |counts: &[usize], m: usize| {
                        let m = m as f64;
                        m - counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / m
                    };
                    // Weighted Gini times n.
                    consider(i, gini(&left, i) + gini(&right, n - i));
                }
            }
        }
        best
    }

    fn build(&mut self, idx: &mut [usize], depth: usize, rng: &mut impl Rng) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(self.leaf_value(idx)));
        let depth_ok = self.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || idx.len() < 2 * self.min_leaf.max(1) || self.is_pure(idx) {
            return id;
        }

        let p = self.x[0].len();
        let mut features: Vec<usize> = (0..p).collect();
        features.shuffle(rng);
        let mut best: Option<Split> = None;
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            if let Some(s) = self.best_split_on(idx, f) {
                if best.as_ref().is_none_or(|b| s.score < b.score) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best else {
            return id;
        };

        let x = self.x;
        idx.sort_by(|&a, &b| {
            x[a][split.feature]
                .total_cmp(&x[b][split.feature])
                .then(a.cmp(&b))
        });
        debug_assert!(split.n_left > 0 && split.n_left < idx.len());
        let (l, r) = idx.split_at_mut(split.n_left);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

fn check_design(x: &[Vec<f64>], n_targets: usize) -> Result<usize> {
    if x.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: x.len() });
    }
    if x.len() != n_targets {
        return Err(Error::InvalidConfig(format!(
            "{} rows but {} targets",
            x.len(),
            n_targets
        )));
    }
    let p = x[0].len();
    if p == 0 || x.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidConfig("ragged or empty design matrix".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("design contains non-finite values".into()));
    }
    Ok(p)
}

fn grow(
    x: &[Vec<f64>],
    y: &[f64],
    mode: ForestMode,
    n_classes: usize,
    params: &ForestParams,
) -> Result<Vec<Tree>> {
    let p = x[0].len();
    let mtry = params.mtry.unwrap_or_else(|| default_mtry(mode, p)).clamp(1, p);
    if params.n_trees == 0 {
        return Err(Error::InvalidConfig("n_trees must be >= 1".into()));
    }
    let n = x.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from(derive_seed(params.seed, t as u64));
            let mut idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut b = Builder {
                x,
                y,
                mode,
                n_classes,
                min_leaf: params.min_leaf,
                max_depth: params.max_depth,
                mtry,
                nodes: Vec::new(),
            };
            b.build(&mut idx, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(trees)
}

pub fn train_forest_regressor(x: &[Vec<f64>], y: &[f64], params: &ForestParams) -> Result<RandomForest> {
    check_design(x, y.len())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("targets contain non-finite values".into()));
    }
    Ok(RandomForest {
        mode: ForestMode::Regression,
        classes: Vec::new(),
        trees: grow(x, y, ForestMode::Regression, 0, params)?,
    })
}

pub fn train_forest_classifier(
    x: &[Vec<f64>],
    labels: &[usize],
    params: &ForestParams,
) -> Result<RandomForest> {
    check_design(x, labels.len())?;
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let y: Vec<f64> = labels
        .iter()
        .map(|l| classes.binary_search(l).unwrap() as f64)
        .collect();
    Ok(RandomForest {
        mode: ForestMode::Classification,
        trees: grow(x, &y, ForestMode::Classification, classes.len(), params)?,
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mtry_defaults() {
        assert_eq!(default_mtry(ForestMode::Classification, 75), 8);
        assert_eq!(default_mtry(ForestMode::Regression, 75), 25);
        assert_eq!(default_mtry(ForestMode::Regression, 2), 1);
        assert_eq!(default_mtry(ForestMode::Classification, 1), 1);
    }

    #[test]
    fn constant_targets() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let f = train_forest_regressor(&x, &[2.5; 20], &ForestParams { n_trees: 5, ..Default::default() })
            .unwrap();
        for row in &x {
            assert_eq!(f.predict_value(row), 2.5);
        }
        assert_eq!(f.predict_value(&[100.0, -3.0]), 2.5);
    }

    #[test]
    fn single_tree_without_bootstrap_interpolates() {
        let x: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![((i * 37) % 50) as f64 * 0.1, ((i * 11) % 7) as f64])
            .collect();
        let y: Vec<f64> = (0..50).map(|i| ((i * i) % 13) as f64).collect();
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            ..Default::default()
        };
        let f = train_forest_regressor(&x, &y, &params).unwrap();
        for (row, t) in x.iter().zip(&y) {
            assert_eq!(f.predict_value(row), *t);
        }
    }

    #[test]
    fn depth_limit() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let params = ForestParams {
            n_trees: 1,
            max_depth: Some(3),
            bootstrap: false,
            ..Default::default()
        };
        let f = train_forest_regressor(&x, &y, &params).unwrap();
        assert_eq!(f.trees[0].depth(), 3);
    }

    #[test]
    fn classifier_labels_round_trip() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..30).map(|i| if i < 15 { 3 } else { 8 }).collect();
        let f = train_forest_classifier(&x, &y, &ForestParams { n_trees: 10, seed: 4, ..Default::default() })
            .unwrap();
        assert_eq!(f.classes, vec![3, 8]);
        assert_eq!(f.predict_class(&[0.0]), 3);
        assert_eq!(f.predict_class(&[29.0]), 8);
    }

    #[test]
    fn vote_tie_goes_to_smaller_label() {
        let forest = RandomForest {
            mode: ForestMode::Classification,
            classes: vec![2, 5],
            trees: vec![
                Tree { nodes: vec![Node::Leaf(1.0)] },
                Tree { nodes: vec![Node::Leaf(0.0)] },
            ],
        };
        assert_eq!(forest.predict_class(&[0.0]), 2);
    }

    #[test]
    fn same_seed_same_forest() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos()]).collect();
        let y: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).sin()).collect();
        let params = ForestParams { n_trees: 8, seed: 21, ..Default::default() };
        assert_eq!(
            train_forest_regressor(&x, &y, &params).unwrap(),
            train_forest_regressor(&x, &y, &params).unwrap()
        );
    }
}
