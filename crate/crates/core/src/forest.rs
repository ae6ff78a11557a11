//! Random-forest classifier: bootstrap resamples, Gini splits over a random
//! feature subset per node, majority vote.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Task};
use crate::error::{Error, Result};
use crate::nn::{argmax, ClassificationMetrics};
use crate::seed::{self, Stream};

pub const DEFAULT_ESTIMATORS: usize = 100;

/// Node of a tree stored in an arena; children are indices into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf { class_counts: Vec<usize> },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    fn leaf_counts(&self, x: &[f64]) -> &[usize] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { class_counts } => return class_counts,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Majority class of the leaf reached by `x`.
    pub fn predict(&self, x: &[f64]) -> usize {
        let counts = self.leaf_counts(x);
        let mut best = 0;
        for (c, &n) in counts.iter().enumerate() {
            if n > counts[best] {
                best = c;
            }
        }
        best
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub n_estimators: usize,
    pub seed: u64,
    pub n_features: usize,
    pub n_classes: usize,
}

/// Size-weighted Gini impurity of the two children.
fn split_impurity(total: &[usize], left: &[usize], nl: usize, n: usize) -> f64 {
    let nr = n - nl;
    let (mut sl, mut sr) = (0.0, 0.0);
    for (&t, &l) in total.iter().zip(left) {
        sl += (l * l) as f64;
        sr += ((t - l) * (t - l)) as f64;
    }
    (nl as f64 - sl / nl as f64 + nr as f64 - sr / nr as f64) / n as f64
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    max_features: usize,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    /// Lowest weighted child impurity over features examined in random order
    /// until `max_features` non-constant ones have been tried.
    fn find_split(&self, idx: &[usize], rng: &mut Stream) -> Option<BestSplit> {
        let d = self.x[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(rng);
        let total = self.counts(idx);
        let n = idx.len();
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
        let mut best: Option<BestSplit> = None;
        let mut tried = 0;
        for f in features {
            if tried == self.max_features {
                break;
            }
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (self.x[i][f], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[n - 1].0 {
                continue;
            }
            tried += 1;
            let mut left = vec![0; self.n_classes];
            for k in 0..n - 1 {
                left[pairs[k].1] += 1;
                if pairs[k].0 == pairs[k + 1].0 {
                    continue;
                }
                let nl = k + 1;
                let score = split_impurity(&total, &left, nl, n);
                if best.as_ref().is_none_or(|b| score < b.score) {
                    let mut threshold = 0.5 * (pairs[k].0 + pairs[k + 1].0);
                    if threshold >= pairs[k + 1].0 {
                        threshold = pairs[k].0;
                    }
                    best = Some(BestSplit { score, feature: f, threshold });
                }
            }
        }
        best
    }

    fn build(&mut self, idx: Vec<usize>, rng: &mut Stream) {
        // Each work item is (sample indices, arena slot to fill).
        self.nodes.push(TreeNode::Leaf { class_counts: Vec::new() });
        let mut work = vec![(idx, 0usize)];
        while let Some((idx, slot)) = work.pop() {
            let counts = self.counts(&idx);
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let split = if pure || idx.len() < 2 { None } else { self.find_split(&idx, rng) };
            let Some(split) = split else {
                self.nodes[slot] = TreeNode::Leaf { class_counts: counts };
                continue;
            };
            let (l, r): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| self.x[i][split.feature] <= split.threshold);
            let left = self.nodes.len();
            self.nodes.push(TreeNode::Leaf { class_counts: Vec::new() });
            self.nodes.push(TreeNode::Leaf { class_counts: Vec::new() });
            self.nodes[slot] =
                TreeNode::Split { feature: split.feature, threshold: split.threshold, left, right: left + 1 };
            work.push((r, left + 1));
            work.push((l, left));
        }
    }
}

/// Fits a forest on raw feature rows and labels in `0..n_classes`.
pub fn fit_rows(x: &[Vec<f64>], y: &[usize], n_classes: usize, n_estimators: usize, seed: u64) -> Result<Forest> {
    if n_estimators == 0 {
        return Err(Error::invalid("n_estimators must be >= 1"));
    }
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::invalid(format!("{} feature rows for {} labels", x.len(), y.len())));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("feature rows must share a positive length"));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::invalid(format!("label {bad} outside 0..{n_classes}")));
    }
    let max_features = (d as f64).sqrt().ceil() as usize;
    let n = x.len();
    let mut trees = Vec::with_capacity(n_estimators);
    for t in 0..n_estimators {
        let mut rng = seed::stream(seed::derive(seed, t as u64));
        let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut b = Builder { x, y, n_classes, max_features, nodes: Vec::new() };
        b.build(sample, &mut rng);
        trees.push(Tree { nodes: b.nodes });
    }
    Ok(Forest { trees, n_estimators, seed, n_features: d, n_classes })
}

pub fn fit(ds: &Dataset, n_estimators: usize, seed: u64) -> Result<Forest> {
    if ds.task != Task::Classification {
        return Err(Error::TaskMismatch("forest supports classification only".into()));
    }
    let x: Vec<Vec<f64>> = ds.samples.iter().map(|s| s.features.clone()).collect();
    let y: Vec<usize> = ds.samples.iter().map(|s| s.class().expect("classification sample")).collect();
    fit_rows(&x, &y, ds.n_classes, n_estimators, seed)
}

impl Forest {
    pub fn votes(&self, x: &[f64]) -> Result<Vec<usize>> {
        if x.len() != self.n_features {
            return Err(Error::ShapeMismatch { expected: vec![self.n_features], got: vec![x.len()] });
        }
        let mut votes = vec![0; self.n_classes];
        for t in &self.trees {
            votes[t.predict(x)] += 1;
        }
        Ok(votes)
    }

    /// Majority vote; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let votes: Vec<f64> = self.votes(x)?.into_iter().map(|v| v as f64).collect();
        Ok(argmax(&votes))
    }

    pub fn evaluate(&self, ds: &Dataset) -> Result<ClassificationMetrics> {
        if ds.task != Task::Classification || ds.n_classes != self.n_classes {
            return Err(Error::TaskMismatch(format!(
                "forest predicts {} classes, dataset is {} with {} classes",
                self.n_classes, ds.task, ds.n_classes
            )));
        }
        let mut confusion = vec![vec![0; self.n_classes]; self.n_classes];
        let mut correct = 0;
        for s in &ds.samples {
            let truth = s.class().expect("classification sample");
            let pred = self.predict(&s.features)?;
            confusion[truth][pred] += 1;
            correct += usize::from(truth == pred);
        }
        let accuracy = if ds.is_empty() { 0.0 } else { correct as f64 / ds.len() as f64 };
        Ok(ClassificationMetrics { accuracy, confusion })
    }
}
