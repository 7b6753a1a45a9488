//! The `Predictor` contract and a from-scratch CART / random-forest
//! learner.
//!
//! Everything that answers label queries — the original model, lying
//! scaffolds, surrogates, mitigation pipelines — implements [`Predictor`].
//! Trees split greedily on weighted Gini impurity with midpoint
//! thresholds; forests average tree probabilities over bootstrap
//! resamples, with per-tree RNG streams derived from the config seed so
//! training is reproducible.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Black-box contract: a trained model answering one row at a time.
///
/// `predict` is 1 exactly when `predict_proba >= 0.5`, except that a tie
/// at exactly 0.5 resolves to the unfavorable label 0 so fairness scores
/// stay reproducible.
pub trait Predictor: Send + Sync {
    /// Probability of the favorable label 1.
    fn predict_proba(&self, row: &[f64]) -> f64;

    /// Hard label under the fixed 0.5 threshold.
    fn predict(&self, row: &[f64]) -> u8 {
        u8::from(self.predict_proba(row) > 0.5)
    }

    /// Number of features the model expects.
    fn n_features(&self) -> usize;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn predict_proba(&self, row: &[f64]) -> f64 {
        (**self).predict_proba(row)
    }
    fn predict(&self, row: &[f64]) -> u8 {
        (**self).predict(row)
    }
    fn n_features(&self) -> usize {
        (**self).n_features()
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn predict_proba(&self, row: &[f64]) -> f64 {
        (**self).predict_proba(row)
    }
    fn predict(&self, row: &[f64]) -> u8 {
        (**self).predict(row)
    }
    fn n_features(&self) -> usize {
        (**self).n_features()
    }
}

/// Counts every label query that passes through to the wrapped model, so
/// query-budget claims are asserted rather than assumed.
pub struct CountingPredictor<'a> {
    inner: &'a dyn Predictor,
    calls: AtomicU64,
}

impl<'a> CountingPredictor<'a> {
    pub fn new(inner: &'a dyn Predictor) -> Self {
        CountingPredictor {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl Predictor for CountingPredictor<'_> {
    fn predict_proba(&self, row: &[f64]) -> f64 {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.predict_proba(row)
    }

    fn n_features(&self) -> usize {
        self.inner.n_features()
    }
}

/// Random-forest hyperparameters. The learner itself is fixed; these
/// defaults follow common random-forest practice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestConfig {
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    /// `None` = unlimited depth.
    #[serde(default)]
    pub max_depth: Option<usize>,
    /// Minimum rows on each side of a split.
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
    /// Features considered per node; `None` = ceil(sqrt(F)).
    #[serde(default)]
    pub features_per_split: Option<usize>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_trees() -> usize {
    50
}
fn default_min_leaf() -> usize {
    2
}
fn default_bootstrap() -> bool {
    true
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 50,
            max_depth: None,
            min_leaf: 2,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn effective_features(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features)
    }
}

#[derive(Debug, Clone)]
enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        proba: f64,
    },
}

/// A single CART-style classification tree.
#[derive(Debug, Clone)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
    n_features: usize,
}

impl Predictor for DecisionTree {
    fn predict_proba(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { proba } => return *proba,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }

    fn n_features(&self) -> usize {
        self.n_features
    }
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [u8],
    cfg: &'a ForestConfig,
    n_candidates: usize,
    nodes: Vec<TreeNode>,
}

impl TreeBuilder<'_> {
    fn build<R: Rng>(&mut self, indices: Vec<usize>, depth: usize, rng: &mut R) -> usize {
        let positives: usize = indices.iter().map(|&i| self.labels[i] as usize).sum();
        let proba = positives as f64 / indices.len() as f64;
        let pure = positives == 0 || positives == indices.len();
        let depth_ok = self.cfg.max_depth.is_none_or(|d| depth < d);

        if !pure && depth_ok {
            if let Some((feature, threshold)) = self.best_split(&indices, rng) {
                let (mut l, mut r) = (Vec::new(), Vec::new());
                for &i in &indices {
                    if self.rows[i][feature] < threshold {
                        l.push(i);
                    } else {
                        r.push(i);
                    }
                }
                let placeholder = self.nodes.len();
                self.nodes.push(TreeNode::Leaf { proba });
                let left = self.build(l, depth + 1, rng);
                let right = self.build(r, depth + 1, rng);
                self.nodes[placeholder] = TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                return placeholder;
            }
        }
        self.nodes.push(TreeNode::Leaf { proba });
        self.nodes.len() - 1
    }

    /// Minimum-weighted-Gini split over a random feature subset, with
    /// thresholds at midpoints between consecutive distinct values. Splits
    /// leaving fewer than `min_leaf` rows on either side are skipped.
    fn best_split<R: Rng>(&self, indices: &[usize], rng: &mut R) -> Option<(usize, f64)> {
        let n_features = self.rows[0].len();
        let mut candidates: Vec<usize> = (0..n_features).collect();
        if self.n_candidates < n_features {
            // Partial Fisher-Yates: the first n_candidates entries are a
            // uniform draw without replacement.
            for i in 0..self.n_candidates {
                let j = rng.gen_range(i..n_features);
                candidates.swap(i, j);
            }
            candidates.truncate(self.n_candidates);
        }

        let total = indices.len() as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut values: Vec<(f64, u8)> = Vec::with_capacity(indices.len());
        for &feature in &candidates {
            values.clear();
            values.extend(
                indices
                    .iter()
                    .map(|&i| (self.rows[i][feature], self.labels[i])),
            );
            values.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

            let total_pos: f64 = values.iter().map(|&(_, l)| l as usize).sum::<usize>() as f64;
            let mut left_n = 0.0;
            let mut left_pos = 0.0;
            for w in 0..values.len() - 1 {
                left_n += 1.0;
                left_pos += values[w].1 as f64;
                if values[w].0 == values[w + 1].0 {
                    continue; // threshold must separate distinct values
                }
                let right_n = total - left_n;
                if left_n < self.cfg.min_leaf as f64 || right_n < self.cfg.min_leaf as f64 {
                    continue;
                }
                let gini = |pos: f64, n: f64| {
                    let p = pos / n;
                    2.0 * p * (1.0 - p)
                };
                let weighted = left_n / total * gini(left_pos, left_n)
                    + right_n / total * gini(total_pos - left_pos, right_n);
                if best.is_none_or(|(g, _, _)| weighted < g) {
                    let threshold = (values[w].0 + values[w + 1].0) / 2.0;
                    best = Some((weighted, feature, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Trains one decision tree; `rng` drives the per-node feature subsets.
pub fn train_tree<R: Rng>(ds: &Dataset, cfg: &ForestConfig, rng: &mut R) -> Result<DecisionTree> {
    let labels = ds.labels_required()?;
    if ds.n_rows() == 0 {
        return Err(Error::Size("train_tree needs at least one row".into()));
    }
    let mut builder = TreeBuilder {
        rows: ds.rows(),
        labels,
        cfg,
        n_candidates: cfg.effective_features(ds.n_features()),
        nodes: Vec::new(),
    };
    let root = builder.build((0..ds.n_rows()).collect(), 0, rng);
    debug_assert_eq!(root, 0);
    Ok(DecisionTree {
        nodes: builder.nodes,
        n_features: ds.n_features(),
    })
}

/// A bootstrap ensemble of decision trees; probability is the mean of
/// tree probabilities.
#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    n_features: usize,
}

impl Predictor for RandomForest {
    fn predict_proba(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_proba(row)).sum();
        sum / self.trees.len() as f64
    }

    fn n_features(&self) -> usize {
        self.n_features
    }
}

/// Trains a random forest. Tree `i` draws from RNG stream `i` of
/// `cfg.seed`, so training parallelism would not change the result.
pub fn train_forest(ds: &Dataset, cfg: &ForestConfig) -> Result<RandomForest> {
    let _ = ds.labels_required()?;
    if ds.n_rows() < 2 {
        return Err(Error::Size("train_forest needs at least two rows".into()));
    }
    if cfg.n_trees == 0 {
        return Err(Error::Contract("forest needs at least one tree".into()));
    }
    let n = ds.n_rows();
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for t in 0..cfg.n_trees {
        let mut r = rng::stream(cfg.seed, t as u64);
        let tree = if cfg.bootstrap {
            let sample: Vec<usize> = (0..n).map(|_| r.gen_range(0..n)).collect();
            train_tree(&ds.select(&sample), cfg, &mut r)?
        } else {
            train_tree(ds, cfg, &mut r)?
        };
        trees.push(tree);
    }
    Ok(RandomForest {
        trees,
        n_features: ds.n_features(),
    })
}

/// Fraction of rows where `model` reproduces the dataset labels.
pub fn accuracy_on(model: &dyn Predictor, ds: &Dataset) -> Result<f64> {
    let labels = ds.labels_required()?;
    let hits: usize = ds
        .rows()
        .iter()
        .zip(labels)
        .map(|(row, &l)| usize::from(model.predict(row) == l))
        .sum();
    Ok(hits as f64 / ds.n_rows() as f64)
}
