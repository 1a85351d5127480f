//! Bagged regression trees with variance-reduction splits.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_estimators: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Candidate features examined per split; `None` means `ceil(F / 3)`.
    pub features_per_split: Option<usize>,
    /// Resample rows with replacement for each tree. When false every tree
    /// sees the training rows exactly once.
    pub bootstrap: bool,
    pub bootstrap_fraction: f64,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: None,
            min_samples_split: 2,
            features_per_split: None,
            bootstrap: true,
            bootstrap_fraction: 1.0,
            seed: 42,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::Config("n_estimators must be positive".into()));
        }
        if self.max_depth == Some(0) {
            return Err(Error::Config("max_depth must be positive".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::Config("min_samples_split must be at least 2".into()));
        }
        if let Some(k) = self.features_per_split {
            if k == 0 || k > n_features {
                return Err(Error::Config(format!(
                    "features_per_split {k} outside [1, {n_features}]"
                )));
            }
        }
        if !(self.bootstrap_fraction > 0.0 && self.bootstrap_fraction <= 1.0) {
            return Err(Error::Config("bootstrap_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    fn candidates(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| n_features.div_ceil(3))
            .clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    n_features: usize,
}

/// Mean kept inside `[min, max]` of its inputs, exact when all inputs agree.
pub(crate) fn bounded_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        sum += v;
        n += 1;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == hi {
        return lo;
    }
    (sum / n as f64).clamp(lo, hi)
}

impl Forest {
    pub fn fit(x: &Matrix, y: &[f64], cfg: &ForestConfig) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Shape(format!("{} rows but {} targets", x.rows(), y.len())));
        }
        cfg.validate(x.cols())?;
        if y.len() < cfg.min_samples_split {
            return Err(Error::Precondition(format!(
                "{} rows is fewer than min_samples_split = {}",
                y.len(),
                cfg.min_samples_split
            )));
        }
        let trees = (0..cfg.n_estimators)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(t as u64);
                let rows: Vec<usize> = if cfg.bootstrap {
                    let m = ((cfg.bootstrap_fraction * y.len() as f64).round() as usize).max(1);
                    (0..m).map(|_| rng.random_range(0..y.len())).collect()
                } else {
                    (0..y.len()).collect()
                };
                TreeBuilder {
                    x,
                    y,
                    cfg,
                    n_candidates: cfg.candidates(x.cols()),
                    nodes: Vec::new(),
                }
                .build(rows, &mut rng)
            })
            .collect();
        Ok(Self {
            trees,
            n_features: x.cols(),
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        bounded_mean(self.trees.iter().map(|t| t.predict_row(row)))
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }
}

struct TreeBuilder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    cfg: &'a ForestConfig,
    n_candidates: usize,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl TreeBuilder<'_> {
    fn build(mut self, rows: Vec<usize>, rng: &mut ChaCha8Rng) -> Tree {
        self.grow(rows, 0, rng);
        Tree { nodes: self.nodes }
    }

    fn leaf_value(&self, rows: &[usize]) -> f64 {
        bounded_mean(rows.iter().map(|&i| self.y[i]))
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: self.leaf_value(&rows),
        });

        let pure = rows.iter().all(|&i| self.y[i] == self.y[rows[0]]);
        let depth_capped = self.cfg.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || rows.len() < self.cfg.min_samples_split {
            return id;
        }

        let n_features = self.x.cols();
        let mut features: Vec<usize> = sample(rng, n_features, self.n_candidates).into_vec();
        features.sort_unstable();
        let mut best = self.best_split(&rows, &features);
        if best.is_none() && features.len() < n_features {
            // Sampled features are all constant here; fall back to the rest.
            let rest: Vec<usize> = (0..n_features).filter(|f| !features.contains(f)).collect();
            best = self.best_split(&rows, &rest);
        }
        let Some(split) = best else {
            return id;
        };

        let (left, right): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.x.get(i, split.feature) <= split.threshold);
        let l = self.grow(left, depth + 1, rng);
        let r = self.grow(right, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        id
    }

    /// Minimises the summed squared error of the two children, which is
    /// equivalent to maximising `S_l^2 / n_l + S_r^2 / n_r`. Earlier features
    /// and lower thresholds win ties.
    fn best_split(&self, rows: &[usize], features: &[usize]) -> Option<BestSplit> {
        let n = rows.len();
        let total: f64 = rows.iter().map(|&i| self.y[i]).sum();
        let mut best: Option<BestSplit> = None;
        let mut order: Vec<usize> = rows.to_vec();
        for &f in features {
            order.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)));
            let mut left_sum = 0.0;
            for k in 1..n {
                left_sum += self.y[order[k - 1]];
                let lo = self.x.get(order[k - 1], f);
                let hi = self.x.get(order[k], f);
                if lo == hi {
                    continue;
                }
                let nl = k as f64;
                let nr = (n - k) as f64;
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / nl + right_sum * right_sum / nr;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}
