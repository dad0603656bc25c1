use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RFConfig {
    pub n_trees: usize,
    /// `None` grows until the other stopping rules apply.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features tried per split; `None` means `⌈d/3⌉` features.
    pub features_per_split: Option<f64>,
    /// Train each tree on a bootstrap sample (`false`: on all rows).
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RFConfig {
    fn default() -> Self {
        RFConfig {
            n_trees: 100,
            max_depth: Some(50),
            min_samples_split: 2,
            min_samples_leaf: 2,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl RFConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 || self.max_depth == Some(0) || self.min_samples_split < 2 || self.min_samples_leaf < 1 {
            return Err(Error::config(
                "need n_trees ≥ 1, max_depth ≥ 1, min_samples_split ≥ 2 and min_samples_leaf ≥ 1",
            ));
        }
        if let Some(f) = self.features_per_split {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::config(format!("features_per_split must lie in (0, 1], got {f}")));
            }
        }
        Ok(())
    }

    pub fn features_tried(&self, d: usize) -> usize {
        match self.features_per_split {
            None => d.div_ceil(3),
            Some(f) => ((f * d as f64).ceil() as usize).clamp(1, d),
        }
        .max(1)
    }

    /// Compact `key=value;…` description.
    pub fn label(&self) -> String {
        format!(
            "n_trees={};max_depth={};min_samples_split={};min_samples_leaf={};features_per_split={};bootstrap={};seed={}",
            self.n_trees,
            self.max_depth.map_or("none".into(), |d| d.to_string()),
            self.min_samples_split,
            self.min_samples_leaf,
            self.features_per_split.map_or("auto".into(), |f| f.to_string()),
            self.bootstrap,
            self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
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
    nodes: Vec<Node>,
    /// Fraction of training rows never drawn into this tree's sample.
    pub oob_fraction: f64,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    cfg: &'a RFConfig,
    k: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

fn mean(y: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64
}

impl Builder<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(mean(self.y, idx)));
        let n = idx.len();
        let constant = idx.iter().all(|&i| self.y[i] == self.y[idx[0]]);
        if n < self.cfg.min_samples_split || constant || self.cfg.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(idx) else {
            return id;
        };
        let mut split = 0;
        for j in 0..n {
            if self.x[idx[j]][feature] <= threshold {
                idx.swap(j, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    /// Exact search minimizing the children's summed squared error over
    /// midpoints between consecutive distinct values.
    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64)> {
        let d = self.x[0].len();
        let mut feats: Vec<usize> = sample(&mut self.rng, d, self.k).into_vec();
        feats.sort_unstable();
        let n = idx.len();
        let leaf = self.cfg.min_samples_leaf;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<usize> = idx.to_vec();
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let total_sq: f64 = idx.iter().map(|&i| self.y[i] * self.y[i]).sum();
        for &f in &feats {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let (mut s, mut sq) = (0.0, 0.0);
            for j in 0..n - 1 {
                let yi = self.y[order[j]];
                s += yi;
                sq += yi * yi;
                let (nl, nr) = ((j + 1) as f64, (n - j - 1) as f64);
                if j + 1 < leaf || n - j - 1 < leaf {
                    continue;
                }
                let (lo, hi) = (self.x[order[j]][f], self.x[order[j + 1]][f]);
                if lo == hi {
                    continue;
                }
                let sse = (sq - s * s / nl) + ((total_sq - sq) - (total - s) * (total - s) / nr);
                if best.map_or(true, |(b, _, _)| sse < b) {
                    let mid = lo + (hi - lo) / 2.0;
                    best = Some((sse, f, if mid < hi { mid } else { lo }));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Bagged regression trees averaged at prediction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RFModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub config: RFConfig,
}

/// Fits a forest. Tree `t` uses its own ChaCha8 stream of the config seed, so
/// results are identical for any thread count.
pub fn fit_random_forest(x: &[Vec<f64>], y: &[f64], cfg: &RFConfig) -> Result<RFModel> {
    cfg.validate()?;
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::input("need at least two rows and one target per row"));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::input("rows must share a positive feature count"));
    }
    let n = x.len();
    let k = cfg.features_tried(d);
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64);
            let mut idx: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut seen = vec![false; n];
            idx.iter().for_each(|&i| seen[i] = true);
            let oob_fraction = seen.iter().filter(|s| !**s).count() as f64 / n as f64;
            let mut b = Builder {
                x,
                y,
                cfg,
                k,
                rng,
                nodes: Vec::new(),
            };
            b.grow(&mut idx, 0);
            Tree {
                nodes: b.nodes,
                oob_fraction,
            }
        })
        .collect();
    Ok(RFModel {
        trees,
        n_features: d,
        config: cfg.clone(),
    })
}

/// Mean of the trees' leaf values for each row.
pub fn rf_predict(m: &RFModel, x: &[Vec<f64>]) -> Result<Vec<f64>> {
    if let Some(r) = x.iter().find(|r| r.len() != m.n_features) {
        return Err(Error::input(format!(
            "row has {} features, model expects {}",
            r.len(),
            m.n_features
        )));
    }
    Ok(x.iter()
        .map(|r| m.trees.iter().map(|t| t.predict(r)).sum::<f64>() / m.trees.len() as f64)
        .collect())
}
