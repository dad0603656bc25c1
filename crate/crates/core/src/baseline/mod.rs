//! Random-forest baseline over numeric featurizations, with k-fold grid
//! search.

mod features;
mod forest;

use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use features::{feature_index, feature_names, featurize};
pub use forest::{fit_random_forest, rf_predict, RFConfig, RFModel, Tree};

/// Shuffled partition of `0..n` into `k` folds whose sizes differ by at most
/// one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::config(format!("k must be at least 2, got {k}")));
    }
    if n < k {
        return Err(Error::input(format!("{n} rows cannot fill {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(idx[at..at + size].to_vec());
        at += size;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvRow {
    pub config: usize,
    pub fold: usize,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best: RFConfig,
    pub best_index: usize,
    pub grid: Vec<RFConfig>,
    /// Mean validation MAE per grid point.
    pub mean_mae: Vec<f64>,
    pub table: Vec<CvRow>,
}

impl GridSearchResult {
    /// `config,fold,mae` where `config` is the grid point's label.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("config,fold,mae\n");
        for r in &self.table {
            let _ = writeln!(s, "\"{}\",{},{}", self.grid[r.config].label(), r.fold, r.mae);
        }
        s
    }
}

/// Scores every grid point by mean validation MAE over the same `k` folds
/// and returns the first point with the lowest score.
pub fn kfold_grid_search(x: &[Vec<f64>], y: &[f64], grid: &[RFConfig], k: usize, seed: u64) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::config("empty grid"));
    }
    if x.len() != y.len() {
        return Err(Error::input("feature and target counts differ"));
    }
    let folds = kfold_indices(x.len(), k, seed)?;
    let mut table = Vec::new();
    let mut mean_mae = Vec::with_capacity(grid.len());
    for (c, cfg) in grid.iter().enumerate() {
        let mut sum = 0.0;
        for (f, val) in folds.iter().enumerate() {
            let mut in_val = vec![false; x.len()];
            val.iter().for_each(|&i| in_val[i] = true);
            let tr: Vec<usize> = (0..x.len()).filter(|&i| !in_val[i]).collect();
            let xt: Vec<Vec<f64>> = tr.iter().map(|&i| x[i].clone()).collect();
            let yt: Vec<f64> = tr.iter().map(|&i| y[i]).collect();
            let m = fit_random_forest(&xt, &yt, cfg)?;
            let xv: Vec<Vec<f64>> = val.iter().map(|&i| x[i].clone()).collect();
            let p = rf_predict(&m, &xv)?;
            let mae = p.iter().zip(val).map(|(p, &i)| (p - y[i]).abs()).sum::<f64>() / val.len() as f64;
            sum += mae;
            table.push(CvRow { config: c, fold: f, mae });
        }
        mean_mae.push(sum / k as f64);
    }
    let mut best_index = 0;
    for (i, &m) in mean_mae.iter().enumerate() {
        if m < mean_mae[best_index] {
            best_index = i;
        }
    }
    Ok(GridSearchResult {
        best: grid[best_index].clone(),
        best_index,
        grid: grid.to_vec(),
        mean_mae,
        table,
    })
}

/// Parses a grid file of `key = v1, v2, …` lines (`#` starts a comment) into
/// the cartesian product of the listed values, later keys varying fastest.
/// Keys: `n_trees`, `max_depth` (`none` allowed), `min_samples_split`,
/// `min_samples_leaf`, `features_per_split` (`auto` allowed), `bootstrap`,
/// `seed`.
///
/// ```
/// let g = gaptext::baseline::parse_grid("n_trees = 10, 20\nmax_depth = 4, none\n").unwrap();
/// assert_eq!(g.len(), 4);
/// assert_eq!(g[1].max_depth, None);
/// ```
pub fn parse_grid(text: &str) -> Result<Vec<RFConfig>> {
    let mut grid = vec![RFConfig::default()];
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |m: String| Error::Schema { line: n + 1, message: m };
        let (key, values) = line.split_once('=').ok_or_else(|| bad("expected `key = values`".into()))?;
        let key = key.trim();
        let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(bad(format!("no values for `{key}`")));
        }
        let mut next = Vec::with_capacity(grid.len() * values.len());
        for base in &grid {
            for v in &values {
                let mut c = base.clone();
                let num = |v: &str| v.parse::<usize>().map_err(|_| bad(format!("`{v}` is not an integer")));
                match key {
                    "n_trees" => c.n_trees = num(v)?,
                    "max_depth" => c.max_depth = if *v == "none" { None } else { Some(num(v)?) },
                    "min_samples_split" => c.min_samples_split = num(v)?,
                    "min_samples_leaf" => c.min_samples_leaf = num(v)?,
                    "features_per_split" => {
                        c.features_per_split = if *v == "auto" {
                            None
                        } else {
                            Some(v.parse().map_err(|_| bad(format!("`{v}` is not a number")))?)
                        }
                    }
                    "bootstrap" => c.bootstrap = v.parse().map_err(|_| bad(format!("`{v}` is not a boolean")))?,
                    "seed" => c.seed = v.parse().map_err(|_| bad(format!("`{v}` is not an integer")))?,
                    other => return Err(bad(format!("unknown key `{other}`"))),
                }
                c.validate().map_err(|e| bad(e.to_string()))?;
                next.push(c);
            }
        }
        grid = next;
    }
    Ok(grid)
}
