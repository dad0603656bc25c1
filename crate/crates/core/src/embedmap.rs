//! Pooled-embedding extraction and exact t-SNE.

use std::fmt::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Pooling, RegressorModel};
use crate::tokenizer::TokenSeq;

/// Per-row labels carried alongside embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowLabel {
    pub id: String,
    pub crystal_system: String,
    pub band_gap: f64,
}

/// N×d matrix of embeddings with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub n: usize,
    pub dim: usize,
    pub data: Vec<f64>,
    pub labels: Vec<RowLabel>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, data: Vec<f64>, labels: Vec<RowLabel>) -> Result<EmbeddingMatrix> {
        if dim == 0 || data.len() != dim * labels.len() {
            return Err(Error::input("embedding data does not match dim × label count"));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("embeddings must be finite"));
        }
        Ok(EmbeddingMatrix {
            n: labels.len(),
            dim,
            data,
            labels,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Row `i` is the pooled embedding of `seqs[i]` after block `layer`.
pub fn extract_embeddings(
    m: &RegressorModel,
    seqs: &[TokenSeq],
    labels: &[RowLabel],
    layer: usize,
    pooling: Pooling,
) -> Result<EmbeddingMatrix> {
    if seqs.is_empty() {
        return Err(Error::input("empty corpus"));
    }
    if seqs.len() != labels.len() {
        return Err(Error::input("sequence and label counts differ"));
    }
    let rows = seqs
        .par_iter()
        .map(|ts| m.pooled_embedding(ts, layer, pooling))
        .collect::<Result<Vec<_>>>()?;
    EmbeddingMatrix::new(m.config.d_model, rows.concat(), labels.to_vec())
}

/// Pairwise squared Euclidean distances, row-major N×N.
pub fn squared_distances(data: &[f64], n: usize, dim: usize) -> Vec<f64> {
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let a = &data[i * dim..(i + 1) * dim];
            let b = &data[j * dim..(j + 1) * dim];
            let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            d[i * n + j] = s;
            d[j * n + i] = s;
        }
    }
    d
}

pub const PERPLEXITY_TOL: f64 = 1e-5;
pub const MAX_BISECTION_STEPS: usize = 200;

/// Conditional affinities `P_{j|i}` from squared distances.
///
/// Each row's Gaussian precision is found by bisection so that
/// `2^H(P_i)` equals `perplexity` within [`PERPLEXITY_TOL`].
pub fn perplexity_calibrate(dist2: &[f64], n: usize, perplexity: f64) -> Result<Vec<f64>> {
    if dist2.len() != n * n || n < 2 {
        return Err(Error::input("distance matrix must be N×N with N ≥ 2"));
    }
    for i in 0..n {
        if dist2[i * n + i] != 0.0 {
            return Err(Error::input(format!("distance diagonal at {i} is not zero")));
        }
        for j in 0..n {
            let v = dist2[i * n + j];
            if !(v >= 0.0) || v != dist2[j * n + i] {
                return Err(Error::input("distances must be symmetric and non-negative"));
            }
        }
    }
    if !(perplexity >= 1.0) {
        return Err(Error::input(format!("perplexity must be at least 1, got {perplexity}")));
    }
    let target = perplexity.log2();
    let rows = (0..n)
        .into_par_iter()
        .map(|i| calibrate_row(&dist2[i * n..(i + 1) * n], i, target).ok_or(Error::PerplexityNotConverged { row: i }))
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.concat())
}

fn row_entropy(d: &[f64], i: usize, beta: f64, p: &mut [f64]) -> f64 {
    let dmin = d
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, pj) in p.iter_mut().enumerate() {
        *pj = if j == i { 0.0 } else { (-(d[j] - dmin) * beta).exp() };
        sum += *pj;
    }
    let mut h = 0.0;
    for pj in p.iter_mut() {
        *pj /= sum;
        if *pj > 0.0 {
            h -= *pj * pj.log2();
        }
    }
    h
}

fn calibrate_row(d: &[f64], i: usize, target: f64) -> Option<Vec<f64>> {
    let mut p = vec![0.0; d.len()];
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut beta = 1.0;
    for _ in 0..MAX_BISECTION_STEPS {
        let h = row_entropy(d, i, beta, &mut p);
        if (h.exp2() - target.exp2()).abs() <= PERPLEXITY_TOL {
            return Some(p);
        }
        if h > target {
            lo = beta;
            beta = if hi.is_infinite() { beta * 2.0 } else { 0.5 * (beta + hi) };
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
    }
    None
}

/// Symmetrized joint affinities `(P_{j|i} + P_{i|j}) / 2N`.
pub fn joint_probabilities(cond: &[f64], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64);
        }
    }
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iters: 100,
            momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 2 {
            return Err(Error::input("t-SNE needs at least two points"));
        }
        let max = (n as f64 - 1.0) / 3.0;
        if !(self.perplexity >= 1.0 && self.perplexity <= max) {
            return Err(Error::config(format!(
                "perplexity {} outside [1, (N-1)/3 = {max:.3}]",
                self.perplexity
            )));
        }
        if self.iterations < 1 || !(self.learning_rate > 0.0) {
            return Err(Error::config("iterations must be at least 1 and learning_rate positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    pub coords: Vec<[f64; 2]>,
    /// KL(P‖Q) after each iteration, with the unexaggerated P.
    pub kl: Vec<f64>,
}

fn row_key(row: &[f64]) -> [u8; 32] {
    let mut h = Sha256::new();
    for x in row {
        h.update(x.to_bits().to_le_bytes());
    }
    h.finalize().into()
}

/// Exact t-SNE with early exaggeration, momentum and per-coordinate gains.
///
/// Rows are processed in an order fixed by their content, and each point's
/// initial position is drawn from a generator keyed by the seed and its
/// content, so permuting the input rows permutes the output rows identically.
pub fn tsne(data: &[f64], n: usize, dim: usize, cfg: &TsneConfig) -> Result<TsneResult> {
    cfg.validate(n)?;
    if data.len() != n * dim {
        return Err(Error::input("data length does not match N × dim"));
    }
    let keys: Vec<[u8; 32]> = (0..n).map(|i| row_key(&data[i * dim..(i + 1) * dim])).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let sorted: Vec<f64> = order.iter().flat_map(|&i| data[i * dim..(i + 1) * dim].to_vec()).collect();

    let d2 = squared_distances(&sorted, n, dim);
    let p = joint_probabilities(&perplexity_calibrate(&d2, n, cfg.perplexity)?, n);

    let normal = Normal::new(0.0, 1e-2).expect("valid std");
    let mut y: Vec<[f64; 2]> = order
        .iter()
        .map(|&i| {
            let mut s = [0u8; 8];
            s.copy_from_slice(&keys[i][..8]);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ u64::from_le_bytes(s));
            [normal.sample(&mut rng), normal.sample(&mut rng)]
        })
        .collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl = Vec::with_capacity(cfg.iterations);
    let mut num = vec![0.0; n * n];

    for it in 0..cfg.iterations {
        let exag = if it < cfg.exaggeration_iters { cfg.exaggeration } else { 1.0 };
        let mom = if it < cfg.momentum_switch { cfg.momentum } else { cfg.final_momentum };
        let mut zsum = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v = if i == j {
                    0.0
                } else {
                    let dx = y[i][0] - y[j][0];
                    let dy = y[i][1] - y[j][1];
                    1.0 / (1.0 + dx * dx + dy * dy)
                };
                num[i * n + j] = v;
                zsum += v;
            }
        }
        let grad: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                for j in 0..n {
                    let nij = num[i * n + j];
                    let m = (exag * p[i * n + j] - nij / zsum) * nij;
                    g[0] += 4.0 * m * (y[i][0] - y[j][0]);
                    g[1] += 4.0 * m * (y[i][1] - y[j][1]);
                }
                g
            })
            .collect();
        if grad.iter().any(|g| !g[0].is_finite() || !g[1].is_finite()) {
            return Err(Error::NonFiniteGradient { iteration: it });
        }
        for i in 0..n {
            for c in 0..2 {
                let same_sign = (grad[i][c] > 0.0) == (update[i][c] > 0.0);
                gains[i][c] = if same_sign { gains[i][c] * 0.8 } else { gains[i][c] + 0.2 };
                gains[i][c] = gains[i][c].max(0.01);
                update[i][c] = mom * update[i][c] - cfg.learning_rate * gains[i][c] * grad[i][c];
                y[i][c] += update[i][c];
            }
        }
        let mean = y.iter().fold([0.0; 2], |a, v| [a[0] + v[0], a[1] + v[1]]);
        for v in y.iter_mut() {
            v[0] -= mean[0] / n as f64;
            v[1] -= mean[1] / n as f64;
        }
        kl.push(kl_divergence(&p, &y));
    }
    let mut coords = vec![[0.0; 2]; n];
    for (k, &i) in order.iter().enumerate() {
        coords[i] = y[k];
    }
    Ok(TsneResult { coords, kl })
}

/// `Σ p_ij log(p_ij / q_ij)` with Student-t `q`.
pub fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let mut q = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                q[i * n + j] = v;
                z += v;
            }
        }
    }
    let mut kl = 0.0;
    for k in 0..n * n {
        if p[k] > 0.0 {
            kl += p[k] * (p[k] / (q[k] / z).max(f64::MIN_POSITIVE)).ln();
        }
    }
    kl
}

fn neighbor_ranks(d: &[f64], n: usize, i: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    idx.sort_by(|&a, &b| d[i * n + a].total_cmp(&d[i * n + b]).then(a.cmp(&b)));
    idx
}

/// Fraction-style score in `[0, 1]` penalizing low-dimensional neighbors
/// that are not high-dimensional neighbors, weighted by their high-dim rank.
/// Requires `k < n / 2`.
pub fn trustworthiness(high: &[f64], dim: usize, low: &[[f64; 2]], k: usize) -> Result<f64> {
    let n = low.len();
    if k == 0 || 2 * k >= n {
        return Err(Error::input(format!("trustworthiness needs 0 < k < n/2, got k={k}, n={n}")));
    }
    let dh = squared_distances(high, n, dim);
    let flat: Vec<f64> = low.iter().flat_map(|p| p.to_vec()).collect();
    let dl = squared_distances(&flat, n, 2);
    let mut penalty = 0.0;
    for i in 0..n {
        let hr = neighbor_ranks(&dh, n, i);
        let mut rank = vec![0usize; n];
        for (r, &j) in hr.iter().enumerate() {
            rank[j] = r + 1;
        }
        for &j in neighbor_ranks(&dl, n, i).iter().take(k) {
            if rank[j] > k {
                penalty += (rank[j] - k) as f64;
            }
        }
    }
    let (n, k) = (n as f64, k as f64);
    Ok(1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty)
}

/// `id,x,y,crystal_system,band_gap`
pub fn coords_to_csv(coords: &[[f64; 2]], labels: &[RowLabel]) -> String {
    let mut s = String::from("id,x,y,crystal_system,band_gap\n");
    for (c, l) in coords.iter().zip(labels) {
        let _ = writeln!(s, "{},{},{},{},{}", l.id, c[0], c[1], l.crystal_system, l.band_gap);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorBy {
    CrystalSystem,
    BandGap,
}

impl std::str::FromStr for ColorBy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crystal_system" => Ok(ColorBy::CrystalSystem),
            "band_gap" => Ok(ColorBy::BandGap),
            _ => Err(Error::config(format!("unknown color-by `{s}`"))),
        }
    }
}

pub fn coords_to_svg(coords: &[[f64; 2]], labels: &[RowLabel], color_by: ColorBy) -> String {
    use crate::plot::{ramp, scatter, PALETTE};
    match color_by {
        ColorBy::CrystalSystem => {
            let mut classes: Vec<&str> = labels.iter().map(|l| l.crystal_system.as_str()).collect();
            classes.sort_unstable();
            classes.dedup();
            let color = |c: &str| PALETTE[classes.iter().position(|x| *x == c).unwrap_or(0) % PALETTE.len()];
            let pts: Vec<(f64, f64, String)> = coords
                .iter()
                .zip(labels)
                .map(|(p, l)| (p[0], p[1], color(&l.crystal_system).to_string()))
                .collect();
            let legend: Vec<(String, String)> = classes.iter().map(|c| (c.to_string(), color(c).to_string())).collect();
            scatter("t-SNE by crystal system", &pts, &legend)
        }
        ColorBy::BandGap => {
            let hi = labels.iter().map(|l| l.band_gap).fold(0.0f64, f64::max).max(1e-12);
            let pts: Vec<(f64, f64, String)> = coords
                .iter()
                .zip(labels)
                .map(|(p, l)| (p[0], p[1], ramp(l.band_gap / hi)))
                .collect();
            let legend = vec![("0 eV".to_string(), ramp(0.0)), (format!("{hi:.2} eV"), ramp(1.0))];
            scatter("t-SNE by band gap", &pts, &legend)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_row_for_equidistant_points() {
        let n = 5;
        let d: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { 1.0 }).collect();
        let p = perplexity_calibrate(&d, n, (n - 1) as f64).unwrap();
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 0.0 } else { 0.25 };
                assert!((p[i * n + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unreachable_perplexity_reports_row() {
        let d = vec![0.0, 1.0, 1.0, 0.0];
        assert!(matches!(
            perplexity_calibrate(&d, 2, 3.0),
            Err(Error::PerplexityNotConverged { row: 0 })
        ));
    }

    #[test]
    fn perplexity_range_checked() {
        let c = TsneConfig {
            perplexity: 5.0,
            ..TsneConfig::default()
        };
        assert!(c.validate(10).is_err());
        assert!(c.validate(16).is_ok());
    }

    #[test]
    fn trustworthiness_of_identity_map_is_one() {
        let pts: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, (i * i) as f64 * 0.1]).collect();
        let flat: Vec<f64> = pts.iter().flat_map(|p| p.to_vec()).collect();
        assert!((trustworthiness(&flat, 2, &pts, 3).unwrap() - 1.0).abs() < 1e-12);
    }
}
