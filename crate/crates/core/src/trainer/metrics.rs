use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regression metrics in eV (R² dimensionless).
///
/// When every target is equal (`sst_zero`), R² is 1 for a perfect fit and
/// `-inf` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    pub sst_zero: bool,
}

/// Mean of squared differences.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::input(format!(
            "prediction count {} differs from target count {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::input("mse of an empty set"));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// MAE, RMSE and R² with SST taken about the target mean.
///
/// ```
/// use gaptext::trainer::metrics;
/// let m = metrics(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).unwrap();
/// assert!((m.mae - 2.0 / 3.0).abs() < 1e-12);
/// assert!(m.r2.abs() < 1e-12);
/// ```
pub fn metrics(pred: &[f64], target: &[f64]) -> Result<Metrics> {
    let mse = mse_loss(pred, target)?;
    let n = pred.len() as f64;
    let mae = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    let mean = target.iter().sum::<f64>() / n;
    let sst: f64 = target.iter().map(|t| (t - mean) * (t - mean)).sum();
    let sse = mse * n;
    let sst_zero = sst == 0.0;
    let r2 = if sst_zero {
        if sse == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - sse / sst
    };
    Ok(Metrics {
        mae,
        rmse: mse.sqrt(),
        r2,
        sst_zero,
    })
}

/// Standard deviations of the metrics over bootstrap resamples of the
/// (prediction, target) pairs. Resamples with zero target variance are left
/// out of the R² spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSpread {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    pub resamples: usize,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

pub fn bootstrap_metrics(pred: &[f64], target: &[f64], resamples: usize, seed: u64) -> Result<MetricSpread> {
    metrics(pred, target)?;
    let n = pred.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut maes, mut rmses, mut r2s) = (Vec::new(), Vec::new(), Vec::new());
    let mut p = vec![0.0; n];
    let mut t = vec![0.0; n];
    for _ in 0..resamples {
        for i in 0..n {
            let j = rng.gen_range(0..n);
            p[i] = pred[j];
            t[i] = target[j];
        }
        let m = metrics(&p, &t)?;
        maes.push(m.mae);
        rmses.push(m.rmse);
        if !m.sst_zero {
            r2s.push(m.r2);
        }
    }
    Ok(MetricSpread {
        mae: sd(&maes),
        rmse: sd(&rmses),
        r2: sd(&r2s),
        resamples,
    })
}

fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
