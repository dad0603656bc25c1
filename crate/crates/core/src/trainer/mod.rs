//! Training with MSE loss, AdamW, layer freezing and early stopping.

mod metrics;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Mat, RegressorModel};
use crate::tokenizer::{encode, TokenSeq, Vocab};

pub use metrics::{bootstrap_metrics, metrics, mse_loss, MetricSpread, Metrics, BOOTSTRAP_RESAMPLES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeStrategy {
    None,
    FirstLayer,
    #[serde(rename = "all_but_final_3")]
    AllButFinal3,
    AllButFinal,
    All,
}

impl FreezeStrategy {
    /// Ordered from most to fewest trainable parameters.
    pub const ALL: [FreezeStrategy; 5] = [
        FreezeStrategy::None,
        FreezeStrategy::FirstLayer,
        FreezeStrategy::AllButFinal3,
        FreezeStrategy::AllButFinal,
        FreezeStrategy::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FreezeStrategy::None => "none",
            FreezeStrategy::FirstLayer => "first_layer",
            FreezeStrategy::AllButFinal3 => "all_but_final_3",
            FreezeStrategy::AllButFinal => "all_but_final",
            FreezeStrategy::All => "all",
        }
    }
}

impl fmt::Display for FreezeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FreezeStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FreezeStrategy::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::config(format!("unknown freeze strategy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreezeReport {
    pub trainable: usize,
    pub total: usize,
    pub percent: f64,
    pub frozen_groups: Vec<String>,
}

/// Sets trainable flags for `strategy`, starting from an all-trainable model.
///
/// * `first_layer`: embeddings and block 1 frozen.
/// * `all_but_final_3`: embeddings and blocks `1..=L-3` frozen (needs `L ≥ 3`).
/// * `all_but_final`: embeddings and blocks `1..=L-1` frozen.
/// * `all`: everything except the regression head frozen.
pub fn apply_freeze(m: &mut RegressorModel, strategy: FreezeStrategy) -> Result<FreezeReport> {
    let l = m.config.n_layers;
    m.set_all_trainable(true);
    let frozen_blocks = match strategy {
        FreezeStrategy::None => None,
        FreezeStrategy::FirstLayer => Some(1),
        FreezeStrategy::AllButFinal3 => {
            if l < 3 {
                return Err(Error::config(format!(
                    "freeze strategy all_but_final_3 needs at least 3 layers, model has {l}"
                )));
            }
            Some(l - 3)
        }
        FreezeStrategy::AllButFinal => Some(l - 1),
        FreezeStrategy::All => Some(l),
    };
    if let Some(k) = frozen_blocks {
        m.set_trainable("embeddings", false)?;
        for i in 1..=k {
            m.set_trainable(&format!("layer.{i}"), false)?;
        }
    }
    if strategy == FreezeStrategy::All {
        m.set_trainable("final_norm", false)?;
    }
    let total = m.count_params(false);
    let trainable = m.count_params(true);
    Ok(FreezeReport {
        trainable,
        total,
        percent: 100.0 * trainable as f64 / total as f64,
        frozen_groups: m
            .groups()
            .iter()
            .filter(|g| !g.trainable)
            .map(|g| g.name.clone())
            .collect(),
    })
}

/// Token sequences paired with band-gap targets.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub seqs: Vec<TokenSeq>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(seqs: Vec<TokenSeq>, targets: Vec<f64>) -> Result<Dataset> {
        if seqs.len() != targets.len() {
            return Err(Error::input("sequence and target counts differ"));
        }
        Ok(Dataset { seqs, targets })
    }

    pub fn encode<S: AsRef<str>>(vocab: &Vocab, texts: &[S], targets: &[f64], max_len: usize) -> Result<Dataset> {
        let seqs = texts.iter().map(|t| encode(vocab, t.as_ref(), max_len)).collect();
        Dataset::new(seqs, targets.to_vec())
    }

    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub freeze: FreezeStrategy,
    pub seed: u64,
    /// Stop after this many epochs without a new best validation MAE.
    pub patience: Option<usize>,
    /// Stop once the monitored MAE (validation, or training when there is no
    /// validation set) reaches this value.
    pub stop_mae: Option<f64>,
    /// Standardize targets with the training mean and deviation.
    pub scale_targets: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 16,
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            freeze: FreezeStrategy::None,
            seed: 0,
            patience: None,
            stop_mae: None,
            scale_targets: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::config("epochs and batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return Err(Error::config("betas must lie in [0, 1) and eps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub train: Metrics,
    pub val: Option<Metrics>,
    pub trainable_params: usize,
    pub total_params: usize,
    pub trainable_percent: f64,
    pub config: TrainConfig,
}

impl TrainReport {
    /// `epoch,train_loss,val_loss,val_mae` with one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,val_mae\n");
        for e in &self.log {
            s.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, e.val_loss, e.val_mae));
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "best_epoch={} train_mae={:.4} val_mae={} trainable={} ({:.2}%) freeze={}",
            self.best_epoch,
            self.train.mae,
            self.val.map_or("n/a".into(), |m| format!("{:.4}", m.mae)),
            self.trainable_params,
            self.trainable_percent,
            self.config.freeze
        )
    }
}

/// Hidden states after the frozen prefix, computed once per sample.
struct Cached<'a> {
    data: &'a Dataset,
    start: usize,
    hidden: Vec<Mat>,
}

impl<'a> Cached<'a> {
    fn new(m: &RegressorModel, data: &'a Dataset, start: usize) -> Result<Cached<'a>> {
        let hidden = data
            .seqs
            .par_iter()
            .map(|ts| {
                m.check_seq(ts)?;
                if start == 0 {
                    Ok(Mat::zeros(0, 0))
                } else {
                    m.hidden_after(m.embed(&ts.ids), start, &ts.mask)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Cached { data, start, hidden })
    }

    fn trace(&self, m: &RegressorModel, i: usize) -> Result<crate::model::Trace> {
        let ts = &self.data.seqs[i];
        if self.start == 0 {
            m.trace(ts, 0)
        } else {
            m.trace_from(self.hidden[i].clone(), self.start, ts)
        }
    }

    fn predict(&self, m: &RegressorModel) -> Result<Vec<f64>> {
        (0..self.data.len())
            .into_par_iter()
            .map(|i| Ok(m.scale_output(self.trace(m, i)?.out)))
            .collect()
    }
}

struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    fn step(&mut self, params: &mut [f64], grad: &[f64], ranges: &[(usize, usize)], c: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for &(s, e) in ranges {
            for i in s..e {
                let g = grad[i];
                self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
                self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
                let mhat = self.m[i] / bc1;
                let vhat = self.v[i] / bc2;
                params[i] -= c.learning_rate * (mhat / (vhat.sqrt() + c.eps) + c.weight_decay * params[i]);
            }
        }
    }
}

/// Trains the trainable groups of `m` with mini-batch AdamW on the MSE of
/// predictions in eV and returns the parameters of the epoch with the lowest
/// validation MAE (training MAE when `val` is empty).
///
/// Freezing is taken from `cfg.freeze`. Frozen parameters are never written.
/// Per-sample gradients are summed in sample order, so results do not depend
/// on the number of worker threads.
pub fn train(mut m: RegressorModel, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<(RegressorModel, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::input("empty training set"));
    }
    let freeze = apply_freeze(&mut m, cfg.freeze)?;
    if cfg.scale_targets {
        let n = train.len() as f64;
        let mean = train.targets.iter().sum::<f64>() / n;
        let sd = (train.targets.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n).sqrt();
        m.target_mean = mean;
        m.target_scale = if sd > 1e-12 { sd } else { 1.0 };
    }
    let start = m.frozen_prefix();
    let train_c = Cached::new(&m, train, start)?;
    let val_c = Cached::new(&m, val, start)?;
    let ranges: Vec<(usize, usize)> = m
        .groups()
        .iter()
        .filter(|g| g.trainable)
        .map(|g| (g.start, g.end))
        .collect();
    let n_params = m.params.len();
    let mut opt = AdamW {
        m: vec![0.0; n_params],
        v: vec![0.0; n_params],
        t: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sq_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let bsz = batch.len() as f64;
            let per_sample = batch
                .par_iter()
                .map(|&i| {
                    let tr = train_c.trace(&m, i)?;
                    let err = m.scale_output(tr.out) - train.targets[i];
                    let mut g = vec![0.0; n_params];
                    m.backward(&tr, 2.0 * err * m.target_scale / bsz, &mut g);
                    Ok((err * err, g))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grad = vec![0.0; n_params];
            let mut batch_sq = 0.0;
            for (sq, g) in &per_sample {
                batch_sq += sq;
                for &(s, e) in &ranges {
                    for k in s..e {
                        grad[k] += g[k];
                    }
                }
            }
            let loss = batch_sq / bsz;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    learning_rate: cfg.learning_rate,
                });
            }
            sq_sum += batch_sq;
            opt.step(&mut m.params, &grad, &ranges, cfg);
        }
        let train_loss = sq_sum / train.len() as f64;
        let (val_loss, val_mae, score) = if val.is_empty() {
            let p = train_c.predict(&m)?;
            let mt = metrics(&p, &train.targets)?;
            (f64::NAN, f64::NAN, mt.mae)
        } else {
            let p = val_c.predict(&m)?;
            let mv = metrics(&p, &val.targets)?;
            (mv.rmse * mv.rmse, mv.mae, mv.mae)
        };
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_mae,
        });
        if best.as_ref().map_or(true, |(s, _, _)| score < *s) {
            best = Some((score, epoch, m.params.clone()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if cfg.stop_mae.is_some_and(|t| score <= t) {
            stopped_early = epoch < cfg.epochs;
            break;
        }
        if cfg.patience.is_some_and(|p| epoch - best_epoch >= p) {
            stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    m.params = params;
    let train_metrics = metrics(&train_c.predict(&m)?, &train.targets)?;
    let val_metrics = if val.is_empty() {
        None
    } else {
        Some(metrics(&val_c.predict(&m)?, &val.targets)?)
    };
    let report = TrainReport {
        log,
        best_epoch,
        stopped_early,
        train: train_metrics,
        val: val_metrics,
        trainable_params: freeze.trainable,
        total_params: freeze.total,
        trainable_percent: freeze.percent,
        config: cfg.clone(),
    };
    Ok((m, report))
}

/// Predicts every sequence and scores against the targets.
pub fn evaluate(m: &RegressorModel, data: &Dataset) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::input("cannot evaluate on an empty dataset"));
    }
    metrics(&m.predict(&data.seqs)?, &data.targets)
}

/// Batch MSE loss and its gradient with respect to every parameter.
pub fn loss_and_grad(m: &RegressorModel, data: &Dataset) -> Result<(f64, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::input("empty batch"));
    }
    let n = data.len() as f64;
    let mut grad = vec![0.0; m.params.len()];
    let mut loss = 0.0;
    for (ts, &y) in data.seqs.iter().zip(&data.targets) {
        m.check_seq(ts)?;
        let tr = m.trace(ts, 0)?;
        let err = m.scale_output(tr.out) - y;
        loss += err * err / n;
        m.backward(&tr, 2.0 * err * m.target_scale / n, &mut grad);
    }
    Ok((loss, grad))
}

/// Relative error `|a - n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (group, parameters checked, max relative error)
    pub groups: Vec<(String, usize, f64)>,
}

/// Compares analytic gradients of the batch MSE with central differences on
/// a random subsample of up to `per_group` parameters from every trainable
/// group.
pub fn grad_check(m: &RegressorModel, data: &Dataset, eps: f64, per_group: usize, seed: u64) -> Result<GradCheckReport> {
    let (_, analytic) = loss_and_grad(m, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = m.clone();
    let loss_at = |probe: &RegressorModel| -> Result<f64> {
        let p = probe.predict(&data.seqs)?;
        mse_loss(&p, &data.targets)
    };
    let mut groups = Vec::new();
    let mut max_rel_err: f64 = 0.0;
    for g in m.groups().iter().filter(|g| g.trainable) {
        let k = per_group.min(g.len());
        let picks = rand::seq::index::sample(&mut rng, g.len(), k);
        let mut worst: f64 = 0.0;
        for off in picks.iter() {
            let i = g.start + off;
            let orig = probe.params[i];
            probe.params[i] = orig + eps;
            let up = loss_at(&probe)?;
            probe.params[i] = orig - eps;
            let down = loss_at(&probe)?;
            probe.params[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            worst = worst.max(rel);
        }
        max_rel_err = max_rel_err.max(worst);
        groups.push((g.name.clone(), k, worst));
    }
    Ok(GradCheckReport { max_rel_err, groups })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in FreezeStrategy::ALL {
            assert_eq!(s.name().parse::<FreezeStrategy>().unwrap(), s);
        }
        assert!("half".parse::<FreezeStrategy>().is_err());
    }

    #[test]
    fn config_rejects_zero_epochs() {
        let c = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
