//! Miniature transformer regressors.
//!
//! Two flavors share one parameter store:
//!
//! * **encoder**: learned positions, pre-norm LayerNorm blocks, GELU
//!   feed-forward, bidirectional attention, first-token pooling by default.
//! * **decoder**: rotary positions, RMSNorm, SwiGLU feed-forward, no projection
//!   biases, causal attention, last-token pooling by default.
//!
//! Both end in a final norm and a regression head
//! `out = w2 · tanh(W1 h + b1) + b2`. The prediction in eV is
//! `target_mean + target_scale * out`; the two scaling buffers are set by the
//! trainer from the training targets and are not parameters.
//!
//! Parameters live in one flat `Vec<f64>` split into contiguous groups
//! `embeddings`, `layer.1` … `layer.L`, `final_norm` and `head`, each with a
//! trainable flag.

mod checkpoint;
mod net;
mod ops;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::TokenSeq;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use ops::{attention, gelu, rope, silu, Mat, NORM_EPS};
pub(crate) use net::Trace;

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Encoder,
    Decoder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    FirstToken,
    LastToken,
}

impl Flavor {
    pub fn default_pooling(self) -> Pooling {
        match self {
            Flavor::Encoder => Pooling::FirstToken,
            Flavor::Decoder => Pooling::LastToken,
        }
    }
}

impl FromStr for Flavor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder" => Ok(Flavor::Encoder),
            "decoder" => Ok(Flavor::Decoder),
            _ => Err(Error::config(format!("unknown flavor `{s}` (expected encoder or decoder)"))),
        }
    }
}

impl FromStr for Pooling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first_token" => Ok(Pooling::FirstToken),
            "last_token" => Ok(Pooling::LastToken),
            _ => Err(Error::config(format!(
                "unknown pooling `{s}` (expected first_token or last_token)"
            ))),
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flavor::Encoder => "encoder",
            Flavor::Decoder => "decoder",
        })
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::FirstToken => "first_token",
            Pooling::LastToken => "last_token",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub flavor: Flavor,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub pooling: Pooling,
    pub seed: u64,
}

impl ModelConfig {
    /// A small configuration (d=32, L=2, H=4, d_ff=64, max_len=64) with the
    /// flavor's default pooling.
    pub fn toy(flavor: Flavor, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            flavor,
            d_model: 32,
            n_layers: 2,
            n_heads: 4,
            d_ff: 64,
            vocab_size,
            max_len: 64,
            pooling: flavor.default_pooling(),
            seed: 0,
        }
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(m));
        if self.n_heads == 0 || self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model ({}) must be a positive multiple of n_heads ({})",
                self.d_model, self.n_heads
            ));
        }
        if self.flavor == Flavor::Decoder && self.d_head() % 2 != 0 {
            return fail(format!("rotary embeddings need an even head size, got {}", self.d_head()));
        }
        if self.n_layers < 1 {
            return fail("n_layers must be at least 1".into());
        }
        if self.max_len < 2 {
            return fail(format!("max_len must be at least 2, got {}", self.max_len));
        }
        if self.d_ff == 0 || self.vocab_size < 3 {
            return fail("d_ff must be positive and vocab_size at least 3".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub group: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub start: usize,
    pub end: usize,
    pub trainable: bool,
}

impl ParamGroup {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Clone, Copy)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerParams {
    pub norm1_g: usize,
    pub norm1_b: Option<usize>,
    pub wq: usize,
    pub bq: Option<usize>,
    pub wk: usize,
    pub bk: Option<usize>,
    pub wv: usize,
    pub bv: Option<usize>,
    pub wo: usize,
    pub bo: Option<usize>,
    pub norm2_g: usize,
    pub norm2_b: Option<usize>,
    /// Encoder up-projection or decoder gate projection.
    pub w1: usize,
    pub b1: Option<usize>,
    /// Decoder up-projection.
    pub w3: Option<usize>,
    pub w2: usize,
    pub b2: Option<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct Offsets {
    pub tok: usize,
    pub pos: Option<usize>,
    pub layers: Vec<LayerParams>,
    pub final_g: usize,
    pub final_b: Option<usize>,
    pub head_w1: usize,
    pub head_b1: usize,
    pub head_w2: usize,
    pub head_b2: usize,
}

struct LayoutBuilder {
    tensors: Vec<TensorInfo>,
    inits: Vec<Init>,
    groups: Vec<ParamGroup>,
    len: usize,
}

impl LayoutBuilder {
    fn group(&mut self, name: String) {
        self.groups.push(ParamGroup {
            name,
            start: self.len,
            end: self.len,
            trainable: true,
        });
    }

    fn push(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        let offset = self.len;
        let g = self.groups.len() - 1;
        self.tensors.push(TensorInfo {
            name,
            shape: shape.to_vec(),
            offset,
            group: g,
        });
        self.inits.push(init);
        self.len += shape.iter().product::<usize>();
        self.groups[g].end = self.len;
        offset
    }
}

fn build_layout(cfg: &ModelConfig) -> (Vec<TensorInfo>, Vec<Init>, Vec<ParamGroup>, Offsets) {
    use Init::*;
    let (d, f) = (cfg.d_model, cfg.d_ff);
    let enc = cfg.flavor == Flavor::Encoder;
    let mut b = LayoutBuilder {
        tensors: Vec::new(),
        inits: Vec::new(),
        groups: Vec::new(),
        len: 0,
    };
    b.group("embeddings".into());
    let tok = b.push("tok_embedding".into(), &[cfg.vocab_size, d], Normal);
    let pos = enc.then(|| b.push("pos_embedding".into(), &[cfg.max_len, d], Normal));
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for i in 1..=cfg.n_layers {
        b.group(format!("layer.{i}"));
        let p = |s: &str| format!("layer.{i}.{s}");
        let norm1_g = b.push(p("norm1.weight"), &[d], Ones);
        let norm1_b = enc.then(|| b.push(p("norm1.bias"), &[d], Zeros));
        let proj = |b: &mut LayoutBuilder, n: &str| {
            let w = b.push(p(&format!("attn.{n}.weight")), &[d, d], Normal);
            let bias = enc.then(|| b.push(p(&format!("attn.{n}.bias")), &[d], Zeros));
            (w, bias)
        };
        let (wq, bq) = proj(&mut b, "q");
        let (wk, bk) = proj(&mut b, "k");
        let (wv, bv) = proj(&mut b, "v");
        let (wo, bo) = proj(&mut b, "o");
        let norm2_g = b.push(p("norm2.weight"), &[d], Ones);
        let norm2_b = enc.then(|| b.push(p("norm2.bias"), &[d], Zeros));
        let lp = if enc {
            let w1 = b.push(p("ffn.w1.weight"), &[d, f], Normal);
            let b1 = b.push(p("ffn.w1.bias"), &[f], Zeros);
            let w2 = b.push(p("ffn.w2.weight"), &[f, d], Normal);
            let b2 = b.push(p("ffn.w2.bias"), &[d], Zeros);
            (w1, Some(b1), None, w2, Some(b2))
        } else {
            let w1 = b.push(p("ffn.gate.weight"), &[d, f], Normal);
            let w3 = b.push(p("ffn.up.weight"), &[d, f], Normal);
            let w2 = b.push(p("ffn.down.weight"), &[f, d], Normal);
            (w1, None, Some(w3), w2, None)
        };
        layers.push(LayerParams {
            norm1_g,
            norm1_b,
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
            norm2_g,
            norm2_b,
            w1: lp.0,
            b1: lp.1,
            w3: lp.2,
            w2: lp.3,
            b2: lp.4,
        });
    }
    b.group("final_norm".into());
    let final_g = b.push("final_norm.weight".into(), &[d], Ones);
    let final_b = enc.then(|| b.push("final_norm.bias".into(), &[d], Zeros));
    b.group("head".into());
    let head_w1 = b.push("head.dense.weight".into(), &[d, d], Normal);
    let head_b1 = b.push("head.dense.bias".into(), &[d], Zeros);
    let head_w2 = b.push("head.out.weight".into(), &[d], Normal);
    let head_b2 = b.push("head.out.bias".into(), &[1], Zeros);
    let offsets = Offsets {
        tok,
        pos,
        layers,
        final_g,
        final_b,
        head_w1,
        head_b1,
        head_w2,
        head_b2,
    };
    (b.tensors, b.inits, b.groups, offsets)
}

/// Post-softmax attention weights of one sequence for every layer and head.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTensor {
    pub n_layers: usize,
    pub n_heads: usize,
    pub len: usize,
    weights: Vec<f64>,
}

impl AttentionTensor {
    /// Wraps weights laid out as `[layer][head][query][key]`.
    pub fn from_weights(n_layers: usize, n_heads: usize, len: usize, weights: Vec<f64>) -> Result<AttentionTensor> {
        if weights.len() != n_layers * n_heads * len * len {
            return Err(Error::input(format!(
                "{} weights do not fill {n_layers}x{n_heads}x{len}x{len}",
                weights.len()
            )));
        }
        Ok(AttentionTensor {
            n_layers,
            n_heads,
            len,
            weights,
        })
    }

    fn index(&self, layer: usize, head: usize, query: usize) -> usize {
        assert!((1..=self.n_layers).contains(&layer), "layer {layer} outside 1..={}", self.n_layers);
        assert!(head < self.n_heads && query < self.len);
        (((layer - 1) * self.n_heads + head) * self.len + query) * self.len
    }

    /// Weights from `query` to every key in block `layer` (1-indexed).
    pub fn row(&self, layer: usize, head: usize, query: usize) -> &[f64] {
        let i = self.index(layer, head, query);
        &self.weights[i..i + self.len]
    }

    pub fn get(&self, layer: usize, head: usize, query: usize, key: usize) -> f64 {
        self.row(layer, head, query)[key]
    }
}

/// Output of [`RegressorModel::forward`] for one sequence.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Predicted band gap in eV.
    pub prediction: f64,
    pub attention: AttentionTensor,
    /// Pooled vectors for layers `0..=L`; entry `L` is the head input.
    pub hidden: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct RegressorModel {
    pub config: ModelConfig,
    pub params: Vec<f64>,
    pub target_mean: f64,
    pub target_scale: f64,
    tensors: Vec<TensorInfo>,
    groups: Vec<ParamGroup>,
    pub(crate) offsets: Offsets,
}

/// Builds a model with weights drawn from N(0, 0.02²), norm gains at one and
/// all biases at zero. The same seed gives bitwise-equal parameters.
pub fn init_model(cfg: &ModelConfig) -> Result<RegressorModel> {
    cfg.validate()?;
    let (tensors, inits, groups, offsets) = build_layout(cfg);
    let total = groups.last().map_or(0, |g| g.end);
    let mut params = vec![0.0; total];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    for (t, init) in tensors.iter().zip(inits) {
        let dst = &mut params[t.range()];
        match init {
            Init::Normal => dst.iter_mut().for_each(|x| *x = normal.sample(&mut rng)),
            Init::Zeros => {}
            Init::Ones => dst.fill(1.0),
        }
    }
    Ok(RegressorModel {
        config: cfg.clone(),
        params,
        target_mean: 0.0,
        target_scale: 1.0,
        tensors,
        groups,
        offsets,
    })
}

impl RegressorModel {
    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &self.params[t.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let r = self.tensors.iter().find(|t| t.name == name)?.range();
        Some(&mut self.params[r])
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    pub fn set_trainable(&mut self, group: &str, trainable: bool) -> Result<()> {
        let i = self
            .group_index(group)
            .ok_or_else(|| Error::input(format!("no parameter group `{group}`")))?;
        self.groups[i].trainable = trainable;
        Ok(())
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        self.groups.iter_mut().for_each(|g| g.trainable = trainable);
    }

    /// Total parameter count, or only the trainable part.
    pub fn count_params(&self, trainable_only: bool) -> usize {
        self.groups
            .iter()
            .filter(|g| !trainable_only || g.trainable)
            .map(ParamGroup::len)
            .sum()
    }

    /// Per-parameter trainable flag.
    pub fn trainable_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.params.len()];
        for g in self.groups.iter().filter(|g| g.trainable) {
            m[g.start..g.end].fill(true);
        }
        m
    }

    /// Number of leading transformer blocks whose output is fixed because
    /// the embeddings and those blocks are all frozen.
    pub fn frozen_prefix(&self) -> usize {
        if self.groups[0].trainable {
            return 0;
        }
        (1..=self.config.n_layers)
            .take_while(|&i| !self.groups[i].trainable)
            .count()
    }

    pub(crate) fn check_seq(&self, ts: &TokenSeq) -> Result<()> {
        if ts.ids.is_empty() || ts.ids.len() != ts.mask.len() {
            return Err(Error::input("token sequence is empty or its mask length differs"));
        }
        if ts.ids.len() > self.config.max_len {
            return Err(Error::input(format!(
                "sequence length {} exceeds max_len {}",
                ts.ids.len(),
                self.config.max_len
            )));
        }
        if let Some(&bad) = ts.ids.iter().find(|&&i| i as usize >= self.config.vocab_size) {
            return Err(Error::input(format!(
                "token id {bad} out of range for vocab_size {}",
                self.config.vocab_size
            )));
        }
        if ts.mask[0] == 0 {
            return Err(Error::input("position 0 must be a real token"));
        }
        Ok(())
    }

    /// Position read by the regression head under `pooling`.
    pub fn pooling_position(&self, ts: &TokenSeq, pooling: Pooling) -> usize {
        match pooling {
            Pooling::FirstToken => 0,
            Pooling::LastToken => ts.mask.iter().rposition(|&m| m != 0).unwrap_or(0),
        }
    }

    /// Full forward pass over a batch.
    pub fn forward(&self, batch: &[TokenSeq]) -> Result<Vec<Forward>> {
        if batch.is_empty() {
            return Err(Error::input("empty batch"));
        }
        batch
            .par_iter()
            .map(|ts| {
                self.check_seq(ts)?;
                let tr = self.trace(ts, 0)?;
                let pos = tr.pos;
                let mut hidden: Vec<Vec<f64>> =
                    tr.layers.iter().map(|l| l.x_in.row(pos).to_vec()).collect();
                hidden.push(tr.hf.row(pos).to_vec());
                Ok(Forward {
                    prediction: self.scale_output(tr.out),
                    attention: tr.attention_tensor(self.config.n_heads),
                    hidden,
                })
            })
            .collect()
    }

    /// Predictions only.
    pub fn predict(&self, seqs: &[TokenSeq]) -> Result<Vec<f64>> {
        seqs.par_iter()
            .map(|ts| {
                self.check_seq(ts)?;
                Ok(self.scale_output(self.trace(ts, 0)?.out))
            })
            .collect()
    }

    pub(crate) fn scale_output(&self, out: f64) -> f64 {
        self.target_mean + self.target_scale * out
    }

    /// Hidden state at the pooling position after block `layer`
    /// (`0` = embedding output). For `layer == L` this is the post-final-norm
    /// vector the regression head consumes.
    pub fn pooled_embedding(&self, ts: &TokenSeq, layer: usize, pooling: Pooling) -> Result<Vec<f64>> {
        let l = self.config.n_layers;
        if layer > l {
            return Err(Error::input(format!("layer {layer} outside 0..={l}")));
        }
        self.check_seq(ts)?;
        let pos = self.pooling_position(ts, pooling);
        let mut x = self.embed(&ts.ids);
        if layer == 0 {
            return Ok(x.row(pos).to_vec());
        }
        for lp in &self.offsets.layers[..layer] {
            x = self.layer_forward(lp, x, &ts.mask)?.0;
        }
        if layer == l {
            x = self.final_norm(&x).0;
        }
        Ok(x.row(pos).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_tile_parameters() {
        for flavor in [Flavor::Encoder, Flavor::Decoder] {
            let m = init_model(&ModelConfig::toy(flavor, 50)).unwrap();
            let mut end = 0;
            for g in m.groups() {
                assert_eq!(g.start, end);
                end = g.end;
            }
            assert_eq!(end, m.params.len());
            let names: Vec<&str> = m.groups().iter().map(|g| g.name.as_str()).collect();
            assert_eq!(names, ["embeddings", "layer.1", "layer.2", "final_norm", "head"]);
        }
    }

    #[test]
    fn odd_head_size_rejected_for_decoder() {
        let mut c = ModelConfig::toy(Flavor::Decoder, 10);
        c.d_model = 12;
        c.n_heads = 4;
        assert!(init_model(&c).is_err());
        c.flavor = Flavor::Encoder;
        assert!(init_model(&c).is_ok());
    }
}
