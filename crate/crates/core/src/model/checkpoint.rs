//! JSON checkpoint container.
//!
//! ```text
//! { "format": "gaptext-checkpoint", "version": 1,
//!   "config": {..}, "target_mean": .., "target_scale": ..,
//!   "groups": [{"name", "trainable"}], "tensors": [{"name", "shape", "data"}],
//!   "vocab": ["<pad>", ..] | null }
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{init_model, ModelConfig, RegressorModel};
use crate::error::{Error, Result};
use crate::tokenizer::Vocab;

pub const CHECKPOINT_FORMAT: &str = "gaptext-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupEntry {
    pub name: String,
    pub trainable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub target_mean: f64,
    pub target_scale: f64,
    pub groups: Vec<GroupEntry>,
    pub tensors: Vec<TensorEntry>,
    pub vocab: Option<Vec<String>>,
}

impl Checkpoint {
    pub fn from_model(m: &RegressorModel, vocab: Option<&Vocab>) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: m.config.clone(),
            target_mean: m.target_mean,
            target_scale: m.target_scale,
            groups: m
                .groups()
                .iter()
                .map(|g| GroupEntry {
                    name: g.name.clone(),
                    trainable: g.trainable,
                })
                .collect(),
            tensors: m
                .tensors()
                .iter()
                .map(|t| TensorEntry {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: m.params[t.range()].to_vec(),
                })
                .collect(),
            vocab: vocab.map(|v| v.tokens().to_vec()),
        }
    }

    pub fn into_model(self) -> Result<(RegressorModel, Option<Vocab>)> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::input(format!("not a checkpoint: format `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::input(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let mut m = init_model(&self.config)?;
        if self.tensors.len() != m.tensors().len() {
            return Err(Error::input("checkpoint tensor list does not match its config"));
        }
        for (entry, info) in self.tensors.iter().zip(m.tensors().to_vec()) {
            if entry.name != info.name || entry.shape != info.shape || entry.data.len() != info.len() {
                return Err(Error::input(format!("tensor `{}` does not match the layout", entry.name)));
            }
            m.params[info.range()].copy_from_slice(&entry.data);
        }
        for g in &self.groups {
            m.set_trainable(&g.name, g.trainable)?;
        }
        m.target_mean = self.target_mean;
        m.target_scale = self.target_scale;
        let vocab = match self.vocab {
            Some(tokens) => {
                let mut text = String::new();
                for (i, t) in tokens.iter().enumerate() {
                    text.push_str(&format!("{t}\t{i}\n"));
                }
                Some(Vocab::from_text(&text)?)
            }
            None => None,
        };
        Ok((m, vocab))
    }
}

pub fn save_checkpoint(path: &Path, m: &RegressorModel, vocab: Option<&Vocab>) -> Result<()> {
    let s = serde_json::to_string(&Checkpoint::from_model(m, vocab))?;
    fs::write(path, s)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(RegressorModel, Option<Vocab>)> {
    let c: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
    c.into_model()
}
