use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedmap::{ColorBy, TsneConfig};
use crate::error::{Error, Result};
use crate::model::{Flavor, ModelConfig, Pooling};
use crate::textgen::TextFormat;
use crate::trainer::TrainConfig;

use super::Stage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub name: String,
    /// Parent of the run directories, relative to the config file.
    pub out_dir: PathBuf,
    /// Master seed for data generation, splitting, initialization, training,
    /// t-SNE and the forest.
    pub seed: u64,
    /// Single worker thread for all numeric work.
    pub deterministic: bool,
    pub stages: Vec<Stage>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            name: "run".into(),
            out_dir: "runs".into(),
            seed: 0,
            deterministic: true,
            stages: Stage::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// JSON-lines record file, relative to the config file. Synthetic data
    /// is generated when absent.
    pub path: Option<PathBuf>,
    /// Number of synthetic records.
    pub n: usize,
    pub bandgap_min: f64,
    /// No upper bound when absent.
    pub bandgap_max: Option<f64>,
    pub bins: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            path: None,
            n: 64,
            bandgap_min: 0.0,
            bandgap_max: None,
            bins: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextSection {
    pub format: TextFormat,
    /// Optional JSON-lines file of `{"id": <record index>, "text": "..."}`
    /// descriptions used instead of the template in description mode.
    pub descriptions: Option<PathBuf>,
}

impl Default for TextSection {
    fn default() -> Self {
        TextSection {
            format: TextFormat::Structured,
            descriptions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerSection {
    pub max_size: usize,
    pub max_len: usize,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        TokenizerSection {
            max_size: 512,
            max_len: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub flavor: Flavor,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Defaults to first_token for the encoder, last_token for the decoder.
    pub pooling: Option<Pooling>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            flavor: Flavor::Encoder,
            d_model: 32,
            n_layers: 2,
            n_heads: 4,
            d_ff: 64,
            pooling: None,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, vocab_size: usize, max_len: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            flavor: self.flavor,
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            vocab_size,
            max_len,
            pooling: self.pooling.unwrap_or(self.flavor.default_pooling()),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttnSection {
    /// `first`, `last` or 1-based block numbers.
    pub layers: Vec<String>,
    /// Records scored: the test split, or all records with `all = true`.
    pub all: bool,
}

impl Default for AttnSection {
    fn default() -> Self {
        AttnSection {
            layers: vec!["first".into(), "last".into()],
            all: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TsneSection {
    /// Block whose pooled output is mapped; defaults to the last.
    pub layer: Option<usize>,
    pub color_by: ColorBy,
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    /// Neighborhood size for the trustworthiness statistic.
    pub trust_k: usize,
}

impl Default for TsneSection {
    fn default() -> Self {
        let t = TsneConfig::default();
        TsneSection {
            layer: None,
            color_by: ColorBy::CrystalSystem,
            perplexity: t.perplexity,
            iterations: t.iterations,
            learning_rate: t.learning_rate,
            exaggeration: t.exaggeration,
            exaggeration_iters: t.exaggeration_iters,
            trust_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    /// Grid file relative to the config file; a single default point when
    /// absent.
    pub grid: Option<PathBuf>,
    pub folds: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection { grid: None, folds: 5 }
    }
}

/// Full pipeline configuration, read from TOML. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub run: RunSection,
    pub data: DataSection,
    pub text: TextSection,
    pub tokenizer: TokenizerSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub attn: AttnSection,
    pub tsne: TsneSection,
    pub baseline: BaselineSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<PipelineConfig> {
        let c: PipelineConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let mut c = PipelineConfig::from_toml(&fs::read_to_string(path)?)?;
        c.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(c)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.model.model_config(4, self.tokenizer.max_len, 0).validate()?;
        if self.data.path.is_none() && self.data.n < 10 {
            return Err(Error::config("data.n must be at least 10"));
        }
        if self.tokenizer.max_size < 4 || self.tokenizer.max_len < 2 {
            return Err(Error::config("tokenizer.max_size must be ≥ 4 and max_len ≥ 2"));
        }
        if self.baseline.folds < 2 {
            return Err(Error::config("baseline.folds must be at least 2"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}
