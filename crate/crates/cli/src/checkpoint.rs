//! Self-describing JSON checkpoints.

use std::fs;
use std::path::Path;

use cotask_core::data::{LabelSchema, Vocabulary};
use cotask_core::params::Param;
use cotask_core::train::TrainConfig;
use cotask_core::{Model, ModelConfig, Parameters, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub frozen: bool,
    /// Row-major values.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub schema: LabelSchema,
    /// Id-ordered tokens.
    pub vocabulary: Vec<String>,
    pub parameters: Vec<NamedArray>,
    pub selected_threshold: f64,
}

/// A checkpoint turned back into live objects.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub model: Model,
    pub vocabulary: Vocabulary,
    pub schema: LabelSchema,
    pub train_config: TrainConfig,
    pub threshold: f64,
}

impl Checkpoint {
    pub fn new(model: &Model, train_config: &TrainConfig, schema: &LabelSchema, vocabulary: &Vocabulary, threshold: f64) -> Self {
        let parameters = model
            .params()
            .iter()
            .map(|p| NamedArray {
                name: p.name.clone(),
                shape: p.tensor.shape().to_vec(),
                frozen: p.frozen,
                values: p.tensor.data().to_vec(),
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            model_config: model.config().clone(),
            train_config: train_config.clone(),
            schema: schema.clone(),
            vocabulary: vocabulary.tokens().to_vec(),
            parameters,
            selected_threshold: threshold,
        }
    }

    pub fn into_loaded(self) -> cotask_core::Result<Loaded> {
        use cotask_core::Error;
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.vocabulary.len() != self.model_config.encoder.vocab_size {
            return Err(Error::Config(format!(
                "vocabulary has {} tokens but the encoder expects {}",
                self.vocabulary.len(),
                self.model_config.encoder.vocab_size
            )));
        }
        self.schema.validate()?;
        let entries = self
            .parameters
            .into_iter()
            .map(|a| {
                Ok(Param {
                    name: a.name,
                    tensor: Tensor::new(a.shape, a.values)?,
                    frozen: a.frozen,
                })
            })
            .collect::<cotask_core::Result<Vec<_>>>()?;
        let model = Model::from_parts(self.model_config, Parameters::from_entries(entries)?)?;
        Ok(Loaded {
            model,
            vocabulary: Vocabulary::from_tokens(self.vocabulary),
            schema: self.schema,
            train_config: self.train_config,
            threshold: self.selected_threshold,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Reads and validates a checkpoint file.
pub fn load_checkpoint(path: &Path) -> CliResult<Loaded> {
    Checkpoint::load(path)?.into_loaded().map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
