//! On-disk formats: datasets, checkpoints, embedding files, PNG images and
//! run configuration.

pub(crate) mod binary;
pub mod checkpoint;
pub mod dataset;
pub mod embeddings;
pub mod image;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use binary::write_atomic;
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use dataset::{load_dataset, save_dataset, Dataset, DatasetManifest, Frame, FrameEntry};
pub use embeddings::{load_embeddings, load_query_embeddings, save_embeddings, save_query_lookup, QueryLookup};

use crate::error::{Error, Result};
use crate::train::{LossConfig, TrainConfig};

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub loss: LossConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.loss.validate()
    }
}
