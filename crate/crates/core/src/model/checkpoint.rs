use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::features::Normalizer;
use crate::graph::{hop_mask, HopMask, RoadGraph};

pub const CHECKPOINT_FORMAT: &str = "roadcast-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON container for a trained model and the record of how it was trained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub link_ids: Vec<String>,
    pub config: ModelConfig,
    pub mask: HopMask,
    pub normalizer: Normalizer,
    pub params: ModelParams,
    /// Free-form hyperparameter and data record.
    #[serde(default)]
    pub training: serde_json::Value,
}

impl Checkpoint {
    pub fn new(model: &Model, link_ids: &[String], training: serde_json::Value) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            link_ids: link_ids.to_vec(),
            config: model.config().clone(),
            mask: model.mask().clone(),
            normalizer: model.normalizer().clone(),
            params: model.params().clone(),
            training,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::validation(format!("not a checkpoint: format `{}`", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::validation(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }

    /// Rebuilds the model without a graph; checks internal consistency only.
    pub fn into_model(self) -> Result<Model> {
        if self.link_ids.len() != self.mask.size() {
            return Err(Error::validation("checkpoint link list and mask disagree on size"));
        }
        if self.mask.order() != self.config.order || self.mask.mode() != self.config.hop_mode {
            return Err(Error::validation(
                "checkpoint mask does not match its configured hop order and mode",
            ));
        }
        Model::from_parts(self.config, self.mask, self.normalizer, self.params)
    }

    /// Rebuilds the model and checks it against `graph`: same links in the
    /// same order, and a mask equal to the one the graph induces.
    pub fn into_model_for(self, graph: &RoadGraph) -> Result<Model> {
        if self.link_ids != graph.link_ids() {
            return Err(Error::validation(format!(
                "checkpoint was trained on {} links that do not match the graph's {}",
                self.link_ids.len(),
                graph.link_count()
            )));
        }
        if hop_mask(graph, self.config.order, self.config.hop_mode) != self.mask {
            return Err(Error::validation(
                "checkpoint hop mask differs from the one induced by the graph",
            ));
        }
        self.into_model()
    }
}
