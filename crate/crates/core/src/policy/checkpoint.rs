//! Versioned JSON checkpoints: layer shapes, row-major parameters and the
//! optimizer state. Floats round-trip exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::network::{QNetwork, Tensor};
use crate::config::DqnVariant;
use crate::error::{DdrError, Result};

pub const FORMAT: &str = "ddr-qnetwork";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub variant: DqnVariant,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub params: Vec<Tensor>,
    pub optimizer: Option<Adam>,
    /// Epoch the parameters come from, if saved during training.
    pub epoch: Option<usize>,
}

impl Checkpoint {
    pub fn new(net: &QNetwork, variant: DqnVariant, optimizer: Option<&Adam>, epoch: Option<usize>) -> Self {
        Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            variant,
            input_dim: net.input_dim(),
            hidden_dim: net.hidden_dim(),
            output_dim: net.output_dim(),
            params: net.params().to_vec(),
            optimizer: optimizer.cloned(),
            epoch,
        }
    }

    pub fn network(&self) -> Result<QNetwork> {
        QNetwork::from_parts(
            self.input_dim,
            self.hidden_dim,
            self.output_dim,
            self.variant == DqnVariant::Dueling,
            self.params.clone(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != FORMAT {
            return Err(DdrError::Checkpoint(format!("unexpected format `{}`", ck.format)));
        }
        if ck.version != VERSION {
            return Err(DdrError::Checkpoint(format!("unsupported version {}", ck.version)));
        }
        ck.network()?;
        if let Some(opt) = &ck.optimizer {
            let ok = opt.first_moment.len() == ck.params.len()
                && opt.second_moment.len() == ck.params.len()
                && ck.params.iter().enumerate().all(|(i, p)| {
                    opt.first_moment[i].len() == p.data.len() && opt.second_moment[i].len() == p.data.len()
                });
            if !ok {
                return Err(DdrError::Checkpoint("optimizer moments do not mirror parameters".into()));
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
