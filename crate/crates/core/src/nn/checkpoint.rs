use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayerSpec, Network, NnError, OptimizerState, Shape};
use crate::image::PixelRange;
use crate::losses::LossFunction;

pub const CHECKPOINT_FORMAT: &str = "percept-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkRecord {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
    pub params: Vec<f64>,
    pub seed: u64,
}

impl From<&Network> for NetworkRecord {
    fn from(n: &Network) -> Self {
        NetworkRecord {
            input: n.input_shape(),
            layers: n.specs(),
            params: n.params().to_vec(),
            seed: n.seed(),
        }
    }
}

impl NetworkRecord {
    pub fn to_network(&self) -> Result<Network, NnError> {
        Network::from_parts(&self.layers, self.input, self.params.clone(), self.seed)
    }
}

/// What the stored networks are for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelRole {
    /// One network under the name `"autoencoder"`.
    Autoencoder,
    /// Networks `"encoder"` (emitting `2 * latent_dim` values) and `"decoder"`.
    Elvae { latent_dim: usize, c: f64 },
    /// One network `"model"` applied to the bicubic upscale; `residual` adds
    /// its output to that upscale.
    SuperResolution { scale: usize, residual: bool },
}

/// JSON container for trained networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelRole,
    pub networks: BTreeMap<String, NetworkRecord>,
    #[serde(default)]
    pub optimizer: Option<OptimizerState>,
    #[serde(default)]
    pub loss: Option<LossFunction>,
    #[serde(default)]
    pub pixel_range: Option<PixelRange>,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(model: ModelRole, networks: &[(&str, &Network)], seed: u64) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            model,
            networks: networks
                .iter()
                .map(|(k, n)| (k.to_string(), NetworkRecord::from(*n)))
                .collect(),
            optimizer: None,
            loss: None,
            pixel_range: None,
            seed,
        }
    }

    pub fn network(&self, name: &str) -> Result<Network, NnError> {
        self.networks
            .get(name)
            .ok_or_else(|| NnError::Checkpoint(format!("no network named {name:?}")))?
            .to_network()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, NnError> {
        let c: Checkpoint =
            serde_json::from_str(s).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(NnError::Checkpoint(format!("unknown format {:?}", c.format)));
        }
        if c.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {}", c.version)));
        }
        // Fail early on malformed networks rather than at first use.
        for rec in c.networks.values() {
            rec.to_network()?;
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
