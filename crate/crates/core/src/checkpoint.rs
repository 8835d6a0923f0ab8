//! Policy checkpoints: a JSON document holding the network shape and its
//! flat parameter vector. Floats are written in shortest round-trip form,
//! so save then load reproduces the parameters bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{NetConfig, PolicyNet};

pub const FORMAT: &str = "kitchen-ued/checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub policy_id: String,
    pub iteration: usize,
    pub net: NetConfig,
    /// Fingerprint of the PPO configuration that produced the weights.
    pub ppo_fingerprint: Option<String>,
    pub fingerprint: String,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_net(
        policy_id: impl Into<String>,
        iteration: usize,
        net: &PolicyNet,
        ppo_fingerprint: Option<String>,
    ) -> Self {
        Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            policy_id: policy_id.into(),
            iteration,
            net: net.config().clone(),
            ppo_fingerprint,
            fingerprint: net.fingerprint(),
            params: net.params().to_vec(),
        }
    }

    pub fn to_net(&self) -> Result<PolicyNet> {
        PolicyNet::from_params(self.net.clone(), self.params.clone())
    }

    /// Writes to a temporary sibling file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, serde_json::to_vec(self)?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Reads and validates a checkpoint: format tag, version, parameter
    /// count and fingerprint must all agree.
    pub fn load(path: &Path) -> Result<Checkpoint> {
        let err = |message: String| Error::Checkpoint {
            path: path.display().to_string(),
            message,
        };
        let bytes = fs::read(path).map_err(|e| err(e.to_string()))?;
        let ckpt: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| err(e.to_string()))?;
        if ckpt.format != FORMAT || ckpt.version != VERSION {
            return Err(err(format!(
                "unsupported format {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let net = ckpt.to_net().map_err(|e| err(e.to_string()))?;
        if net.fingerprint() != ckpt.fingerprint {
            return Err(err("parameter fingerprint does not match".into()));
        }
        Ok(ckpt)
    }
}
