//! Versioned JSON snapshot of a trained network.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use wuxing_core::{ElementVector, Network, NetworkGraph};

use crate::HarnessError;

pub const CHECKPOINT_FORMAT: &str = "wuxing-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub epochs_completed: usize,
    /// Word position of the ChaCha8 stream that orders training samples,
    /// as a decimal string (the value is a `u128`).
    pub rng_word_pos: String,
    pub graph: NetworkGraph,
    pub forward_fixed_points: Vec<ElementVector>,
    pub backward_fixed_points: Vec<ElementVector>,
}

impl Checkpoint {
    pub fn new(net: &Network, seed: u64, epochs_completed: usize, rng_word_pos: u128) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            seed,
            epochs_completed,
            rng_word_pos: rng_word_pos.to_string(),
            graph: net.graph().clone(),
            forward_fixed_points: net.forward_fixed_points().to_vec(),
            backward_fixed_points: net.backward_fixed_points().to_vec(),
        }
    }

    pub fn word_pos(&self) -> Result<u128, HarnessError> {
        self.rng_word_pos
            .parse()
            .map_err(|_| HarnessError::Checkpoint(format!("bad rng position {:?}", self.rng_word_pos)))
    }

    /// Rebuilds the network; the graph is re-validated and the stored
    /// equilibria must match it in count.
    pub fn network(&self) -> Result<Network, HarnessError> {
        Network::with_fixed_points(
            self.graph.clone(),
            self.forward_fixed_points.clone(),
            self.backward_fixed_points.clone(),
        )
        .map_err(|e| HarnessError::Checkpoint(format!("graph mismatch: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let ck: Self =
            serde_json::from_str(text).map_err(|e| HarnessError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(HarnessError::Checkpoint(format!("not a checkpoint (format {:?})", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(HarnessError::Checkpoint(format!(
                "version {} is not supported (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        ck.word_pos()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        fs::write(path, self.to_json()).map_err(HarnessError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&fs::read_to_string(path).map_err(HarnessError::io(path))?)
    }
}
