//! Architecture configuration.

use serde::{Deserialize, Serialize};

use crate::data::N_ACTIONS;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Input channels per state (d).
    pub state_dim: usize,
    /// Encoder width (h).
    pub hidden: usize,
    /// History length (L).
    pub window: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Feed-forward width inside each encoder block.
    pub ff_hidden: usize,
    /// Hidden width of the Q-head MLP.
    pub mlp_hidden: usize,
    /// Output dimension of the Q-head (|A|).
    pub n_actions: usize,
    /// Fixed sinusoidal positional encodings added to the embeddings.
    pub use_positional: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            state_dim: 24,
            hidden: 64,
            window: 4,
            n_layers: 2,
            n_heads: 4,
            ff_hidden: 128,
            mlp_hidden: 256,
            n_actions: N_ACTIONS,
            use_positional: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0
            || self.hidden == 0
            || self.window == 0
            || self.n_layers == 0
            || self.n_heads == 0
            || self.ff_hidden == 0
            || self.mlp_hidden == 0
            || self.n_actions == 0
        {
            return Err(Error::Config("model dimensions must all be >= 1".into()));
        }
        if self.hidden % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "hidden {} must be divisible by n_heads {}",
                self.hidden, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.n_heads
    }
}
