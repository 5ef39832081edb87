//! Decoder-only transformer over the gate vocabulary.
//!
//! Pre-norm residual blocks, learned positional embeddings, tanh-GELU
//! feed-forward, untied output projection. Forward and backward passes are
//! written out by hand on `ndarray` matrices in double precision.
//!
//! Sign convention: logits are trained toward energies, so *lower* logits are
//! better and sampling draws token `i` with probability `∝ exp(-logit_i / τ)`.

mod checkpoint;
mod params;
mod sampling;
mod transformer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, CheckpointError};
pub use params::{LayerParams, Params};
pub use sampling::{sample_circuits, sample_from_logits, SampledSequence};
pub use transformer::{average_checkpoints, ForwardCache, TransformerModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of length {len} exceeds max_seq_len {max}")]
    OverLength { len: usize, max: usize },
    #[error("token id {id} outside vocabulary of {vocab_size}")]
    UnknownToken { id: usize, vocab_size: usize },
    #[error("sequence is empty")]
    EmptySequence,
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("no checkpoints to average")]
    NoCheckpoints,
    #[error("invalid sampling request: {0}")]
    BadSampling(String),
}

pub const DESK_READOUT_GAIN: f64 = 7.0;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub seed: u64,
    /// When set, the output projection starts at zero and the final norm gain
    /// at this value, so logits can reach energy scale within a few hundred
    /// steps. `None` keeps the plain initialization.
    #[serde(default)]
    pub readout_gain: Option<f64>,
}

impl ModelConfig {
    /// Desk-scale default: 4 layers, 4 heads, width 128 (about 0.8M parameters
    /// for the 4-qubit standard pool), readout gain 7.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            n_layers: 4,
            n_heads: 4,
            d_model: 128,
            d_ff: 512,
            vocab_size,
            max_seq_len: 16,
            seed: 0,
            readout_gain: Some(DESK_READOUT_GAIN),
        }
    }

    /// 12 layers, 8 heads, width 512.
    pub fn medium(vocab_size: usize) -> Self {
        Self {
            n_layers: 12,
            n_heads: 8,
            d_model: 512,
            d_ff: 2048,
            readout_gain: None,
            ..Self::desk(vocab_size)
        }
    }

    /// Tiny config used for gradient checks.
    pub fn tiny(vocab_size: usize) -> Self {
        Self {
            n_layers: 2,
            n_heads: 2,
            d_model: 16,
            d_ff: 64,
            vocab_size,
            max_seq_len: 16,
            seed: 0,
            readout_gain: None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut problems = Vec::new();
        if self.n_layers == 0 {
            problems.push("n_layers must be positive".to_string());
        }
        if self.n_heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            problems.push(format!(
                "d_model ({}) must be a positive multiple of n_heads ({})",
                self.d_model, self.n_heads
            ));
        }
        if self.d_ff == 0 {
            problems.push("d_ff must be positive".to_string());
        }
        if self.vocab_size < 2 {
            problems.push("vocab_size must include BOS and at least one gate".to_string());
        }
        if self.max_seq_len == 0 {
            problems.push("max_seq_len must be positive".to_string());
        }
        if let Some(g) = self.readout_gain {
            if !(g > 0.0 && g.is_finite()) {
                problems.push(format!("readout_gain must be positive, got {g}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidConfig(problems.join("; ")))
        }
    }

    /// Equal up to the initialization seed.
    pub fn same_architecture(&self, other: &ModelConfig) -> bool {
        ModelConfig { seed: 0, ..*self } == ModelConfig { seed: 0, ..*other }
    }

    /// Closed-form parameter count.
    pub fn parameter_count(&self) -> usize {
        let (d, f, v, l) = (self.d_model, self.d_ff, self.vocab_size, self.max_seq_len);
        let per_layer = 2 * d + (d * 3 * d + 3 * d) + (d * d + d) + 2 * d + (d * f + f) + (f * d + d);
        v * d + l * d + self.n_layers * per_layer + 2 * d + d * v + v
    }
}
