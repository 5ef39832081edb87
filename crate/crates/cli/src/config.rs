//! Experiment configuration file.
//!
//! TOML with one table per component. Every table except `[hamiltonian]` may
//! be omitted, and every key inside them has a default:
//!
//! ```toml
//! output_dir = "runs/desk"
//!
//! [hamiltonian]
//! j = 10.0
//! h = 10.0
//! n = 4
//!
//! [pool]
//! variant = "standard"          # or "enlarged"
//! angle_exponents = [1, 2, 3, 4, 5]
//!
//! [model]
//! n_layers = 4
//! n_heads = 4
//! d_model = 128
//! d_ff = 512
//! max_seq_len = 16
//! seed = 0
//! readout_gain = 7.0            # 0 for the plain initialization
//!
//! [train]
//! beta = 0.3
//! m = 10
//! t = 12
//! tau = 0.5
//! lr = 4e-4
//! weight_decay = 0.01
//! epochs = 700
//! checkpoint_every = 50
//! n_best_checkpoints = 3
//! eval_samples = 100
//! seed = 0
//!
//! [postprocess]
//! method = "quasi-newton"       # or "derivative-free"
//! max_iters = 500
//! gradient_tolerance = 1e-7
//! energy_tolerance = 1e-9
//! repeat_until_converged = false
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spingqe::model::ModelConfig;
use spingqe::pool::{default_exponents, PoolConfig, PoolVariant};
use spingqe::postprocess::RefineConfig;
use spingqe::trainer::TrainConfig;
use spingqe::HeisenbergSpec;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

/// `[pool]` without the qubit count, which comes from the Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolSection {
    pub variant: PoolVariant,
    pub angle_exponents: Vec<u32>,
}

impl Default for PoolSection {
    fn default() -> Self {
        Self {
            variant: PoolVariant::Standard,
            angle_exponents: default_exponents(),
        }
    }
}

/// `[model]` without the vocabulary size, which comes from the pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub seed: u64,
    /// Final norm gain paired with a zeroed output projection. 0 selects the
    /// plain initialization.
    pub readout_gain: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::desk(2);
        Self {
            n_layers: d.n_layers,
            n_heads: d.n_heads,
            d_model: d.d_model,
            d_ff: d.d_ff,
            max_seq_len: d.max_seq_len,
            seed: d.seed,
            readout_gain: d.readout_gain.unwrap_or(0.0),
        }
    }
}

impl ModelSection {
    pub fn with_vocab(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            vocab_size,
            max_seq_len: self.max_seq_len,
            seed: self.seed,
            readout_gain: (self.readout_gain != 0.0).then_some(self.readout_gain),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub hamiltonian: HeisenbergSpec,
    #[serde(default)]
    pub pool: PoolSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub postprocess: RefineConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    /// Defaults everywhere except the Hamiltonian.
    pub fn with_hamiltonian(hamiltonian: HeisenbergSpec) -> Self {
        Self {
            hamiltonian,
            pool: PoolSection::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            postprocess: RefineConfig::default(),
            output_dir: default_output_dir(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg = Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })?;
        Ok(cfg)
    }

    /// Parses and validates.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: "<config>".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn pool_config(&self) -> PoolConfig {
        PoolConfig {
            n_qubits: self.hamiltonian.n,
            variant: self.pool.variant,
            angle_exponents: self.pool.angle_exponents.clone(),
        }
    }

    /// Every violated constraint across all sections.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if let Err(e) = self.hamiltonian.validate() {
            p.push(format!("hamiltonian: {e}"));
        }
        if self.hamiltonian.n > spingqe::state::MAX_QUBITS {
            p.push(format!(
                "hamiltonian.n must be at most {}, got {}",
                spingqe::state::MAX_QUBITS,
                self.hamiltonian.n
            ));
        }
        let pool = self.pool_config();
        match pool.validate() {
            Err(e) => p.push(format!("pool: {e}")),
            Ok(()) => {
                if let Ok(vocab) = spingqe::build_vocabulary(&pool) {
                    if let Err(e) = self.model.with_vocab(vocab.len()).validate() {
                        p.push(format!("model: {e}"));
                    }
                }
            }
        }
        if self.train.t > self.model.max_seq_len {
            p.push(format!(
                "train.t ({}) exceeds model.max_seq_len ({})",
                self.train.t, self.model.max_seq_len
            ));
        }
        p.extend(self.train.problems());
        p.extend(self.postprocess.problems());
        p
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(p))
        }
    }

    /// Single-line JSON of the resolved config, for CSV metadata.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
