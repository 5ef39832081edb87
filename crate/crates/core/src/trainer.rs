//! Online training loop.
//!
//! Every epoch samples `M` circuits, evaluates the energy of each circuit
//! prefix, and regresses the model's cumulative logits onto those energies
//! with a sigmoid weight `w(E_T) = 1 / (1 + exp(β E_T))` favouring circuits
//! whose final energy is low. Energies and weights are constants in the loss.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::prefix_energies;
use crate::hamiltonian::Hamiltonian;
use crate::model::{
    average_checkpoints, load_checkpoint_for, sample_circuits, save_checkpoint, CheckpointError, ModelError,
    Params, TransformerModel,
};
use crate::optim::{AdamW, AdamWConfig};
use crate::pool::{PoolError, Template, Vocabulary};
use crate::state::{SimError, StateVector};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("sequence {index}: {logits} cumulative logits but {energies} energies")]
    LengthMismatch {
        index: usize,
        logits: usize,
        energies: usize,
    },
    #[error("non-finite loss at epoch {}: {}", .0.epoch, .0.loss)]
    NonFiniteLoss(Box<EpochRecord>),
    #[error("need at least {needed} checkpoints, found {found}")]
    TooFewCheckpoints { needed: usize, found: usize },
    #[error("vocabulary is for {vocab} qubits, Hamiltonian for {hamiltonian}")]
    QubitMismatch { vocab: usize, hamiltonian: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("cannot create checkpoint directory {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Sharpness of the energy weighting.
    pub beta: f64,
    /// Circuits sampled per epoch.
    pub m: usize,
    /// Gates per circuit.
    pub t: usize,
    /// Generation temperature.
    pub tau: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub checkpoint_every: usize,
    pub n_best_checkpoints: usize,
    /// Circuits sampled per checkpoint when ranking checkpoints.
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.3,
            m: 10,
            t: 12,
            tau: 0.5,
            lr: 4e-4,
            weight_decay: 0.01,
            epochs: 700,
            checkpoint_every: 50,
            n_best_checkpoints: 3,
            eval_samples: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Every violated constraint, one message per field.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            p.push(format!("train.beta must be positive, got {}", self.beta));
        }
        if self.m == 0 {
            p.push("train.m must be at least 1".into());
        }
        if self.t == 0 {
            p.push("train.t must be at least 1".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            p.push(format!("train.tau must be positive, got {}", self.tau));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            p.push(format!("train.lr must be positive, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            p.push(format!("train.weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.checkpoint_every == 0 {
            p.push("train.checkpoint_every must be at least 1".into());
        }
        if self.n_best_checkpoints == 0 {
            p.push("train.n_best_checkpoints must be at least 1".into());
        }
        if self.eval_samples == 0 {
            p.push("train.eval_samples must be at least 1".into());
        }
        p
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(TrainError::InvalidConfig(p.join("; ")))
        }
    }
}

/// Statistics of one epoch's batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Final-circuit energy of each sampled circuit.
    pub energies_final: Vec<f64>,
    pub loss: f64,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub sequences: Vec<Vec<usize>>,
}

/// `1 / (1 + exp(β E))`, saturating to exactly 0 or 1 when `|βE| > 700`.
pub fn energy_weight(energy: f64, beta: f64) -> f64 {
    let x = beta * energy;
    if x > 700.0 {
        0.0
    } else if x < -700.0 {
        1.0
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Per-circuit loss inputs: cumulative logits `l_1..l_T` and prefix energies `E_1..E_T`.
#[derive(Debug, Clone, Copy)]
pub struct LossTerm<'a> {
    pub cumulative_logits: &'a [f64],
    pub energies: &'a [f64],
}

fn check_lengths(batch: &[LossTerm<'_>]) -> Result<(), TrainError> {
    for (index, term) in batch.iter().enumerate() {
        if term.cumulative_logits.len() != term.energies.len() || term.energies.is_empty() {
            return Err(TrainError::LengthMismatch {
                index,
                logits: term.cumulative_logits.len(),
                energies: term.energies.len(),
            });
        }
    }
    Ok(())
}

/// `(1/M) Σ_i w(E_T^i) Σ_t (l_t^i − E_t^i)²`.
pub fn weighted_mse_loss(batch: &[LossTerm<'_>], beta: f64) -> Result<f64, TrainError> {
    check_lengths(batch)?;
    if batch.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = batch
        .iter()
        .map(|term| {
            let w = energy_weight(*term.energies.last().unwrap(), beta);
            w * term
                .cumulative_logits
                .iter()
                .zip(term.energies)
                .map(|(l, e)| (l - e).powi(2))
                .sum::<f64>()
        })
        .sum();
    Ok(total / batch.len() as f64)
}

/// `∂loss/∂l_t` for every circuit, same shapes as the inputs.
pub fn weighted_mse_grad(batch: &[LossTerm<'_>], beta: f64) -> Result<Vec<Vec<f64>>, TrainError> {
    check_lengths(batch)?;
    let m = batch.len() as f64;
    Ok(batch
        .iter()
        .map(|term| {
            let w = energy_weight(*term.energies.last().unwrap(), beta);
            term.cumulative_logits
                .iter()
                .zip(term.energies)
                .map(|(l, e)| 2.0 * w * (l - e) / m)
                .collect()
        })
        .collect())
}

/// Chains `∂loss/∂l_t` back to the per-step logits: `l_t = Σ_{s≤t} x_s`.
fn suffix_sums(d_cumulative: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d_cumulative.len()];
    let mut acc = 0.0;
    for (o, d) in out.iter_mut().zip(d_cumulative).rev() {
        acc += d;
        *o = acc;
    }
    out
}

/// Loss on a fixed batch of token sequences with known prefix energies, and
/// its gradient with respect to the model parameters.
pub fn batch_loss_and_grad(
    model: &TransformerModel,
    sequences: &[Vec<usize>],
    energies: &[Vec<f64>],
    beta: f64,
) -> Result<(f64, Params), TrainError> {
    let forwards = sequences
        .par_iter()
        .map(|seq| model.selected_logits(seq))
        .collect::<Result<Vec<_>, _>>()?;
    let cumulative: Vec<Vec<f64>> = forwards
        .iter()
        .map(|(sel, _)| {
            sel.iter()
                .scan(0.0, |acc, x| {
                    *acc += x;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let terms: Vec<LossTerm<'_>> = cumulative
        .iter()
        .zip(energies)
        .map(|(l, e)| LossTerm {
            cumulative_logits: l,
            energies: e,
        })
        .collect();
    let loss = weighted_mse_loss(&terms, beta)?;
    let d_cum = weighted_mse_grad(&terms, beta)?;
    let per_seq: Vec<Params> = forwards
        .par_iter()
        .zip(sequences)
        .zip(&d_cum)
        .map(|(((_, cache), seq), d)| model.backward_selected(cache, seq, &suffix_sums(d)))
        .collect();
    // Reduce in a fixed order so results do not depend on thread scheduling.
    let mut grads = Params::zeros(model.config());
    for g in &per_seq {
        grads.add_scaled(g, 1.0);
    }
    Ok((loss, grads))
}

/// Prefix energies of each token sequence, starting from `|0…0⟩`.
pub fn evaluate_sequences(
    sequences: &[Vec<usize>],
    h: &Hamiltonian,
    vocab: &Vocabulary,
) -> Result<Vec<Vec<f64>>, TrainError> {
    let initial = StateVector::zero(h.n_qubits())?;
    sequences
        .par_iter()
        .map(|seq| {
            let circuit = vocab.circuit(seq)?;
            Ok(prefix_energies(&circuit, h, &initial)?)
        })
        .collect()
}

fn check_compat(h: &Hamiltonian, vocab: &Vocabulary) -> Result<(), TrainError> {
    if vocab.n_qubits() != h.n_qubits() {
        return Err(TrainError::QubitMismatch {
            vocab: vocab.n_qubits(),
            hamiltonian: h.n_qubits(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TransformerModel,
    pub records: Vec<EpochRecord>,
    pub checkpoints: Vec<PathBuf>,
}

impl TrainOutcome {
    /// Lowest final energy sampled in any epoch.
    pub fn best_energy(&self) -> Option<f64> {
        best_energy(&self.records)
    }
}

pub fn best_energy(records: &[EpochRecord]) -> Option<f64> {
    records.iter().map(|r| r.min).min_by(f64::total_cmp)
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("checkpoint_epoch{epoch:05}.bin"))
}

/// Runs `cfg.epochs` epochs of sample → evaluate → regress → AdamW step.
/// Checkpoints go to `checkpoint_dir` every `cfg.checkpoint_every` epochs
/// when a directory is given.
pub fn train(
    model: TransformerModel,
    h: &Hamiltonian,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    train_with_progress(model, h, vocab, cfg, checkpoint_dir, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with_progress(
    mut model: TransformerModel,
    h: &Hamiltonian,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    check_compat(h, vocab)?;
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|source| TrainError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(
        AdamWConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
        model.params(),
    );
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut checkpoints = Vec::new();

    for epoch in 1..=cfg.epochs {
        let samples = sample_circuits(&model, vocab, cfg.m, cfg.t, cfg.tau, &mut rng)?;
        let sequences: Vec<Vec<usize>> = samples.into_iter().map(|s| s.token_ids).collect();
        let energies = evaluate_sequences(&sequences, h, vocab)?;
        let (loss, grads) = batch_loss_and_grad(&model, &sequences, &energies, cfg.beta)?;

        let finals: Vec<f64> = energies.iter().map(|e| *e.last().unwrap()).collect();
        let record = EpochRecord {
            epoch,
            min: finals.iter().copied().fold(f64::INFINITY, f64::min),
            max: finals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: finals.iter().sum::<f64>() / finals.len() as f64,
            energies_final: finals,
            loss,
            sequences,
        };
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss(Box::new(record)));
        }
        opt.step(model.params_mut(), &grads);
        on_epoch(&record);
        records.push(record);

        if let Some(dir) = checkpoint_dir {
            if epoch % cfg.checkpoint_every == 0 {
                let path = checkpoint_path(dir, epoch);
                save_checkpoint(&model, &path)?;
                checkpoints.push(path);
            }
        }
    }
    Ok(TrainOutcome {
        model,
        records,
        checkpoints,
    })
}

/// Score of a saved checkpoint: lowest final energy among `eval_samples` draws.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointScore {
    pub path: PathBuf,
    pub min_energy: f64,
}

/// Lowest final energy among `n` circuits sampled from `model`.
pub fn min_sampled_energy(
    model: &TransformerModel,
    h: &Hamiltonian,
    vocab: &Vocabulary,
    n: usize,
    t: usize,
    tau: f64,
    seed: u64,
) -> Result<f64, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seqs: Vec<Vec<usize>> = sample_circuits(model, vocab, n, t, tau, &mut rng)?
        .into_iter()
        .map(|s| s.token_ids)
        .collect();
    let energies = evaluate_sequences(&seqs, h, vocab)?;
    Ok(energies
        .iter()
        .map(|e| *e.last().unwrap())
        .fold(f64::INFINITY, f64::min))
}

/// Ranks checkpoints by their minimum sampled energy (ascending, ties keep
/// input order) and averages the best `cfg.n_best_checkpoints`.
pub fn select_and_average_best(
    paths: &[PathBuf],
    h: &Hamiltonian,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
) -> Result<(TransformerModel, Vec<CheckpointScore>), TrainError> {
    check_compat(h, vocab)?;
    if paths.len() < cfg.n_best_checkpoints {
        return Err(TrainError::TooFewCheckpoints {
            needed: cfg.n_best_checkpoints,
            found: paths.len(),
        });
    }
    let mut scored = Vec::with_capacity(paths.len());
    for path in paths {
        let model = load_checkpoint_for(path, vocab.len())?;
        let min_energy = min_sampled_energy(&model, h, vocab, cfg.eval_samples, cfg.t, cfg.tau, cfg.seed)?;
        scored.push((
            CheckpointScore {
                path: path.clone(),
                min_energy,
            },
            model,
        ));
    }
    scored.sort_by(|a, b| a.0.min_energy.total_cmp(&b.0.min_energy));
    let best: Vec<TransformerModel> = scored
        .iter()
        .take(cfg.n_best_checkpoints)
        .map(|(_, m)| m.clone())
        .collect();
    let averaged = average_checkpoints(&best)?;
    Ok((averaged, scored.into_iter().map(|(s, _)| s).collect()))
}

/// Counts of one `(template, qubits)` placement and of each angle on it.
#[derive(Debug, Clone, PartialEq)]
pub struct GateBucket {
    pub template: Template,
    pub qubits: Vec<usize>,
    pub count: usize,
    /// `(angle, count)` in ascending angle order.
    pub angles: Vec<(f64, usize)>,
}

/// Histogram over every placement in the pool, in vocabulary order.
#[derive(Debug, Clone, PartialEq)]
pub struct GateStatistics {
    pub buckets: Vec<GateBucket>,
    pub total: usize,
}

impl GateStatistics {
    /// Tallies gates of already-sampled sequences.
    pub fn from_sequences(vocab: &Vocabulary, sequences: &[Vec<usize>]) -> Result<Self, TrainError> {
        let mut buckets: Vec<GateBucket> = Vec::new();
        let mut bucket_of = vec![usize::MAX; vocab.len()];
        let mut angle_of = vec![usize::MAX; vocab.len()];
        for (i, g) in vocab.gates().iter().enumerate() {
            let id = i + 1;
            let b = match buckets
                .iter()
                .position(|b| b.template == g.template && b.qubits == g.qubits)
            {
                Some(b) => b,
                None => {
                    buckets.push(GateBucket {
                        template: g.template,
                        qubits: g.qubits.clone(),
                        count: 0,
                        angles: Vec::new(),
                    });
                    buckets.len() - 1
                }
            };
            bucket_of[id] = b;
            angle_of[id] = buckets[b].angles.len();
            buckets[b].angles.push((g.angle.value(), 0));
        }
        let mut total = 0;
        for &id in sequences.iter().flatten() {
            vocab.token(id)?;
            let b = &mut buckets[bucket_of[id]];
            b.count += 1;
            b.angles[angle_of[id]].1 += 1;
            total += 1;
        }
        Ok(Self { buckets, total })
    }
}

/// Samples `n_samples` circuits of `t` gates and tallies their gates.
pub fn gate_statistics(
    model: &TransformerModel,
    vocab: &Vocabulary,
    n_samples: usize,
    t: usize,
    tau: f64,
    seed: u64,
) -> Result<GateStatistics, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seqs: Vec<Vec<usize>> = sample_circuits(model, vocab, n_samples, t, tau, &mut rng)?
        .into_iter()
        .map(|s| s.token_ids)
        .collect();
    GateStatistics::from_sequences(vocab, &seqs)
}
