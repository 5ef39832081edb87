//! Implementations behind each subcommand.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use spingqe::eigen::spectrum;
use spingqe::heisenberg::total_sz;
use spingqe::model::{average_checkpoints, load_checkpoint, sample_circuits, save_checkpoint, TransformerModel};
use spingqe::postprocess::{postprocess_sequences, wire_swap_loop, RefinableCircuit, RefineConfig, SwapOutcome};
use spingqe::trainer::{
    best_energy, evaluate_sequences, gate_statistics, select_and_average_best, train_with_progress, EpochRecord,
};
use spingqe::{build_heisenberg, build_vocabulary, exact_ground_energy, expectation, HeisenbergSpec, Vocabulary};

use crate::circuit_file::CircuitFile;
use crate::config::ExperimentConfig;
use crate::output::{ensure_dir, num, qubit_label, write_csv, write_json};

pub const CONVERGENCE_HEADER: [&str; 5] = ["epoch", "loss", "min", "mean", "max"];

#[derive(Debug, Clone, Serialize)]
pub struct ExactSummary {
    pub j: f64,
    pub h: f64,
    pub n: usize,
    pub ground_energy: f64,
    pub first_excited: Option<f64>,
    pub gap: Option<f64>,
    /// `⟨S_z⟩` of the returned ground vector.
    pub ground_sz: f64,
}

pub fn exact(spec: &HeisenbergSpec, out_dir: Option<&Path>) -> Result<ExactSummary> {
    spec.validate()?;
    let h = build_heisenberg(spec)?;
    let (e0, psi) = exact_ground_energy(&h)?;
    let levels = spectrum(&h)?;
    // First level above the (possibly degenerate) ground energy.
    let first_excited = levels
        .iter()
        .copied()
        .find(|&e| e > e0 + 1e-9 * e0.abs().max(1.0));
    let summary = ExactSummary {
        j: spec.j,
        h: spec.h,
        n: spec.n,
        ground_energy: e0,
        first_excited,
        gap: first_excited.map(|e| e - e0),
        ground_sz: expectation(&psi, &total_sz(spec.n)?)?,
    };
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        write_json(&dir.join("exact.json"), &summary)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub records: Vec<EpochRecord>,
    pub best_energy: Option<f64>,
    pub final_model: PathBuf,
    pub checkpoints: Vec<PathBuf>,
}

fn convergence_rows(records: &[EpochRecord]) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| vec![r.epoch.to_string(), num(r.loss), num(r.min), num(r.mean), num(r.max)])
        .collect()
}

/// Trains, writes `convergence.csv`, checkpoints, `final_model.bin` and the
/// lowest-energy sampled circuit.
pub fn train(cfg: &ExperimentConfig, out_dir: &Path, verbose: bool) -> Result<TrainSummary> {
    cfg.validate()?;
    ensure_dir(out_dir)?;
    let h = build_heisenberg(&cfg.hamiltonian)?;
    let vocab = build_vocabulary(&cfg.pool_config())?;
    let model = TransformerModel::new(cfg.model.with_vocab(vocab.len()))?;
    let ckpt_dir = out_dir.join("checkpoints");
    let every = (cfg.train.epochs / 10).max(1);
    let outcome = train_with_progress(model, &h, &vocab, &cfg.train, Some(&ckpt_dir), |r| {
        if verbose && (r.epoch % every == 0 || r.epoch == 1) {
            eprintln!(
                "epoch {:>5}  loss {:>12.4}  min {:>10.4}  mean {:>10.4}",
                r.epoch, r.loss, r.min, r.mean
            );
        }
    })?;
    let meta = cfg.to_json();
    write_csv(
        &out_dir.join("convergence.csv"),
        &meta,
        &CONVERGENCE_HEADER,
        convergence_rows(&outcome.records),
    )?;

    let final_model = if outcome.checkpoints.len() >= cfg.train.n_best_checkpoints {
        let (avg, scores) = select_and_average_best(&outcome.checkpoints, &h, &vocab, &cfg.train)?;
        write_csv(
            &out_dir.join("checkpoint_ranking.csv"),
            &meta,
            &["checkpoint", "min_energy"],
            scores.iter().map(|s| {
                let name = s.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                vec![name, num(s.min_energy)]
            }),
        )?;
        avg
    } else if !outcome.checkpoints.is_empty() {
        let models = outcome
            .checkpoints
            .iter()
            .map(|p| load_checkpoint(p))
            .collect::<Result<Vec<_>, _>>()?;
        average_checkpoints(&models)?
    } else {
        outcome.model.clone()
    };
    let final_path = out_dir.join("final_model.bin");
    save_checkpoint(&final_model, &final_path)?;

    if let Some(best) = lowest_circuit(&outcome.records) {
        let c = RefinableCircuit::from_tokens(&vocab, best, &h)?;
        CircuitFile::from_circuit(&c).write(&out_dir.join("best_circuit.json"))?;
    }
    Ok(TrainSummary {
        best_energy: best_energy(&outcome.records),
        records: outcome.records,
        final_model: final_path,
        checkpoints: outcome.checkpoints,
    })
}

fn lowest_circuit(records: &[EpochRecord]) -> Option<&Vec<usize>> {
    records
        .iter()
        .flat_map(|r| r.energies_final.iter().zip(&r.sequences))
        .min_by(|a, b| a.0.total_cmp(b.0))
        .map(|(_, s)| s)
}

/// Where post-processing takes its circuits from.
#[derive(Debug, Clone)]
pub enum CircuitSource {
    /// Sample this many circuits of `t` gates from a saved model.
    Model {
        path: PathBuf,
        n_samples: usize,
        t: usize,
        tau: f64,
    },
    /// Random-init model with the desk architecture.
    Untrained { n_samples: usize, t: usize, tau: f64 },
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct PostprocessSummary {
    pub outcome: SwapOutcome,
    /// Final energy of every candidate (one for a circuit file).
    pub final_energies: Vec<f64>,
}

pub fn postprocess(
    spec: &HeisenbergSpec,
    source: &CircuitSource,
    refine: &RefineConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<PostprocessSummary> {
    spec.validate()?;
    refine.validate()?;
    let h = build_heisenberg(spec)?;
    let summary = match source {
        CircuitSource::File(path) => {
            let file = CircuitFile::read(path)?;
            if file.n_qubits != spec.n {
                bail!(
                    "circuit file is for {} qubits but the Hamiltonian has {}",
                    file.n_qubits,
                    spec.n
                );
            }
            let c = RefinableCircuit::new(file.gates, &h)?;
            let outcome = wire_swap_loop(&c, &h, refine)?;
            PostprocessSummary {
                final_energies: vec![outcome.stages.swapped],
                outcome,
            }
        }
        CircuitSource::Model {
            path,
            n_samples,
            t,
            tau,
        } => {
            let model = load_checkpoint(path)?;
            best_of_model(&model, spec, *n_samples, *t, *tau, refine, seed)?
        }
        CircuitSource::Untrained { n_samples, t, tau } => {
            let vocab = build_vocabulary(&spingqe::PoolConfig::standard(spec.n))?;
            let model = TransformerModel::new(spingqe::model::ModelConfig {
                seed,
                ..spingqe::model::ModelConfig::desk(vocab.len())
            })?;
            best_of_model(&model, spec, *n_samples, *t, *tau, refine, seed)?
        }
    };
    ensure_dir(out_dir)?;
    CircuitFile::from_circuit(&summary.outcome.circuit).write(&out_dir.join("refined_circuit.json"))?;
    let meta = serde_json::json!({
        "hamiltonian": spec,
        "postprocess": refine,
        "seed": seed,
    })
    .to_string();
    let s = summary.outcome.stages;
    write_csv(
        &out_dir.join("stages.csv"),
        &meta,
        &["stage", "energy"],
        [
            vec!["base".to_string(), num(s.base)],
            vec!["angle_refined".to_string(), num(s.refined)],
            vec!["wire_swapped".to_string(), num(s.swapped)],
        ],
    )?;
    Ok(summary)
}

fn vocab_for_model(model: &TransformerModel, n: usize) -> Result<Vocabulary> {
    for cfg in [spingqe::PoolConfig::standard(n), spingqe::PoolConfig::enlarged(n)] {
        let v = build_vocabulary(&cfg)?;
        if v.len() == model.config().vocab_size {
            return Ok(v);
        }
    }
    bail!(
        "model vocabulary of {} tokens matches no {n}-qubit pool",
        model.config().vocab_size
    )
}

fn best_of_model(
    model: &TransformerModel,
    spec: &HeisenbergSpec,
    n_samples: usize,
    t: usize,
    tau: f64,
    refine: &RefineConfig,
    seed: u64,
) -> Result<PostprocessSummary> {
    let h = build_heisenberg(spec)?;
    let vocab = vocab_for_model(model, spec.n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Vec<usize>> = sample_circuits(model, &vocab, n_samples, t, tau, &mut rng)?
        .into_iter()
        .map(|s| s.token_ids)
        .collect();
    let best = postprocess_sequences(&vocab, &h, &samples, refine)?;
    Ok(PostprocessSummary {
        outcome: best.best,
        final_energies: best.final_energies,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub ratio: f64,
    pub h: f64,
    pub model_energy: f64,
    pub postprocessed: Option<f64>,
    pub exact: f64,
}

/// Options for the regime scan.
#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub j: f64,
    pub n: usize,
    pub ratios: Vec<f64>,
    pub samples: usize,
    pub postprocess: bool,
    /// Train a model per ratio with these settings; random-init model when absent.
    pub training: Option<ExperimentConfig>,
    pub seed: u64,
}

pub const SCAN_HEADER: [&str; 5] = ["h_over_j", "h", "e_model", "e_postprocessed", "e_exact"];

pub fn scan(opts: &ScanOptions, out_dir: &Path) -> Result<Vec<ScanRow>> {
    if opts.ratios.is_empty() {
        bail!("scan needs at least one h/J ratio");
    }
    if opts.samples == 0 {
        bail!("scan needs at least one sample per ratio");
    }
    ensure_dir(out_dir)?;
    let rows = opts
        .ratios
        .par_iter()
        .enumerate()
        .map(|(i, &ratio)| scan_row(opts, i, ratio, out_dir))
        .collect::<Result<Vec<_>>>()?;
    let meta = serde_json::json!({
        "j": opts.j,
        "n": opts.n,
        "ratios": opts.ratios,
        "samples": opts.samples,
        "postprocess": opts.postprocess,
        "training": opts.training,
        "seed": opts.seed,
    })
    .to_string();
    write_csv(
        &out_dir.join("scan.csv"),
        &meta,
        &SCAN_HEADER,
        rows.iter().map(|r| {
            vec![
                num(r.ratio),
                num(r.h),
                num(r.model_energy),
                r.postprocessed.map(num).unwrap_or_default(),
                num(r.exact),
            ]
        }),
    )?;
    Ok(rows)
}

fn scan_row(opts: &ScanOptions, index: usize, ratio: f64, out_dir: &Path) -> Result<ScanRow> {
    let spec = HeisenbergSpec::new(opts.j, ratio * opts.j, opts.n)?;
    let h = build_heisenberg(&spec)?;
    let exact = exact_ground_energy(&h)?.0;
    let (model, vocab, t, tau, refine, mut best) = match &opts.training {
        Some(base) => {
            let mut cfg = base.clone();
            cfg.hamiltonian = spec;
            let summary = train(&cfg, &out_dir.join(format!("ratio_{index:03}")), false)
                .with_context(|| format!("training at h/J = {ratio}"))?;
            let model = load_checkpoint(&summary.final_model)?;
            let vocab = build_vocabulary(&cfg.pool_config())?;
            let best = summary.best_energy.unwrap_or(f64::INFINITY);
            (model, vocab, cfg.train.t, cfg.train.tau, cfg.postprocess, best)
        }
        None => {
            let vocab = build_vocabulary(&spingqe::PoolConfig::standard(opts.n))?;
            let model = TransformerModel::new(spingqe::model::ModelConfig {
                seed: opts.seed,
                ..spingqe::model::ModelConfig::desk(vocab.len())
            })?;
            let d = spingqe::trainer::TrainConfig::default();
            (model, vocab, d.t, d.tau, RefineConfig::default(), f64::INFINITY)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let samples: Vec<Vec<usize>> = sample_circuits(&model, &vocab, opts.samples, t, tau, &mut rng)?
        .into_iter()
        .map(|s| s.token_ids)
        .collect();
    let energies = evaluate_sequences(&samples, &h, &vocab)?;
    for e in &energies {
        best = best.min(*e.last().expect("t >= 1"));
    }
    let postprocessed = if opts.postprocess {
        Some(postprocess_sequences(&vocab, &h, &samples, &refine)?.best.stages.swapped)
    } else {
        None
    };
    Ok(ScanRow {
        ratio,
        h: spec.h,
        model_energy: best,
        postprocessed,
        exact,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub beta: f64,
    pub m: usize,
    pub best_energy: f64,
}

pub const DEFAULT_BETAS: [f64; 5] = [0.1, 0.3, 0.7, 1.0, 2.0];
pub const DEFAULT_MS: [usize; 3] = [10, 25, 40];
pub const GRID_HEADER: [&str; 3] = ["beta", "m", "best_energy"];

/// Trains one model per `(beta, M)` cell and records its best sampled energy.
pub fn gridsearch(cfg: &ExperimentConfig, betas: &[f64], ms: &[usize], out_dir: &Path) -> Result<Vec<GridCell>> {
    if betas.is_empty() || ms.is_empty() {
        bail!("grid search needs at least one beta and one M");
    }
    cfg.validate()?;
    ensure_dir(out_dir)?;
    let cells: Vec<(f64, usize)> = betas.iter().flat_map(|&b| ms.iter().map(move |&m| (b, m))).collect();
    let results = cells
        .par_iter()
        .map(|&(beta, m)| {
            let mut c = cfg.clone();
            c.train.beta = beta;
            c.train.m = m;
            let dir = out_dir.join(format!("beta{beta}_m{m}"));
            let s = train(&c, &dir, false).with_context(|| format!("cell beta={beta}, M={m}"))?;
            Ok(GridCell {
                beta,
                m,
                best_energy: s.best_energy.unwrap_or(f64::NAN),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = serde_json::json!({ "base": cfg, "betas": betas, "ms": ms }).to_string();
    write_csv(
        &out_dir.join("heatmap.csv"),
        &meta,
        &GRID_HEADER,
        results
            .iter()
            .map(|c| vec![num(c.beta), c.m.to_string(), num(c.best_energy)]),
    )?;
    Ok(results)
}

/// Writes `gate_counts.csv` and `angle_hist.csv` for circuits sampled from a model.
pub fn stats(model_path: &Path, n_qubits: usize, n_samples: usize, t: usize, tau: f64, seed: u64, out_dir: &Path) -> Result<usize> {
    if n_samples == 0 {
        bail!("stats needs at least one sample");
    }
    let model = load_checkpoint(model_path)?;
    let vocab = vocab_for_model(&model, n_qubits)?;
    let stats = gate_statistics(&model, &vocab, n_samples, t, tau, seed)?;
    ensure_dir(out_dir)?;
    let meta = serde_json::json!({
        "model": model_path,
        "n_qubits": n_qubits,
        "samples": n_samples,
        "t": t,
        "tau": tau,
        "seed": seed,
    })
    .to_string();
    write_csv(
        &out_dir.join("gate_counts.csv"),
        &meta,
        &["template", "qubits", "count"],
        stats
            .buckets
            .iter()
            .map(|b| vec![b.template.to_string(), qubit_label(&b.qubits), b.count.to_string()]),
    )?;
    write_csv(
        &out_dir.join("angle_hist.csv"),
        &meta,
        &["template", "qubits", "angle", "count"],
        stats.buckets.iter().flat_map(|b| {
            b.angles.iter().map(move |(a, c)| {
                vec![b.template.to_string(), qubit_label(&b.qubits), num(*a), c.to_string()]
            })
        }),
    )?;
    Ok(stats.total)
}
