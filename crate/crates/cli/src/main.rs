use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use spingqe::postprocess::{RefineConfig, RefineMethod};
use spingqe::HeisenbergSpec;
use spingqe_cli::commands::{self, CircuitSource, ScanOptions, DEFAULT_BETAS, DEFAULT_MS};
use spingqe_cli::ExperimentConfig;

#[derive(Parser)]
#[command(name = "spingqe", version, about = "Generative ground-state search for Heisenberg chains")]
struct Cli {
    /// Seed for sampling and initialization; overrides config seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory for outputs; overrides the config's output_dir.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct ChainArgs {
    /// Exchange coupling.
    #[arg(long = "J", allow_negative_numbers = true)]
    j: f64,
    /// Field strength.
    #[arg(long = "h")]
    h: f64,
    /// Number of spins.
    #[arg(long = "N")]
    n: usize,
}

impl ChainArgs {
    fn spec(self) -> Result<HeisenbergSpec> {
        Ok(HeisenbergSpec::new(self.j, self.h, self.n)?)
    }
}

#[derive(Args, Clone)]
struct RefineArgs {
    #[arg(long, default_value = "quasi-newton")]
    method: RefineMethod,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    /// Repeat wire-swap passes until one accepts nothing.
    #[arg(long)]
    repeat: bool,
}

impl RefineArgs {
    fn config(&self) -> RefineConfig {
        RefineConfig {
            method: self.method,
            max_iters: self.max_iters,
            repeat_until_converged: self.repeat,
            ..RefineConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Ground energy by exact diagonalization.
    Exact {
        #[command(flatten)]
        chain: ChainArgs,
    },
    /// Train a model from a TOML config.
    Train { config: PathBuf },
    /// Angle refinement and wire swaps on sampled or given circuits.
    Postprocess {
        #[command(flatten)]
        chain: ChainArgs,
        /// Saved model to sample from.
        #[arg(long, conflicts_with = "circuit")]
        model: Option<PathBuf>,
        /// Circuit JSON file to refine.
        #[arg(long)]
        circuit: Option<PathBuf>,
        /// Circuits to sample (model or untrained).
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long = "T", default_value_t = 12)]
        t: usize,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[command(flatten)]
        refine: RefineArgs,
    },
    /// Energies across a list of h/J ratios.
    Scan {
        #[arg(long = "J")]
        j: f64,
        #[arg(long = "N", default_value_t = 4)]
        n: usize,
        /// Comma-separated h/J values.
        #[arg(long, value_delimiter = ',', required = true)]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long)]
        no_postprocess: bool,
        /// Train a model per ratio with this config; untrained model otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train one model per (beta, M) cell.
    Gridsearch {
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
        #[arg(long = "ms", value_delimiter = ',')]
        ms: Option<Vec<usize>>,
    },
    /// Gate and angle histograms of circuits sampled from a model.
    Stats {
        model: PathBuf,
        #[arg(long = "N", default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long = "T", default_value_t = 12)]
        t: usize,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
    },
}

fn load_config(path: &std::path::Path, cli: &Cli) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.model.seed = seed;
    }
    let out = cli.output_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    let seed = cli.seed.unwrap_or(0);
    let out = cli.output_dir.clone().unwrap_or_else(|| PathBuf::from("runs"));
    match &cli.command {
        Command::Exact { chain } => {
            let s = commands::exact(&chain.spec()?, cli.output_dir.as_deref())?;
            println!("{:.6}", s.ground_energy);
        }
        Command::Train { config } => {
            let (cfg, out) = load_config(config, &cli)?;
            let s = commands::train(&cfg, &out, true)?;
            match s.best_energy {
                Some(e) => println!("best sampled energy {e:.6}"),
                None => println!("no epochs run"),
            }
            println!("final model {}", s.final_model.display());
        }
        Command::Postprocess {
            chain,
            model,
            circuit,
            samples,
            t,
            tau,
            refine,
        } => {
            let source = match (model, circuit) {
                (_, Some(c)) => CircuitSource::File(c.clone()),
                (Some(m), None) => CircuitSource::Model {
                    path: m.clone(),
                    n_samples: *samples,
                    t: *t,
                    tau: *tau,
                },
                (None, None) => CircuitSource::Untrained {
                    n_samples: *samples,
                    t: *t,
                    tau: *tau,
                },
            };
            let s = commands::postprocess(&chain.spec()?, &source, &refine.config(), seed, &out)?;
            let st = s.outcome.stages;
            println!("{:<14} {:>14}", "stage", "energy");
            println!("{:<14} {:>14.6}", "base", st.base);
            println!("{:<14} {:>14.6}", "angle_refined", st.refined);
            println!("{:<14} {:>14.6}", "wire_swapped", st.swapped);
        }
        Command::Scan {
            j,
            n,
            ratios,
            samples,
            no_postprocess,
            config,
        } => {
            let training = match config {
                Some(p) => Some(load_config(p, &cli)?.0),
                None => None,
            };
            let opts = ScanOptions {
                j: *j,
                n: *n,
                ratios: ratios.clone(),
                samples: *samples,
                postprocess: !no_postprocess,
                training,
                seed,
            };
            for r in commands::scan(&opts, &out)? {
                let pp = r.postprocessed.map(|e| format!("{e:.6}")).unwrap_or_else(|| "-".into());
                println!("h/J {:<8} model {:>12.6}  post {:>12}  exact {:>12.6}", r.ratio, r.model_energy, pp, r.exact);
            }
        }
        Command::Gridsearch { config, betas, ms } => {
            let (cfg, out) = load_config(config, &cli)?;
            let betas = betas.clone().unwrap_or_else(|| DEFAULT_BETAS.to_vec());
            let ms = ms.clone().unwrap_or_else(|| DEFAULT_MS.to_vec());
            for c in commands::gridsearch(&cfg, &betas, &ms, &out)? {
                println!("beta {:<5} M {:<3} best {:.6}", c.beta, c.m, c.best_energy);
            }
        }
        Command::Stats {
            model,
            n,
            samples,
            t,
            tau,
        } => {
            let total = commands::stats(model, *n, *samples, *t, *tau, seed, &out)?;
            println!("tallied {total} gates into {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
