//! Continuous refinement of generated circuits.
//!
//! Angle refinement relaxes the discrete pool angles to arbitrary reals and
//! minimizes the circuit energy over them. The wire-swap loop then tries every
//! other qubit placement for each gate in turn, re-refining the angles of the
//! whole circuit for each trial and keeping strict improvements.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{circuit_energy, energy_gradient, Rotation};
use crate::hamiltonian::Hamiltonian;
use crate::minimize::{inf_norm, lbfgs, LbfgsOptions};
use crate::model::{sample_circuits, ModelError, TransformerModel};
use crate::pool::{PoolError, Template, TokenId, Vocabulary};
use crate::state::{SimError, StateVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PostprocessError {
    #[error("circuit has no gates")]
    EmptyCircuit,
    #[error("gate {index}: {reason}")]
    InvalidGate { index: usize, reason: String },
    #[error("circuit acts on {circuit} qubits, Hamiltonian on {hamiltonian}")]
    QubitMismatch { circuit: usize, hamiltonian: usize },
    #[error("invalid refinement config: {0}")]
    InvalidConfig(String),
    #[error("wire swap at gate {position}: {source}")]
    AtPosition {
        position: usize,
        #[source]
        source: Box<PostprocessError>,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One rotation with a free angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitGate {
    pub template: Template,
    pub qubits: Vec<usize>,
    pub angle: f64,
}

impl CircuitGate {
    pub fn rotation(&self) -> Result<Rotation, PoolError> {
        Ok(Rotation::new(self.template.pauli(&self.qubits)?, self.angle))
    }

    fn check(&self, n_qubits: usize) -> Result<(), String> {
        if self.qubits.len() != self.template.arity() {
            return Err(format!(
                "{} acts on {} qubit(s), got {}",
                self.template,
                self.template.arity(),
                self.qubits.len()
            ));
        }
        if let Some(q) = self.qubits.iter().find(|&&q| q >= n_qubits) {
            return Err(format!("qubit {q} out of range for {n_qubits} qubits"));
        }
        if self.qubits.len() == 2 && self.qubits[0] == self.qubits[1] {
            return Err(format!("repeated qubit {}", self.qubits[0]));
        }
        if !self.angle.is_finite() {
            return Err(format!("non-finite angle {}", self.angle));
        }
        Ok(())
    }
}

impl fmt::Display for CircuitGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let qs: Vec<String> = self.qubits.iter().map(|q| q.to_string()).collect();
        write!(f, "{}({}; {:.6})", self.template, qs.join(","), self.angle)
    }
}

/// Gate sequence with real-valued angles and its last evaluated energy.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinableCircuit {
    n_qubits: usize,
    gates: Vec<CircuitGate>,
    energy: f64,
}

impl RefinableCircuit {
    /// Validates the gates and evaluates the energy from `|0…0⟩`.
    pub fn new(gates: Vec<CircuitGate>, h: &Hamiltonian) -> Result<Self, PostprocessError> {
        let n_qubits = h.n_qubits();
        if gates.is_empty() {
            return Err(PostprocessError::EmptyCircuit);
        }
        for (index, g) in gates.iter().enumerate() {
            g.check(n_qubits)
                .map_err(|reason| PostprocessError::InvalidGate { index, reason })?;
        }
        let energy = energy_of(&gates, h)?;
        Ok(Self {
            n_qubits,
            gates,
            energy,
        })
    }

    pub fn from_tokens(vocab: &Vocabulary, ids: &[TokenId], h: &Hamiltonian) -> Result<Self, PostprocessError> {
        if vocab.n_qubits() != h.n_qubits() {
            return Err(PostprocessError::QubitMismatch {
                circuit: vocab.n_qubits(),
                hamiltonian: h.n_qubits(),
            });
        }
        let gates = ids
            .iter()
            .map(|&id| {
                let t = vocab.token(id)?;
                Ok(CircuitGate {
                    template: t.template,
                    qubits: t.qubits.clone(),
                    angle: t.angle.value(),
                })
            })
            .collect::<Result<Vec<_>, PoolError>>()?;
        Self::new(gates, h)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[CircuitGate] {
        &self.gates
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn angles(&self) -> Vec<f64> {
        self.gates.iter().map(|g| g.angle).collect()
    }

    pub fn rotations(&self) -> Vec<Rotation> {
        rotations_of(&self.gates).expect("gates validated on construction")
    }

    fn with_angles(&self, angles: &[f64], energy: f64) -> Self {
        let mut out = self.clone();
        for (g, a) in out.gates.iter_mut().zip(angles) {
            g.angle = *a;
        }
        out.energy = energy;
        out
    }

    fn check_against(&self, h: &Hamiltonian) -> Result<(), PostprocessError> {
        if self.n_qubits != h.n_qubits() {
            return Err(PostprocessError::QubitMismatch {
                circuit: self.n_qubits,
                hamiltonian: h.n_qubits(),
            });
        }
        Ok(())
    }
}

fn rotations_of(gates: &[CircuitGate]) -> Result<Vec<Rotation>, PoolError> {
    gates.iter().map(CircuitGate::rotation).collect()
}

fn energy_of(gates: &[CircuitGate], h: &Hamiltonian) -> Result<f64, PostprocessError> {
    Ok(circuit_energy(&rotations_of(gates)?, h, &StateVector::zero(h.n_qubits())?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefineMethod {
    /// L-BFGS on parameter-shift gradients.
    QuasiNewton,
    /// Cyclic exact minimization of one angle at a time.
    DerivativeFree,
}

impl FromStr for RefineMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quasi-newton" => Ok(Self::QuasiNewton),
            "derivative-free" => Ok(Self::DerivativeFree),
            other => Err(format!(
                "unknown refinement method `{other}` (expected quasi-newton or derivative-free)"
            )),
        }
    }
}

impl fmt::Display for RefineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::QuasiNewton => "quasi-newton",
            Self::DerivativeFree => "derivative-free",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    pub method: RefineMethod,
    /// Quasi-Newton iterations, or full sweeps for the derivative-free method.
    pub max_iters: usize,
    pub gradient_tolerance: f64,
    /// Derivative-free stopping threshold on the energy drop per sweep.
    pub energy_tolerance: f64,
    /// Repeat wire-swap passes until one accepts nothing.
    pub repeat_until_converged: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            method: RefineMethod::QuasiNewton,
            max_iters: 500,
            gradient_tolerance: 1e-7,
            energy_tolerance: 1e-9,
            repeat_until_converged: false,
        }
    }
}

impl RefineConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.max_iters == 0 {
            p.push("postprocess.max_iters must be at least 1".to_string());
        }
        if !(self.gradient_tolerance > 0.0 && self.gradient_tolerance.is_finite()) {
            p.push(format!(
                "postprocess.gradient_tolerance must be positive, got {}",
                self.gradient_tolerance
            ));
        }
        if !(self.energy_tolerance > 0.0 && self.energy_tolerance.is_finite()) {
            p.push(format!(
                "postprocess.energy_tolerance must be positive, got {}",
                self.energy_tolerance
            ));
        }
        p
    }

    pub fn validate(&self) -> Result<(), PostprocessError> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(PostprocessError::InvalidConfig(p.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub circuit: RefinableCircuit,
    /// `false` when the iteration budget ran out first.
    pub converged: bool,
    pub iterations: usize,
    /// `max |∂E/∂θ_j|` at the returned angles.
    pub gradient_norm: f64,
}

/// Minimizes the energy over all angles, keeping templates and qubits fixed.
pub fn angle_refinement(
    circuit: &RefinableCircuit,
    h: &Hamiltonian,
    cfg: &RefineConfig,
) -> Result<Refined, PostprocessError> {
    cfg.validate()?;
    circuit.check_against(h)?;
    let start_energy = energy_of(&circuit.gates, h)?;
    let refined = match cfg.method {
        RefineMethod::QuasiNewton => quasi_newton(circuit, h, cfg)?,
        RefineMethod::DerivativeFree => coordinate_sweeps(circuit, h, cfg)?,
    };
    if refined.circuit.energy > start_energy {
        // Rounding only; the optimizers never accept an uphill step.
        let gradient = energy_gradient(&circuit.rotations(), h, &StateVector::zero(h.n_qubits())?)?;
        return Ok(Refined {
            circuit: RefinableCircuit {
                energy: start_energy,
                ..circuit.clone()
            },
            converged: refined.converged,
            iterations: refined.iterations,
            gradient_norm: inf_norm(&gradient),
        });
    }
    Ok(refined)
}

fn quasi_newton(circuit: &RefinableCircuit, h: &Hamiltonian, cfg: &RefineConfig) -> Result<Refined, PostprocessError> {
    let initial = StateVector::zero(h.n_qubits())?;
    let mut rotations = circuit.rotations();
    let objective = |theta: &[f64]| -> Result<(f64, Vec<f64>), SimError> {
        for (r, t) in rotations.iter_mut().zip(theta) {
            r.angle = *t;
        }
        let e = circuit_energy(&rotations, h, &initial)?;
        let g = energy_gradient(&rotations, h, &initial)?;
        Ok((e, g))
    };
    let opts = LbfgsOptions {
        max_iters: cfg.max_iters,
        gradient_tolerance: cfg.gradient_tolerance,
    };
    let m = lbfgs(objective, &circuit.angles(), &opts)?;
    Ok(Refined {
        gradient_norm: m.gradient_norm(),
        circuit: circuit.with_angles(&m.x, m.value),
        converged: m.converged,
        iterations: m.iterations,
    })
}

/// The energy is `a·cos(θ_j − φ) + c` in each angle separately, so three
/// evaluations pin down the exact minimizer along that coordinate.
fn coordinate_sweeps(
    circuit: &RefinableCircuit,
    h: &Hamiltonian,
    cfg: &RefineConfig,
) -> Result<Refined, PostprocessError> {
    use std::f64::consts::{FRAC_PI_2, PI};
    let initial = StateVector::zero(h.n_qubits())?;
    let mut rotations = circuit.rotations();
    let mut energy = circuit_energy(&rotations, h, &initial)?;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < cfg.max_iters {
        sweeps += 1;
        let before = energy;
        for j in 0..rotations.len() {
            let theta = rotations[j].angle;
            rotations[j].angle = theta + FRAC_PI_2;
            let plus = circuit_energy(&rotations, h, &initial)?;
            rotations[j].angle = theta - FRAC_PI_2;
            let minus = circuit_energy(&rotations, h, &initial)?;
            let offset = 0.5 * (plus + minus);
            let (a, b) = (energy - offset, 0.5 * (minus - plus));
            let amplitude = a.hypot(b);
            let candidate = offset - amplitude;
            if candidate < energy {
                rotations[j].angle = wrap(theta - b.atan2(a) + PI);
                energy = candidate;
            } else {
                rotations[j].angle = theta;
            }
        }
        energy = circuit_energy(&rotations, h, &initial)?;
        if before - energy < cfg.energy_tolerance {
            converged = true;
            break;
        }
    }
    let angles: Vec<f64> = rotations.iter().map(|r| r.angle).collect();
    let gradient = energy_gradient(&rotations, h, &initial)?;
    Ok(Refined {
        circuit: circuit.with_angles(&angles, energy),
        converged,
        iterations: sweeps,
        gradient_norm: inf_norm(&gradient),
    })
}

/// Maps an angle into `(−2π, 2π]`; rotations are 4π-periodic up to sign only.
fn wrap(theta: f64) -> f64 {
    use std::f64::consts::TAU;
    let t = theta % (2.0 * TAU);
    if t > TAU {
        t - 2.0 * TAU
    } else if t <= -TAU {
        t + 2.0 * TAU
    } else {
        t
    }
}

/// Energies before refinement, after angle refinement, after the wire swaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageEnergies {
    pub base: f64,
    pub refined: f64,
    pub swapped: f64,
}

/// One accepted relocation.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptedSwap {
    pub position: usize,
    pub from: Vec<usize>,
    pub to: Vec<usize>,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapOutcome {
    pub circuit: RefinableCircuit,
    pub stages: StageEnergies,
    pub accepted: Vec<AcceptedSwap>,
    /// Refinements that stopped on the iteration cap.
    pub unconverged_refinements: usize,
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn qubit_combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn extend(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for q in start..n {
            cur.push(q);
            extend(q + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    extend(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Angle refinement followed by one greedy pass over gate positions, trying
/// every qubit subset for each gate and keeping strict improvements.
pub fn wire_swap_loop(
    circuit: &RefinableCircuit,
    h: &Hamiltonian,
    cfg: &RefineConfig,
) -> Result<SwapOutcome, PostprocessError> {
    cfg.validate()?;
    circuit.check_against(h)?;
    let base = energy_of(&circuit.gates, h)?;
    let first = angle_refinement(circuit, h, cfg)?;
    let mut unconverged = usize::from(!first.converged);
    let refined = first.circuit.energy;
    let mut current = first.circuit;
    let mut accepted = Vec::new();
    loop {
        let mut improved = false;
        for position in 0..current.gates.len() {
            let arity = current.gates[position].qubits.len();
            for qubits in qubit_combinations(current.n_qubits, arity) {
                let mut trial = current.clone();
                trial.gates[position].qubits = qubits.clone();
                let at = |e: PostprocessError| PostprocessError::AtPosition {
                    position,
                    source: Box::new(e),
                };
                trial.energy = energy_of(&trial.gates, h).map_err(at)?;
                let r = angle_refinement(&trial, h, cfg).map_err(at)?;
                unconverged += usize::from(!r.converged);
                if r.circuit.energy < current.energy {
                    accepted.push(AcceptedSwap {
                        position,
                        from: current.gates[position].qubits.clone(),
                        to: qubits,
                        energy: r.circuit.energy,
                    });
                    current = r.circuit;
                    improved = true;
                }
            }
        }
        if !(cfg.repeat_until_converged && improved) {
            break;
        }
    }
    Ok(SwapOutcome {
        stages: StageEnergies {
            base,
            refined,
            swapped: current.energy,
        },
        circuit: current,
        accepted,
        unconverged_refinements: unconverged,
    })
}

/// Result of post-processing a batch of sampled circuits.
#[derive(Debug, Clone, PartialEq)]
pub struct BestOf {
    pub best: SwapOutcome,
    /// Index of `best` among the samples.
    pub best_index: usize,
    /// Sampled token sequences, in draw order.
    pub samples: Vec<Vec<TokenId>>,
    /// Final energy of every sample after post-processing.
    pub final_energies: Vec<f64>,
}

/// Samples `n_samples` circuits of `t` gates and post-processes each one;
/// returns the lowest-energy result (first index on ties).
#[allow(clippy::too_many_arguments)]
pub fn postprocess_best_of<R: Rng>(
    model: &TransformerModel,
    vocab: &Vocabulary,
    h: &Hamiltonian,
    n_samples: usize,
    t: usize,
    tau: f64,
    cfg: &RefineConfig,
    rng: &mut R,
) -> Result<BestOf, PostprocessError> {
    let samples: Vec<Vec<TokenId>> = sample_circuits(model, vocab, n_samples, t, tau, rng)?
        .into_iter()
        .map(|s| s.token_ids)
        .collect();
    postprocess_sequences(vocab, h, &samples, cfg)
}

/// [`postprocess_best_of`] on already-sampled token sequences.
pub fn postprocess_sequences(
    vocab: &Vocabulary,
    h: &Hamiltonian,
    samples: &[Vec<TokenId>],
    cfg: &RefineConfig,
) -> Result<BestOf, PostprocessError> {
    if samples.is_empty() {
        return Err(PostprocessError::InvalidConfig("need at least one sample".into()));
    }
    let outcomes = samples
        .par_iter()
        .map(|ids| wire_swap_loop(&RefinableCircuit::from_tokens(vocab, ids, h)?, h, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let final_energies: Vec<f64> = outcomes.iter().map(|o| o.stages.swapped).collect();
    let best_index = (0..outcomes.len())
        .min_by(|&a, &b| final_energies[a].total_cmp(&final_energies[b]).then(a.cmp(&b)))
        .expect("non-empty");
    Ok(BestOf {
        best: outcomes.into_iter().nth(best_index).expect("index in range"),
        best_index,
        samples: samples.to_vec(),
        final_energies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::{Pauli, PauliString};
    use std::f64::consts::PI;

    fn field(n: usize, strength: f64) -> Hamiltonian {
        Hamiltonian::new(n, (0..n).map(|q| (strength, PauliString::single(q, Pauli::Z))).collect()).unwrap()
    }

    fn gate(template: Template, qubits: &[usize], angle: f64) -> CircuitGate {
        CircuitGate {
            template,
            qubits: qubits.to_vec(),
            angle,
        }
    }

    #[test]
    fn single_xx_refines_to_half_flip_minimum() {
        let h = field(4, 10.0);
        let c = RefinableCircuit::new(vec![gate(Template::XX, &[0, 1], 0.1)], &h).unwrap();
        assert!((c.energy() - (20.0 * 0.1f64.cos() + 20.0)).abs() < 1e-12);
        for method in [RefineMethod::QuasiNewton, RefineMethod::DerivativeFree] {
            let cfg = RefineConfig {
                method,
                ..Default::default()
            };
            let r = angle_refinement(&c, &h, &cfg).unwrap();
            assert!(r.circuit.energy().abs() < 1e-9, "{method}: {}", r.circuit.energy());
            let theta = r.circuit.gates()[0].angle;
            assert!(((theta - PI).rem_euclid(2.0 * PI)).abs() < 1e-4, "{theta}");
            assert!(r.converged);
        }
    }

    #[test]
    fn stationary_circuit_is_unchanged() {
        let h = field(3, 1.0);
        let c = RefinableCircuit::new(vec![gate(Template::XX, &[0, 1], PI)], &h).unwrap();
        for method in [RefineMethod::QuasiNewton, RefineMethod::DerivativeFree] {
            let cfg = RefineConfig {
                method,
                ..Default::default()
            };
            let r = angle_refinement(&c, &h, &cfg).unwrap();
            assert!((r.circuit.energy() - c.energy()).abs() <= cfg.energy_tolerance);
        }
    }

    #[test]
    fn cancelling_pair_is_split_across_the_chain() {
        let h = field(4, 10.0);
        let c = RefinableCircuit::new(
            vec![gate(Template::XX, &[0, 1], PI), gate(Template::XX, &[0, 1], PI)],
            &h,
        )
        .unwrap();
        assert!((c.energy() - 40.0).abs() < 1e-9);
        let out = wire_swap_loop(&c, &h, &RefineConfig::default()).unwrap();
        assert!((out.stages.swapped + 40.0).abs() < 1e-9, "{:?}", out.stages);
        let mut placements: Vec<Vec<usize>> = out.circuit.gates().iter().map(|g| g.qubits.clone()).collect();
        placements.sort();
        assert_eq!(placements, vec![vec![0, 1], vec![2, 3]]);
        assert!(out.stages.base >= out.stages.refined && out.stages.refined >= out.stages.swapped);
    }

    #[test]
    fn two_qubit_system_has_nothing_to_swap() {
        let h = field(2, 1.0);
        let c = RefinableCircuit::new(vec![gate(Template::YY, &[0, 1], 0.3)], &h).unwrap();
        let out = wire_swap_loop(&c, &h, &RefineConfig::default()).unwrap();
        assert!(out.accepted.is_empty());
        assert_eq!(out.stages.refined, out.stages.swapped);
    }

    #[test]
    fn combinations_are_lexicographic() {
        assert_eq!(
            qubit_combinations(4, 2),
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]
        );
        assert_eq!(qubit_combinations(3, 1), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn invalid_gates_are_named() {
        let h = field(3, 1.0);
        let err = RefinableCircuit::new(
            vec![gate(Template::Z, &[0], 0.1), gate(Template::ZZ, &[1, 3], 0.1)],
            &h,
        )
        .unwrap_err();
        assert!(matches!(err, PostprocessError::InvalidGate { index: 1, .. }), "{err}");
        assert_eq!(
            RefinableCircuit::new(vec![], &h).unwrap_err(),
            PostprocessError::EmptyCircuit
        );
        let err = RefinableCircuit::new(vec![gate(Template::X, &[0], f64::NAN)], &h).unwrap_err();
        assert!(matches!(err, PostprocessError::InvalidGate { index: 0, .. }));
    }

    #[test]
    fn config_problems() {
        let cfg = RefineConfig {
            max_iters: 0,
            gradient_tolerance: 0.0,
            ..Default::default()
        };
        assert_eq!(cfg.problems().len(), 2);
        assert_eq!("derivative-free".parse::<RefineMethod>(), Ok(RefineMethod::DerivativeFree));
    }

    #[test]
    fn wrap_stays_in_period() {
        for t in [-30.0, -7.0, 0.0, 3.0, 12.6, 100.0] {
            let w = wrap(t);
            assert!(w > -2.0 * std::f64::consts::TAU && w <= 2.0 * std::f64::consts::TAU);
            assert!(((w - t) / (4.0 * PI)).fract().abs() < 1e-9 || ((w - t) / (4.0 * PI)).fract().abs() > 1.0 - 1e-9);
        }
    }
}
