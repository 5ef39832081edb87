//! Circuits of Pauli rotations: simulation, prefix energies and
//! parameter-shift gradients.

use std::f64::consts::FRAC_PI_2;

use crate::hamiltonian::{expectation, Hamiltonian};
use crate::pauli::PauliString;
use crate::state::{SimError, StateVector};

/// One gate `exp(-i angle/2 · pauli)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    pub pauli: PauliString,
    pub angle: f64,
}

impl Rotation {
    pub fn new(pauli: PauliString, angle: f64) -> Self {
        Self { pauli, angle }
    }
}

fn step_err(step: usize) -> impl FnOnce(SimError) -> SimError {
    move |e| SimError::GateFailed {
        step,
        source: Box::new(e),
    }
}

/// Applies every gate of `circuit` to a copy of `initial`.
pub fn simulate(circuit: &[Rotation], initial: &StateVector) -> Result<StateVector, SimError> {
    let mut state = initial.clone();
    for (step, g) in circuit.iter().enumerate() {
        state.apply_rotation(&g.pauli, g.angle).map_err(step_err(step))?;
    }
    Ok(state)
}

/// Energy of the state prepared by the full circuit.
pub fn circuit_energy(
    circuit: &[Rotation],
    h: &Hamiltonian,
    initial: &StateVector,
) -> Result<f64, SimError> {
    expectation(&simulate(circuit, initial)?, h)
}

/// `E_1..E_T`, where `E_t` is the energy after the first `t` gates.
/// One gate application per step.
pub fn prefix_energies(
    circuit: &[Rotation],
    h: &Hamiltonian,
    initial: &StateVector,
) -> Result<Vec<f64>, SimError> {
    if circuit.is_empty() {
        return Err(SimError::EmptyCircuit);
    }
    let mut state = initial.clone();
    circuit
        .iter()
        .enumerate()
        .map(|(step, g)| {
            state.apply_rotation(&g.pauli, g.angle).map_err(step_err(step))?;
            expectation(&state, h)
        })
        .collect()
}

/// `∂E_T/∂θ_j` for every gate by the parameter-shift rule
/// `[E(θ_j + π/2) − E(θ_j − π/2)] / 2`, exact for Pauli generators.
pub fn energy_gradient(
    circuit: &[Rotation],
    h: &Hamiltonian,
    initial: &StateVector,
) -> Result<Vec<f64>, SimError> {
    if circuit.is_empty() {
        return Err(SimError::EmptyCircuit);
    }
    // States before each gate are shared by both shifted evaluations.
    let mut prefixes = Vec::with_capacity(circuit.len());
    let mut state = initial.clone();
    for (step, g) in circuit.iter().enumerate() {
        prefixes.push(state.clone());
        state.apply_rotation(&g.pauli, g.angle).map_err(step_err(step))?;
    }
    let shifted = |j: usize, delta: f64| -> Result<f64, SimError> {
        let mut s = prefixes[j].clone();
        s.apply_rotation(&circuit[j].pauli, circuit[j].angle + delta)
            .map_err(step_err(j))?;
        for (step, g) in circuit.iter().enumerate().skip(j + 1) {
            s.apply_rotation(&g.pauli, g.angle).map_err(step_err(step))?;
        }
        expectation(&s, h)
    };
    (0..circuit.len())
        .map(|j| Ok((shifted(j, FRAC_PI_2)? - shifted(j, -FRAC_PI_2)?) / 2.0))
        .collect()
}
