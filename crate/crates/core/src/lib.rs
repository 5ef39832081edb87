//! Generative ground-state search for spin Hamiltonians.
//!
//! A decoder-only transformer emits sequences of Pauli-rotation tokens; it is
//! trained online so that its cumulative logits track the energies of every
//! circuit prefix. Sampled circuits are then polished by continuous angle
//! refinement and greedy qubit reassignment.

pub mod circuit;
pub mod eigen;
pub mod hamiltonian;
pub mod heisenberg;
pub mod minimize;
pub mod model;
pub mod optim;
pub mod pauli;
pub mod pool;
pub mod postprocess;
pub mod state;
pub mod trainer;

pub use circuit::{circuit_energy, energy_gradient, prefix_energies, simulate, Rotation};
pub use eigen::exact_ground_energy;
pub use hamiltonian::{expectation, Hamiltonian};
pub use heisenberg::{build_heisenberg, HeisenbergSpec};
pub use pauli::{Pauli, PauliString};
pub use pool::{build_vocabulary, PoolConfig, PoolVariant, Template, TokenId, Vocabulary, BOS};
pub use state::{apply_pauli_rotation, SimError, StateVector};
