//! Dense statevector and in-place Pauli rotations.

use num_complex::Complex64;
use thiserror::Error;

use crate::pauli::PauliString;

/// Largest register handled by the dense simulator and the eigensolver.
pub const MAX_QUBITS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("qubit index {qubit} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },
    #[error("rotation angle must be finite, got {0}")]
    NonFiniteAngle(f64),
    #[error("state has {state} qubits but the Hamiltonian acts on {hamiltonian}")]
    DimensionMismatch { state: usize, hamiltonian: usize },
    #[error("amplitude vector of length {len} is not 2^{n_qubits}")]
    BadLength { len: usize, n_qubits: usize },
    #[error("circuit is empty")]
    EmptyCircuit,
    #[error("gate {step} failed: {source}")]
    GateFailed {
        step: usize,
        #[source]
        source: Box<SimError>,
    },
    #[error("{n_qubits} qubits exceeds the dense limit of {limit}")]
    TooLarge { n_qubits: usize, limit: usize },
    #[error("Hamiltonian coefficient {0} is not finite")]
    NonFiniteCoefficient(f64),
    #[error("expectation value has imaginary residue {0:e}")]
    ComplexExpectation(f64),
    #[error("a register needs at least one qubit")]
    NoQubits,
}

/// Amplitudes of an `n_qubits` register, indexed little-endian by qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩`.
    pub fn zero(n_qubits: usize) -> Result<Self, SimError> {
        Self::basis(n_qubits, 0)
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self, SimError> {
        check_size(n_qubits)?;
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(SimError::BadLength { len: index, n_qubits });
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amplitudes })
    }

    /// Wraps raw amplitudes, rescaling them to unit norm.
    pub fn from_amplitudes(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self, SimError> {
        check_size(n_qubits)?;
        if amplitudes.len() != 1usize << n_qubits {
            return Err(SimError::BadLength {
                len: amplitudes.len(),
                n_qubits,
            });
        }
        let mut s = Self { n_qubits, amplitudes };
        let norm = s.norm_sqr().sqrt();
        if norm > 0.0 {
            s.amplitudes.iter_mut().for_each(|a| *a /= norm);
        }
        Ok(s)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    fn check_operator(&self, p: &PauliString) -> Result<(), SimError> {
        match p.max_qubit() {
            Some(q) if q >= self.n_qubits => Err(SimError::QubitOutOfRange {
                qubit: q,
                n_qubits: self.n_qubits,
            }),
            _ => Ok(()),
        }
    }

    /// Applies `exp(-i θ/2 P) = cos(θ/2) I - i sin(θ/2) P` in place.
    pub fn apply_rotation(&mut self, p: &PauliString, theta: f64) -> Result<(), SimError> {
        if !theta.is_finite() {
            return Err(SimError::NonFiniteAngle(theta));
        }
        self.check_operator(p)?;
        let (s, c) = (theta / 2.0).sin_cos();
        let m = p.masks();
        let minus_is = Complex64::new(0.0, -s);
        if m.x_mask == 0 {
            for (x, a) in self.amplitudes.iter_mut().enumerate() {
                *a *= c + minus_is * m.phase(x);
            }
            return Ok(());
        }
        for x in 0..self.amplitudes.len() {
            let y = x ^ m.x_mask;
            if y < x {
                continue;
            }
            let a = self.amplitudes[x];
            let b = self.amplitudes[y];
            // P|y> = phase(y)|x>, P|x> = phase(x)|y>
            self.amplitudes[x] = a * c + minus_is * m.phase(y) * b;
            self.amplitudes[y] = b * c + minus_is * m.phase(x) * a;
        }
        Ok(())
    }

    /// `⟨ψ|P|ψ⟩`, complex in general.
    pub fn pauli_expectation(&self, p: &PauliString) -> Result<Complex64, SimError> {
        self.check_operator(p)?;
        let m = p.masks();
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(x, a)| self.amplitudes[x ^ m.x_mask].conj() * m.phase(x) * a)
            .sum())
    }

    /// `P|ψ⟩` as a new vector.
    pub fn apply_pauli(&self, p: &PauliString) -> Result<StateVector, SimError> {
        self.check_operator(p)?;
        let m = p.masks();
        let mut out = vec![Complex64::new(0.0, 0.0); self.amplitudes.len()];
        for (x, a) in self.amplitudes.iter().enumerate() {
            out[x ^ m.x_mask] += m.phase(x) * a;
        }
        Ok(StateVector {
            n_qubits: self.n_qubits,
            amplitudes: out,
        })
    }
}

/// Functional form of [`StateVector::apply_rotation`].
pub fn apply_pauli_rotation(
    state: &StateVector,
    p: &PauliString,
    theta: f64,
) -> Result<StateVector, SimError> {
    let mut out = state.clone();
    out.apply_rotation(p, theta)?;
    Ok(out)
}

pub(crate) fn check_size(n_qubits: usize) -> Result<(), SimError> {
    if n_qubits == 0 {
        return Err(SimError::NoQubits);
    }
    if n_qubits > MAX_QUBITS {
        return Err(SimError::TooLarge {
            n_qubits,
            limit: MAX_QUBITS,
        });
    }
    Ok(())
}
