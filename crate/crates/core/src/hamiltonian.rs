//! Real-weighted sums of Pauli strings.

use num_complex::Complex64;

use crate::pauli::PauliString;
use crate::state::{check_size, SimError, StateVector};

/// Imaginary residue tolerated (and discarded) in an expectation value.
const IMAG_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    n_qubits: usize,
    terms: Vec<(f64, PauliString)>,
}

impl Hamiltonian {
    pub fn new(n_qubits: usize, terms: Vec<(f64, PauliString)>) -> Result<Self, SimError> {
        check_size(n_qubits)?;
        for (c, p) in &terms {
            if !c.is_finite() {
                return Err(SimError::NonFiniteCoefficient(*c));
            }
            if let Some(q) = p.max_qubit() {
                if q >= n_qubits {
                    return Err(SimError::QubitOutOfRange { qubit: q, n_qubits });
                }
            }
        }
        Ok(Self { n_qubits, terms })
    }

    /// The zero operator.
    pub fn zero(n_qubits: usize) -> Result<Self, SimError> {
        Self::new(n_qubits, Vec::new())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    /// Number of terms with a nonzero coefficient.
    pub fn nonzero_terms(&self) -> usize {
        self.terms.iter().filter(|(c, _)| *c != 0.0).count()
    }

    /// Sum of two operators on the same register (terms are concatenated).
    pub fn plus(&self, other: &Hamiltonian) -> Result<Hamiltonian, SimError> {
        if self.n_qubits != other.n_qubits {
            return Err(SimError::DimensionMismatch {
                state: other.n_qubits,
                hamiltonian: self.n_qubits,
            });
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Self {
            n_qubits: self.n_qubits,
            terms,
        })
    }

    /// Dense `2^N × 2^N` matrix, row-major.
    pub fn to_dense(&self) -> DenseMatrix {
        let dim = 1usize << self.n_qubits;
        let mut m = DenseMatrix::zeros(dim);
        for (c, p) in &self.terms {
            let masks = p.masks();
            for x in 0..dim {
                // column x, row x ^ x_mask
                let v = masks.phase(x) * *c;
                m.add(x ^ masks.x_mask, x, v);
            }
        }
        m
    }
}

/// Square complex matrix stored as separate real and imaginary planes.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            re: vec![0.0; dim * dim],
            im: vec![0.0; dim * dim],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        let k = row * self.dim + col;
        Complex64::new(self.re[k], self.im[k])
    }

    pub fn add(&mut self, row: usize, col: usize, v: Complex64) {
        let k = row * self.dim + col;
        self.re[k] += v.re;
        self.im[k] += v.im;
    }

    pub fn is_real(&self) -> bool {
        self.im.iter().all(|&v| v == 0.0)
    }

    pub fn mul(&self, other: &DenseMatrix) -> DenseMatrix {
        let n = self.dim;
        let mut out = DenseMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.add(i, j, a * other.get(k, j));
                }
            }
        }
        out
    }

    /// `self * other - other * self`.
    pub fn commutator(&self, other: &DenseMatrix) -> DenseMatrix {
        let ab = self.mul(other);
        let ba = other.mul(self);
        DenseMatrix {
            dim: self.dim,
            re: ab.re.iter().zip(&ba.re).map(|(a, b)| a - b).collect(),
            im: ab.im.iter().zip(&ba.im).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r.hypot(*i))
            .fold(0.0, f64::max)
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }
}

/// `Σ_k c_k ⟨ψ|P_k|ψ⟩`. The imaginary residue is checked and discarded.
pub fn expectation(state: &StateVector, h: &Hamiltonian) -> Result<f64, SimError> {
    if state.n_qubits() != h.n_qubits() {
        return Err(SimError::DimensionMismatch {
            state: state.n_qubits(),
            hamiltonian: h.n_qubits(),
        });
    }
    let mut total = Complex64::new(0.0, 0.0);
    for (c, p) in h.terms() {
        total += state.pauli_expectation(p)? * *c;
    }
    let scale = h.terms().iter().map(|(c, _)| c.abs()).sum::<f64>().max(1.0);
    if total.im.abs() > IMAG_TOLERANCE * scale {
        return Err(SimError::ComplexExpectation(total.im));
    }
    Ok(total.re)
}
