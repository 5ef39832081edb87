//! Pauli strings over a register of qubits.
//!
//! A [`PauliString`] stores only its non-identity factors. Qubit `q` maps to
//! bit `q` of a computational-basis index (little-endian), so `|0011⟩` written
//! left to right as qubits 0..3 is basis index `0b1100`.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Single-qubit Pauli axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn symbol(self) -> char {
        match self {
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Tensor product of single-qubit Paulis; absent qubits act as identity.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    factors: BTreeMap<usize, Pauli>,
}

/// Bit masks describing how a Pauli string acts on basis states:
/// `P|x⟩ = i^{n_y} (-1)^{|x & z|} |x ^ x_mask⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PauliMasks {
    pub x_mask: usize,
    pub z_mask: usize,
    pub n_y: u32,
}

impl PauliMasks {
    /// Phase picked up by basis state `x` (before the bit flip).
    #[inline]
    pub fn phase(&self, x: usize) -> Complex64 {
        let sign = if (x & self.z_mask).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
        match self.n_y % 4 {
            0 => Complex64::new(sign, 0.0),
            1 => Complex64::new(0.0, sign),
            2 => Complex64::new(-sign, 0.0),
            _ => Complex64::new(0.0, -sign),
        }
    }
}

impl PauliString {
    pub fn identity() -> Self {
        Self::default()
    }

    /// Builds a string from `(qubit, axis)` pairs. A repeated qubit keeps the last axis.
    pub fn new<I: IntoIterator<Item = (usize, Pauli)>>(factors: I) -> Self {
        Self {
            factors: factors.into_iter().collect(),
        }
    }

    pub fn single(qubit: usize, axis: Pauli) -> Self {
        Self::new([(qubit, axis)])
    }

    pub fn pair(a: usize, b: usize, axis: Pauli) -> Self {
        Self::new([(a, axis), (b, axis)])
    }

    pub fn is_identity(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factors(&self) -> impl Iterator<Item = (usize, Pauli)> + '_ {
        self.factors.iter().map(|(&q, &p)| (q, p))
    }

    pub fn get(&self, qubit: usize) -> Option<Pauli> {
        self.factors.get(&qubit).copied()
    }

    pub fn weight(&self) -> usize {
        self.factors.len()
    }

    /// Largest qubit index touched, if any.
    pub fn max_qubit(&self) -> Option<usize> {
        self.factors.keys().next_back().copied()
    }

    pub fn masks(&self) -> PauliMasks {
        let mut m = PauliMasks {
            x_mask: 0,
            z_mask: 0,
            n_y: 0,
        };
        for (&q, &p) in &self.factors {
            match p {
                Pauli::X => m.x_mask |= 1 << q,
                Pauli::Z => m.z_mask |= 1 << q,
                Pauli::Y => {
                    m.x_mask |= 1 << q;
                    m.z_mask |= 1 << q;
                    m.n_y += 1;
                }
            }
        }
        m
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "I");
        }
        for (i, (q, p)) in self.factors().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}{}", p.symbol(), q)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks_for_y_include_both_bits() {
        let p = PauliString::new([(0, Pauli::Y), (2, Pauli::Z), (3, Pauli::X)]);
        let m = p.masks();
        assert_eq!(m.x_mask, 0b1001);
        assert_eq!(m.z_mask, 0b0101);
        assert_eq!(m.n_y, 1);
    }

    #[test]
    fn y_phase_matches_matrix() {
        // Y|0> = i|1>, Y|1> = -i|0>
        let m = PauliString::single(0, Pauli::Y).masks();
        assert_eq!(m.phase(0), Complex64::new(0.0, 1.0));
        assert_eq!(m.phase(1), Complex64::new(0.0, -1.0));
    }

    #[test]
    fn display() {
        assert_eq!(PauliString::pair(1, 2, Pauli::X).to_string(), "X1 X2");
        assert_eq!(PauliString::identity().to_string(), "I");
    }
}
