//! One-dimensional Heisenberg chain with a longitudinal field, open boundary:
//!
//! ```text
//! H = J Σ_{n=0}^{N-2} (X_n X_{n+1} + Y_n Y_{n+1} + Z_n Z_{n+1}) + h Σ_{n=0}^{N-1} Z_n
//! ```
//!
//! Qubits are 0-based here; site `n` of the usual 1-based notation is qubit `n - 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigen::exact_ground_energy;
use crate::hamiltonian::Hamiltonian;
use crate::pauli::{Pauli, PauliString};
use crate::state::SimError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeisenbergError {
    #[error("chain length must be at least 2, got {0}")]
    TooShort(usize),
    #[error("{field} must be finite, got {value}")]
    NonFinite { field: &'static str, value: f64 },
    #[error("field strength must be non-negative, got {0}")]
    NegativeField(f64),
    #[error("chain length must be even, got {0}")]
    OddLength(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeisenbergSpec {
    /// Isotropic exchange coupling.
    pub j: f64,
    /// Longitudinal field strength.
    pub h: f64,
    /// Chain length.
    pub n: usize,
}

impl HeisenbergSpec {
    pub fn new(j: f64, h: f64, n: usize) -> Result<Self, HeisenbergError> {
        let spec = Self { j, h, n };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HeisenbergError> {
        if self.n < 2 {
            return Err(HeisenbergError::TooShort(self.n));
        }
        if !self.j.is_finite() {
            return Err(HeisenbergError::NonFinite { field: "J", value: self.j });
        }
        if !self.h.is_finite() {
            return Err(HeisenbergError::NonFinite { field: "h", value: self.h });
        }
        Ok(())
    }
}

const AXES: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

/// `J Σ (XX + YY + ZZ)` over nearest-neighbour bonds.
pub fn exchange_part(spec: &HeisenbergSpec) -> Result<Hamiltonian, HeisenbergError> {
    spec.validate()?;
    let terms = (0..spec.n - 1)
        .flat_map(|i| AXES.iter().map(move |&a| (spec.j, PauliString::pair(i, i + 1, a))))
        .collect();
    Ok(Hamiltonian::new(spec.n, terms)?)
}

/// Builds the chain Hamiltonian with `3(N-1) + N` terms; zero coefficients are kept.
pub fn build_heisenberg(spec: &HeisenbergSpec) -> Result<Hamiltonian, HeisenbergError> {
    let exchange = exchange_part(spec)?;
    let field = Hamiltonian::new(
        spec.n,
        (0..spec.n).map(|q| (spec.h, PauliString::single(q, Pauli::Z))).collect(),
    )?;
    Ok(exchange.plus(&field)?)
}

/// `S_z = ½ Σ Z_n`.
pub fn total_sz(n: usize) -> Result<Hamiltonian, SimError> {
    Hamiltonian::new(n, (0..n).map(|q| (0.5, PauliString::single(q, Pauli::Z))).collect())
}

/// Largest entry of `[H, S_z]`, by dense matrices.
pub fn sz_commutator_norm(h: &Hamiltonian) -> Result<f64, SimError> {
    let sz = total_sz(h.n_qubits())?;
    Ok(h.to_dense().commutator(&sz.to_dense()).max_abs())
}

/// Whether `H` conserves total magnetization (commutator entries below 1e-10).
pub fn commutes_with_total_sz(h: &Hamiltonian) -> Result<bool, SimError> {
    Ok(sz_commutator_norm(h)? < 1e-10)
}

/// Checks `[H_exchange, S_z] = 0` for the chain described by `spec`.
pub fn commutes_with_exchange(spec: &HeisenbergSpec) -> Result<bool, HeisenbergError> {
    Ok(commutes_with_total_sz(&exchange_part(spec)?)?)
}

pub fn ground_energy(spec: &HeisenbergSpec) -> Result<f64, HeisenbergError> {
    Ok(exact_ground_energy(&build_heisenberg(spec)?)?.0)
}

/// Exact ground energies `(h, E0)` for each field in `h_grid` at fixed `J`, even `N`.
pub fn critical_field_scan(
    j: f64,
    n: usize,
    h_grid: &[f64],
) -> Result<Vec<(f64, f64)>, HeisenbergError> {
    if !n.is_multiple_of(2) {
        return Err(HeisenbergError::OddLength(n));
    }
    h_grid
        .iter()
        .map(|&h| {
            if h < 0.0 {
                return Err(HeisenbergError::NegativeField(h));
            }
            Ok((h, ground_energy(&HeisenbergSpec::new(j, h, n)?)?))
        })
        .collect()
}

/// First grid field at which the ground energy leaves its zero-field value
/// by more than `1e-9 · |E0|`. `None` if it never does on the grid.
pub fn first_departure(j: f64, n: usize, h_grid: &[f64]) -> Result<Option<f64>, HeisenbergError> {
    let e_zero = ground_energy(&HeisenbergSpec::new(j, 0.0, n)?)?;
    let scan = critical_field_scan(j, n, h_grid)?;
    Ok(scan
        .into_iter()
        .find(|(_, e)| (e - e_zero).abs() > 1e-9 * e_zero.abs())
        .map(|(h, _)| h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::expectation;
    use crate::state::StateVector;
    use num_complex::Complex64;

    #[test]
    fn term_counts() {
        let h = build_heisenberg(&HeisenbergSpec::new(10.0, 10.0, 4).unwrap()).unwrap();
        assert_eq!(h.terms().len(), 13);
        let h = build_heisenberg(&HeisenbergSpec::new(0.0, 1.0, 4).unwrap()).unwrap();
        assert_eq!(h.nonzero_terms(), 4);
        let h = build_heisenberg(&HeisenbergSpec::new(1.0, 0.0, 2).unwrap()).unwrap();
        assert_eq!(h.nonzero_terms(), 3);
    }

    #[test]
    fn open_boundary() {
        let h = build_heisenberg(&HeisenbergSpec::new(1.0, 1.0, 5).unwrap()).unwrap();
        for (_, p) in h.terms() {
            if p.weight() == 2 {
                let qs: Vec<usize> = p.factors().map(|(q, _)| q).collect();
                assert_eq!(qs[1] - qs[0], 1);
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert_eq!(HeisenbergSpec::new(1.0, 1.0, 1), Err(HeisenbergError::TooShort(1)));
        assert!(matches!(
            HeisenbergSpec::new(f64::NAN, 1.0, 4),
            Err(HeisenbergError::NonFinite { field: "J", .. })
        ));
        assert!(matches!(
            HeisenbergSpec::new(1.0, f64::INFINITY, 4),
            Err(HeisenbergError::NonFinite { field: "h", .. })
        ));
    }

    #[test]
    fn small_ground_energies() {
        let e = ground_energy(&HeisenbergSpec::new(0.0, 1.0, 4).unwrap()).unwrap();
        assert!((e + 4.0).abs() < 1e-12);
        let e = ground_energy(&HeisenbergSpec::new(1.0, 0.0, 2).unwrap()).unwrap();
        assert!((e + 3.0).abs() < 1e-12);
    }

    #[test]
    fn total_sz_values() {
        let sz = total_sz(4).unwrap();
        let s = StateVector::zero(4).unwrap();
        assert!((expectation(&s, &sz).unwrap() - 2.0).abs() < 1e-15);
        let s = StateVector::basis(4, 0b1100).unwrap();
        assert!(expectation(&s, &sz).unwrap().abs() < 1e-15);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let singlet = StateVector::from_amplitudes(
            2,
            vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(r, 0.0),
                Complex64::new(-r, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        assert!(expectation(&singlet, &total_sz(2).unwrap()).unwrap().abs() < 1e-15);
    }

    #[test]
    fn commutation() {
        assert!(commutes_with_exchange(&HeisenbergSpec::new(10.0, 10.0, 4).unwrap()).unwrap());
        assert!(commutes_with_exchange(&HeisenbergSpec::new(1.0, 0.0, 2).unwrap()).unwrap());
        let spec = HeisenbergSpec::new(10.0, 10.0, 4).unwrap();
        let mut terms = exchange_part(&spec).unwrap().terms().to_vec();
        terms[0].0 = 20.0; // X0 X1 doubled
        let tampered = Hamiltonian::new(4, terms).unwrap();
        assert!(!commutes_with_total_sz(&tampered).unwrap());
    }

    #[test]
    fn pure_field_scan() {
        let scan = critical_field_scan(0.0, 4, &[1.0, 2.0]).unwrap();
        assert!((scan[0].1 + 4.0).abs() < 1e-12);
        assert!((scan[1].1 + 8.0).abs() < 1e-12);
    }

    #[test]
    fn scan_rejects_odd_and_negative() {
        assert_eq!(critical_field_scan(1.0, 3, &[1.0]), Err(HeisenbergError::OddLength(3)));
        assert_eq!(
            critical_field_scan(1.0, 4, &[-1.0]),
            Err(HeisenbergError::NegativeField(-1.0))
        );
    }
}
