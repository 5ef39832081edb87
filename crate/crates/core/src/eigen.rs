//! Dense Hermitian diagonalization of small Hamiltonians.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::hamiltonian::{DenseMatrix, Hamiltonian};
use crate::state::{check_size, SimError, StateVector};

/// All eigenvalues in ascending order and a unit eigenvector for the lowest.
pub fn hermitian_ground(m: &DenseMatrix) -> (Vec<f64>, Vec<Complex64>) {
    let n = m.dim;
    let a = DMatrix::from_fn(n, n, |i, j| Complex64::new(m.re[i * n + j], m.im[i * n + j]));
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let ground = eig.eigenvectors.column(order[0]).iter().copied().collect();
    (values, ground)
}

/// Lowest eigenvalue of `h` and a unit-norm eigenvector.
pub fn exact_ground_energy(h: &Hamiltonian) -> Result<(f64, StateVector), SimError> {
    check_size(h.n_qubits())?;
    let (values, v) = hermitian_ground(&h.to_dense());
    Ok((values[0], StateVector::from_amplitudes(h.n_qubits(), v)?))
}

/// Full ascending spectrum of `h`.
pub fn spectrum(h: &Hamiltonian) -> Result<Vec<f64>, SimError> {
    check_size(h.n_qubits())?;
    Ok(hermitian_ground(&h.to_dense()).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::expectation;
    use crate::pauli::{Pauli, PauliString};

    fn dense(rows: &[&[f64]]) -> DenseMatrix {
        let n = rows.len();
        let mut m = DenseMatrix::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            m.re[i * n..(i + 1) * n].copy_from_slice(r);
        }
        m
    }

    #[test]
    fn real_two_by_two() {
        let (values, v) = hermitian_ground(&dense(&[&[2.0, 1.0], &[1.0, 2.0]]));
        assert!((values[0] - 1.0).abs() < 1e-14 && (values[1] - 3.0).abs() < 1e-14);
        assert!((v[0] + v[1]).norm() < 1e-14);
    }

    #[test]
    fn eigenvalues_ascend() {
        let (values, _) = hermitian_ground(&dense(&[&[3.0, 0.0, 0.0], &[0.0, -1.0, 0.0], &[0.0, 0.0, 2.0]]));
        assert_eq!(values, vec![-1.0, 2.0, 3.0]);
    }

    #[test]
    fn complex_hermitian_ground() {
        // H = X + Y has eigenvalues ±√2.
        let h = Hamiltonian::new(
            1,
            vec![
                (1.0, PauliString::single(0, Pauli::X)),
                (1.0, PauliString::single(0, Pauli::Y)),
            ],
        )
        .unwrap();
        let (e0, psi) = exact_ground_energy(&h).unwrap();
        assert!((e0 + 2f64.sqrt()).abs() < 1e-12);
        assert!((expectation(&psi, &h).unwrap() - e0).abs() < 1e-12);
        let sp = spectrum(&h).unwrap();
        assert_eq!(sp.len(), 2);
        assert!((sp[1] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn too_large() {
        let h = Hamiltonian::zero(12).unwrap();
        assert!(h.n_qubits() == 12);
        assert!(matches!(
            Hamiltonian::zero(13),
            Err(SimError::TooLarge { limit: 12, .. })
        ));
    }
}
