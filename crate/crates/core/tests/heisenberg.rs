//! Heisenberg chain: exact ground energies, field independence below the
//! crossing, and total-magnetization symmetry.

use num_complex::Complex64;
use spingqe::eigen::spectrum;
use spingqe::heisenberg::{
    commutes_with_exchange, critical_field_scan, first_departure, ground_energy, sz_commutator_norm,
};
use spingqe::{build_heisenberg, exact_ground_energy, expectation, HeisenbergSpec, StateVector};

fn spec(j: f64, h: f64, n: usize) -> HeisenbergSpec {
    HeisenbergSpec::new(j, h, n).unwrap()
}

#[test]
fn strong_coupling_ground_energy() {
    let e = ground_energy(&spec(10.0, 10.0, 4)).unwrap();
    assert!((e - -64.641).abs() < 1e-3, "{e}");
    // Open four-site singlet: −(3 + 2√3) J.
    let analytic = -(3.0 + 2.0 * 3f64.sqrt()) * 10.0;
    assert!((e - analytic).abs() < 1e-9, "{e} vs {analytic}");
}

#[test]
fn ground_energy_is_flat_in_weak_fields() {
    let reference = ground_energy(&spec(10.0, 0.0, 4)).unwrap();
    for ratio in [0.01, 0.1, 0.5, 1.0] {
        let e = ground_energy(&spec(10.0, 10.0 * ratio, 4)).unwrap();
        assert!((e - reference).abs() <= 1e-9 * reference.abs(), "h/J = {ratio}: {e}");
    }
}

#[test]
fn weak_coupling_ground_is_polarized() {
    let s = spec(1.0, 10.0, 4);
    let h = build_heisenberg(&s).unwrap();
    // All spins down: every bond gives +J from ZZ, every site −h.
    let down = StateVector::basis(4, 0b1111).unwrap();
    let e = expectation(&down, &h).unwrap();
    assert!((e - -37.0).abs() < 1e-12);
    let hv = h.to_dense().apply(down.amplitudes());
    let residual: f64 = hv
        .iter()
        .zip(down.amplitudes())
        .map(|(a, b)| (a - Complex64::new(e, 0.0) * b).norm())
        .fold(0.0, f64::max);
    assert!(residual < 1e-12, "not an eigenstate: {residual}");
    let (e0, _) = exact_ground_energy(&h).unwrap();
    assert!((e0 - -37.0).abs() < 1e-9, "{e0}");
}

#[test]
fn pure_field_limit() {
    assert!((ground_energy(&spec(0.0, 10.0, 4)).unwrap() - -40.0).abs() < 1e-12);
}

#[test]
fn ground_energy_never_rises_with_field() {
    let grid: Vec<f64> = (0..=40).map(|i| 0.5 * i as f64).collect();
    for j in [1.0, 10.0] {
        let scan = critical_field_scan(j, 4, &grid).unwrap();
        for w in scan.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-9, "J = {j}: {:?} then {:?}", w[0], w[1]);
        }
    }
}

#[test]
fn weak_coupling_crossing_field() {
    let grid: Vec<f64> = (1..=400).map(|i| 0.01 * i as f64).collect();
    let h_c = first_departure(1.0, 4, &grid).unwrap().expect("crossing below h = 4");
    // The singlet meets the lowest triplet at the spin gap divided by the
    // Zeeman step 2h of one spin flip.
    let levels = spectrum(&build_heisenberg(&spec(1.0, 0.0, 4)).unwrap()).unwrap();
    let singlet = levels[0];
    let triplet = levels.iter().copied().find(|e| e - singlet > 1e-9).unwrap();
    let predicted = (triplet - singlet) / 2.0;
    assert!(h_c > predicted - 1e-9 && h_c <= predicted + 0.01 + 1e-9, "{h_c} vs {predicted}");
}

#[test]
fn field_free_part_conserves_magnetization() {
    for n in [2, 4, 6] {
        assert!(commutes_with_exchange(&spec(1.0, 0.0, n)).unwrap());
        let full = build_heisenberg(&spec(1.0, 0.7, n)).unwrap();
        assert!(sz_commutator_norm(&full).unwrap() < 1e-12, "N = {n}");
    }
}

#[test]
fn odd_chains_are_rejected_by_the_scan() {
    assert!(critical_field_scan(1.0, 3, &[0.0]).is_err());
    assert!(critical_field_scan(1.0, 4, &[-1.0]).is_err());
}
