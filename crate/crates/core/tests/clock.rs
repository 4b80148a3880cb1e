mod common;

use hamlet::clock::{
    build_clock_hamiltonian, check_kitaev_bounds, clock_instance, history_state, Gate, VerifierCircuit,
};
use hamlet::operator::{CMatrix, DEFAULT_MAX_DIM};
use hamlet::random::{random_unit_vector, rng_from_seed};
use hamlet::PureState;
use proptest::prelude::*;

fn random_proof(n: usize, seed: u64) -> PureState {
    let mut rng = rng_from_seed(seed);
    PureState::new(vec![2; n], random_unit_vector(1 << n, &mut rng)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn history_states_are_in_the_kernel(n_proof in 1usize..=2, n_anc in 0usize..=1, len in 1usize..=4, seed in any::<u64>()) {
        let circuit = VerifierCircuit::random(n_proof, n_anc, len, seed).unwrap();
        let h = build_clock_hamiltonian(&circuit, DEFAULT_MAX_DIM).unwrap();
        let hist = history_state(&circuit, &random_proof(n_proof, seed ^ 7), DEFAULT_MAX_DIM).unwrap();
        prop_assert!((hist.amplitudes().norm() - 1.0).abs() < 1e-10);
        prop_assert!(h.legal().expectation(hist.amplitudes()).abs() <= 1e-9);
        for part in [&h.h_in, &h.h_out, &h.h_prop, &h.h_stab] {
            prop_assert!(part.lambda_min() >= -1e-9);
        }
    }

    #[test]
    fn emitted_instance_is_five_local_with_scaled_spectrum(len in 1usize..=3, seed in any::<u64>()) {
        let circuit = VerifierCircuit::random(1, 1, len, seed).unwrap();
        let emb = clock_instance(&circuit).unwrap();
        prop_assert!(emb.instance.is_valid());
        prop_assert!(emb.instance.terms().iter().all(|t| t.sites().len() <= 5));
        let h = build_clock_hamiltonian(&circuit, DEFAULT_MAX_DIM).unwrap();
        let want = h.total.lambda_min();
        prop_assert!((common::lambda_min(&emb.instance) * emb.scale - want).abs() < 1e-8);
    }
}

#[test]
fn identity_circuit_parts() {
    let circuit = VerifierCircuit::new(1, 0, vec![Gate::identity(0)]).unwrap();
    let h = build_clock_hamiltonian(&circuit, DEFAULT_MAX_DIM).unwrap();
    assert!(h.h_in.frobenius_norm() < 1e-15);
    assert!(h.h_stab.frobenius_norm() < 1e-15);
    // proof ⊗ clock: ½(I ⊗ (I - X)) on the single clock qubit
    let half = hamlet::C64::new(0.5, 0.0);
    let local = CMatrix::from_row_slice(2, 2, &[half, -half, -half, half]);
    let want = hamlet::operator::kron(&CMatrix::identity(2, 2), &local);
    assert!((h.h_prop.matrix() - want).norm() < 1e-14);
}

#[test]
fn identity_history_state() {
    let circuit = VerifierCircuit::new(1, 0, vec![Gate::identity(0)]).unwrap();
    let hist = history_state(&circuit, &PureState::basis(vec![2], 1).unwrap(), DEFAULT_MAX_DIM).unwrap();
    let a = hist.amplitudes();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    // |1>|t=0> is index 2, |1>|t=1> is index 3
    assert!((a[2].re - r).abs() < 1e-12 && (a[3].re - r).abs() < 1e-12);
    assert!(a[0].norm() < 1e-15 && a[1].norm() < 1e-15);
}

#[test]
fn partial_rotation_yes_energy() {
    let theta = 2.0 * (0.25f64).sqrt().asin();
    let circuit = VerifierCircuit::new(1, 0, vec![Gate::ry(0, std::f64::consts::PI - theta)]).unwrap();
    let r = check_kitaev_bounds(&circuit, 0.25, DEFAULT_MAX_DIM).unwrap();
    assert!(r.max_acceptance >= 0.75 - 1e-9);
    assert_eq!(r.yes_check, Some(true));
    assert!(r.witness_energy <= 0.25 / 2.0 + 1e-9);
}

#[test]
fn always_reject_has_a_gap() {
    // the proof qubit is reset to |0> by a swap with a fresh ancilla
    let circuit = VerifierCircuit::new(1, 1, vec![Gate::swap(0, 1)]).unwrap();
    let r = check_kitaev_bounds(&circuit, 0.1, DEFAULT_MAX_DIM).unwrap();
    assert!(r.max_acceptance <= 1e-12);
    assert!(r.lambda_min >= 1e-4);
    assert_eq!(r.no_check, Some(true));
}

#[test]
fn non_unitary_gate_is_rejected() {
    let m = CMatrix::identity(2, 2) * hamlet::C64::new(2.0, 0.0);
    assert!(VerifierCircuit::new(1, 0, vec![Gate::new(vec![0], m)]).is_err());
    assert!(VerifierCircuit::new(1, 0, vec![Gate::identity(3)]).is_err());
}

#[test]
fn circuit_json_round_trip() {
    let c = VerifierCircuit::random(2, 1, 3, 9).unwrap();
    let back = VerifierCircuit::from_json(&c.to_json().unwrap()).unwrap();
    assert_eq!(back.to_json().unwrap(), c.to_json().unwrap());
}
