use proptest::prelude::*;

use rabi_stark::dynamics::{
    evolve_state, propagate_density, propagate_state, Hamiltonian, Method, PropagationOptions,
    TimeGrid, NORM_DRIFT_FACTOR,
};
use rabi_stark::models::{parity_operator, rabi_stark_hamiltonian, LindbladParams, ModelParams};
use rabi_stark::qspace::{basis_state, DensityMatrix, HilbertSpace, QOperator, QubitLabel, StateVector};

fn runge_kutta(tol: f64) -> PropagationOptions {
    PropagationOptions {
        method: Method::RungeKutta,
        store_states: true,
        ..PropagationOptions::with_tol(tol)
    }
}

fn expectation(op: &QOperator, psi: &StateVector) -> f64 {
    op.expectation(psi).unwrap().re
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 12,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn unitary_runs_conserve_norm_parity_and_energy(
        w0 in -2.5..2.5f64,
        gamma in -0.45..0.45f64,
        g in 0.0..0.3f64,
        n in 0usize..4,
        excited in any::<bool>(),
    ) {
        let tol = 1e-9;
        let p = ModelParams::new(w0, 1.0, gamma, g).unwrap();
        let space = HilbertSpace::new(n + 8).unwrap();
        let h = rabi_stark_hamiltonian(&p, space);
        let label = if excited { QubitLabel::E } else { QubitLabel::G };
        let psi0 = basis_state(space, label, n).unwrap();
        let grid = TimeGrid::new(0.0, 60.0, 61).unwrap();
        let t = propagate_state(Hamiltonian::Constant(&h), &psi0, &grid, &runge_kutta(tol)).unwrap();
        let budget = NORM_DRIFT_FACTOR * tol;
        let parity = parity_operator(space);
        let (pi0, e0) = (expectation(&parity, &psi0), expectation(&h, &psi0));
        for psi in t.states.as_ref().unwrap() {
            prop_assert!((psi.norm() - 1.0).abs() <= budget);
            prop_assert!((expectation(&parity, psi) - pi0).abs() <= budget);
            // energy drift is measured relative to the spectral scale of H
            let scale = h.max_abs().max(1.0);
            prop_assert!((expectation(&h, psi) - e0).abs() <= budget * scale);
        }
    }
}

/// Largest amplitude error of the adaptive integrator against the exact
/// eigendecomposition propagator on a fixed problem.
fn integrator_error(tol: f64) -> f64 {
    let p = ModelParams::new(1.3, 1.0, -0.2, 0.2).unwrap();
    let space = HilbertSpace::new(10).unwrap();
    let h = rabi_stark_hamiltonian(&p, space);
    let psi0 = basis_state(space, QubitLabel::E, 2).unwrap();
    let times: Vec<f64> = (0..=40).map(|i| i as f64 * 2.5).collect();
    let exact = evolve_state(Hamiltonian::Constant(&h), &psi0, 0.0, &times, &PropagationOptions::default())
        .unwrap()
        .0;
    let approx = evolve_state(Hamiltonian::Constant(&h), &psi0, 0.0, &times, &runge_kutta(tol))
        .unwrap()
        .0;
    exact
        .iter()
        .zip(&approx)
        .map(|(a, b)| (a.amplitudes() - b.amplitudes()).norm())
        .fold(0.0, f64::max)
}

#[test]
fn halving_tolerance_halves_error() {
    let mut tol = 1e-6;
    let mut prev = integrator_error(tol);
    for _ in 0..5 {
        tol /= 2.0;
        let err = integrator_error(tol);
        eprintln!("tol {tol:.2e}: error {err:.3e} (ratio {:.2})", prev / err);
        assert!(prev / err >= 2.0, "tol {tol:e}: {prev:e} -> {err:e}");
        prev = err;
    }
}

#[test]
fn pure_decay_follows_closed_form() {
    // H = 0, ρ₀ = |e,1⟩: the photon survives with p = e^{−2κt}, so
    // ⟨a†a⟩ = p falls monotonically while tr ρ² = p² + (1 − p)² dips to ½
    // at p = ½ and recovers.
    let kappa = 0.05;
    let space = HilbertSpace::new(4).unwrap();
    let h = QOperator::zeros(space);
    let rho0 = DensityMatrix::from_pure(&basis_state(space, QubitLabel::E, 1).unwrap());
    let opts = PropagationOptions {
        store_states: true,
        ..PropagationOptions::with_tol(1e-10)
    };
    let grid = TimeGrid::new(0.0, 40.0, 201).unwrap();
    let t = propagate_density(&h, &LindbladParams::new(kappa).unwrap(), &rho0, &grid, &opts).unwrap();
    let n_mean = t.series("n_mean").unwrap();
    for w in n_mean.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
    for ((time, n), rho) in t.times.iter().zip(n_mean).zip(t.densities.as_ref().unwrap()) {
        let p = (-2.0 * kappa * time).exp();
        assert!((n - p).abs() < 1e-7, "t={time}: {n} vs {p}");
        assert!((rho.purity() - (p * p + (1.0 - p) * (1.0 - p))).abs() < 1e-7);
    }
}

#[test]
fn strong_decay_stays_physical() {
    let p = ModelParams::new(2.0, 1.0, -0.3, 0.2).unwrap();
    let space = HilbertSpace::new(10).unwrap();
    let h = rabi_stark_hamiltonian(&p, space);
    let rho0 = DensityMatrix::from_pure(&basis_state(space, QubitLabel::G, 5).unwrap());
    let opts = PropagationOptions {
        store_states: true,
        ..PropagationOptions::with_tol(1e-9)
    };
    let grid = TimeGrid::new(0.0, 30.0, 61).unwrap();
    let t = propagate_density(&h, &LindbladParams::new(0.2).unwrap(), &rho0, &grid, &opts).unwrap();
    for rho in t.densities.as_ref().unwrap() {
        assert!((rho.trace() - 1.0).abs() < 1e-7);
        assert!(rho.min_eigenvalue() > -1e-6);
    }
    let n_mean = t.series("n_mean").unwrap();
    assert!(n_mean.last().unwrap() < &0.1, "{:?}", n_mean.last());
}

#[test]
fn zero_decay_matches_pure_state() {
    let p = ModelParams::new(2.2, 1.0, -0.4, 0.1).unwrap();
    let space = HilbertSpace::new(12).unwrap();
    let h = rabi_stark_hamiltonian(&p, space);
    let psi0 = basis_state(space, QubitLabel::G, 5).unwrap();
    let grid = TimeGrid::new(0.0, 50.0, 51).unwrap();
    let opts = PropagationOptions::with_tol(1e-10);
    let pure = propagate_state(Hamiltonian::Constant(&h), &psi0, &grid, &opts).unwrap();
    let mixed = propagate_density(
        &h,
        &LindbladParams::new(0.0).unwrap(),
        &DensityMatrix::from_pure(&psi0),
        &grid,
        &opts,
    )
    .unwrap();
    for ((name, a), (other, b)) in pure.columns().zip(mixed.columns()) {
        assert_eq!(name, other);
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-6, "{name}: {x} vs {y}");
        }
    }
}
