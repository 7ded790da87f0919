//! Cross-module invariants that tie the eigenbasis, the kernels and the
//! measures together on a shared mid-resolution pipeline.

use std::sync::{Arc, OnceLock};

use branchfk::grid::Grid;
use branchfk::model::{reduce, ModelSpec};
use branchfk::qprocess;
use branchfk::qsd;
use branchfk::semigroup::KernelEvaluator;
use branchfk::spectral::solve_eigen;

struct Pipe {
    eval: KernelEvaluator,
}

fn drifted() -> &'static Pipe {
    static P: OnceLock<Pipe> = OnceLock::new();
    P.get_or_init(|| {
        let grid = Grid::new(12.0, 6001).unwrap();
        let spec = ModelSpec::hermite(1.0, 1.0).unwrap();
        let reduced = reduce(&spec, &grid).unwrap();
        let basis = Arc::new(solve_eigen(&reduced, 48).unwrap());
        Pipe { eval: KernelEvaluator::new(basis.clone(), &reduced) }
    })
}

#[test]
fn eigenfunctions_are_semigroup_eigenvectors_via_kernel_integrals() {
    // integral route, not coefficient space: int p~(t,x,y) psi_k(y) dy must
    // reproduce e^{-lambda_k t} psi_k(x) at probe nodes
    let pl = drifted();
    let ev = &pl.eval;
    let basis = ev.basis();
    let grid = ev.grid();
    for &t in &[0.1, 1.0] {
        for k in [0usize, 1, 3, 7] {
            let decay = (-basis.lambdas[k] * t).exp();
            let mut worst = 0.0f64;
            for probe in (0..grid.len()).step_by(479) {
                let x = grid.node(probe);
                let row = ev.ptilde_row(t, x).unwrap();
                let applied = grid.integrate_product(&row, &basis.psis[k]);
                worst = worst.max((applied - decay * basis.psis[k][probe]).abs());
            }
            assert!(worst < 1e-6, "t={t} k={k}: sup defect {worst:.2e}");
        }
    }
}

#[test]
fn theta_basis_orthonormal_in_speed_measure() {
    let pl = drifted();
    let ev = &pl.eval;
    let basis = ev.basis();
    let rho = ev.speed_weights();
    for j in 0..8 {
        for k in j..8 {
            let w: Vec<f64> = basis.thetas[j]
                .iter()
                .zip(basis.thetas[k].iter())
                .zip(&rho)
                .map(|((&a, &b), &r)| a * b * r)
                .collect();
            let dot = basis.grid.integrate(&w);
            let expect = if j == k { 1.0 } else { 0.0 };
            assert!((dot - expect).abs() < 1e-8, "({j},{k}): {dot}");
        }
    }
}

#[test]
fn qsd_left_eigenvector_and_q_invariance_share_the_same_ground_state() {
    let pl = drifted();
    let ev = &pl.eval;
    let nu = qsd::build_qsd(ev);
    let defect = qsd::left_eigenvector_defect(ev, &nu, 0.8).unwrap();
    assert!(defect < 1e-8, "left eigenvector defect {defect:.2e}");

    // q-invariance of psi_0^2 restricted to interior probes
    let grid = ev.grid();
    let psi0 = &ev.basis().psis[0];
    for &j in &[2000usize, 3000, 4000] {
        let y = grid.node(j);
        let integrand: Vec<f64> = grid
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if psi0[i].abs() < 1e-200 {
                    0.0
                } else {
                    qprocess::kernel_q(ev, 0.8, x, y).unwrap() * psi0[i] * psi0[i]
                }
            })
            .collect();
        let lhs = grid.integrate(&integrand);
        assert!((lhs - psi0[j] * psi0[j]).abs() < 1e-6, "y={y}");
    }
}

#[test]
fn mass_is_the_constant_functional_of_the_population_estimator() {
    // coefficient-space mass equals the explicit kernel-row integral
    let pl = drifted();
    let ev = &pl.eval;
    let grid = ev.grid();
    for &t in &[0.5, 2.0] {
        for &x in &[0.0, 1.0, -2.0] {
            let row = ev.p_row(t, x).unwrap();
            let direct = grid.integrate(&row);
            let coeff = ev.mass(t, x).unwrap();
            // the row truncates by the sup-norm plan while the mass keeps
            // all modes; the e^{ell} weight amplifies that difference
            assert!(
                (direct - coeff).abs() < 1e-6 * coeff.abs().max(1.0),
                "t={t} x={x}: {direct} vs {coeff}"
            );
        }
    }
}
