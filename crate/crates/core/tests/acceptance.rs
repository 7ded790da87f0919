//! Acceptance suite: one test per headline criterion, each printing a
//! PASS/FAIL line with the measured margin. Tolerances are pinned here as
//! constants next to the criterion they gate.
//!
//! Monte Carlo criteria run on pinned seeds; the estimators themselves are
//! unbiased (cross-checked in the unit suites), the pinned seeds make the
//! gate deterministic.

use std::sync::{Arc, OnceLock};

use branchfk::branching;
use branchfk::grid::Grid;
use branchfk::hermite;
use branchfk::mc;
use branchfk::model::{reduce, reduce_sigma, ModelSpec, ReducedSpec, SigmaModel};
use branchfk::qprocess;
use branchfk::qsd;
use branchfk::semigroup::KernelEvaluator;
use branchfk::spectral;

// -- pinned tolerances ------------------------------------------------------

/// Criterion 1: eigenvalue relative error, k <= 10, at L = 12, h = 2e-3.
const EIGENVALUE_REL_TOL: f64 = 1e-4;
/// Criterion 2: principal decay rate against the closed growth exponent.
const LAMBDA0_ABS_TOL: f64 = 1e-4;
/// Criterion 3: kernel-route mass limit at t = 6 against sqrt(2).
const MASS_LIMIT_REL_TOL: f64 = 5e-3;
/// Criterion 3: Monte Carlo z-score gate at 1e5 replicas.
const MC_Z_GATE: f64 = 3.0;
const MC_REPS: usize = 100_000;
/// Headline Monte Carlo step: the scheme's bias is first order (~ -11.8 dt
/// for this observable), so 2.5e-3 puts it below one stderr at 1e5 reps.
const MC_DT: f64 = 2.5e-3;
/// Criterion 4: fitted decay rate vs the spectral gap.
const GAP_RATE_REL_TOL: f64 = 0.05;
/// Criterion 5: fixed-point defect scale and attraction-rate fit.
const QSD_DEFECT_SCALE: f64 = 1e-6;
const ATTRACTION_RATE_REL_TOL: f64 = 0.10;
/// Criterion 6: slack for the Cramer bound on grid eigenvectors
/// (second-order eigenvector error; constant carries the potential
/// curvature sigma^2).
fn cramer_slack(sigma: f64, h: f64) -> f64 {
    0.05 * sigma * sigma * h * h
}
/// Criterion 7: evolution-equation residual at dt = dh = 1e-3.
const HEAT_RESIDUAL_TOL: f64 = 1e-4;
/// Criterion 8: conditioned-process gates.
const Q_RATE_REL_TOL: f64 = 0.10;
const OCCUPATION_KS_TOL: f64 = 0.02;
const OCCUPATION_SEED: u64 = 9;
/// Criterion 9: reversed-spine gates.
const REVERSAL_MARGINAL_TV_TOL: f64 = 0.05;
const REVERSAL_JOINT_TV_TOL: f64 = 0.08;
const REVERSAL_MIN_ESS: f64 = 2e4;
const REVERSAL_TREES: usize = 70_000;
const REVERSAL_SEED: u64 = 2026;
/// Criterion 9: kernel-level reversal identity, pure quadrature.
const REVERSAL_IDENTITY_TOL: f64 = 1e-8;
/// Criterion 10: stability of the statistical numbers under dt halving.
const KS_STABILITY_TOL: f64 = 0.01;

fn report(criterion: &str, pass: bool, detail: &str) {
    println!("criterion {criterion}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion}: {detail}");
}

// -- shared pipelines -------------------------------------------------------

fn production_grid() -> Grid {
    Grid::new(12.0, 12001).unwrap()
}

struct Pipe {
    spec: ModelSpec,
    reduced: ReducedSpec,
    eval: KernelEvaluator,
}

fn build_pipe(sigma: f64, c: f64, modes: usize) -> Pipe {
    let grid = production_grid();
    let spec = ModelSpec::hermite(sigma, c).unwrap();
    let reduced = reduce(&spec, &grid).unwrap();
    let basis = Arc::new(spectral::solve_eigen(&reduced, modes).unwrap());
    let eval = KernelEvaluator::new(basis, &reduced);
    Pipe { spec, reduced, eval }
}

/// The sigma=1, c=0 pipeline is shared by most criteria.
fn hermite_10() -> &'static Pipe {
    static P: OnceLock<Pipe> = OnceLock::new();
    P.get_or_init(|| build_pipe(1.0, 0.0, 32))
}

// -- criterion 1 ------------------------------------------------------------

#[test]
fn criterion_1_eigenvalue_reproduction() {
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for &sigma in &[0.5, 1.0, 2.0] {
        let started = std::time::Instant::now();
        let grid = production_grid();
        // Brownian motion with killing rate x^2/(2 sigma^2): spectrum
        // (k + 1/2)/sigma exactly
        let spec = ModelSpec::harmonic(sigma).unwrap();
        let reduced = reduce(&spec, &grid).unwrap();
        let basis = spectral::solve_eigen(&reduced, 12).unwrap();
        for k in 0..=10usize {
            let exact = hermite::eigenvalue(&hermite::HermiteModel::new(sigma, 0.0).unwrap(), k);
            let rel = (basis.lambdas[k] - exact).abs() / exact;
            worst = worst.max(rel);
        }
        let secs = started.elapsed().as_secs_f64();
        detail.push_str(&format!("sigma={sigma}: {secs:.1}s; "));
        assert!(secs <= 30.0, "eigensolve for sigma={sigma} took {secs:.1}s");
    }
    report(
        "1 (eigenvalues k<=10, sigma in {0.5,1,2})",
        worst <= EIGENVALUE_REL_TOL,
        &format!("max relative error {worst:.3e}; {detail}"),
    );
}

// -- criterion 2 ------------------------------------------------------------

#[test]
fn criterion_2_lambda0_through_sigma_reduction() {
    let mut worst = 0.0f64;
    for &(sigma, c) in &[(1.0f64, 0.0f64), (1.0, 1.0), (2.0, 1.0)] {
        // original coordinates: dY = sigma dB - c sigma dt, V(y) = 1 - y^2/2
        let y_grid = Grid::new(12.0 * sigma, 12001).unwrap();
        let inputs = SigmaModel {
            sigma: Arc::new(move |_| sigma),
            sigma_prime: Arc::new(|_| 0.0),
            sigma_second: Arc::new(|_| 0.0),
            a0: Arc::new(move |_| c * sigma),
            a0_prime: Arc::new(|_| 0.0),
            v: Arc::new(|y| 1.0 - 0.5 * y * y),
            b: Some(Arc::new(|_| 1.0)),
            d: Some(Arc::new(|y| 0.5 * y * y)),
        };
        let red = reduce_sigma(&inputs, &y_grid).unwrap();
        assert!(red.x_range.0 <= -12.0 + 1e-9 && red.x_range.1 >= 12.0 - 1e-9);
        let x_grid = production_grid();
        let reduced = reduce(&red.model, &x_grid).unwrap();
        let basis = spectral::solve_eigen(&reduced, 4).unwrap();
        // the closed form is the growth exponent of the mass, which is the
        // negative of the principal decay rate
        let closed =
            hermite::mass_growth_exponent(&hermite::HermiteModel::new(sigma, c).unwrap());
        let err = (-basis.lambdas[0] - closed).abs();
        worst = worst.max(err);
        println!("  (sigma,c)=({sigma},{c}): -lambda_0 = {:+.7} vs {closed:+.7}", -basis.lambdas[0]);
    }
    report(
        "2 (lambda_0 via trait rescaling, three criticality signs)",
        worst <= LAMBDA0_ABS_TOL,
        &format!("max absolute error {worst:.3e}"),
    );
}

// -- criterion 3 ------------------------------------------------------------

#[test]
fn criterion_3_mass_asymptotics() {
    let pl = hermite_10();
    let started = std::time::Instant::now();

    // kernel route: e^{lambda_0 t} m_t(0) -> sqrt(2) at t = 6
    let lam0 = pl.eval.lambda0();
    let scaled = (lam0 * 6.0).exp() * pl.eval.mass(6.0, 0.0).unwrap();
    let rel = (scaled / std::f64::consts::SQRT_2 - 1.0).abs();
    report(
        "3a (kernel mass limit at t=6)",
        rel <= MASS_LIMIT_REL_TOL,
        &format!("e^(lambda_0 t) m_t(0) = {scaled:.6} vs sqrt(2), rel {rel:.2e}"),
    );

    // Monte Carlo route at t = 3
    let kernel = pl.eval.mass(3.0, 0.0).unwrap();
    let mc = branching::estimate_linear_functional(
        &pl.spec,
        |_| 1.0,
        0.0,
        3.0,
        MC_DT,
        MC_REPS,
        REVERSAL_SEED,
        branching::DEFAULT_WORK_CAP,
    )
    .unwrap();
    let z = (mc.estimate - kernel) / mc.stderr;
    let secs = started.elapsed().as_secs_f64();
    report(
        "3b (branching MC vs kernel mass at t=3)",
        z.abs() <= MC_Z_GATE && secs <= 300.0,
        &format!(
            "MC {:.5} +- {:.5} vs kernel {kernel:.5}, z = {z:+.2}, {secs:.0}s",
            mc.estimate, mc.stderr
        ),
    );
}

// -- criterion 4 ------------------------------------------------------------

#[test]
fn criterion_4_spectral_gap() {
    // drift 0.25 keeps the first overtone dominant inside the fit window
    // for the kinked profile (see the gap tests for the envelope at c=1)
    let pl = build_pipe(1.0, 0.25, 32);
    let g: Vec<f64> = pl.reduced.grid.sample(|x| (0.5 * x.abs()).exp());
    let times: Vec<f64> = (0..13).map(|i| 1.0 + 0.25 * i as f64).collect();
    let rep = pl.eval.gap_decay(&g, 0.5, &times).unwrap();
    let rel = (rep.fitted_rate - rep.expected_rate).abs() / rep.expected_rate;
    report(
        "4a (fitted decay rate over [1,4])",
        rel <= GAP_RATE_REL_TOL,
        &format!("fitted {:.4} vs gap {:.4}, rel {rel:.2e}", rep.fitted_rate, rep.expected_rate),
    );
    report(
        "4b (constructive envelope A D(kappa) e^(-gap t))",
        rep.bound_holds(),
        &format!(
            "min log-margin {:.1} (ln D = {:.1})",
            rep.ln_bound_margin.iter().cloned().fold(f64::INFINITY, f64::min),
            rep.ln_envelope_constant
        ),
    );
}

// -- criterion 5 ------------------------------------------------------------

#[test]
fn criterion_5_qsd_fixed_point_and_attraction() {
    let pl = hermite_10();
    let grid = &pl.reduced.grid;
    let nu = qsd::build_qsd(&pl.eval);

    let phis = qsd::random_test_functions(grid, 20, 424242);
    let mut worst_defect = 0.0f64;
    for &t in &[0.5, 1.0, 3.0] {
        let rep = qsd::check_fixed_point(&pl.eval, &nu, t, &phis, QSD_DEFECT_SCALE).unwrap();
        for item in &rep.items {
            worst_defect = worst_defect.max(item.defect / item.sup_phi);
        }
        assert!(rep.passed, "fixed point battery failed at t={t}");
    }
    report(
        "5a (QSD fixed point, 20-function battery)",
        worst_defect <= QSD_DEFECT_SCALE,
        &format!("worst defect {worst_defect:.3e} x sup|phi|"),
    );

    // domain of attraction: bump initial law, fitted TV rate
    let mu0 = qsd::point_mass_density(grid, 2.0, 3.0 * grid.spacing());
    let times: Vec<f64> = (0..7).map(|i| 1.0 + 0.5 * i as f64).collect();
    let mut pts = Vec::new();
    for &t in &times {
        let mu_t = qsd::conditional_evolution(&pl.eval, &mu0, t).unwrap();
        let tv = qsd::tv_distance(grid, &mu_t, &nu.density);
        pts.push((t, tv.ln()));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let rate = -(n * sxy - sx * sy) / (n * sxx - sx * sx);
    let gap = pl.eval.spectral_gap();
    let rel = (rate - gap).abs() / gap;
    report(
        "5b (attraction rate for a bump initial law)",
        rel <= ATTRACTION_RATE_REL_TOL,
        &format!("fitted TV rate {rate:.4} vs gap {gap:.4}, rel {rel:.2e}"),
    );
}

// -- criterion 6 ------------------------------------------------------------

#[test]
fn criterion_6_eigenfunction_bounds() {
    // picture with the closed Cramer bound: killing rate x^2/2, sigma = 1
    let grid = production_grid();
    let spec = ModelSpec::harmonic(1.0).unwrap();
    let reduced = reduce(&spec, &grid).unwrap();
    let basis = spectral::solve_eigen(&reduced, 32).unwrap();

    let sup = spectral::check_sup_bound(&basis);
    report(
        "6a (a-priori sup bound, all 32 modes)",
        sup.passed,
        &format!("worst margin {:.3e}", sup.worst_margin()),
    );

    let cramer_bound = std::f64::consts::PI.powf(-0.25);
    let slack = cramer_slack(1.0, grid.spacing());
    let mut worst_excess = f64::NEG_INFINITY;
    for k in 0..basis.modes() {
        worst_excess = worst_excess.max(basis.max_abs_psi(k) - cramer_bound);
    }
    report(
        "6b (Cramer bound at every node, all modes)",
        worst_excess <= slack,
        &format!("max excess {worst_excess:.3e} vs discretization slack {slack:.1e}"),
    );

    let growth = spectral::check_growth_bound(&basis);
    let applicable = growth.items.iter().filter(|i| i.applicable && i.k <= 30).count();
    let pass = growth
        .items
        .iter()
        .filter(|i| i.applicable && i.k <= 30)
        .all(|i| i.margin >= 0.0);
    report(
        "6c (k^(1/3) growth bound, applicable k <= 30)",
        pass && applicable > 0,
        &format!("{applicable} applicable indices, worst margin {:.3e}", growth.worst_margin()),
    );

    let deriv = spectral::check_derivative_bound(&basis).unwrap();
    let pass = deriv.items.iter().filter(|i| i.applicable && i.k <= 20).all(|i| i.margin >= 0.0);
    report(
        "6d (derivative bound at the interior critical point, k <= 20)",
        pass && deriv.flagged.is_none(),
        &format!("worst margin {:.3e}", deriv.worst_margin()),
    );
}

// -- criterion 7 ------------------------------------------------------------

#[test]
fn criterion_7_heat_equation() {
    let pl = hermite_10();
    let mut state = 0xfeed_beef_u64;
    let mut rnd = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut worst = 0.0f64;
    let mut worst_ratio: (f64, f64) = (0.0, 0.0);
    for i in 0..50 {
        let t = 0.5 + 1.5 * rnd();
        let x = -2.0 + 4.0 * rnd();
        let y = -2.0 + 4.0 * rnd();
        let res = pl.eval.heat_residual(&pl.spec, t, x, y, 1e-3, 1e-3).unwrap();
        worst = worst.max(res.max());
        if i < 10 {
            // halving both steps must cut the residual ~4x
            let res2 = pl.eval.heat_residual(&pl.spec, t, x, y, 5e-4, 5e-4).unwrap();
            if res.max() > worst_ratio.0 {
                worst_ratio = (res.max(), res.max() / res2.max());
            }
        }
    }
    report(
        "7 (evolution equation residual, 50 random triples)",
        worst <= HEAT_RESIDUAL_TOL && (2.5..6.0).contains(&worst_ratio.1),
        &format!("max residual {worst:.3e}; halving ratio {:.2}", worst_ratio.1),
    );
}

// -- criterion 8 ------------------------------------------------------------

#[test]
fn criterion_8_q_process() {
    // ratio convergence at drift c = 1 (a symmetric model has no first
    // overtone in the mass, so the rate would be the second gap)
    let pl = build_pipe(1.0, 1.0, 32);
    let phi: Vec<f64> = pl.reduced.grid.nodes().to_vec();
    let rep = qprocess::check_q_limit(&pl.eval, 0.5, 0.5, &[2.0, 3.0, 4.0], &phi).unwrap();
    let rel = (rep.fitted_rate - rep.expected_rate).abs() / rep.expected_rate;
    report(
        "8a (conditioned-semigroup ratio rate)",
        rel <= Q_RATE_REL_TOL,
        &format!("fitted {:.4} vs gap {:.4}, rel {rel:.2e}", rep.fitted_rate, rep.expected_rate),
    );

    // occupation law of the simulated conditioned process, sigma = 1, c = 0
    let pl0 = hermite_10();
    let model = qprocess::QProcessModel::new(&pl0.eval).unwrap();
    let mut rng = mc::replica_rng(OCCUPATION_SEED, 1);
    let occ = qprocess::invariant_occupation_check(&pl0.eval, &model, 0.0, 1000.0, 5e-3, 10.0, &mut rng)
        .unwrap();
    report(
        "8b (occupation KS against the squared ground state)",
        occ.ks <= OCCUPATION_KS_TOL,
        &format!("KS {:.4} over {} samples (target N(0, 1/2))", occ.ks, occ.n_samples),
    );
}

// -- criterion 9 ------------------------------------------------------------

#[test]
fn criterion_9_spine_reversal() {
    let pl = hermite_10();
    let nu = qsd::build_qsd(&pl.eval);

    // kernel-level identity chain: e^{lambda_0 u} nu(y) p(u,y,z) / nu(z)
    // equals q(u, z, y), as a pure quadrature/pointwise identity
    let mut worst = 0.0f64;
    let grid = &pl.reduced.grid;
    let u = 0.5;
    let lam0 = pl.eval.lambda0();
    for &(y, z) in &[(0.3, -0.7), (-1.2, 0.4), (1.5, 1.0), (0.0, 2.0)] {
        let iy = grid.nearest(y);
        let iz = grid.nearest(z);
        let lhs = (lam0 * u).exp() * nu.density[iy] * pl.eval.p(u, grid.node(iy), grid.node(iz)).unwrap()
            / nu.density[iz];
        let rhs = qprocess::kernel_q(&pl.eval, u, grid.node(iz), grid.node(iy)).unwrap();
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1e-30));
    }
    report(
        "9a (reversal kernel identity, quadrature route)",
        worst <= REVERSAL_IDENTITY_TOL,
        &format!("max relative defect {worst:.3e}"),
    );

    // statistical comparison at desk scale
    let rep = branching::reversed_spine_transition_check(
        &pl.spec,
        &pl.eval,
        &nu,
        2.0,
        0.5,
        MC_DT,
        REVERSAL_TREES,
        REVERSAL_SEED,
        14,
        3.5,
        REVERSAL_MIN_ESS,
    )
    .unwrap();
    report(
        "9b (reversed start marginal vs the quasi-stationary law)",
        rep.marginal_tv <= REVERSAL_MARGINAL_TV_TOL && rep.effective_sample_size >= REVERSAL_MIN_ESS,
        &format!("TV {:.4} at ESS {:.0}", rep.marginal_tv, rep.effective_sample_size),
    );
    report(
        "9c (one-lag conditional vs the conditioned kernel)",
        rep.joint_tv <= REVERSAL_JOINT_TV_TOL,
        &format!("joint TV {:.4} vs q(0.5,.,.)", rep.joint_tv),
    );
}

// -- criterion 10 -----------------------------------------------------------

#[test]
fn criterion_10_step_halving_stability() {
    let pl = hermite_10();

    // branching mass: the bias is first order; halving 1e-2 -> 5e-3 must
    // shrink it accordingly, and the finer run must agree with the kernel
    let kernel = pl.eval.mass(3.0, 0.0).unwrap();
    let coarse = branching::estimate_linear_functional(
        &pl.spec,
        |_| 1.0,
        0.0,
        3.0,
        1e-2,
        MC_REPS,
        REVERSAL_SEED,
        branching::DEFAULT_WORK_CAP,
    )
    .unwrap();
    let fine = branching::estimate_linear_functional(
        &pl.spec,
        |_| 1.0,
        0.0,
        3.0,
        5e-3,
        MC_REPS,
        REVERSAL_SEED + 1,
        branching::DEFAULT_WORK_CAP,
    )
    .unwrap();
    // first-order bias: bias(dt/2) = bias(dt)/2 up to Monte Carlo noise
    let bias_coarse = coarse.estimate - kernel;
    let bias_fine = fine.estimate - kernel;
    let halving_defect = bias_fine - 0.5 * bias_coarse;
    let halving_noise =
        (fine.stderr * fine.stderr + 0.25 * coarse.stderr * coarse.stderr).sqrt();
    let fine_z = bias_fine / fine.stderr;
    report(
        "10a (branching mass: first-order bias control 1e-2 -> 5e-3)",
        halving_defect.abs() <= 3.0 * halving_noise && fine_z.abs() <= 5.0,
        &format!(
            "bias {bias_coarse:+.4} -> {bias_fine:+.4}; halving defect {halving_defect:+.4}              vs 3 sigma {:.4}, fine z {fine_z:+.2}",
            3.0 * halving_noise
        ),
    );

    // reversal statistics stay inside their gates at both steps
    let nu = qsd::build_qsd(&pl.eval);
    let mut tvs = Vec::new();
    for &dt in &[1e-2, 5e-3] {
        let rep = branching::reversed_spine_transition_check(
            &pl.spec,
            &pl.eval,
            &nu,
            2.0,
            0.5,
            dt,
            REVERSAL_TREES,
            REVERSAL_SEED,
            14,
            3.5,
            REVERSAL_MIN_ESS,
        )
        .unwrap();
        tvs.push((dt, rep.marginal_tv, rep.joint_tv));
    }
    let stable = tvs
        .iter()
        .all(|&(_, m, j)| m <= REVERSAL_MARGINAL_TV_TOL && j <= REVERSAL_JOINT_TV_TOL);
    report(
        "10b (reversal TVs inside gates at dt = 1e-2 and 5e-3)",
        stable,
        &format!("{tvs:?}"),
    );

    // occupation KS at both steps, same stream
    let model = qprocess::QProcessModel::new(&pl.eval).unwrap();
    let mut ks = Vec::new();
    for &dt in &[1e-2, 5e-3] {
        let mut rng = mc::replica_rng(OCCUPATION_SEED, 1);
        let occ =
            qprocess::invariant_occupation_check(&pl.eval, &model, 0.0, 1000.0, dt, 10.0, &mut rng)
                .unwrap();
        ks.push(occ.ks);
    }
    report(
        "10c (occupation KS stable under halving)",
        (ks[0] - ks[1]).abs() <= KS_STABILITY_TOL
            && ks.iter().all(|&k| k <= OCCUPATION_KS_TOL),
        &format!("KS {:.4} (1e-2) vs {:.4} (5e-3)", ks[0], ks[1]),
    );
}
