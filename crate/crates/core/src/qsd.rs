//! Quasi-stationary distribution: the probability law proportional to
//! theta_0 e^{-2 ell} dx, its fixed-point identity under the conditioned
//! semigroup, and the conditional evolution that is attracted to it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::mc::kahan_sum;
use crate::semigroup::KernelEvaluator;

/// The quasi-stationary law as a grid density.
#[derive(Debug, Clone, Serialize)]
pub struct QsdMeasure {
    /// Normalized density at the nodes.
    pub density: Vec<f64>,
    /// Normalizer Z = int theta_0 e^{-2 ell} dx.
    pub z: f64,
}

pub fn build_qsd(eval: &KernelEvaluator) -> QsdMeasure {
    let basis = eval.basis();
    let rho = eval.speed_weights();
    let raw: Vec<f64> = basis.thetas[0].iter().zip(&rho).map(|(&th, &w)| th * w).collect();
    let z = basis.grid.integrate(&raw);
    let density = raw.iter().map(|&v| v / z).collect();
    QsdMeasure { density, z }
}

impl QsdMeasure {
    pub fn total_mass(&self, grid: &Grid) -> f64 {
        grid.integrate(&self.density)
    }

    /// Expectation of a grid function under the law.
    pub fn expect(&self, grid: &Grid, phi: &[f64]) -> f64 {
        grid.integrate_product(&self.density, phi)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointItem {
    pub sup_phi: f64,
    /// |int P_t phi dnu - e^{-lambda_0 t} int phi dnu|
    pub defect: f64,
    /// |int P_t phi dnu / int P_t 1 dnu - int phi dnu|
    pub ratio_defect: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointReport {
    pub t: f64,
    pub tol_scale: f64,
    pub items: Vec<FixedPointItem>,
    pub passed: bool,
}

/// Check the invariance identity int P_t phi dnu = e^{-lambda_0 t} int phi dnu
/// for each test function, with tolerance tol_scale * sup|phi|.
pub fn check_fixed_point(
    eval: &KernelEvaluator,
    nu: &QsdMeasure,
    t: f64,
    phis: &[Vec<f64>],
    tol_scale: f64,
) -> Result<FixedPointReport> {
    let grid = eval.grid();
    let decay = (-eval.lambda0() * t).exp();
    let mass_t = eval.mass_grid(t)?;
    let denom = grid.integrate_product(&nu.density, &mass_t);
    let mut items = Vec::with_capacity(phis.len());
    for phi in phis {
        let pt_phi = eval.apply_grid(phi, t)?;
        let lhs = grid.integrate_product(&nu.density, &pt_phi);
        let mean_phi = grid.integrate_product(&nu.density, phi);
        let defect = (lhs - decay * mean_phi).abs();
        let ratio_defect = (lhs / denom - mean_phi).abs();
        let sup_phi = phi.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let pass = defect <= tol_scale * sup_phi.max(1e-300)
            && ratio_defect <= tol_scale * sup_phi.max(1e-300) / decay.min(1.0);
        items.push(FixedPointItem { sup_phi, defect, ratio_defect, pass });
    }
    let passed = items.iter().all(|i| i.pass);
    Ok(FixedPointReport { t, tol_scale, items, passed })
}

/// Conditional evolution of an initial grid density: mu_t proportional to
/// int p(t, x, .) mu_0(x) dx, renormalized to a probability.
pub fn conditional_evolution(
    eval: &KernelEvaluator,
    mu0: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    let grid = eval.grid();
    if mu0.len() != grid.len() {
        return Err(Error::Domain("initial density length mismatch".into()));
    }
    // int p(t,x,y) mu0(x) dx = e^{-ell(y)} sum_k e^{-lambda_k t} psi_k(y)
    //                          int e^{ell(x)} psi_k(x) mu0(x) dx
    let basis = eval.basis();
    let n = grid.len();
    let weighted: Vec<f64> = mu0
        .iter()
        .zip(eval.ell_samples())
        .map(|(&m, &l)| m * l.exp())
        .collect();
    let mut out = vec![0.0f64; n];
    for k in 0..basis.modes() {
        let c = grid.integrate_product(&basis.psis[k], &weighted);
        let w = (-basis.lambdas[k] * t).exp() * c;
        for (o, (&psi, &l)) in out.iter_mut().zip(basis.psis[k].iter().zip(eval.ell_samples())) {
            *o += w * psi * (-l).exp();
        }
    }
    // numerical dust can go slightly negative in the far tails
    let floor = out.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    for o in &mut out {
        if *o < 0.0 && *o > -1e-12 * floor {
            *o = 0.0;
        }
    }
    let mass = grid.integrate(&out);
    if !(mass > eval.tail_tol()) {
        return Err(Error::DegenerateEvolution { mass });
    }
    for o in &mut out {
        *o /= mass;
    }
    Ok(out)
}

/// Total variation distance between two grid densities: half the L1 norm.
pub fn tv_distance(grid: &Grid, f: &[f64], g: &[f64]) -> f64 {
    let diff: Vec<f64> = f.iter().zip(g).map(|(&a, &b)| (a - b).abs()).collect();
    0.5 * grid.integrate(&diff)
}

/// Left-eigenvector identity: int nu(x) p(t, x, y) dx = e^{-lambda_0 t} nu(y)
/// pointwise; returns the sup-norm defect relative to the density scale.
pub fn left_eigenvector_defect(eval: &KernelEvaluator, nu: &QsdMeasure, t: f64) -> Result<f64> {
    let evolved_raw = {
        // unnormalized image of nu under the kernel
        let grid = eval.grid();
        let basis = eval.basis();
        let weighted: Vec<f64> = nu
            .density
            .iter()
            .zip(eval.ell_samples())
            .map(|(&m, &l)| m * l.exp())
            .collect();
        let mut out = vec![0.0f64; grid.len()];
        for k in 0..basis.modes() {
            let c = grid.integrate_product(&basis.psis[k], &weighted);
            let w = (-basis.lambdas[k] * t).exp() * c;
            for (o, (&psi, &l)) in out.iter_mut().zip(basis.psis[k].iter().zip(eval.ell_samples()))
            {
                *o += w * psi * (-l).exp();
            }
        }
        out
    };
    let decay = (-eval.lambda0() * t).exp();
    let scale = nu.density.iter().fold(0.0f64, |m, &v| m.max(v));
    let mut worst = 0.0f64;
    for (&e, &d) in evolved_raw.iter().zip(&nu.density) {
        worst = worst.max((e - decay * d).abs());
    }
    Ok(worst / (decay * scale))
}

/// A battery of smooth localized bumps with seeded random centers, widths
/// and modulations, for fixed-point sweeps.
pub fn random_test_functions(grid: &Grid, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut state = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).max(1);
    let mut rnd = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    (0..count)
        .map(|_| {
            let center = -4.0 + 8.0 * rnd();
            let width = 0.5 + 2.0 * rnd();
            let freq = 3.0 * rnd();
            let phase = std::f64::consts::TAU * rnd();
            grid.sample(|x| {
                let u = (x - center) / width;
                (-0.5 * u * u).exp() * (freq * x + phase).cos()
            })
        })
        .collect()
}

/// First-order sensitivity probe: perturbing the density must break the
/// fixed-point identity proportionally to the perturbation size.
pub fn perturbation_breaks_identity(
    eval: &KernelEvaluator,
    nu: &QsdMeasure,
    t: f64,
    eps: f64,
) -> Result<(f64, f64)> {
    let grid = eval.grid();
    // mean-zero smooth perturbation, supported where nu lives
    let bump: Vec<f64> = grid.sample(|x| {
        let u = x / 2.0;
        (-0.5 * u * u).exp() * x
    });
    let mean = grid.integrate(&bump);
    let scale = nu.density.iter().fold(0.0f64, |m, &v| m.max(v));
    let perturbed: Vec<f64> = nu
        .density
        .iter()
        .zip(&bump)
        .map(|(&d, &b)| (d + eps * scale * (b - mean * d)).max(0.0))
        .collect();
    let total = grid.integrate(&perturbed);
    let perturbed: Vec<f64> = perturbed.iter().map(|&v| v / total).collect();

    let defect = |density: &[f64]| -> Result<f64> {
        let phis = random_test_functions(grid, 8, 2024);
        let mut worst = 0.0f64;
        let decay = (-eval.lambda0() * t).exp();
        for phi in &phis {
            let pt_phi = eval.apply_grid(phi, t)?;
            let lhs = grid.integrate_product(density, &pt_phi);
            let rhs = decay * grid.integrate_product(density, phi);
            let sup = phi.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            worst = worst.max((lhs - rhs).abs() / sup);
        }
        Ok(worst)
    };
    Ok((defect(&nu.density)?, defect(&perturbed)?))
}

/// Narrow Gaussian bump density centered at x0, width a few grid cells.
pub fn point_mass_density(grid: &Grid, x0: f64, width: f64) -> Vec<f64> {
    let raw: Vec<f64> = grid.sample(|x| {
        let u = (x - x0) / width;
        (-0.5 * u * u).exp()
    });
    let z = grid.integrate(&raw);
    raw.iter().map(|&v| v / z).collect()
}

pub fn uniform_density(grid: &Grid, lo: f64, hi: f64) -> Vec<f64> {
    let raw: Vec<f64> = grid.sample(|x| if x >= lo && x <= hi { 1.0 } else { 0.0 });
    let z = kahan_sum(raw.iter().copied()) * grid.spacing();
    raw.iter().map(|&v| v / z).collect()
}
