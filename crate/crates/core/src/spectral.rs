//! Grid eigenbasis of the reduced Schroedinger operator u''/2 + V~ u, and
//! the a-priori estimates that come with it: spectral growth, sup and decay
//! bounds for the eigenfunctions, and the derivative bound at the interior
//! critical point.
//!
//! Discretization: standard 3-point second difference with Dirichlet walls
//! at the truncation boundary. This keeps the matrix symmetric tridiagonal,
//! so eigenvalues are real and simple and the Sturm/inverse-iteration pair
//! applies. Truncation is benign because the eigenfunctions decay faster
//! than any e^{-R|x|}.
//!
//! Sign conventions: lambda_k are the decay rates (semigroup eigenvalues
//! e^{-lambda_k t}); lambda_0 can be negative when the reduced potential is
//! positive somewhere (growing total mass). The ground state is positive;
//! for k >= 1 the first nonzero-from-left entry is positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::ReducedSpec;
use crate::tridiag;

/// Constants carried from the reduced model into the closed-form estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisConstants {
    pub tilde_a: f64,
    pub tilde_e: f64,
    pub tilde_x0: f64,
    pub beta: f64,
    pub gamma: f64,
}

fn logsumexp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl HypothesisConstants {
    /// Cutoff x1(R, t) = max(2 x~0, 8Rt + sqrt(8t)) splitting the tail
    /// estimate from the bulk one.
    pub fn x1(&self, r: f64, t: f64) -> f64 {
        (2.0 * self.tilde_x0).max(8.0 * r * t + (8.0 * t).sqrt())
    }

    /// Decay-bound constant C1(R) in log form (the raw value overflows for
    /// moderate R):
    /// C1 = (2R/E~)^{-1/4} (1/(4pi)^{1/4} + 1/(2pi^2)^{1/4}) e^{|A~+4R^2| 2R/E~}
    ///      + (e/pi)^{1/4} e^{R x1}.
    pub fn ln_c1(&self, r: f64) -> f64 {
        let t0 = 2.0 * r / self.tilde_e;
        let ca = (4.0 * std::f64::consts::PI).powf(-0.25)
            + (2.0 * std::f64::consts::PI * std::f64::consts::PI).powf(-0.25);
        let first = ca.ln() - 0.25 * t0.ln() + (self.tilde_a + 4.0 * r * r).abs() * t0;
        let second = 0.25 * (std::f64::consts::E / std::f64::consts::PI).ln() + r * self.x1(r, t0);
        logsumexp2(first, second)
    }

    /// Matching time scale t0(R) = 2R/E~ for the decay bound.
    pub fn t0(&self, r: f64) -> f64 {
        2.0 * r / self.tilde_e
    }

    /// Growth-rate constant (E~^2 / (8 x~0 + 2))^{1/3}.
    pub fn growth_constant(&self) -> f64 {
        (self.tilde_e * self.tilde_e / (8.0 * self.tilde_x0 + 2.0)).powf(1.0 / 3.0)
    }

    /// log of the spectral-gap envelope constant D(kappa) =
    /// 2 e^gamma C1(kappa+beta+1) C1(beta+1) e^{lambda_1 (t1+t0)}
    ///   sum_{k>=1} e^{-(lambda_k - lambda_1)(t1+t0)}.
    pub fn ln_d_kappa(&self, kappa: f64, lambdas: &[f64]) -> f64 {
        let t0 = self.t0(self.beta + 1.0);
        let t1 = self.t0(kappa + self.beta + 1.0);
        let mut series = 0.0;
        for &l in &lambdas[1..] {
            series += (-(l - lambdas[1]) * (t1 + t0)).exp();
        }
        std::f64::consts::LN_2
            + self.gamma
            + self.ln_c1(kappa + self.beta + 1.0)
            + self.ln_c1(self.beta + 1.0)
            + lambdas[1] * (t1 + t0)
            + series.ln()
    }

    /// log of the kernel decay envelope F(R') =
    /// e^{2 gamma} C1(R'+beta)^2 sum_k e^{-(lambda_k - lambda_0) s0},
    /// valid for t > 3 s0 with s0 = 2(R'+beta)/E~.
    pub fn ln_f(&self, r_prime: f64, lambdas: &[f64]) -> f64 {
        let s0 = self.t0(r_prime + self.beta);
        let mut series = 0.0;
        for &l in lambdas {
            series += (-(l - lambdas[0]) * s0).exp();
        }
        2.0 * self.gamma + 2.0 * self.ln_c1(r_prime + self.beta) + series.ln()
    }

    pub fn s0(&self, r_prime: f64) -> f64 {
        self.t0(r_prime + self.beta)
    }
}

/// Grid-sampled eigenpairs of the reduced operator, with derived data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralBasis {
    pub grid: Grid,
    /// Decay rates, strictly ascending.
    pub lambdas: Vec<f64>,
    /// Eigenfunctions on the grid, L2(dx)-normalized by the trapezoid rule,
    /// zero at the Dirichlet walls.
    pub psis: Vec<Vec<f64>>,
    /// First derivatives by 4th-order differences (one-sided at the walls).
    pub dpsis: Vec<Vec<f64>>,
    /// Speed-measure eigenfunctions theta_k = psi_k e^{ell}.
    pub thetas: Vec<Vec<f64>>,
    /// Reduced potential samples (used by series tails and residuals).
    pub tilde_v: Vec<f64>,
    pub constants: HypothesisConstants,
}

/// Solve the Dirichlet eigenproblem for the k_modes smallest decay rates.
pub fn solve_eigen(reduced: &ReducedSpec, k_modes: usize) -> Result<SpectralBasis> {
    let grid = &reduced.grid;
    let n = grid.len();
    if k_modes < 2 {
        return Err(Error::Domain("need at least two modes".into()));
    }
    if n < 20 * k_modes {
        return Err(Error::Domain(format!(
            "{n} nodes cannot resolve {k_modes} modes (need ~20 per oscillation)"
        )));
    }
    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    // interior problem: H = -D2/2 - diag(V~)
    let diag: Vec<f64> = (1..n - 1).map(|i| inv_h2 - reduced.tilde_v[i]).collect();
    let off = vec![-0.5 * inv_h2; n - 3];

    let lambdas = tridiag::smallest_eigenvalues(&diag, &off, k_modes)?;
    for k in 0..k_modes - 1 {
        let gap = lambdas[k + 1] - lambdas[k];
        if gap < 1e-9 {
            // a Dirichlet box splitting one mode into two; enlarge L
            return Err(Error::NearDegenerate { index: k, gap });
        }
    }

    let scale = lambdas.iter().fold(1.0f64, |m, &l| m.max(l.abs()));
    let mut interior: Vec<Vec<f64>> = Vec::with_capacity(k_modes);
    for k in 0..k_modes {
        let mut neighbors: Vec<&[f64]> = Vec::new();
        if k > 0 && lambdas[k] - lambdas[k - 1] < 1e-6 * scale {
            neighbors.push(&interior[k - 1]);
        }
        let v = tridiag::eigenvector(&diag, &off, lambdas[k], k, &neighbors)?;
        interior.push(v);
    }

    let mut psis = Vec::with_capacity(k_modes);
    for (k, v) in interior.into_iter().enumerate() {
        let mut full = vec![0.0; n];
        full[1..n - 1].copy_from_slice(&v);
        // trapezoid norm: boundary entries are zero, so it is h * sum v^2
        let norm = (h * v.iter().map(|x| x * x).sum::<f64>()).sqrt();
        for x in &mut full {
            *x /= norm;
        }
        fix_sign(&mut full, k);
        psis.push(full);
    }

    let dpsis: Vec<Vec<f64>> = psis.iter().map(|p| derivative_fourth_order(p, h)).collect();
    let thetas: Vec<Vec<f64>> = psis
        .iter()
        .map(|p| p.iter().zip(&reduced.ell).map(|(&v, &l)| v * l.exp()).collect())
        .collect();

    Ok(SpectralBasis {
        grid: grid.clone(),
        lambdas,
        psis,
        dpsis,
        thetas,
        tilde_v: reduced.tilde_v.clone(),
        constants: HypothesisConstants {
            tilde_a: reduced.tilde_a,
            tilde_e: reduced.tilde_e,
            tilde_x0: reduced.tilde_x0,
            beta: reduced.beta,
            gamma: reduced.gamma,
        },
    })
}

fn fix_sign(psi: &mut [f64], k: usize) {
    let max_abs = psi.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let flip = if k == 0 {
        // ground state: positive bulk
        let idx = psi.iter().enumerate().max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap());
        idx.map(|(_, &v)| v < 0.0).unwrap_or(false)
    } else {
        // first nonzero-from-left entry positive
        psi.iter().find(|v| v.abs() > 1e-12 * max_abs).map(|&v| v < 0.0).unwrap_or(false)
    };
    if flip {
        for v in psi.iter_mut() {
            *v = -*v;
        }
    }
}

/// 4th-order first derivative on a uniform grid, one-sided at the edges.
pub fn derivative_fourth_order(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    let c = 1.0 / (12.0 * h);
    d[0] = c * (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]);
    d[1] = c * (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]);
    for i in 2..n - 2 {
        d[i] = c * (-f[i + 2] + 8.0 * f[i + 1] - 8.0 * f[i - 1] + f[i - 2]);
    }
    d[n - 2] = c * (3.0 * f[n - 1] + 10.0 * f[n - 2] - 18.0 * f[n - 3] + 6.0 * f[n - 4] - f[n - 5]);
    d[n - 1] =
        c * (25.0 * f[n - 1] - 48.0 * f[n - 2] + 36.0 * f[n - 3] - 16.0 * f[n - 4] + 3.0 * f[n - 5]);
    d
}

/// 4th-order second derivative (interior stencil), used for residual checks.
fn second_derivative_fourth_order(f: &[f64], h: f64, i: usize) -> f64 {
    (-f[i + 2] + 16.0 * f[i + 1] - 30.0 * f[i] + 16.0 * f[i - 1] - f[i - 2]) / (12.0 * h * h)
}

impl SpectralBasis {
    pub fn modes(&self) -> usize {
        self.lambdas.len()
    }

    pub fn max_abs_psi(&self, k: usize) -> f64 {
        self.psis[k].iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Strict sign changes of psi_k, ignoring noise-level entries.
    pub fn sign_changes(&self, k: usize) -> usize {
        let max = self.max_abs_psi(k);
        let tol = 1e-8 * max;
        let mut count = 0;
        let mut last = 0.0f64;
        for &v in &self.psis[k] {
            if v.abs() <= tol {
                continue;
            }
            if last != 0.0 && v.signum() != last.signum() {
                count += 1;
            }
            last = v;
        }
        count
    }

    /// Residual of the continuum eigen-equation measured with a 4th-order
    /// second difference: scales as h^2 (the discretization order of the
    /// eigensolve itself).
    pub fn equation_residual(&self, k: usize) -> f64 {
        let n = self.grid.len();
        let h = self.grid.spacing();
        let psi = &self.psis[k];
        let mut worst = 0.0f64;
        for i in 2..n - 2 {
            let r = 0.5 * second_derivative_fourth_order(psi, h, i)
                + self.tilde_v[i] * psi[i]
                + self.lambdas[k] * psi[i];
            worst = worst.max(r.abs());
        }
        worst
    }
}

/// One bound verdict per mode index.
#[derive(Debug, Clone, Serialize)]
pub struct BoundItem {
    pub k: usize,
    pub applicable: bool,
    /// rhs - lhs (log scale where the report says so); >= 0 means satisfied.
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub passed: bool,
    /// Set when the inputs are inconsistent with the bound's hypotheses.
    pub flagged: Option<String>,
    pub items: Vec<BoundItem>,
}

impl BoundReport {
    fn from_items(name: &str, items: Vec<BoundItem>, flagged: Option<String>) -> Self {
        let passed = items.iter().all(|i| !i.applicable || i.margin >= 0.0);
        BoundReport { name: name.into(), passed, flagged, items }
    }

    pub fn worst_margin(&self) -> f64 {
        self.items
            .iter()
            .filter(|i| i.applicable)
            .map(|i| i.margin)
            .fold(f64::INFINITY, f64::min)
    }
}

/// lambda_k >= C(x~0, E~) k^{1/3} for every k with lambda_k above
/// S0 = max{|V~(x)| : |x| <= x~0}.
pub fn check_growth_bound(basis: &SpectralBasis) -> BoundReport {
    let c = basis.constants.growth_constant();
    let s0 = basis
        .grid
        .nodes()
        .iter()
        .zip(&basis.tilde_v)
        .filter(|(x, _)| x.abs() <= basis.constants.tilde_x0)
        .map(|(_, v)| v.abs())
        .fold(0.0f64, f64::max);
    let items = basis
        .lambdas
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            let applicable = l > s0;
            let margin = l - c * (k as f64).powf(1.0 / 3.0);
            BoundItem { k, applicable, margin }
        })
        .collect();
    BoundReport::from_items("eigenvalue growth", items, None)
}

/// sup |psi_k| <= (e/pi)^{1/4} (lambda_k + A~)^{1/4}.
pub fn check_sup_bound(basis: &SpectralBasis) -> BoundReport {
    let tilde_a = basis.constants.tilde_a;
    let flagged = if basis.lambdas[0] + tilde_a <= 1e-12 {
        Some(format!(
            "lambda_0 + A~ = {:.3e} is not positive; basis inconsistent with the sup bound",
            basis.lambdas[0] + tilde_a
        ))
    } else {
        None
    };
    let cpi = (std::f64::consts::E / std::f64::consts::PI).powf(0.25);
    let items = basis
        .lambdas
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            let rhs = cpi * (l + tilde_a).max(0.0).powf(0.25);
            BoundItem { k, applicable: l + tilde_a > 0.0, margin: rhs - basis.max_abs_psi(k) }
        })
        .collect();
    BoundReport::from_items("eigenfunction sup bound", items, flagged)
}

/// e^{R|x|} |psi_k(x)| <= C1(R) e^{lambda_k t0(R)} nodewise, compared in
/// log scale (C1 itself can overflow f64 for large R).
pub fn check_decay_bound(basis: &SpectralBasis, r: f64) -> Result<BoundReport> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!(
            "decay bound needs R > 0 (got {r}); R = 0 is the sup bound"
        )));
    }
    let ln_c1 = basis.constants.ln_c1(r);
    let t0 = basis.constants.t0(r);
    let items = basis
        .lambdas
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            let mut lhs_max = f64::NEG_INFINITY;
            for (i, &x) in basis.grid.nodes().iter().enumerate() {
                let v = basis.psis[k][i].abs();
                if v > 0.0 {
                    lhs_max = lhs_max.max(r * x.abs() + v.ln());
                }
            }
            BoundItem { k, applicable: true, margin: ln_c1 + l * t0 - lhs_max }
        })
        .collect();
    Ok(BoundReport::from_items("eigenfunction decay bound (log scale)", items, None))
}

/// |psi_k'(x*)| <= A1 + A2 lambda_k for k >= k0, with the constants built
/// from psi_2 at its interior critical point between its two zeros.
pub fn check_derivative_bound(basis: &SpectralBasis) -> Result<BoundReport> {
    if basis.modes() < 3 {
        return Err(Error::Domain("derivative bound needs at least psi_2".into()));
    }
    let psi2 = &basis.psis[2];
    let dpsi2 = &basis.dpsis[2];
    let max2 = basis.max_abs_psi(2);
    // zeros of psi_2 = sign-change locations
    let mut zeros = Vec::new();
    let mut last = (0usize, 0.0f64);
    for (i, &v) in psi2.iter().enumerate() {
        if v.abs() <= 1e-8 * max2 {
            continue;
        }
        if last.1 != 0.0 && v.signum() != last.1.signum() {
            zeros.push((last.0, i));
        }
        last = (i, v);
    }
    if zeros.len() != 2 {
        return Err(Error::EigenSolver(format!(
            "psi_2 shows {} sign changes instead of 2",
            zeros.len()
        )));
    }
    let left_zero = zeros[0].0;
    let right_zero = zeros[1].1;
    // x*: argmin of |psi_2'| strictly between the zeros
    let x_star_idx = (zeros[0].1..=zeros[1].0)
        .min_by(|&a, &b| dpsi2[a].abs().partial_cmp(&dpsi2[b].abs()).unwrap())
        .ok_or_else(|| Error::EigenSolver("empty interval between the zeros of psi_2".into()))?;
    let u_star = psi2[x_star_idx].abs();
    if u_star == 0.0 {
        return Err(Error::EigenSolver("psi_2 vanishes at its critical point".into()));
    }
    let _ = right_zero;

    let cpi = (std::f64::consts::E / std::f64::consts::PI).powf(0.25);
    let du_x1 = dpsi2[left_zero].abs();
    let tilde_a = basis.constants.tilde_a;
    let lam2 = basis.lambdas[2];
    let a2 = (cpi * du_x1 + 2.0) / u_star;
    let d1 = (cpi * du_x1 * tilde_a + 2.0 * lam2.abs()) / u_star;
    let flagged =
        (d1 < 0.0).then(|| format!("constructed D1 = {d1:.3e} is negative; following the formulas literally"));

    let k0 = basis
        .lambdas
        .iter()
        .position(|&l| l + tilde_a >= 1.0)
        .unwrap_or(basis.modes());
    let mut a1 = d1;
    for j in 0..k0 {
        a1 = a1.max(basis.dpsis[j][x_star_idx].abs() + a2 * basis.lambdas[j].abs());
    }

    let items = basis
        .lambdas
        .iter()
        .enumerate()
        .map(|(k, &l)| BoundItem {
            k,
            applicable: k >= k0,
            margin: a1 + a2 * l - basis.dpsis[k][x_star_idx].abs(),
        })
        .collect();
    let mut report = BoundReport::from_items("derivative growth bound", items, flagged);
    report.name = format!(
        "derivative growth bound at x*={:.6} (A1={a1:.4}, A2={a2:.4}, k0={k0})",
        basis.grid.node(x_star_idx)
    );
    Ok(report)
}
