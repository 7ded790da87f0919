//! The conditioned process: kernel q(t,x,y) = e^{lambda_0 t}
//! psi_0(y)/psi_0(x) p~(t,x,y), its simulation as an SDE with drift
//! psi_0'/psi_0, the ratio-limit characterization, and the invariance of
//! psi_0^2 dx.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::interp::CubicHermite;
use crate::mc;
use crate::semigroup::KernelEvaluator;

/// Conditioned transition kernel q(t, x, y).
pub fn kernel_q(eval: &KernelEvaluator, t: f64, x: f64, y: f64) -> Result<f64> {
    let psi0_x = eval.psi_at(0, x);
    if psi0_x.abs() < 1e-300 {
        return Err(Error::OutOfSupport { x });
    }
    let psi0_y = eval.psi_at(0, y);
    Ok((eval.lambda0() * t).exp() * (psi0_y / psi0_x) * eval.ptilde(t, x, y)?)
}

/// q(t, x, .) over the grid.
pub fn kernel_q_row(eval: &KernelEvaluator, t: f64, x: f64) -> Result<Vec<f64>> {
    let psi0_x = eval.psi_at(0, x);
    if psi0_x.abs() < 1e-300 {
        return Err(Error::OutOfSupport { x });
    }
    let row = eval.ptilde_row(t, x)?;
    let w = (eval.lambda0() * t).exp() / psi0_x;
    Ok(row
        .iter()
        .zip(eval.basis().psis[0].iter())
        .map(|(&pt, &psi0_y)| w * psi0_y * pt)
        .collect())
}

/// Simulation model: interpolated drift psi_0'/psi_0 with a magnitude clamp
/// and reflection just inside the truncation walls (the exact drift blows up
/// inward there; the clamp preserves ergodicity without overflow).
pub struct QProcessModel {
    drift: CubicHermite,
    pub sde_clip: f64,
    pub reflect_at: f64,
    half_width: f64,
}

impl QProcessModel {
    pub fn new(eval: &KernelEvaluator) -> Result<Self> {
        Self::with_clip(eval, 50.0)
    }

    pub fn with_clip(eval: &KernelEvaluator, sde_clip: f64) -> Result<Self> {
        let basis = eval.basis();
        let grid = &basis.grid;
        let n = grid.len();
        let psi0 = &basis.psis[0];
        let dpsi0 = &basis.dpsis[0];
        let lam0 = basis.lambdas[0];
        let mut xs = Vec::with_capacity(n - 2);
        let mut ds = Vec::with_capacity(n - 2);
        let mut dds = Vec::with_capacity(n - 2);
        for i in 1..n - 1 {
            if psi0[i] <= 0.0 {
                continue; // noise-level tail nodes carry no usable drift
            }
            let d = dpsi0[i] / psi0[i];
            // (psi0'/psi0)' = psi0''/psi0 - (psi0'/psi0)^2
            //              = -2 (lambda_0 + V~) - d^2
            let dd = -2.0 * (lam0 + basis.tilde_v[i]) - d * d;
            xs.push(grid.node(i));
            ds.push(d);
            dds.push(dd);
        }
        if xs.len() < n / 2 {
            return Err(Error::EigenSolver("ground state too degenerate for a drift field".into()));
        }
        Ok(QProcessModel {
            drift: CubicHermite::with_derivatives(xs, ds, dds)?,
            sde_clip,
            reflect_at: grid.half_width() - 5.0 * grid.spacing(),
            half_width: grid.half_width(),
        })
    }

    /// Drift field from an explicit closed form (for cross-checks against
    /// the numerically interpolated one).
    pub fn from_drift_fn(
        grid: &Grid,
        drift: impl Fn(f64) -> f64,
        drift_deriv: impl Fn(f64) -> f64,
        sde_clip: f64,
    ) -> Result<Self> {
        let xs: Vec<f64> = grid.nodes()[1..grid.len() - 1].to_vec();
        let ds: Vec<f64> = xs.iter().map(|&x| drift(x)).collect();
        let dds: Vec<f64> = xs.iter().map(|&x| drift_deriv(x)).collect();
        Ok(QProcessModel {
            drift: CubicHermite::with_derivatives(xs, ds, dds)?,
            sde_clip,
            reflect_at: grid.half_width() - 5.0 * grid.spacing(),
            half_width: grid.half_width(),
        })
    }

    pub fn drift_at(&self, x: f64) -> f64 {
        self.drift.eval(x).clamp(-self.sde_clip, self.sde_clip)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QPath {
    pub dt: f64,
    pub positions: Vec<f64>,
    /// Number of excursions pulled back at the reflection walls.
    pub boundary_events: usize,
}

/// Euler-Maruyama simulation of dY = drift(Y) dt + dB with reflection at
/// +-reflect_at.
pub fn simulate_q(
    model: &QProcessModel,
    x0: f64,
    t_end: f64,
    dt: f64,
    rng: &mut impl Rng,
) -> Result<QPath> {
    if x0.abs() >= model.half_width {
        return Err(Error::Domain(format!("start point {x0} outside the open domain")));
    }
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(Error::Domain("need positive dt and horizon".into()));
    }
    let steps = (t_end / dt).round() as usize;
    let sqrt_dt = dt.sqrt();
    let mut x = x0;
    let mut positions = Vec::with_capacity(steps + 1);
    positions.push(x);
    let mut boundary_events = 0usize;
    for _ in 0..steps {
        let xi: f64 = rng.sample(StandardNormal);
        x += model.drift_at(x) * dt + sqrt_dt * xi;
        if x > model.reflect_at {
            x = 2.0 * model.reflect_at - x;
            boundary_events += 1;
        } else if x < -model.reflect_at {
            x = -2.0 * model.reflect_at - x;
            boundary_events += 1;
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("conditioned-process path".into()));
        }
        positions.push(x);
    }
    Ok(QPath { dt, positions, boundary_events })
}

#[derive(Debug, Clone, Serialize)]
pub struct QLimitReport {
    pub s: f64,
    pub x: f64,
    pub t_values: Vec<f64>,
    pub ratios: Vec<f64>,
    pub limit: f64,
    pub errors: Vec<f64>,
    pub fitted_rate: f64,
    pub expected_rate: f64,
}

/// Finite-horizon ratio E_x[e^{int_0^t V} phi(X_s)] / E_x[e^{int_0^t V}]
/// against its limit, the conditioned semigroup applied to phi. Both sides
/// are kernel quadratures.
pub fn check_q_limit(
    eval: &KernelEvaluator,
    x: f64,
    s: f64,
    t_values: &[f64],
    phi: &[f64],
) -> Result<QLimitReport> {
    if t_values.iter().any(|&t| t <= s) {
        return Err(Error::Domain("every horizon must exceed the window s".into()));
    }
    let grid = eval.grid();
    let p_row = eval.p_row(s, x)?;
    let q_row = kernel_q_row(eval, s, x)?;
    let limit = grid.integrate_product(&q_row, phi);

    let mut ratios = Vec::with_capacity(t_values.len());
    let mut errors = Vec::with_capacity(t_values.len());
    for &t in t_values {
        let m = eval.mass_grid(t - s)?;
        let num: Vec<f64> =
            p_row.iter().zip(phi).zip(&m).map(|((&p, &f), &mm)| p * f * mm).collect();
        let den: Vec<f64> = p_row.iter().zip(&m).map(|(&p, &mm)| p * mm).collect();
        let ratio = grid.integrate(&num) / grid.integrate(&den);
        ratios.push(ratio);
        errors.push((ratio - limit).abs());
    }
    let pts: Vec<(f64, f64)> = t_values
        .iter()
        .zip(&errors)
        .filter(|(_, &e)| e > 1e-14)
        .map(|(&t, &e)| (t, e.ln()))
        .collect();
    let fitted_rate = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        -(n * sxy - sx * sy) / (n * sxx - sx * sx)
    } else {
        f64::NAN
    };
    Ok(QLimitReport {
        s,
        x,
        t_values: t_values.to_vec(),
        ratios,
        limit,
        errors,
        fitted_rate,
        expected_rate: eval.spectral_gap(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OccupationReport {
    pub t_end: f64,
    pub dt: f64,
    pub burn_in: f64,
    pub n_samples: usize,
    pub ks: f64,
    pub boundary_events: usize,
    pub sample_mean: f64,
    pub sample_variance: f64,
}

/// Piecewise-linear CDF of a grid density.
pub fn cdf_from_density(grid: &Grid, density: &[f64]) -> impl Fn(f64) -> f64 {
    let n = grid.len();
    let mut cum = vec![0.0; n];
    for i in 1..n {
        cum[i] = cum[i - 1] + 0.5 * (density[i - 1] + density[i]) * grid.spacing();
    }
    let total = cum[n - 1];
    for c in &mut cum {
        *c /= total;
    }
    let lo = grid.node(0);
    let h = grid.spacing();
    move |x: f64| {
        if x <= lo {
            return 0.0;
        }
        let t = (x - lo) / h;
        let i = (t.floor() as usize).min(n - 2);
        let frac = t - i as f64;
        (cum[i] + frac * (cum[i + 1] - cum[i])).clamp(0.0, 1.0)
    }
}

/// Subsampling stride (time units) for occupation statistics. Coarser
/// strides discard path information and inflate the KS noise floor without
/// buying real independence (the lag-1.0 autocorrelation of these
/// relaxation-rate-one processes is still ~e^{-1}).
pub const OCCUPATION_STRIDE: f64 = 0.1;

/// Kolmogorov-Smirnov distance between the occupation law of one long path
/// (subsampled on OCCUPATION_STRIDE after burn-in) and the square of the
/// ground state.
pub fn invariant_occupation_check(
    eval: &KernelEvaluator,
    model: &QProcessModel,
    x0: f64,
    t_end: f64,
    dt: f64,
    burn_in: f64,
    rng: &mut impl Rng,
) -> Result<OccupationReport> {
    if t_end - burn_in < 100.0 {
        return Err(Error::Domain("need at least 100 time units past burn-in".into()));
    }
    let path = simulate_q(model, x0, t_end, dt, rng)?;
    let stride = (OCCUPATION_STRIDE / dt).round().max(1.0) as usize;
    let start = (burn_in / dt).round() as usize;
    let samples: Vec<f64> = path.positions[start..].iter().step_by(stride).copied().collect();
    let (mean, _) = mc::mean_stderr(&samples);
    let var = samples.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>()
        / (samples.len() - 1) as f64;

    let grid = eval.grid();
    let density: Vec<f64> = eval.basis().psis[0].iter().map(|&p| p * p).collect();
    let cdf = cdf_from_density(grid, &density);
    let ks = mc::ks_statistic(samples.clone(), cdf);
    Ok(OccupationReport {
        t_end,
        dt,
        burn_in,
        n_samples: samples.len(),
        ks,
        boundary_events: path.boundary_events,
        sample_mean: mean,
        sample_variance: var,
    })
}
