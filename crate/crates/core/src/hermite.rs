//! Closed forms for the exactly solvable example: growth rate
//! V(x) = 1 - x^2/2 with underlying diffusion dX = sigma (dB - c dt).
//!
//! Everything here is an independent oracle: eigenpairs of the associated
//! harmonic-oscillator problem, the quasi-stationary law, the mass limit,
//! the conditioned-process parameters, and the Mehler kernel. The numerical
//! pipeline is validated against these values; nothing in this module
//! depends on the solvers.
//!
//! Conventions. The original coordinates carry diffusion scale sigma; the
//! change of variables x = y / sigma produces the unit-diffusion model with
//! constant drift c and potential W(x) = 1 - sigma^2 x^2 / 2. The closed
//! eigenfunctions below live in original coordinates, where the relevant
//! Schroedinger operator is (1/2) d^2 - y^2 / (2 sigma^2) with eigenvalues
//! -(k + 1/2)/sigma.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_HERMITE_DEGREE: usize = 170;

/// The exactly solvable model instance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HermiteModel {
    /// Mutation scale (diffusion coefficient), must be positive.
    pub sigma: f64,
    /// Drift parameter.
    pub c: f64,
}

impl HermiteModel {
    pub fn new(sigma: f64, c: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        Ok(HermiteModel { sigma, c })
    }
}

/// Physicists' Hermite polynomial H_k(x) by the three-term recurrence.
pub fn hermite_poly(k: usize, x: f64) -> Result<f64> {
    if k > MAX_HERMITE_DEGREE {
        return Err(Error::Domain(format!(
            "Hermite degree {k} exceeds {MAX_HERMITE_DEGREE}; normalizers overflow"
        )));
    }
    let mut prev = 1.0; // H_0
    if k == 0 {
        return Ok(prev);
    }
    let mut cur = 2.0 * x; // H_1
    for j in 1..k {
        let next = 2.0 * x * cur - 2.0 * j as f64 * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Unit Hermite function h_k(u) = H_k(u) e^{-u^2/2} / sqrt(2^k k! sqrt(pi)),
/// evaluated by the normalized recurrence (no overflow up to the degree cap).
fn hermite_function(k: usize, u: f64) -> f64 {
    let pi4 = std::f64::consts::PI.powf(-0.25);
    let g = (-0.5 * u * u).exp();
    let mut prev = pi4 * g;
    if k == 0 {
        return prev;
    }
    let mut cur = std::f64::consts::SQRT_2 * u * prev;
    for j in 1..k {
        let jf = j as f64;
        let next = (2.0 / (jf + 1.0)).sqrt() * u * cur - (jf / (jf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Eigenvalue of the original-coordinate oscillator problem: (k + 1/2)/sigma.
pub fn eigenvalue(model: &HermiteModel, k: usize) -> f64 {
    (k as f64 + 0.5) / model.sigma
}

/// Normalized eigenfunction Psi_k(y) = C_k H_k(y/sqrt(sigma)) e^{-y^2/(2 sigma)}
/// in original coordinates, with C_k = sigma^{-1/4} / sqrt(2^k k! sqrt(pi)).
pub fn eigenfunction(model: &HermiteModel, k: usize, y: f64) -> Result<f64> {
    if k > MAX_HERMITE_DEGREE {
        return Err(Error::Domain(format!(
            "Hermite degree {k} exceeds {MAX_HERMITE_DEGREE}; normalizers overflow"
        )));
    }
    Ok(model.sigma.powf(-0.25) * hermite_function(k, y / model.sigma.sqrt()))
}

/// The log of the normalizer C_k, accumulated in log space.
pub fn ln_normalizer(model: &HermiteModel, k: usize) -> Result<f64> {
    if k > MAX_HERMITE_DEGREE {
        return Err(Error::Domain(format!(
            "Hermite degree {k} exceeds {MAX_HERMITE_DEGREE}; normalizers overflow"
        )));
    }
    let mut ln_fact = 0.0;
    for j in 1..=k {
        ln_fact += (j as f64).ln();
    }
    Ok(-0.25 * model.sigma.ln()
        - 0.5 * (k as f64 * std::f64::consts::LN_2 + ln_fact + 0.5 * std::f64::consts::PI.ln()))
}

/// Growth exponent of the total mass: 1 - c^2/2 - sigma/2.
///
/// This is the rate at which m_t grows (m_t ~ e^{+rate t}); it equals the
/// top eigenvalue of the reduced generator, i.e. minus the principal decay
/// rate lambda_0 of the semigroup convention e^{-lambda_k t}.
pub fn mass_growth_exponent(model: &HermiteModel) -> f64 {
    1.0 - 0.5 * model.c * model.c - 0.5 * model.sigma
}

/// Quasi-stationary density in original coordinates: N(-c, sigma).
pub fn qsd_density(model: &HermiteModel, y: f64) -> f64 {
    let s = model.sigma;
    (-((y + model.c) * (y + model.c)) / (2.0 * s)).exp() / (2.0 * std::f64::consts::PI * s).sqrt()
}

/// Principal right eigenvector Theta_0 in original coordinates, normalized
/// in L^2 of the speed measure.
pub fn theta0(model: &HermiteModel, y: f64) -> f64 {
    let s = model.sigma;
    (model.c * model.c / (2.0 * s)).exp() * (-(y - model.c) * (y - model.c) / (2.0 * s)).exp()
        / (std::f64::consts::PI * s).powf(0.25)
}

/// Limit of e^{lambda_0 t} m_t(y): sqrt(2) e^{c^2/sigma} e^{-(y-c)^2/(2 sigma)}.
pub fn mass_limit(model: &HermiteModel, y: f64) -> f64 {
    let s = model.sigma;
    std::f64::consts::SQRT_2
        * (model.c * model.c / s).exp()
        * (-(y - model.c) * (y - model.c) / (2.0 * s)).exp()
}

/// Conditioned-process parameters in original coordinates:
/// (relaxation rate, diffusion coefficient, stationary variance)
/// for dY = -sigma Y dt + sigma dB, stationary N(0, sigma/2).
pub fn q_process_params(model: &HermiteModel) -> (f64, f64, f64) {
    (model.sigma, model.sigma, 0.5 * model.sigma)
}

/// Mehler kernel: the transition density sum_k e^{-(k+1/2)t/sigma}
/// Psi_k(x) Psi_k(y) of Brownian motion with potential -y^2/(2 sigma^2),
/// in closed form.
pub fn mehler_kernel(sigma: f64, t: f64, x: f64, y: f64) -> f64 {
    let tau = t / sigma;
    let rs = sigma.sqrt();
    unit_mehler(tau, x / rs, y / rs) / rs
}

fn unit_mehler(tau: f64, u: f64, v: f64) -> f64 {
    let r = (-tau).exp();
    let r2 = r * r;
    let pref = (-0.5 * tau).exp() / (std::f64::consts::PI * (1.0 - r2)).sqrt();
    let expo = (2.0 * u * v * r - (u * u + v * v) * r2) / (1.0 - r2) - 0.5 * (u * u + v * v);
    pref * expo.exp()
}
