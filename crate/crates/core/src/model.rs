//! Problem instances: drifted Brownian motion with branching rates, the
//! hypotheses the theory needs, and the two reductions that bring a model
//! to canonical Schroedinger form (trait rescaling to unit diffusion, then
//! the change of measure absorbing the drift into the potential).

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::interp::CubicHermite;
use crate::quad::adaptive_simpson;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub const ELL_QUAD_TOL: f64 = 1e-10;

/// A branching-diffusion problem instance: unit-diffusion drifted Brownian
/// motion dX = dB - a(X) dt, birth rate b, death rate d, growth rate
/// V = b - d, plus the constants entering the standing hypotheses.
#[derive(Clone)]
pub struct ModelSpec {
    /// Drift a (the diffusion has generator u''/2 - a u').
    pub a: RealFn,
    /// Analytic derivative a'. Differencing would pollute the reduced
    /// potential near the boundary, so it is always supplied.
    pub a_prime: RealFn,
    /// Growth rate V = b - d.
    pub v: RealFn,
    /// Birth rate, nonnegative.
    pub b: RealFn,
    /// Death rate, nonnegative.
    pub d: RealFn,
    /// Linear-growth constants for the drift antiderivative:
    /// |ell(x)| <= gamma + beta |x|.
    pub beta: f64,
    pub gamma: f64,
    /// Linear-decay constants for V: V(x) <= -e_const |x| for |x| >= x0.
    pub e_const: f64,
    pub x0: f64,
    /// Upper bound for a' - a^2.
    pub m_upper: f64,
}

impl std::fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelSpec")
            .field("beta", &self.beta)
            .field("gamma", &self.gamma)
            .field("e_const", &self.e_const)
            .field("x0", &self.x0)
            .field("m_upper", &self.m_upper)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    /// The exactly solvable family in reduced (unit-diffusion) coordinates:
    /// drift a = c, V(x) = 1 - sigma^2 x^2 / 2, birth rate 1,
    /// death rate sigma^2 x^2 / 2.
    pub fn hermite(sigma: f64, c: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        let s2 = sigma * sigma;
        // V(x) <= -|x| iff s2 x^2/2 - |x| - 1 >= 0
        let x0 = (1.0 + (1.0 + 2.0 * s2).sqrt()) / s2;
        Ok(ModelSpec {
            a: Arc::new(move |_| c),
            a_prime: Arc::new(|_| 0.0),
            v: Arc::new(move |x| 1.0 - 0.5 * s2 * x * x),
            b: Arc::new(|_| 1.0),
            d: Arc::new(move |x| 0.5 * s2 * x * x),
            beta: c.abs(),
            gamma: 0.0,
            e_const: 1.0,
            x0,
            m_upper: -c * c,
        })
    }

    /// Brownian motion killed at rate x^2/(2 sigma^2): zero drift, potential
    /// -x^2/(2 sigma^2). Its spectrum is (k + 1/2)/sigma exactly.
    pub fn harmonic(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        let s2 = sigma * sigma;
        Ok(ModelSpec {
            a: Arc::new(|_| 0.0),
            a_prime: Arc::new(|_| 0.0),
            v: Arc::new(move |x| -0.5 * x * x / s2),
            b: Arc::new(|_| 0.0),
            d: Arc::new(move |x| 0.5 * x * x / s2),
            beta: 0.0,
            gamma: 0.0,
            e_const: 1.0,
            x0: 2.0 * s2,
            m_upper: 0.0,
        })
    }

    /// Machine-exactness of V = b - d and nonnegativity of the rates on the
    /// grid.
    pub fn check_rates(&self, grid: &Grid) -> Result<()> {
        for &x in grid.nodes() {
            let b = (self.b)(x);
            let d = (self.d)(x);
            let v = (self.v)(x);
            if b < 0.0 || d < 0.0 {
                return Err(Error::AssumptionViolation(format!(
                    "negative rate at x={x}: b={b}, d={d}"
                )));
            }
            if (b - d - v).abs() > 1e-12 * (1.0 + b.abs() + d.abs() + v.abs()) {
                return Err(Error::AssumptionViolation(format!(
                    "V != b - d at x={x}: V={v}, b-d={}",
                    b - d
                )));
            }
        }
        Ok(())
    }
}

/// Drift antiderivative ell(x) = int_0^x a(z) dz by adaptive Simpson.
pub fn ell(spec: &ModelSpec, x: f64) -> Result<f64> {
    let a = spec.a.clone();
    adaptive_simpson(&move |z| a(z), 0.0, x, ELL_QUAD_TOL)
}

/// Canonical Schroedinger data after the change of measure: potential
/// V~ = V + (a' - a^2)/2, with the drift absorbed into ell.
pub struct ReducedSpec {
    pub grid: Grid,
    /// V~ sampled at the nodes.
    pub tilde_v: Vec<f64>,
    /// ell sampled at the nodes (quadrature-cached).
    pub ell: Vec<f64>,
    /// sup of V~ over the domain.
    pub tilde_a: f64,
    /// Linear-decay constants for V~ (tilde_e = e_const/2 by construction).
    pub tilde_e: f64,
    pub tilde_x0: f64,
    pub beta: f64,
    pub gamma: f64,
    tilde_v_fn: RealFn,
    a_fn: RealFn,
    ap_fn: RealFn,
}

impl std::fmt::Debug for ReducedSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReducedSpec")
            .field("tilde_a", &self.tilde_a)
            .field("tilde_e", &self.tilde_e)
            .field("tilde_x0", &self.tilde_x0)
            .field("beta", &self.beta)
            .field("gamma", &self.gamma)
            .finish_non_exhaustive()
    }
}

impl ReducedSpec {
    /// Direct construction from a known reduced potential with zero drift.
    /// The decay constants are taken as given and verified on the grid.
    pub fn from_potential(
        grid: Grid,
        tilde_v_fn: RealFn,
        tilde_e: f64,
        tilde_x0: f64,
    ) -> Result<Self> {
        let tilde_v = grid.sample(|x| tilde_v_fn(x));
        verify_tilde_decay(&grid, &tilde_v, tilde_e, tilde_x0)?;
        let tilde_a = tilde_v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(ReducedSpec {
            ell: vec![0.0; grid.len()],
            grid,
            tilde_v,
            tilde_a,
            tilde_e,
            tilde_x0,
            beta: 0.0,
            gamma: 0.0,
            tilde_v_fn,
            a_fn: Arc::new(|_| 0.0),
            ap_fn: Arc::new(|_| 0.0),
        })
    }

    /// ell at an arbitrary point: cached node value plus a short quadrature
    /// correction from the nearest node.
    pub fn ell_at(&self, x: f64) -> f64 {
        let i = self.grid.nearest(x);
        let xi = self.grid.node(i);
        if x == xi {
            return self.ell[i];
        }
        let a = &self.a_fn;
        self.ell[i]
            + adaptive_simpson(&|z| a(z), xi, x, ELL_QUAD_TOL)
                .unwrap_or_else(|_| (x - xi) * a(0.5 * (x + xi)))
    }

    pub fn tilde_v_at(&self, x: f64) -> f64 {
        (self.tilde_v_fn)(x)
    }

    /// Drift and its derivative, for off-node Taylor evaluation of ell.
    pub fn drift_fns(&self) -> (RealFn, RealFn) {
        (self.a_fn.clone(), self.ap_fn.clone())
    }
}

fn verify_tilde_decay(grid: &Grid, tilde_v: &[f64], tilde_e: f64, tilde_x0: f64) -> Result<()> {
    for (i, &x) in grid.nodes().iter().enumerate() {
        if x.abs() >= tilde_x0 && tilde_v[i] > -tilde_e * x.abs() + 1e-12 {
            return Err(Error::AssumptionViolation(format!(
                "reduced potential fails linear decay at x={x}: V~={} > {}",
                tilde_v[i],
                -tilde_e * x.abs()
            )));
        }
    }
    Ok(())
}

/// Change of measure carrying (a, V) to the canonical form. The decay
/// constant for V~ is e_const/2; the onset point is the smallest grid node
/// at or past x0 from which the decay holds everywhere outward.
pub fn reduce(spec: &ModelSpec, grid: &Grid) -> Result<ReducedSpec> {
    let n = grid.len();
    let ell_samples = cumulative_ell(spec, grid)?;

    let a = spec.a.clone();
    let ap = spec.a_prime.clone();
    let v = spec.v.clone();
    let tilde_v_fn: RealFn = Arc::new(move |x| {
        let ax = a(x);
        v(x) + 0.5 * (ap(x) - ax * ax)
    });
    let tilde_v = grid.sample(|x| tilde_v_fn(x));
    let tilde_a = tilde_v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !tilde_a.is_finite() {
        return Err(Error::NonFinite("reduced potential".into()));
    }

    let tilde_e = 0.5 * spec.e_const;
    // farthest |x| where the decay inequality fails
    let mut worst = -1.0f64;
    for (i, &x) in grid.nodes().iter().enumerate() {
        if tilde_v[i] > -tilde_e * x.abs() + 1e-12 {
            worst = worst.max(x.abs());
        }
    }
    // smallest node >= x0 strictly past every violation
    let mut tilde_x0 = None;
    for &x in &grid.nodes()[(n - 1) / 2..] {
        if x >= spec.x0 && x > worst {
            tilde_x0 = Some(x);
            break;
        }
    }
    let tilde_x0 = tilde_x0.ok_or_else(|| {
        Error::AssumptionViolation(format!(
            "V~ fails V~(x) <= -{tilde_e}|x| out to the domain edge (worst violation at |x|={worst})"
        ))
    })?;
    verify_tilde_decay(grid, &tilde_v, tilde_e, tilde_x0)?;

    Ok(ReducedSpec {
        grid: grid.clone(),
        tilde_v,
        ell: ell_samples,
        tilde_a,
        tilde_e,
        tilde_x0,
        beta: spec.beta,
        gamma: spec.gamma,
        tilde_v_fn,
        a_fn: spec.a.clone(),
        ap_fn: spec.a_prime.clone(),
    })
}

/// ell at every node: per-cell adaptive Simpson accumulated from the origin
/// outward, so the quadrature error never crosses zero.
fn cumulative_ell(spec: &ModelSpec, grid: &Grid) -> Result<Vec<f64>> {
    let n = grid.len();
    let mid = (n - 1) / 2;
    let mut out = vec![0.0; n];
    let cell_tol = ELL_QUAD_TOL / n as f64;
    let a = &spec.a;
    for i in mid..n - 1 {
        let seg = adaptive_simpson(&|z| a(z), grid.node(i), grid.node(i + 1), cell_tol)?;
        out[i + 1] = out[i] + seg;
    }
    for i in (0..mid).rev() {
        let seg = adaptive_simpson(&|z| a(z), grid.node(i + 1), grid.node(i), cell_tol)?;
        out[i] = out[i + 1] + seg;
    }
    Ok(out)
}

/// One hypothesis verdict with the location of the worst violation.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub pass: bool,
    pub worst_x: f64,
    /// Positive margin = satisfied by that much; negative = violated.
    pub margin: f64,
}

/// Nodewise verdicts for the standing hypotheses. Continuity (H1) is taken
/// on trust from the caller-supplied closures.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    /// |ell| <= gamma + beta |x|
    pub h0_2: HypothesisCheck,
    /// a' - a^2 <= M
    pub h0_3: HypothesisCheck,
    /// V bounded above (argmax away from the boundary band)
    pub h2: HypothesisCheck,
    /// V negative and below its interior sup in the outer band
    pub h3: HypothesisCheck,
    /// V(x) <= -E|x| for |x| >= x0
    pub h4: HypothesisCheck,
    /// sup of V over the grid
    pub sup_v: f64,
    pub rates_consistent: bool,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.h0_2.pass
            && self.h0_3.pass
            && self.h2.pass
            && self.h3.pass
            && self.h4.pass
            && self.rates_consistent
    }
}

pub fn validate_assumptions(spec: &ModelSpec, grid: &Grid) -> Result<AssumptionReport> {
    let n = grid.len();
    let ell_samples = cumulative_ell(spec, grid)?;
    let v_samples = grid.sample(|x| (spec.v)(x));
    let sup_v = v_samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut h0_2 = HypothesisCheck { pass: true, worst_x: 0.0, margin: f64::INFINITY };
    for (i, &x) in grid.nodes().iter().enumerate() {
        let margin = spec.gamma + spec.beta * x.abs() - ell_samples[i].abs();
        if margin < h0_2.margin {
            h0_2.worst_x = x;
            h0_2.margin = margin;
        }
    }
    h0_2.pass = h0_2.margin >= -1e-9;

    let mut h0_3 = HypothesisCheck { pass: true, worst_x: 0.0, margin: f64::INFINITY };
    for &x in grid.nodes() {
        let ax = (spec.a)(x);
        let margin = spec.m_upper - ((spec.a_prime)(x) - ax * ax);
        if margin < h0_3.margin {
            h0_3.worst_x = x;
            h0_3.margin = margin;
        }
    }
    h0_3.pass = h0_3.margin >= -1e-9;

    // H2: the sup must be attained away from the boundary band, otherwise the
    // truncated grid is hiding growth at infinity.
    let band = (n / 20).max(2);
    let argmax = v_samples
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let h2_pass = argmax >= band && argmax < n - band;
    let h2 = HypothesisCheck {
        pass: h2_pass,
        worst_x: grid.node(argmax),
        margin: if h2_pass { 0.0 } else { -1.0 },
    };

    // H3: in the outer 10% band V must be negative and below the interior sup.
    let outer = (n / 10).max(2);
    let mut h3 = HypothesisCheck { pass: true, worst_x: 0.0, margin: f64::INFINITY };
    let mut band_max = f64::NEG_INFINITY;
    for i in (0..outer).chain(n - outer..n) {
        band_max = band_max.max(v_samples[i]);
        let margin = -v_samples[i];
        if margin < h3.margin {
            h3.worst_x = grid.node(i);
            h3.margin = margin;
        }
    }
    h3.pass = h3.margin > 0.0 && band_max < sup_v;

    let mut h4 = HypothesisCheck { pass: true, worst_x: spec.x0, margin: f64::INFINITY };
    for (i, &x) in grid.nodes().iter().enumerate() {
        if x.abs() >= spec.x0 {
            let margin = -spec.e_const * x.abs() - v_samples[i];
            if margin < h4.margin {
                h4.worst_x = x;
                h4.margin = margin;
            }
        }
    }
    h4.pass = h4.margin >= -1e-9;

    let rates_consistent = spec.check_rates(grid).is_ok();

    Ok(AssumptionReport { h0_2, h0_3, h2, h3, h4, sup_v, rates_consistent })
}

/// Inputs for the trait rescaling that removes a state-dependent diffusion
/// coefficient. Derivatives are analytic, like everywhere else.
pub struct SigmaModel {
    pub sigma: RealFn,
    pub sigma_prime: RealFn,
    pub sigma_second: RealFn,
    pub a0: RealFn,
    pub a0_prime: RealFn,
    pub v: RealFn,
    pub b: Option<RealFn>,
    pub d: Option<RealFn>,
}

/// Result of the rescaling: the unit-diffusion model plus the map G and its
/// inverse for transporting quantities between coordinate systems.
pub struct SigmaReduction {
    pub model: ModelSpec,
    /// Image of the y-domain under G; the Schroedinger grid must stay inside.
    pub x_range: (f64, f64),
    pub g: CubicHermite,
    pub g_inv: CubicHermite,
}

/// Rescale dY = sigma(Y) dB - a0(Y) dt to unit diffusion via
/// x = G(y) = int_0^y du/sigma(u); new drift (a0/sigma + sigma'/2) o G^{-1},
/// new potential V o G^{-1}. Hypothesis constants for the new model are
/// derived by grid scan.
pub fn reduce_sigma(inputs: &SigmaModel, y_grid: &Grid) -> Result<SigmaReduction> {
    let n = y_grid.len();
    let sigma_samples = y_grid.sample(|y| (inputs.sigma)(y));
    if sigma_samples.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::NonMonotoneSigma);
    }

    // G on the y-grid, per-cell Simpson of 1/sigma, anchored at G(0) = 0
    let mid = (n - 1) / 2;
    let mut g_vals = vec![0.0; n];
    let sig = &inputs.sigma;
    let cell_tol = ELL_QUAD_TOL / n as f64;
    for i in mid..n - 1 {
        g_vals[i + 1] = g_vals[i]
            + adaptive_simpson(&|u| 1.0 / sig(u), y_grid.node(i), y_grid.node(i + 1), cell_tol)?;
    }
    for i in (0..mid).rev() {
        g_vals[i] = g_vals[i + 1]
            + adaptive_simpson(&|u| 1.0 / sig(u), y_grid.node(i + 1), y_grid.node(i), cell_tol)?;
    }

    let g = CubicHermite::with_derivatives(
        y_grid.nodes().to_vec(),
        g_vals.clone(),
        sigma_samples.iter().map(|s| 1.0 / s).collect(),
    )?;
    // monotone inverse: abscissa G(y), values y, slope dy/dx = sigma(y)
    let g_inv = CubicHermite::with_derivatives(
        g_vals.clone(),
        y_grid.nodes().to_vec(),
        sigma_samples.clone(),
    )?;

    let x_range = (g_vals[0], g_vals[n - 1]);

    let inv = Arc::new(g_inv.clone());
    let (sg, sp) = (inputs.sigma.clone(), inputs.sigma_prime.clone());
    let a0 = inputs.a0.clone();
    let inv_a = inv.clone();
    let a_new: RealFn = Arc::new(move |x| {
        let y = inv_a.eval(x);
        a0(y) / sg(y) + 0.5 * sp(y)
    });

    let (sg2, sp2, ss2) =
        (inputs.sigma.clone(), inputs.sigma_prime.clone(), inputs.sigma_second.clone());
    let (a02, a0p2) = (inputs.a0.clone(), inputs.a0_prime.clone());
    let inv_ap = inv.clone();
    let a_prime_new: RealFn = Arc::new(move |x| {
        let y = inv_ap.eval(x);
        let s = sg2(y);
        // chain rule: (f o G^{-1})'(x) = f'(y) sigma(y)
        ((a0p2(y) * s - a02(y) * sp2(y)) / (s * s) + 0.5 * ss2(y)) * s
    });

    let v0 = inputs.v.clone();
    let inv_v = inv.clone();
    let v_new: RealFn = Arc::new(move |x| v0(inv_v.eval(x)));

    let (b_new, d_new): (RealFn, RealFn) = match (&inputs.b, &inputs.d) {
        (Some(b), Some(d)) => {
            let (b, d) = (b.clone(), d.clone());
            let (ib, id) = (inv.clone(), inv.clone());
            (
                Arc::new(move |x| b(ib.eval(x))) as RealFn,
                Arc::new(move |x| d(id.eval(x))) as RealFn,
            )
        }
        _ => {
            // minimal consistent rates: b = max(V, 0), d = max(-V, 0)
            let v1 = v_new.clone();
            let v2 = v_new.clone();
            (
                Arc::new(move |x| v1(x).max(0.0)) as RealFn,
                Arc::new(move |x| (-v2(x)).max(0.0)) as RealFn,
            )
        }
    };

    // hypothesis constants by scan over the image points
    let (beta, gamma) = fit_linear_envelope(&g_vals, &a_new);
    let m_upper = g_vals
        .iter()
        .map(|&x| {
            let ax = a_new(x);
            a_prime_new(x) - ax * ax
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let (e_const, x0) = fit_decay_envelope(&g_vals, &v_new)?;

    Ok(SigmaReduction {
        model: ModelSpec {
            a: a_new,
            a_prime: a_prime_new,
            v: v_new,
            b: b_new,
            d: d_new,
            beta,
            gamma,
            e_const,
            x0,
            m_upper,
        },
        x_range,
        g,
        g_inv,
    })
}

/// Smallest (beta, gamma) with |ell| <= gamma + beta|x| on the probe points,
/// padded 0.1% so grid verification is robust to quadrature noise.
fn fit_linear_envelope(xs: &[f64], a: &RealFn) -> (f64, f64) {
    let mid = xs.iter().position(|&x| x >= 0.0).unwrap_or(0);
    let mut ell_vals = vec![0.0; xs.len()];
    let mut acc = 0.0;
    for i in mid + 1..xs.len() {
        acc += 0.5 * (a(xs[i - 1]) + a(xs[i])) * (xs[i] - xs[i - 1]);
        ell_vals[i] = acc;
    }
    acc = 0.0;
    for i in (0..mid).rev() {
        acc += 0.5 * (a(xs[i + 1]) + a(xs[i])) * (xs[i] - xs[i + 1]);
        ell_vals[i] = acc;
    }
    let mut beta = 0.0f64;
    let mut gamma = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        if x.abs() >= 1.0 {
            beta = beta.max(ell_vals[i].abs() / x.abs());
        } else {
            gamma = gamma.max(ell_vals[i].abs());
        }
    }
    (beta * 1.001 + 1e-12, gamma * 1.001 + 1e-12)
}

/// (E, x0) with V <= -E|x| outside x0, by grid scan with 5% headroom.
fn fit_decay_envelope(xs: &[f64], v: &RealFn) -> Result<(f64, f64)> {
    let mut last_nonneg = 0.0f64;
    for &x in xs {
        if v(x) >= 0.0 {
            last_nonneg = last_nonneg.max(x.abs());
        }
    }
    let x0 = (last_nonneg * 1.05).max(0.5);
    let mut e = f64::INFINITY;
    let mut any = false;
    for &x in xs {
        if x.abs() >= x0 {
            any = true;
            e = e.min(-v(x) / x.abs());
        }
    }
    if !any || !(e > 0.0) || !e.is_finite() {
        return Err(Error::AssumptionViolation(
            "transformed potential has no linear decay on the probe domain".into(),
        ));
    }
    Ok((e * 0.95, x0))
}
