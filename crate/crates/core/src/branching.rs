//! Direct simulation of the branching diffusion with full genealogy, the
//! population-average estimators that cross-check the kernels (many-to-one
//! at the estimator level), spine sampling from the historical process, and
//! the time-reversal comparison against the conditioned kernel.
//!
//! Event scheme per step and per individual, in fixed order: diffuse
//! (Euler-Maruyama), then branch with probability 1 - e^{-b dt}, else die
//! with probability 1 - e^{-d dt}. At most one event per individual per
//! step; the O(dt) bias this carries is controlled by the step-halving
//! checks. Offspring start at exactly the parent trait.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::mc;
use crate::model::ModelSpec;
use crate::qprocess::cdf_from_density;
use crate::qsd::QsdMeasure;
use crate::semigroup::KernelEvaluator;

pub const DEFAULT_WORK_CAP: usize = 1_000_000;

/// One individual: parent link, lifespan, and its trait samples at every
/// step from birth to death or the horizon.
#[derive(Debug, Clone, Serialize)]
pub struct Individual {
    pub id: usize,
    pub parent: Option<usize>,
    pub birth_time: f64,
    /// Infinity while alive at the horizon.
    pub death_time: f64,
    pub birth_step: usize,
    /// Trait at steps birth_step, birth_step+1, ...
    pub traj: Vec<f64>,
}

impl Individual {
    pub fn last_step(&self) -> usize {
        self.birth_step + self.traj.len() - 1
    }

    pub fn trait_at_step(&self, step: usize) -> Option<f64> {
        if step < self.birth_step {
            return None;
        }
        self.traj.get(step - self.birth_step).copied()
    }
}

/// Full genealogical record of one realization.
#[derive(Debug, Clone, Serialize)]
pub struct PopulationTree {
    pub individuals: Vec<Individual>,
    pub horizon: f64,
    pub dt: f64,
    /// Population size after each step (index 0 = initial condition).
    pub live_counts: Vec<u32>,
    /// True when the work cap stopped the simulation early.
    pub truncated: bool,
    /// Last simulated time (equals the horizon unless truncated).
    pub stopped_at: f64,
}

impl PopulationTree {
    pub fn n_steps(&self) -> usize {
        self.live_counts.len() - 1
    }

    /// Indices alive at time t (born at or before, not yet dead).
    pub fn alive_at(&self, t: f64) -> Vec<usize> {
        self.individuals
            .iter()
            .filter(|ind| ind.birth_time <= t && ind.death_time > t)
            .map(|ind| ind.id)
            .collect()
    }

    pub fn final_population(&self) -> Vec<usize> {
        self.alive_at(self.stopped_at)
    }

    /// Traits of the individuals alive at the horizon.
    pub fn final_traits(&self) -> Vec<f64> {
        self.final_population()
            .iter()
            .map(|&i| *self.individuals[i].traj.last().unwrap())
            .collect()
    }

    /// Reconstruct the ancestral trait path of one individual alive at the
    /// horizon, at step resolution from time 0 to the horizon.
    pub fn ancestral_path(&self, leaf: usize) -> Vec<f64> {
        let n_steps = self.n_steps();
        let mut path = vec![f64::NAN; n_steps + 1];
        let mut upper = n_steps;
        let mut cursor = Some(leaf);
        while let Some(j) = cursor {
            let ind = &self.individuals[j];
            let hi = upper.min(ind.last_step());
            for step in ind.birth_step..=hi {
                path[step] = ind.traj[step - ind.birth_step];
            }
            if ind.birth_step == 0 {
                break;
            }
            upper = ind.birth_step - 1;
            cursor = ind.parent;
        }
        debug_assert!(path.iter().all(|v| v.is_finite()));
        path
    }

    /// Deterministic digest used by reproducibility checks.
    pub fn summary(&self) -> (usize, u32, f64) {
        let total: f64 = self
            .individuals
            .iter()
            .map(|ind| ind.traj.last().copied().unwrap_or(0.0))
            .sum();
        (self.individuals.len(), *self.live_counts.last().unwrap(), total)
    }
}

/// Simulate one tree from a single ancestor at x0. The work cap counts
/// individual-steps; hitting it flags the tree instead of erroring.
pub fn simulate_population(
    spec: &ModelSpec,
    x0: f64,
    t_end: f64,
    dt: f64,
    rng: &mut impl Rng,
    work_cap: usize,
) -> Result<PopulationTree> {
    if !(dt > 0.0) || dt > 1e-2 {
        return Err(Error::Domain(format!("step must lie in (0, 1e-2], got {dt}")));
    }
    if !(t_end > 0.0) {
        return Err(Error::Domain("horizon must be positive".into()));
    }
    if work_cap == 0 {
        return Err(Error::Domain("work cap must be positive".into()));
    }
    let n_steps = (t_end / dt).round().max(1.0) as usize;
    let sqrt_dt = dt.sqrt();

    let mut individuals = vec![Individual {
        id: 0,
        parent: None,
        birth_time: 0.0,
        death_time: f64::INFINITY,
        birth_step: 0,
        traj: vec![x0],
    }];
    let mut alive: Vec<usize> = vec![0];
    let mut live_counts = vec![1u32];
    let mut work = 0usize;
    let mut truncated = false;
    let mut stopped_at = 0.0;

    for step in 0..n_steps {
        if work + alive.len() > work_cap {
            truncated = true;
            break;
        }
        work += alive.len();
        let t_next = (step + 1) as f64 * dt;
        let mut born: Vec<usize> = Vec::new();
        let mut dead: Vec<usize> = Vec::new();
        for &i in &alive {
            let x_old = *individuals[i].traj.last().unwrap();
            let noise: f64 = rng.sample(StandardNormal);
            let x = x_old - (spec.a)(x_old) * dt + sqrt_dt * noise;
            if !x.is_finite() {
                return Err(Error::NonFinite("population trait".into()));
            }
            individuals[i].traj.push(x);
            let p_birth = 1.0 - (-(spec.b)(x) * dt).exp();
            if rng.random::<f64>() < p_birth {
                let id = individuals.len();
                born.push(id);
                individuals.push(Individual {
                    id,
                    parent: Some(i),
                    birth_time: t_next,
                    death_time: f64::INFINITY,
                    birth_step: step + 1,
                    traj: vec![x],
                });
            } else {
                let p_death = 1.0 - (-(spec.d)(x) * dt).exp();
                if rng.random::<f64>() < p_death {
                    individuals[i].death_time = t_next;
                    dead.push(i);
                }
            }
        }
        if !dead.is_empty() {
            alive.retain(|i| !dead.contains(i));
        }
        alive.extend(born);
        live_counts.push(alive.len() as u32);
        stopped_at = t_next;
        if alive.is_empty() {
            // extinct: remaining counts are zero
            live_counts.extend(std::iter::repeat_n(0, n_steps - step - 1));
            stopped_at = t_end;
            break;
        }
    }
    if !truncated && live_counts.len() == n_steps + 1 {
        stopped_at = t_end;
    }
    Ok(PopulationTree { individuals, horizon: t_end, dt, live_counts, truncated, stopped_at })
}

/// Monte Carlo summary of a replicated run.
#[derive(Debug, Clone, Serialize)]
pub struct McRunSummary {
    pub estimate: f64,
    pub stderr: f64,
    pub reps_requested: usize,
    /// Replicas entering the estimator (cap-hit trees are excluded).
    pub reps_used: usize,
    pub extinct_fraction: f64,
    pub cap_hits: usize,
}

fn summarize(values: Vec<Option<f64>>, extinct: Vec<bool>) -> Result<McRunSummary> {
    let reps_requested = values.len();
    let kept: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    let cap_hits = reps_requested - kept.len();
    if kept.is_empty() {
        return Err(Error::EmptySample);
    }
    let (estimate, stderr) = mc::mean_stderr(&kept);
    let extinct_count = extinct.iter().filter(|&&e| e).count();
    Ok(McRunSummary {
        estimate,
        stderr,
        reps_requested,
        reps_used: kept.len(),
        extinct_fraction: extinct_count as f64 / reps_requested as f64,
        cap_hits,
    })
}

/// Population estimator of E <Z_T, phi>: mean over independent trees of the
/// sum of phi over the survivors. Replicas run in parallel on independent
/// RNG streams; aggregation is sequential and order-independent.
pub fn estimate_linear_functional(
    spec: &ModelSpec,
    phi: impl Fn(f64) -> f64 + Sync,
    x0: f64,
    t_end: f64,
    dt: f64,
    reps: usize,
    seed: u64,
    work_cap: usize,
) -> Result<McRunSummary> {
    if reps < 100 {
        return Err(Error::Domain("need at least 100 replicas".into()));
    }
    let results: Vec<(Option<f64>, bool)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = mc::replica_rng(seed, rep as u64 + 1);
            match simulate_population(spec, x0, t_end, dt, &mut rng, work_cap) {
                Ok(tree) if tree.truncated => (None, false),
                Ok(tree) => {
                    let traits = tree.final_traits();
                    let value = mc::kahan_sum(traits.iter().map(|&x| phi(x)));
                    (Some(value), traits.is_empty())
                }
                Err(_) => (None, false),
            }
        })
        .collect();
    let (values, extinct): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    summarize(values, extinct)
}

/// Single-path estimator of the same quantity: one diffusion per replica
/// weighted by the exponentiated running potential (left-endpoint rule),
/// accumulated in log space.
pub fn feynman_kac_mc(
    spec: &ModelSpec,
    phi: impl Fn(f64) -> f64 + Sync,
    x0: f64,
    t_end: f64,
    dt: f64,
    reps: usize,
    seed: u64,
) -> Result<McRunSummary> {
    if reps < 100 {
        return Err(Error::Domain("need at least 100 replicas".into()));
    }
    if !(dt > 0.0) || dt > 1e-2 {
        return Err(Error::Domain(format!("step must lie in (0, 1e-2], got {dt}")));
    }
    let n_steps = (t_end / dt).round().max(1.0) as usize;
    let sqrt_dt = dt.sqrt();
    let values: Vec<Option<f64>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = mc::replica_rng(seed, rep as u64 + 1);
            let mut x = x0;
            let mut log_w = 0.0f64;
            for _ in 0..n_steps {
                log_w += (spec.v)(x) * dt;
                let noise: f64 = rng.sample(StandardNormal);
                x += -(spec.a)(x) * dt + sqrt_dt * noise;
                if !x.is_finite() {
                    return None;
                }
            }
            Some(log_w.exp() * phi(x))
        })
        .collect();
    let n = values.len();
    summarize(values, vec![false; n])
}

/// Ancestral trajectory of one uniformly picked survivor, with the
/// population size as its importance weight.
#[derive(Debug, Clone, Serialize)]
pub struct SpinePath {
    pub dt: f64,
    /// Trait at times 0, dt, 2dt, ..., horizon.
    pub traits: Vec<f64>,
    /// Importance weight N_T of the originating tree.
    pub weight: f64,
}

impl SpinePath {
    pub fn times(&self) -> Vec<f64> {
        (0..self.traits.len()).map(|i| i as f64 * self.dt).collect()
    }

    pub fn endpoint(&self) -> f64 {
        *self.traits.last().unwrap()
    }
}

/// Sample spines from independent trees rooted at x0: per surviving tree,
/// one uniform pick among the survivors, reconstructed back to the root.
/// Spine functionals are meant to be estimated with the self-normalized
/// ratio sum(w Phi) / sum(w).
pub fn sample_spines(
    spec: &ModelSpec,
    x0: f64,
    t_end: f64,
    dt: f64,
    reps: usize,
    seed: u64,
    work_cap: usize,
) -> Result<Vec<SpinePath>> {
    let spines: Vec<Option<SpinePath>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = mc::replica_rng(seed, rep as u64 + 1);
            let tree = simulate_population(spec, x0, t_end, dt, &mut rng, work_cap).ok()?;
            if tree.truncated {
                return None;
            }
            spine_from_tree(&tree, &mut rng)
        })
        .collect();
    let spines: Vec<SpinePath> = spines.into_iter().flatten().collect();
    if spines.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(spines)
}

fn spine_from_tree(tree: &PopulationTree, rng: &mut impl Rng) -> Option<SpinePath> {
    let survivors = tree.final_population();
    if survivors.is_empty() {
        return None;
    }
    let pick = survivors[rng.random_range(0..survivors.len())];
    Some(SpinePath {
        dt: tree.dt,
        traits: tree.ancestral_path(pick),
        weight: survivors.len() as f64,
    })
}

/// Self-normalized spine functional: sum(w Phi) / sum(w) with delta-method
/// standard error.
pub fn spine_functional(
    spines: &[SpinePath],
    f: impl Fn(&SpinePath) -> f64,
) -> (f64, f64) {
    let nums: Vec<f64> = spines.iter().map(|s| s.weight * f(s)).collect();
    let dens: Vec<f64> = spines.iter().map(|s| s.weight).collect();
    mc::ratio_estimate(&nums, &dens)
}

/// Outcome of the time-reversal comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ReversalReport {
    pub t_horizon: f64,
    pub t_lag: f64,
    pub dt: f64,
    pub n_trees: usize,
    pub n_spines: usize,
    pub effective_sample_size: f64,
    pub extinct_fraction: f64,
    pub cap_hits: usize,
    /// Binned TV between the weighted law of the reversed start (= the
    /// population at the horizon) and the quasi-stationary law.
    pub marginal_tv: f64,
    /// Binned TV between the weighted pair law (start, lag) of the reversed
    /// spine and the conditioned-kernel prediction nu(z) q(lag, z, y).
    pub joint_tv: f64,
    /// Weighted variance of the reversed one-lag increment (short lags are
    /// diffusive: variance ~ lag).
    pub increment_variance: f64,
    pub bins: usize,
    pub hist_lo: f64,
    pub hist_hi: f64,
    pub marginal_empirical: Vec<f64>,
    pub marginal_theoretical: Vec<f64>,
    pub joint_empirical: Vec<f64>,
    pub joint_theoretical: Vec<f64>,
}

/// Draw an index-free sample from a grid density by inverse CDF.
pub fn sample_from_density(grid: &Grid, cum: &[f64], rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random();
    let target = u * cum[cum.len() - 1];
    let mut lo = 0usize;
    let mut hi = cum.len() - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if cum[mid] <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let seg = cum[hi] - cum[lo];
    let frac = if seg > 0.0 { (target - cum[lo]) / seg } else { 0.5 };
    grid.node(lo) + frac * grid.spacing()
}

pub fn cumulative_masses(grid: &Grid, density: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut cum = vec![0.0; n];
    for i in 1..n {
        cum[i] = cum[i - 1] + 0.5 * (density[i - 1] + density[i]) * grid.spacing();
    }
    cum
}

/// Compare the time-reversed weighted spine against the conditioned kernel.
///
/// Tree roots are drawn from the density proportional to m_T(x) nu(x) (the
/// law that makes the population at the horizon exactly nu-distributed);
/// each surviving tree contributes one uniformly picked spine with weight
/// N_T / m_T(root), realizing the root-mixture of the spine law. The
/// reversed pairs (Y_T, Y_{T-lag}) are then binned against nu(z) q(lag,z,y).
#[allow(clippy::too_many_arguments)]
pub fn reversed_spine_transition_check(
    spec: &ModelSpec,
    eval: &KernelEvaluator,
    nu: &QsdMeasure,
    t_horizon: f64,
    t_lag: f64,
    dt: f64,
    n_trees: usize,
    seed: u64,
    bins: usize,
    hist_halfwidth: f64,
    min_ess: f64,
) -> Result<ReversalReport> {
    if !(t_lag > 0.0) || t_lag >= t_horizon {
        return Err(Error::Domain("need 0 < lag < horizon".into()));
    }
    let grid = eval.grid();
    let mass_t = eval.mass_grid(t_horizon)?;
    // root density ~ m_T nu (the e^{lambda_0 T} factor is absorbed by the
    // normalization)
    let root_raw: Vec<f64> = mass_t.iter().zip(&nu.density).map(|(&m, &d)| m * d).collect();
    let z_root = grid.integrate(&root_raw);
    let root_density: Vec<f64> = root_raw.iter().map(|&v| v / z_root).collect();
    let root_cum = cumulative_masses(grid, &root_density);

    let lag_steps = (t_lag / dt).round() as usize;
    if lag_steps == 0 {
        return Err(Error::Domain("lag below step resolution".into()));
    }

    struct PairSample {
        z: f64,
        y: f64,
        w: f64,
    }
    let samples: Vec<Option<(PairSample, bool)>> = (0..n_trees)
        .into_par_iter()
        .map(|rep| {
            let mut rng = mc::replica_rng(seed, rep as u64 + 1);
            let root = sample_from_density(grid, &root_cum, &mut rng);
            let tree =
                simulate_population(spec, root, t_horizon, dt, &mut rng, DEFAULT_WORK_CAP).ok()?;
            if tree.truncated {
                return Some((PairSample { z: 0.0, y: 0.0, w: -1.0 }, false)); // sentinel: cap hit
            }
            match spine_from_tree(&tree, &mut rng) {
                None => None, // extinct
                Some(spine) => {
                    let n_last = spine.traits.len() - 1;
                    let z = spine.traits[n_last];
                    let y = spine.traits[n_last - lag_steps];
                    // interpolate m_T at the root
                    let i = grid.nearest(root).min(grid.len() - 2);
                    let frac = ((root - grid.node(i)) / grid.spacing()).clamp(-1.0, 1.0);
                    let m_root = if frac >= 0.0 {
                        mass_t[i] * (1.0 - frac) + mass_t[i + 1] * frac
                    } else {
                        mass_t[i] * (1.0 + frac) - mass_t[i.saturating_sub(1)] * frac
                    };
                    Some((PairSample { z, y, w: spine.weight / m_root }, true))
                }
            }
        })
        .collect();

    let mut pairs: Vec<PairSample> = Vec::new();
    let mut cap_hits = 0usize;
    let mut extinct = 0usize;
    for s in samples {
        match s {
            None => extinct += 1,
            Some((p, true)) => pairs.push(p),
            Some((_, false)) => cap_hits += 1,
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptySample);
    }
    let weights: Vec<f64> = pairs.iter().map(|p| p.w).collect();
    let ess = mc::effective_sample_size(&weights);
    if ess < min_ess {
        return Err(Error::InsufficientSample { ess, required: min_ess });
    }

    let (lo, hi) = (-hist_halfwidth, hist_halfwidth);
    // marginal of the reversed start (= population at the horizon) vs nu
    let mut marg = mc::Histogram1d::new(lo, hi, bins);
    for p in &pairs {
        marg.add(p.z, p.w);
    }
    marg.normalize();
    let nu_cdf = cdf_from_density(grid, &nu.density);
    let mut marg_theory = vec![0.0; bins + 2];
    let edges = marg.edges();
    marg_theory[0] = nu_cdf(lo);
    marg_theory[bins + 1] = 1.0 - nu_cdf(hi);
    for b in 0..bins {
        marg_theory[b + 1] = nu_cdf(edges[b + 1]) - nu_cdf(edges[b]);
    }
    let marginal_tv = mc::binned_tv(&marg.mass, &marg_theory);

    // joint of (reversed start, one lag later) vs nu(z) q(lag, z, y):
    // nu(z) q(u,z,y) = e^{lambda_0 u}/Z sum_k e^{-lambda_k u}
    //                  [e^{-ell(z)} psi_k(z)] [psi_0(y) psi_k(y)]
    let mut joint = mc::Histogram2d::new(lo, hi, bins);
    for p in &pairs {
        joint.add(p.z, p.y, p.w);
    }
    joint.normalize();
    let basis = eval.basis();
    let k_modes = basis.modes();
    let mut joint_theory = vec![0.0f64; bins * bins];
    {
        // bin integrals of the two factor families, borders extended to
        // infinity to mirror the clamped empirical histogram
        let mut a_bins = vec![vec![0.0f64; bins]; k_modes];
        let mut b_bins = vec![vec![0.0f64; bins]; k_modes];
        for k in 0..k_modes {
            let fa: Vec<f64> = basis.psis[k]
                .iter()
                .zip(eval.ell_samples())
                .map(|(&p, &l)| p * (-l).exp())
                .collect();
            let fb: Vec<f64> =
                basis.psis[k].iter().zip(basis.psis[0].iter()).map(|(&p, &p0)| p * p0).collect();
            let ca = cumulative_masses(grid, &fa);
            let cb = cumulative_masses(grid, &fb);
            let interp = |cum: &[f64], x: f64| -> f64 {
                let t = ((x - grid.node(0)) / grid.spacing()).clamp(0.0, (grid.len() - 1) as f64);
                let i = (t.floor() as usize).min(grid.len() - 2);
                let frac = t - i as f64;
                cum[i] + frac * (cum[i + 1] - cum[i])
            };
            for b in 0..bins {
                let (e0, e1) = (edges[b], edges[b + 1]);
                let (lo_a, hi_a) = if b == 0 {
                    (0.0, interp(&ca, e1))
                } else if b == bins - 1 {
                    (interp(&ca, e0), ca[grid.len() - 1])
                } else {
                    (interp(&ca, e0), interp(&ca, e1))
                };
                a_bins[k][b] = hi_a - lo_a;
                let (lo_b, hi_b) = if b == 0 {
                    (0.0, interp(&cb, e1))
                } else if b == bins - 1 {
                    (interp(&cb, e0), cb[grid.len() - 1])
                } else {
                    (interp(&cb, e0), interp(&cb, e1))
                };
                b_bins[k][b] = hi_b - lo_b;
            }
        }
        let lam0 = eval.lambda0();
        for k in 0..k_modes {
            let w = ((lam0 - basis.lambdas[k]) * t_lag).exp() / nu.z;
            for bz in 0..bins {
                for by in 0..bins {
                    joint_theory[bz * bins + by] += w * a_bins[k][bz] * b_bins[k][by];
                }
            }
        }
        let total: f64 = joint_theory.iter().sum();
        for v in &mut joint_theory {
            *v /= total;
        }
    }
    let joint_tv = mc::binned_tv(&joint.mass, &joint_theory);

    // weighted variance of the reversed increment
    let wsum: f64 = weights.iter().sum();
    let mean_inc: f64 = pairs.iter().map(|p| p.w * (p.y - p.z)).sum::<f64>() / wsum;
    let increment_variance: f64 = pairs
        .iter()
        .map(|p| {
            let d = p.y - p.z - mean_inc;
            p.w * d * d
        })
        .sum::<f64>()
        / wsum;

    Ok(ReversalReport {
        t_horizon,
        t_lag,
        dt,
        n_trees,
        n_spines: pairs.len(),
        effective_sample_size: ess,
        extinct_fraction: extinct as f64 / n_trees as f64,
        cap_hits,
        marginal_tv,
        joint_tv,
        increment_variance,
        bins,
        hist_lo: lo,
        hist_hi: hi,
        marginal_empirical: marg.mass,
        marginal_theoretical: marg_theory,
        joint_empirical: joint.mass,
        joint_theoretical: joint_theory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reduce;
    use crate::qsd::build_qsd;
    use crate::spectral::solve_eigen;
    use std::sync::{Arc, OnceLock};

    fn hermite_eval() -> &'static KernelEvaluator {
        static E: OnceLock<KernelEvaluator> = OnceLock::new();
        E.get_or_init(|| {
            let grid = Grid::new(12.0, 4001).unwrap();
            let spec = ModelSpec::hermite(1.0, 0.0).unwrap();
            let red = reduce(&spec, &grid).unwrap();
            let basis = Arc::new(solve_eigen(&red, 32).unwrap());
            KernelEvaluator::new(basis, &red)
        })
    }

    #[test]
    fn pure_diffusion_single_individual() {
        // b = d = 0: one path, variance of the endpoint ~ T
        let mut spec = ModelSpec::harmonic(1.0).unwrap();
        spec.b = Arc::new(|_| 0.0);
        spec.d = Arc::new(|_| 0.0);
        spec.v = Arc::new(|_| 0.0);
        let t_end = 1.0;
        let mut ends = Vec::new();
        for rep in 0..4000 {
            let mut rng = mc::replica_rng(5, rep);
            let tree =
                simulate_population(&spec, 0.0, t_end, 1e-2, &mut rng, DEFAULT_WORK_CAP).unwrap();
            assert_eq!(tree.individuals.len(), 1);
            assert_eq!(*tree.live_counts.last().unwrap(), 1);
            ends.push(*tree.individuals[0].traj.last().unwrap());
        }
        let (mean, _) = mc::mean_stderr(&ends);
        let var = ends.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / ends.len() as f64;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - t_end).abs() < 0.08, "variance {var}");
    }

    #[test]
    fn yule_process_mean_population() {
        // b = 1, d = 0: E[N_T] = e^T; fine steps keep the per-step bias
        // below the Monte Carlo resolution
        let mut spec = ModelSpec::harmonic(1.0).unwrap();
        spec.b = Arc::new(|_| 1.0);
        spec.d = Arc::new(|_| 0.0);
        spec.v = Arc::new(|_| 1.0);
        let values: Vec<f64> = (0..10_000u64)
            .into_par_iter()
            .map(|rep| {
                let mut rng = mc::replica_rng(11, rep);
                let tree =
                    simulate_population(&spec, 0.0, 2.0, 2e-3, &mut rng, DEFAULT_WORK_CAP)
                        .unwrap();
                *tree.live_counts.last().unwrap() as f64
            })
            .collect();
        let (mean, se) = mc::mean_stderr(&values);
        let exact = std::f64::consts::E.powi(2);
        assert!(
            (mean - exact).abs() < 3.0 * se,
            "Yule mean {mean} vs {exact} (3se = {:.3})",
            3.0 * se
        );
    }

    #[test]
    fn genealogy_reconstruction_matches_live_counter() {
        let spec = ModelSpec::hermite(1.0, 0.0).unwrap();
        let mut rng = mc::replica_rng(3, 7);
        let tree = simulate_population(&spec, 0.2, 3.0, 5e-3, &mut rng, DEFAULT_WORK_CAP).unwrap();
        let n_steps = tree.n_steps();
        let mut probe = 0x2545_f491u64;
        for _ in 0..10 {
            probe ^= probe << 13;
            probe ^= probe >> 7;
            probe ^= probe << 17;
            let step = (probe as usize) % (n_steps + 1);
            let t = step as f64 * tree.dt;
            assert_eq!(
                tree.alive_at(t).len() as u32,
                tree.live_counts[step],
                "mismatch at step {step}"
            );
        }
        // parent links are consistent: every child is born at a step where
        // its parent is alive and holds the same trait
        for ind in &tree.individuals {
            assert!((ind.birth_time - ind.birth_step as f64 * tree.dt).abs() < 1e-12);
            if let Some(p) = ind.parent {
                let parent = &tree.individuals[p];
                assert!(parent.birth_time <= ind.birth_time);
                assert!(parent.death_time >= ind.birth_time);
                assert_eq!(
                    parent.trait_at_step(ind.birth_step).unwrap(),
                    ind.traj[0],
                    "offspring trait differs from the parent's"
                );
            }
        }
    }

    #[test]
    fn seed_determinism() {
        let spec = ModelSpec::hermite(1.0, 0.0).unwrap();
        let t1 = simulate_population(&spec, 0.0, 2.0, 1e-2, &mut mc::replica_rng(9, 1), 100_000)
            .unwrap();
        let t2 = simulate_population(&spec, 0.0, 2.0, 1e-2, &mut mc::replica_rng(9, 1), 100_000)
            .unwrap();
        assert_eq!(t1.summary(), t2.summary());
        let t3 = simulate_population(&spec, 0.0, 2.0, 1e-2, &mut mc::replica_rng(9, 2), 100_000)
            .unwrap();
        assert_ne!(t1.summary(), t3.summary());
    }

    #[test]
    fn work_cap_flags_tree() {
        let mut spec = ModelSpec::harmonic(1.0).unwrap();
        spec.b = Arc::new(|_| 3.0);
        spec.d = Arc::new(|_| 0.0);
        spec.v = Arc::new(|_| 3.0);
        let mut rng = mc::replica_rng(1, 1);
        let tree = simulate_population(&spec, 0.0, 5.0, 1e-2, &mut rng, 500).unwrap();
        assert!(tree.truncated);
        assert!(tree.stopped_at < 5.0);
    }

    #[test]
    fn rejects_coarse_steps() {
        let spec = ModelSpec::hermite(1.0, 0.0).unwrap();
        let mut rng = mc::replica_rng(1, 1);
        assert!(simulate_population(&spec, 0.0, 1.0, 0.05, &mut rng, 1000).is_err());
    }

    #[test]
    fn population_mean_matches_kernel_mass() {
        // many-to-one for phi = 1 at T = 2
        let ev = hermite_eval();
        let spec = ModelSpec::hermite(1.0, 0.0).unwrap();
        let summary =
            estimate_linear_functional(&spec, |_| 1.0, 0.0, 2.0, 5e-3, 20_000, 17, DEFAULT_WORK_CAP)
                .unwrap();
        let kernel = ev.mass(2.0, 0.0).unwrap();
        assert!(
            (summary.estimate - kernel).abs() < 3.0 * summary.stderr,
            "MC {} +- {} vs kernel {kernel}",
            summary.estimate,
            summary.stderr
        );
        assert_eq!(summary.cap_hits, 0);
    }

    #[test]
    fn odd_functional_vanishes_by_symmetry() {
        let spec = ModelSpec::hermite(1.0, 0.0).unwrap();
        let summary =
            estimate_linear_functional(&spec, |x| x, 0.0, 3.0, 5e-3, 10_000, 23, DEFAULT_WORK_CAP)
                .unwrap();
        assert!(
            summary.estimate.abs() < 3.0 * summary.stderr,
            "odd functional {} +- {}",
            summary.estimate,
            summary.stderr
        );
    }

    #[test]
    fn quadratic_functional_matches_kernel() {
        let ev = hermite_eval();
        let spec = ModelSpec::hermite(1.0, 0.0).unwrap();
        let summary = estimate_linear_functional(
            &spec,
            |x| x * x,
            0.0,
            3.0,
            5e-3,
            30_000,
            31,
            DEFAULT_WORK_CAP,
        )
        .unwrap();
        let phi: Vec<f64> = ev.grid().sample(|x| x * x);
        let kernel = ev.apply(&phi, 3.0, 0.0).unwrap();
        assert!(
            (summary.estimate - kernel).abs() < 3.0 * summary.stderr,
            "MC {} +- {} vs kernel {kernel}",
            summary.estimate,
            summary.stderr
        );
    }

    #[test]
    fn feynman_kac_trivial_and_kernel_cases() {
        // V = 0, phi = 1 -> exactly 1 with zero variance
        let mut flat = ModelSpec::harmonic(1.0).unwrap();
        flat.b = Arc::new(|_| 0.0);
        flat.d = Arc::new(|_| 0.0);
        flat.v = Arc::new(|_| 0.0);
        let s = feynman_kac_mc(&flat, |_| 1.0, 0.0, 1.0, 1e-2, 200, 5).unwrap();
        assert_eq!(s.estimate, 1.0);
        assert!(s.stderr < 1e-15);

        // Hermite model: agree with the kernel mass at T = 2
        let ev = hermite_eval();
        let spec = ModelSpec::hermite(1.0, 0.0).unwrap();
        let s = feynman_kac_mc(&spec, |_| 1.0, 0.0, 2.0, 5e-3, 100_000, 29).unwrap();
        let kernel = ev.mass(2.0, 0.0).unwrap();
        assert!(
            (s.estimate - kernel).abs() < 3.0 * s.stderr,
            "FK {} +- {} vs kernel {kernel}",
            s.estimate,
            s.stderr
        );
    }

    #[test]
    fn estimators_agree_with_each_other() {
        // many-to-one at the Monte Carlo level
        let spec = ModelSpec::hermite(1.0, 0.0).unwrap();
        let a = estimate_linear_functional(
            &spec,
            |x| x * x,
            0.5,
            2.0,
            5e-3,
            20_000,
            41,
            DEFAULT_WORK_CAP,
        )
        .unwrap();
        let b = feynman_kac_mc(&spec, |x| x * x, 0.5, 2.0, 5e-3, 20_000, 43).unwrap();
        let joint = (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
        assert!(
            (a.estimate - b.estimate).abs() < 3.0 * joint,
            "population {} vs path {} (3se {})",
            a.estimate,
            b.estimate,
            3.0 * joint
        );
    }

    #[test]
    fn spine_of_pure_diffusion_is_the_path() {
        let mut spec = ModelSpec::harmonic(1.0).unwrap();
        spec.b = Arc::new(|_| 0.0);
        spec.d = Arc::new(|_| 0.0);
        spec.v = Arc::new(|_| 0.0);
        let spines = sample_spines(&spec, 0.3, 1.0, 1e-2, 200, 3, DEFAULT_WORK_CAP).unwrap();
        assert_eq!(spines.len(), 200);
        for s in &spines {
            assert_eq!(s.weight, 1.0);
            assert_eq!(s.traits.len(), 101);
            assert_eq!(s.traits[0], 0.3);
        }
    }

    #[test]
    fn spine_weight_mean_matches_mass() {
        let ev = hermite_eval();
        let spec = ModelSpec::hermite(1.0, 0.0).unwrap();
        let reps = 20_000usize;
        let spines = sample_spines(&spec, 0.0, 2.0, 5e-3, reps, 47, DEFAULT_WORK_CAP).unwrap();
        // extinct trees carry weight zero: divide by all requested reps
        let total: f64 = spines.iter().map(|s| s.weight).sum();
        let mean_w = total / reps as f64;
        let kernel = ev.mass(2.0, 0.0).unwrap();
        let se = {
            let mut padded: Vec<f64> = spines.iter().map(|s| s.weight).collect();
            padded.resize(reps, 0.0);
            mc::mean_stderr(&padded).1
        };
        assert!(
            (mean_w - kernel).abs() < 3.0 * se,
            "mean weight {mean_w} vs kernel {kernel} (3se {})",
            3.0 * se
        );
    }

    #[test]
    fn spine_endpoint_law_matches_kernel_row() {
        // weighted endpoint law has density p(T, x0, .) / m_T(x0)
        let ev = hermite_eval();
        let spec = ModelSpec::hermite(1.0, 0.0).unwrap();
        let t_end = 2.0;
        let spines = sample_spines(&spec, 0.0, t_end, 5e-3, 20_000, 53, DEFAULT_WORK_CAP).unwrap();
        let grid = ev.grid();
        let mut hist = mc::Histogram1d::new(-4.0, 4.0, 16);
        for s in &spines {
            hist.add(s.endpoint(), s.weight);
        }
        hist.normalize();
        let row = ev.p_row(t_end, 0.0).unwrap();
        let m = grid.integrate(&row);
        let density: Vec<f64> = row.iter().map(|&v| v / m).collect();
        let cdf = cdf_from_density(grid, &density);
        let edges = hist.edges();
        let mut theory = vec![0.0; 18];
        theory[0] = cdf(-4.0);
        theory[17] = 1.0 - cdf(4.0);
        for b in 0..16 {
            theory[b + 1] = cdf(edges[b + 1]) - cdf(edges[b]);
        }
        let tv = mc::binned_tv(&hist.mass, &theory);
        assert!(tv <= 0.05, "endpoint TV {tv}");
    }

    #[test]
    fn ratio_limit_reaches_qsd_average() {
        // sum phi(X_T) / N_T ratio over trees tends to the nu-average
        let ev = hermite_eval();
        let spec = ModelSpec::hermite(1.0, 0.0).unwrap();
        let reps = 20_000usize;
        let t_end = 4.0;
        let phi = |x: f64| x * x;
        let results: Vec<(f64, f64)> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = mc::replica_rng(59, rep as u64 + 1);
                let tree =
                    simulate_population(&spec, 0.0, t_end, 5e-3, &mut rng, DEFAULT_WORK_CAP)
                        .unwrap();
                let traits = tree.final_traits();
                (traits.iter().map(|&x| phi(x)).sum::<f64>(), traits.len() as f64)
            })
            .collect();
        let nums: Vec<f64> = results.iter().map(|r| r.0).collect();
        let dens: Vec<f64> = results.iter().map(|r| r.1).collect();
        let (ratio, se) = mc::ratio_estimate(&nums, &dens);
        let nu = build_qsd(ev);
        let phi_grid: Vec<f64> = ev.grid().sample(phi);
        let target = nu.expect(ev.grid(), &phi_grid);
        assert!(
            (ratio - target).abs() < 3.0 * se,
            "ratio {ratio} +- {se} vs nu-average {target}"
        );
    }

    #[test]
    fn many_to_one_battery() {
        // five functionals, at least four within 3 stderr per seed
        let ev = hermite_eval();
        let spec = ModelSpec::hermite(1.0, 0.0).unwrap();
        let grid = ev.grid();
        let battery: Vec<(&str, Box<dyn Fn(f64) -> f64 + Sync>)> = vec![
            ("one", Box::new(|_| 1.0)),
            ("x", Box::new(|x| x)),
            ("x2", Box::new(|x| x * x)),
            ("gauss", Box::new(|x: f64| (-x * x).exp())),
            ("cos", Box::new(|x: f64| x.cos())),
        ];
        let t_end = 2.0;
        let mut hits = 0;
        for (name, phi) in &battery {
            let s = estimate_linear_functional(
                &spec,
                phi.as_ref(),
                0.0,
                t_end,
                5e-3,
                10_000,
                61,
                DEFAULT_WORK_CAP,
            )
            .unwrap();
            let phi_grid: Vec<f64> = grid.sample(phi.as_ref());
            let kernel = ev.apply(&phi_grid, t_end, 0.0).unwrap();
            if (s.estimate - kernel).abs() < 3.0 * s.stderr {
                hits += 1;
            } else {
                eprintln!("miss: {name}: {} +- {} vs {kernel}", s.estimate, s.stderr);
            }
        }
        assert!(hits >= 4, "only {hits}/5 within 3 stderr");
    }

    #[test]
    fn reversal_check_marginal_and_transition() {
        let ev = hermite_eval();
        let spec = ModelSpec::hermite(1.0, 0.0).unwrap();
        let nu = build_qsd(ev);
        let report = reversed_spine_transition_check(
            &spec, ev, &nu, 2.0, 0.5, 5e-3, 30_000, 71, 14, 3.5, 500.0,
        )
        .unwrap();
        assert!(report.effective_sample_size >= 500.0);
        assert!(report.marginal_tv <= 0.05, "marginal TV {}", report.marginal_tv);
        assert!(report.joint_tv <= 0.08, "joint TV {}", report.joint_tv);
    }

    #[test]
    fn reversal_short_lag_increment_variance() {
        let ev = hermite_eval();
        let spec = ModelSpec::hermite(1.0, 0.0).unwrap();
        let nu = build_qsd(ev);
        let t_lag = 0.1;
        let report = reversed_spine_transition_check(
            &spec, ev, &nu, 2.0, t_lag, 5e-3, 20_000, 73, 12, 3.5, 500.0,
        )
        .unwrap();
        let rel = (report.increment_variance - t_lag).abs() / t_lag;
        assert!(rel < 0.15, "variance {} vs lag {t_lag}", report.increment_variance);
    }

    #[test]
    fn reversal_rejects_thin_samples() {
        let ev = hermite_eval();
        let spec = ModelSpec::hermite(1.0, 0.0).unwrap();
        let nu = build_qsd(ev);
        let r = reversed_spine_transition_check(
            &spec, ev, &nu, 2.0, 0.5, 5e-3, 60, 71, 14, 3.5, 500.0,
        );
        assert!(matches!(r, Err(Error::InsufficientSample { .. })), "{r:?}");
    }
}
