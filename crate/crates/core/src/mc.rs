//! Monte Carlo plumbing: reproducible per-replica RNG streams, compensated
//! aggregation, ratio estimators, and the distribution distances used by
//! the statistical checks.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Independent stream for one replica. ChaCha streams are independent for
/// distinct stream indices under the same seed, so replica results do not
/// depend on scheduling order.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Kahan-compensated sum.
pub fn kahan_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let y = x - comp;
        let t = acc + y;
        comp = (t - acc) - y;
        acc = t;
    }
    acc
}

/// Sample mean and standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = kahan_sum(xs.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, f64::INFINITY);
    }
    let ss = kahan_sum(xs.iter().map(|&x| (x - mean) * (x - mean)));
    let var = ss / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Self-normalized ratio estimator mean(num)/mean(den) with the
/// delta-method standard error.
pub fn ratio_estimate(nums: &[f64], dens: &[f64]) -> (f64, f64) {
    assert_eq!(nums.len(), dens.len());
    let n = nums.len() as f64;
    let (ma, _) = mean_stderr(nums);
    let (mb, _) = mean_stderr(dens);
    let r = ma / mb;
    let mut var = 0.0;
    for (&a, &b) in nums.iter().zip(dens) {
        let d = (a - r * b) / mb;
        var += d * d;
    }
    var /= n * (n - 1.0);
    (r, var.sqrt())
}

/// Effective sample size of a weighted sample: (sum w)^2 / sum w^2.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s = kahan_sum(weights.iter().copied());
    let s2 = kahan_sum(weights.iter().map(|w| w * w));
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Kolmogorov-Smirnov distance of a sample (consumed and sorted) against a
/// reference CDF.
pub fn ks_statistic(mut samples: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut worst = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        worst = worst.max(((i + 1) as f64 / n - f).abs());
        worst = worst.max((f - i as f64 / n).abs());
    }
    worst
}

/// Equal-width histogram over [lo, hi] with two overflow cells.
#[derive(Debug, Clone, Serialize)]
pub struct Histogram1d {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    /// bins + 2 cells: [underflow, bins..., overflow], weighted.
    pub mass: Vec<f64>,
}

impl Histogram1d {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Histogram1d { lo, hi, bins, mass: vec![0.0; bins + 2] }
    }

    pub fn cell(&self, x: f64) -> usize {
        if x < self.lo {
            0
        } else if x >= self.hi {
            self.bins + 1
        } else {
            1 + ((x - self.lo) / (self.hi - self.lo) * self.bins as f64) as usize
        }
    }

    pub fn add(&mut self, x: f64, w: f64) {
        let c = self.cell(x);
        self.mass[c] += w;
    }

    pub fn normalize(&mut self) {
        let total = kahan_sum(self.mass.iter().copied());
        if total > 0.0 {
            for m in &mut self.mass {
                *m /= total;
            }
        }
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / self.bins as f64)
            .collect()
    }
}

/// Weighted 2D histogram with overflow folded into the border cells.
#[derive(Debug, Clone, Serialize)]
pub struct Histogram2d {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    /// bins x bins row-major, weighted.
    pub mass: Vec<f64>,
}

impl Histogram2d {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Histogram2d { lo, hi, bins, mass: vec![0.0; bins * bins] }
    }

    fn clamp_cell(&self, x: f64) -> usize {
        let t = (x - self.lo) / (self.hi - self.lo) * self.bins as f64;
        (t.floor().max(0.0) as usize).min(self.bins - 1)
    }

    pub fn add(&mut self, x: f64, y: f64, w: f64) {
        let (i, j) = (self.clamp_cell(x), self.clamp_cell(y));
        self.mass[i * self.bins + j] += w;
    }

    pub fn normalize(&mut self) {
        let total = kahan_sum(self.mass.iter().copied());
        if total > 0.0 {
            for m in &mut self.mass {
                *m /= total;
            }
        }
    }
}

/// Total variation between two probability vectors of equal layout.
pub fn binned_tv(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * kahan_sum(p.iter().zip(q).map(|(&a, &b)| (a - b).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn replica_streams_are_reproducible_and_distinct() {
        let mut a1 = replica_rng(7, 3);
        let mut a2 = replica_rng(7, 3);
        let mut b = replica_rng(7, 4);
        let xs1: Vec<u64> = (0..8).map(|_| a1.random()).collect();
        let xs2: Vec<u64> = (0..8).map(|_| a2.random()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.random()).collect();
        assert_eq!(xs1, xs2);
        assert_ne!(xs1, ys);
    }

    #[test]
    fn mean_stderr_basics() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-15);
        // sample var = 5/3, se = sqrt(5/12)
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ratio_estimator_recovers_known_ratio() {
        // num = 2 den exactly: ratio 2, zero spread
        let dens: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let nums: Vec<f64> = dens.iter().map(|d| 2.0 * d).collect();
        let (r, se) = ratio_estimate(&nums, &dens);
        assert!((r - 2.0).abs() < 1e-14);
        assert!(se < 1e-14);
    }

    #[test]
    fn ess_of_uniform_weights_is_n() {
        let w = vec![2.5; 40];
        assert!((effective_sample_size(&w) - 40.0).abs() < 1e-12);
        // one dominant weight collapses it
        let mut w2 = vec![1e-8; 40];
        w2[0] = 1.0;
        assert!(effective_sample_size(&w2) < 1.1);
    }

    #[test]
    fn ks_of_exact_grid_is_small() {
        // deterministic uniform sample against the uniform CDF
        let n = 1000;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(samples, |x| x.clamp(0.0, 1.0));
        assert!(d <= 0.5 / n as f64 + 1e-12, "d = {d}");
    }

    #[test]
    fn tv_of_disjoint_masses_is_one() {
        let p = [1.0, 0.0];
        let q = [0.0, 1.0];
        assert!((binned_tv(&p, &q) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn histogram_cells_cover_range() {
        let mut h = Histogram1d::new(-1.0, 1.0, 4);
        h.add(-2.0, 1.0); // underflow
        h.add(-0.999, 1.0);
        h.add(0.0, 1.0);
        h.add(0.999, 1.0);
        h.add(5.0, 1.0); // overflow
        assert_eq!(h.mass[0], 1.0);
        assert_eq!(h.mass[5], 1.0);
        h.normalize();
        assert!((kahan_sum(h.mass.iter().copied()) - 1.0).abs() < 1e-12);
    }
}
