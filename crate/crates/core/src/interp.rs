//! Piecewise-cubic Hermite interpolation on a strictly increasing abscissa.
//!
//! Two construction modes: derivatives supplied by the caller (used when the
//! slope is known analytically, e.g. inverting a change of variables whose
//! inverse slope is the diffusion scale itself), or Fritsch-Carlson monotone
//! slope estimation (tabulated model input).

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CubicHermite {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl CubicHermite {
    pub fn with_derivatives(xs: Vec<f64>, ys: Vec<f64>, ds: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() || xs.len() != ds.len() {
            return Err(Error::Domain("interpolation needs matching arrays of length >= 2".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("interpolation abscissa must be strictly increasing".into()));
        }
        Ok(CubicHermite { xs, ys, ds })
    }

    /// Monotone (Fritsch-Carlson) slope estimation from the data alone.
    pub fn pchip(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(Error::Domain("interpolation needs matching arrays of length >= 2".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("interpolation abscissa must be strictly increasing".into()));
        }
        let mut deltas = vec![0.0; n - 1];
        for i in 0..n - 1 {
            deltas[i] = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
        }
        let mut ds = vec![0.0; n];
        ds[0] = deltas[0];
        ds[n - 1] = deltas[n - 2];
        for i in 1..n - 1 {
            let (d0, d1) = (deltas[i - 1], deltas[i]);
            if d0 * d1 <= 0.0 {
                ds[i] = 0.0;
            } else {
                // weighted harmonic mean keeps the interpolant monotone
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                let w0 = 2.0 * h1 + h0;
                let w1 = h1 + 2.0 * h0;
                ds[i] = (w0 + w1) / (w0 / d0 + w1 / d1);
            }
        }
        Ok(CubicHermite { xs, ys, ds })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.xs.len() - 2),
        }
    }

    /// Evaluate at x; clamps to the boundary segments outside the domain.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (m0, m1) = (self.ds[i] * h, self.ds[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + m0 * (t3 - 2.0 * t2 + t)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + m1 * (t3 - t2)
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (m0, m1) = (self.ds[i] * h, self.ds[i + 1] * h);
        let t2 = t * t;
        (y0 * (6.0 * t2 - 6.0 * t)
            + m0 * (3.0 * t2 - 4.0 * t + 1.0)
            + y1 * (-6.0 * t2 + 6.0 * t)
            + m1 * (3.0 * t2 - 2.0 * t))
            / h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_cubic_with_exact_derivatives() {
        let xs: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let f = |x: f64| x * x * x - x;
        let d = |x: f64| 3.0 * x * x - 1.0;
        let itp = CubicHermite::with_derivatives(
            xs.clone(),
            xs.iter().map(|&x| f(x)).collect(),
            xs.iter().map(|&x| d(x)).collect(),
        )
        .unwrap();
        for i in 0..100 {
            let x = 0.017 * i as f64;
            assert!((itp.eval(x) - f(x)).abs() < 1e-13, "x={x}");
            assert!((itp.eval_derivative(x) - d(x)).abs() < 1e-11, "x={x}");
        }
    }

    #[test]
    fn pchip_preserves_monotonicity() {
        let xs = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = vec![0.0, 0.1, 0.11, 5.0, 5.1];
        let itp = CubicHermite::pchip(xs, ys).unwrap();
        let mut prev = itp.eval(0.0);
        for i in 1..=400 {
            let v = itp.eval(i as f64 * 0.01);
            assert!(v >= prev - 1e-12, "not monotone at {i}");
            prev = v;
        }
    }

    #[test]
    fn rejects_unsorted_abscissa() {
        assert!(CubicHermite::pchip(vec![0.0, 0.0, 1.0], vec![1.0, 2.0, 3.0]).is_err());
    }
}
