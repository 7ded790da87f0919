use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform symmetric grid on [-L, L] with an odd number of nodes, so that 0
/// is always a node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grid {
    l: f64,
    n: usize,
    h: f64,
    nodes: Vec<f64>,
}

impl Grid {
    pub fn new(l: f64, n: usize) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::Domain(format!("grid half-width must be positive, got {l}")));
        }
        if n < 3 || n % 2 == 0 {
            return Err(Error::Domain(format!("grid needs an odd node count >= 3, got {n}")));
        }
        let mid = (n - 1) / 2;
        let h = l / mid as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| (i as f64 - mid as f64) * h).collect();
        // pin the endpoints exactly
        nodes[0] = -l;
        nodes[n - 1] = l;
        Ok(Grid { l, n, h: 2.0 * l / (n - 1) as f64, nodes })
    }

    /// Default production grid: L = 12, h = 2e-3.
    pub fn default_grid() -> Self {
        Grid::new(12.0, 12001).expect("default grid parameters are valid")
    }

    pub fn half_width(&self) -> f64 {
        self.l
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Index of the node nearest to x (clamped to the grid).
    pub fn nearest(&self, x: f64) -> usize {
        let t = (x + self.l) / self.h;
        if t <= 0.0 {
            0
        } else {
            (t.round() as usize).min(self.n - 1)
        }
    }

    /// Trapezoid rule over the full grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n);
        let mut acc = 0.5 * (values[0] + values[self.n - 1]);
        let mut c = 0.0f64; // Kahan correction
        for &v in &values[1..self.n - 1] {
            let y = v - c;
            let t = acc + y;
            c = (t - acc) - y;
            acc = t;
        }
        acc * self.h
    }

    /// Trapezoid rule for the product of two grid functions.
    pub fn integrate_product(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.n);
        debug_assert_eq!(g.len(), self.n);
        let mut acc = 0.5 * (f[0] * g[0] + f[self.n - 1] * g[self.n - 1]);
        let mut c = 0.0f64;
        for i in 1..self.n - 1 {
            let y = f[i] * g[i] - c;
            let t = acc + y;
            c = (t - acc) - y;
            acc = t;
        }
        acc * self.h
    }

    /// Cumulative trapezoid of grid samples, anchored so the value at x = 0
    /// (the middle node) is zero.
    pub fn cumulative_from_zero(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.n);
        let mut cum = vec![0.0; self.n];
        for i in 1..self.n {
            cum[i] = cum[i - 1] + 0.5 * (values[i - 1] + values[i]) * self.h;
        }
        let mid = cum[(self.n - 1) / 2];
        for v in &mut cum {
            *v -= mid;
        }
        cum
    }

    /// Sample a scalar function at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }
}
