//! Model configuration files: a small JSON schema covering the builtin
//! exactly-solvable family and tabulated custom models, plus the canonical
//! cache key used to reuse eigenbasis artifacts across runs.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::interp::CubicHermite;
use crate::model::ModelSpec;

fn default_l() -> f64 {
    12.0
}

fn default_n_grid() -> usize {
    12001
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplePoint {
    pub x: f64,
    pub a: f64,
    pub a_prime: f64,
    pub v: f64,
    /// Birth rate; defaults to max(V, 0) so that d = b - V is nonnegative.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    /// V(y) = 1 - y^2/2 with dY = sigma (dB - c dt), handled in reduced
    /// (unit-diffusion) coordinates.
    BuiltinHermite {
        sigma: f64,
        c: f64,
        #[serde(default = "default_l")]
        l: f64,
        #[serde(default = "default_n_grid")]
        n_grid: usize,
    },
    /// Tabulated (x, a, a', V) samples with cubic interpolation.
    CustomTabulated {
        #[serde(default = "default_l")]
        l: f64,
        #[serde(default = "default_n_grid")]
        n_grid: usize,
        samples: Vec<SamplePoint>,
        beta: f64,
        gamma: f64,
        e_const: f64,
        x0: f64,
        m_upper: f64,
    },
}

impl ModelConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ModelConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::BuiltinHermite { sigma, l, n_grid, .. } => {
                if !(*sigma > 0.0) {
                    return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
                }
                check_grid_params(*l, *n_grid)
            }
            ModelConfig::CustomTabulated { l, n_grid, samples, e_const, .. } => {
                check_grid_params(*l, *n_grid)?;
                if samples.len() < 4 {
                    return Err(Error::Config("need at least 4 sample points".into()));
                }
                if samples.windows(2).any(|w| w[1].x <= w[0].x) {
                    return Err(Error::Config("sample abscissa must be strictly increasing".into()));
                }
                if samples[0].x > -*l || samples[samples.len() - 1].x < *l {
                    return Err(Error::Config(format!(
                        "samples must cover [-{l}, {l}]"
                    )));
                }
                if !(*e_const > 0.0) {
                    return Err(Error::Config("e_const must be positive".into()));
                }
                Ok(())
            }
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        match self {
            ModelConfig::BuiltinHermite { l, n_grid, .. }
            | ModelConfig::CustomTabulated { l, n_grid, .. } => Grid::new(*l, *n_grid),
        }
    }

    pub fn build(&self) -> Result<(ModelSpec, Grid)> {
        self.validate()?;
        let grid = self.grid()?;
        let spec = match self {
            ModelConfig::BuiltinHermite { sigma, c, .. } => ModelSpec::hermite(*sigma, *c)?,
            ModelConfig::CustomTabulated {
                samples, beta, gamma, e_const, x0, m_upper, ..
            } => {
                let xs: Vec<f64> = samples.iter().map(|s| s.x).collect();
                let a = CubicHermite::with_derivatives(
                    xs.clone(),
                    samples.iter().map(|s| s.a).collect(),
                    samples.iter().map(|s| s.a_prime).collect(),
                )?;
                let ap = CubicHermite::pchip(
                    xs.clone(),
                    samples.iter().map(|s| s.a_prime).collect(),
                )?;
                let v = CubicHermite::pchip(xs.clone(), samples.iter().map(|s| s.v).collect())?;
                let b = CubicHermite::pchip(
                    xs.clone(),
                    samples.iter().map(|s| s.b.unwrap_or_else(|| s.v.max(0.0))).collect(),
                )?;
                let (a, ap, v) = (Arc::new(a), Arc::new(ap), Arc::new(v));
                let b = Arc::new(b);
                let (v_b, b_d) = (v.clone(), b.clone());
                let spec = ModelSpec {
                    a: { let a = a.clone(); Arc::new(move |x| a.eval(x)) },
                    a_prime: Arc::new(move |x| ap.eval(x)),
                    v: { let v = v.clone(); Arc::new(move |x| v.eval(x)) },
                    b: { let b = b.clone(); Arc::new(move |x| b.eval(x)) },
                    d: Arc::new(move |x| b_d.eval(x) - v_b.eval(x)),
                    beta: *beta,
                    gamma: *gamma,
                    e_const: *e_const,
                    x0: *x0,
                    m_upper: *m_upper,
                };
                spec.check_rates(&grid)?;
                spec
            }
        };
        Ok((spec, grid))
    }

    /// Stable content key for basis caching: FNV-1a of the canonical JSON
    /// plus the mode count.
    pub fn cache_key(&self, k_modes: usize) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in canon.bytes().chain(format!("|K={k_modes}").bytes()) {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{hash:016x}")
    }
}

fn check_grid_params(l: f64, n_grid: usize) -> Result<()> {
    if !(l > 0.0) {
        return Err(Error::Config(format!("half-width must be positive, got {l}")));
    }
    if n_grid < 3 || n_grid % 2 == 0 {
        return Err(Error::Config(format!("n_grid must be odd and >= 3, got {n_grid}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_roundtrip_and_key_stability() {
        let cfg = ModelConfig::BuiltinHermite { sigma: 1.0, c: 0.5, l: 12.0, n_grid: 12001 };
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("builtin_hermite"));
        let back: ModelConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg.cache_key(32), back.cache_key(32));
        assert_ne!(cfg.cache_key(32), cfg.cache_key(16));
        let other = ModelConfig::BuiltinHermite { sigma: 2.0, c: 0.5, l: 12.0, n_grid: 12001 };
        assert_ne!(cfg.cache_key(32), other.cache_key(32));
    }

    #[test]
    fn builtin_defaults_apply() {
        let cfg: ModelConfig =
            serde_json::from_str(r#"{"kind": "builtin_hermite", "sigma": 1.0, "c": 0.0}"#)
                .unwrap();
        let (spec, grid) = cfg.build().unwrap();
        assert_eq!(grid.len(), 12001);
        assert_eq!(grid.half_width(), 12.0);
        assert_eq!((spec.v)(0.0), 1.0);
    }

    #[test]
    fn tabulated_model_builds_and_interpolates() {
        let samples: Vec<SamplePoint> = (0..=120)
            .map(|i| {
                let x = -12.0 + 0.2 * i as f64;
                SamplePoint { x, a: 0.0, a_prime: 0.0, v: 1.0 - 0.5 * x * x, b: Some(1.0) }
            })
            .collect();
        let cfg = ModelConfig::CustomTabulated {
            l: 12.0,
            n_grid: 2401,
            samples,
            beta: 0.0,
            gamma: 0.0,
            e_const: 1.0,
            x0: 2.8,
            m_upper: 0.0,
        };
        let (spec, _grid) = cfg.build().unwrap();
        // quadratic V is cubic-interpolated exactly at the probe points
        assert!(((spec.v)(0.3) - (1.0 - 0.5 * 0.09)).abs() < 1e-3);
        assert!(((spec.d)(1.0) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn rejects_malformed_configs() {
        assert!(serde_json::from_str::<ModelConfig>(r#"{"kind": "unknown"}"#).is_err());
        let cfg = ModelConfig::BuiltinHermite { sigma: -1.0, c: 0.0, l: 12.0, n_grid: 12001 };
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig::BuiltinHermite { sigma: 1.0, c: 0.0, l: 12.0, n_grid: 12000 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn tabulated_rejects_negative_death_rate() {
        // b < V would force d < 0
        let samples: Vec<SamplePoint> = (0..=60)
            .map(|i| {
                let x = -12.0 + 0.4 * i as f64;
                SamplePoint { x, a: 0.0, a_prime: 0.0, v: 1.0 - 0.5 * x * x, b: Some(0.0) }
            })
            .collect();
        let cfg = ModelConfig::CustomTabulated {
            l: 12.0,
            n_grid: 1201,
            samples,
            beta: 0.0,
            gamma: 0.0,
            e_const: 1.0,
            x0: 2.8,
            m_upper: 0.0,
        };
        assert!(cfg.build().is_err());
    }
}
