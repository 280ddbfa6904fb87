//! Numerical thresholds shared by the solvers.
//!
//! Keys accepted by [`Tolerances::set`] are the documented configuration
//! names: `tol.cluster`, `tol.rank`, `tol.recon`, `tol.cone`, `tol.lift`,
//! `tol.dt`, `tol.a3`, `tol.pos`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KEYS: [&str; 8] = [
    "tol.cluster",
    "tol.rank",
    "tol.recon",
    "tol.cone",
    "tol.lift",
    "tol.dt",
    "tol.a3",
    "tol.pos",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Eigenvalue clustering radius. `None` means `1e-8 * ||M||_2`.
    pub cluster: Option<f64>,
    /// Relative singular-value threshold for rank decisions.
    pub rank: f64,
    /// Relative reconstruction tolerance for `V J V^-1`.
    pub recon: f64,
    /// Cone-membership residual threshold (scaled by `1 + ||row||_inf` by callers).
    pub cone: f64,
    /// Lifted-rule residual tolerance. `None` means `1e-8 * (1 + ||G||_inf)`.
    pub lift: Option<f64>,
    /// Discrete-rule residual tolerance for `||H e^{dG} - QH||_inf`.
    pub dt: f64,
    /// Relative static-cubature moment tolerance, scaled by `1 + ||mu||_inf`.
    pub a3: f64,
    /// Minimum entry for a transition matrix to count as strictly positive.
    pub pos: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            cluster: None,
            rank: 1e-10,
            recon: 1e-6,
            cone: 1e-9,
            lift: None,
            dt: 1e-8,
            a3: 1e-9,
            pos: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance {key} must be positive and finite, got {value}"
            )));
        }
        match key {
            "tol.cluster" => self.cluster = Some(value),
            "tol.rank" => self.rank = value,
            "tol.recon" => self.recon = value,
            "tol.cone" => self.cone = value,
            "tol.lift" => self.lift = Some(value),
            "tol.dt" => self.dt = value,
            "tol.a3" => self.a3 = value,
            "tol.pos" => self.pos = value,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown tolerance key {key:?}; expected one of {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn cluster_for(&self, spectral_norm: f64) -> f64 {
        self.cluster.unwrap_or(1e-8 * spectral_norm).max(f64::MIN_POSITIVE)
    }

    pub fn lift_for(&self, g_inf_norm: f64) -> f64 {
        self.lift.unwrap_or(1e-8 * (1.0 + g_inf_norm))
    }

    pub fn a3_for(&self, mu_inf_norm: f64) -> f64 {
        self.a3 * (1.0 + mu_inf_norm)
    }
}
