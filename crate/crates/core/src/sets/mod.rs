//! Zonotopes, hyperrectangles and nested families.
//!
//! A zonotope `<c, G>` is the set `{c + G xi : |xi|_inf <= 1}`. Membership is
//! always decided on the generator coefficients, so a tolerance `tol` means
//! `|xi|_inf <= 1 + tol`.

mod family;
mod hyperrectangle;
mod membership;
mod zonotope;

pub use family::NestedZonotopeFamily;
pub use hyperrectangle::{interval_hull, Hyperrectangle};
pub use membership::{PreparedFamily, PreparedZonotope, Probe};
pub use zonotope::Zonotope;
pub(crate) use zonotope::subset_normals;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The closed half-space `{x | a^T x <= b}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    normal: Vec<f64>,
    offset: f64,
}

impl HalfSpace {
    pub fn new(normal: DVector<f64>, offset: f64) -> Result<Self> {
        if normal.iter().all(|v| *v == 0.0) {
            return Err(Error::domain("half-space normal must be nonzero"));
        }
        if !offset.is_finite() || normal.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("half-space entries must be finite"));
        }
        Ok(Self {
            normal: normal.iter().copied().collect(),
            offset,
        })
    }

    pub fn normal(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.normal)
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// `a^T x - b`; nonpositive inside.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        self.normal.iter().zip(x.iter()).map(|(a, v)| a * v).sum::<f64>() - self.offset
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        let scale = self.offset.abs().max(1.0);
        self.violation(x) <= tol * scale
    }
}

/// Slack allowed on a coordinate whose generator row is zero.
pub(crate) fn flat_tolerance(tol: f64, scale: f64, center_norm: f64) -> f64 {
    if scale > 0.0 {
        tol * scale
    } else {
        tol * (1.0 + center_norm)
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::domain(format!("alpha must lie in [0, 1], got {alpha}")))
    }
}
