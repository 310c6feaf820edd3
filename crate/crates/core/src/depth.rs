//! Data depth, used to pick the core point of a nested family.
//!
//! Euclidean and Mahalanobis depth are `1 / (1 + distance to the mean)`.
//! Tukey (half-space) depth of `x` is the smallest fraction of the sample in
//! any closed half-space whose boundary passes through `x`; points on the
//! boundary count as inside.

use std::f64::consts::{PI, TAU};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::data::SampleMatrix;
use crate::linalg::{covariance, SpdFactor};
use crate::{Error, Result};

/// Condition-number ceiling for the sample covariance.
pub const MAX_COVARIANCE_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthResult {
    pub depths: Vec<f64>,
    pub argmax_index: usize,
    pub core: DVector<f64>,
}

impl DepthResult {
    /// Deepest row, ties resolved to the lowest index.
    pub fn from_depths(data: &SampleMatrix, depths: Vec<f64>) -> Result<Self> {
        if depths.is_empty() || depths.len() != data.nrows() {
            return Err(Error::domain("depth needs at least one sample"));
        }
        let mut best = 0;
        for (i, d) in depths.iter().enumerate() {
            if *d > depths[best] {
                best = i;
            }
        }
        Ok(Self {
            core: data.row(best),
            argmax_index: best,
            depths,
        })
    }
}

pub fn euclidean_depth(data: &SampleMatrix) -> Result<DepthResult> {
    if data.is_empty() {
        return Err(Error::domain("depth of an empty sample"));
    }
    let mu = data.mean();
    let depths = (0..data.nrows())
        .map(|i| 1.0 / (1.0 + (data.row(i) - &mu).norm()))
        .collect();
    DepthResult::from_depths(data, depths)
}

pub fn mahalanobis_depth(data: &SampleMatrix) -> Result<DepthResult> {
    let (n, d) = (data.nrows(), data.dim());
    if n <= d {
        return Err(Error::domain(format!(
            "Mahalanobis depth needs more samples than dimensions (n = {n}, d = {d})"
        )));
    }
    let (mu, cov) = covariance(data.matrix());
    let factor = SpdFactor::new(&cov, MAX_COVARIANCE_CONDITION, "use Euclidean depth instead")?;
    let depths = (0..n)
        .into_par_iter()
        .map(|i| 1.0 / (1.0 + factor.mahalanobis(&(data.row(i) - &mu))))
        .collect();
    DepthResult::from_depths(data, depths)
}

fn closed_count(data: &SampleMatrix, x: &DVector<f64>, v: &DVector<f64>) -> usize {
    let m = data.matrix();
    (0..m.nrows())
        .filter(|&j| {
            let s: f64 = (0..m.ncols()).map(|k| v[k] * (m[(j, k)] - x[k])).sum();
            s >= 0.0
        })
        .count()
}

/// Directions at the midpoints between consecutive critical angles
/// `phi_j +- pi/2`, where `phi_j` is the angle of `X_j - x`. The half-space
/// count is constant on each open arc and largest at the critical angles, so
/// these directions attain the exact planar minimum.
pub fn tukey_candidate_directions(data: &SampleMatrix, x: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    check_planar(data, x)?;
    let mut angles: Vec<f64> = Vec::with_capacity(2 * data.nrows());
    for row in data.rows() {
        let y = row - x;
        if y[0] == 0.0 && y[1] == 0.0 {
            continue;
        }
        let phi = y[1].atan2(y[0]);
        for t in [phi + PI / 2.0, phi - PI / 2.0] {
            angles.push(t.rem_euclid(TAU));
        }
    }
    if angles.is_empty() {
        return Ok(vec![DVector::from_vec(vec![1.0, 0.0])]);
    }
    angles.sort_by(f64::total_cmp);
    angles.dedup();
    let k = angles.len();
    Ok((0..k)
        .map(|i| {
            let next = if i + 1 < k { angles[i + 1] } else { angles[0] + TAU };
            let mid = 0.5 * (angles[i] + next);
            DVector::from_vec(vec![mid.cos(), mid.sin()])
        })
        .collect())
}

/// Exact planar Tukey depth.
pub fn tukey_depth_exact(data: &SampleMatrix, x: &DVector<f64>) -> Result<f64> {
    let dirs = tukey_candidate_directions(data, x)?;
    let n = data.nrows();
    // each arc has an antipodal arc, so both signs are candidates already;
    // evaluating them explicitly keeps rounding consistent with the
    // approximate depth over the same directions
    let min = dirs
        .iter()
        .flat_map(|v| [closed_count(data, x, v), closed_count(data, x, &-v)])
        .min()
        .unwrap_or(n);
    Ok(min as f64 / n as f64)
}

/// Tukey depth with the infimum restricted to `directions`, each used with
/// both signs.
pub fn tukey_depth_approx(data: &SampleMatrix, x: &DVector<f64>, directions: &[DVector<f64>]) -> Result<f64> {
    check_directions(data, x, directions)?;
    let n = data.nrows();
    let min = directions
        .iter()
        .filter(|v| v.amax() > 0.0)
        .flat_map(|v| [closed_count(data, x, v), closed_count(data, x, &-v)])
        .min()
        .expect("checked nonempty");
    Ok(min as f64 / n as f64)
}

/// Approximate Tukey depth of every row.
pub fn tukey_approx_depth(data: &SampleMatrix, directions: &[DVector<f64>]) -> Result<DepthResult> {
    if data.is_empty() {
        return Err(Error::domain("depth of an empty sample"));
    }
    check_directions(data, &data.row(0), directions)?;
    let depths = (0..data.nrows())
        .into_par_iter()
        .map(|i| tukey_depth_approx(data, &data.row(i), directions).expect("checked"))
        .collect();
    DepthResult::from_depths(data, depths)
}

fn check_planar(data: &SampleMatrix, x: &DVector<f64>) -> Result<()> {
    if data.dim() != 2 {
        return Err(Error::UnsupportedDimension {
            dim: data.dim(),
            max: 2,
            hint: "exact Tukey depth is planar only; use tukey_depth_approx",
        });
    }
    if x.len() != 2 {
        return Err(Error::dims(2, x.len()));
    }
    if data.is_empty() {
        return Err(Error::domain("depth of an empty sample"));
    }
    Ok(())
}

fn check_directions(data: &SampleMatrix, x: &DVector<f64>, directions: &[DVector<f64>]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::domain("depth of an empty sample"));
    }
    if x.len() != data.dim() {
        return Err(Error::dims(data.dim(), x.len()));
    }
    if let Some(bad) = directions.iter().find(|v| v.len() != data.dim()) {
        return Err(Error::dims(data.dim(), bad.len()));
    }
    if !directions.iter().any(|v| v.amax() > 0.0) {
        return Err(Error::domain("at least one nonzero direction is required"));
    }
    Ok(())
}
