//! Fitting an enclosing zonotope and its core point to data.
//!
//! The rotated-box fit works in the principal axes of the centred data: the
//! rows are mapped to `u = S^-1 V^T (x - mean)`, boxed there, and the box is
//! mapped back as `<V S c_u + mean, V S diag(r_u)>`. The result always has a
//! square generator matrix. The convex-hull fit overapproximates the hull by
//! a zonotope whose generators follow the hull's facet normals.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::SampleMatrix;
use crate::depth::{euclidean_depth, mahalanobis_depth, tukey_approx_depth, DepthResult};
use crate::linalg::right_basis;
use crate::polytope::{convex_hull, overapprox_zonotope, vrep_to_hrep};
use crate::sets::{interval_hull, NestedZonotopeFamily, PreparedZonotope, Zonotope};
use crate::{Error, Result, DEFAULT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    #[default]
    RotatedBox,
    ConvexHull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthMethod {
    Euclidean,
    #[default]
    Mahalanobis,
    TukeyApprox,
}

impl FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rotated_box" => Ok(Self::RotatedBox),
            "convex_hull" => Ok(Self::ConvexHull),
            other => Err(Error::domain(format!(
                "unknown fit method {other:?} (expected rotated_box or convex_hull)"
            ))),
        }
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RotatedBox => "rotated_box",
            Self::ConvexHull => "convex_hull",
        })
    }
}

impl FromStr for DepthMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Self::Euclidean),
            "mahalanobis" => Ok(Self::Mahalanobis),
            "tukey_approx" => Ok(Self::TukeyApprox),
            other => Err(Error::domain(format!(
                "unknown depth {other:?} (expected euclidean, mahalanobis or tukey_approx)"
            ))),
        }
    }
}

impl fmt::Display for DepthMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Euclidean => "euclidean",
            Self::Mahalanobis => "mahalanobis",
            Self::TukeyApprox => "tukey_approx",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: FitMethod,
    pub depth: DepthMethod,
    /// Relative margin added to the fitted extent; 0 keeps the exact bounds.
    pub inflation: f64,
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: FitMethod::default(),
            depth: DepthMethod::default(),
            inflation: 0.0,
            tol: DEFAULT_TOL,
        }
    }
}

/// Principal axes `V` (columns) and singular values of the centred data.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub v: DMatrix<f64>,
    pub sigma: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FitRepr", into = "FitRepr")]
pub struct FitResult {
    pub family: NestedZonotopeFamily,
    pub basis: Option<Basis>,
    pub core_index: usize,
    pub core_depth: f64,
}

#[derive(Serialize, Deserialize)]
struct BasisRepr {
    /// Rows of `V`.
    v: Vec<Vec<f64>>,
    sigma: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FitRepr {
    family: NestedZonotopeFamily,
    basis: Option<BasisRepr>,
    core_index: usize,
    core_depth: f64,
}

impl TryFrom<FitRepr> for FitResult {
    type Error = Error;

    fn try_from(r: FitRepr) -> Result<Self> {
        let basis = match r.basis {
            None => None,
            Some(b) => {
                let d = b.sigma.len();
                if b.v.len() != d || b.v.iter().any(|row| row.len() != d) {
                    return Err(Error::domain("basis matrix must be square and match sigma"));
                }
                Some(Basis {
                    v: DMatrix::from_fn(d, d, |i, j| b.v[i][j]),
                    sigma: DVector::from_vec(b.sigma),
                })
            }
        };
        Ok(Self {
            family: r.family,
            basis,
            core_index: r.core_index,
            core_depth: r.core_depth,
        })
    }
}

impl From<FitResult> for FitRepr {
    fn from(f: FitResult) -> Self {
        Self {
            family: f.family,
            basis: f.basis.map(|b| BasisRepr {
                v: b.v.row_iter().map(|r| r.iter().copied().collect()).collect(),
                sigma: b.sigma.iter().copied().collect(),
            }),
            core_index: f.core_index,
            core_depth: f.core_depth,
        }
    }
}

pub fn fit(data: &SampleMatrix, cfg: &FitConfig) -> Result<FitResult> {
    match cfg.method {
        FitMethod::RotatedBox => fit_rotated_box(data, cfg),
        FitMethod::ConvexHull => fit_convex_hull(data, cfg),
    }
}

pub fn fit_rotated_box(data: &SampleMatrix, cfg: &FitConfig) -> Result<FitResult> {
    check_config(cfg)?;
    if data.nrows() < 2 {
        return Err(Error::domain("the rotated-box fit needs at least two samples"));
    }
    let d = data.dim();
    let mu = data.mean();
    let mut centered = data.matrix().clone();
    for mut row in centered.row_iter_mut() {
        row -= mu.transpose();
    }
    let basis = right_basis(&centered);
    let smax = basis.sigma.max();
    let inv_sigma = DVector::from_fn(d, |j, _| {
        let s = basis.sigma[j];
        if s > 1e-12 * smax && s > 0.0 {
            1.0 / s
        } else {
            0.0
        }
    });
    let vt = basis.v.transpose();
    let coords = data.map_rows(|x| (&vt * (x - &mu)).component_mul(&inv_sigma))?;
    let bx = interval_hull(&coords)?.inflate(cfg.inflation)?;
    let scaled = DMatrix::from_fn(d, d, |i, j| {
        if inv_sigma[j] == 0.0 {
            0.0
        } else {
            basis.v[(i, j)] * basis.sigma[j]
        }
    });
    let center = &scaled * bx.center() + &mu;
    let generators = &scaled * DMatrix::from_diagonal(bx.radius());
    let z = Zonotope::new(center, generators)?;
    let out = finish(data, z, cfg)?;
    Ok(FitResult {
        basis: Some(Basis {
            v: basis.v,
            sigma: basis.sigma,
        }),
        ..out
    })
}

pub fn fit_convex_hull(data: &SampleMatrix, cfg: &FitConfig) -> Result<FitResult> {
    check_config(cfg)?;
    let hull = convex_hull(data)?;
    let normals = vrep_to_hrep(&hull)?.normals();
    let z = overapprox_zonotope(&hull, &normals)?;
    let z = Zonotope::new(z.center().clone(), z.generators() * (1.0 + cfg.inflation))?;
    finish(data, z, cfg)
}

fn check_config(cfg: &FitConfig) -> Result<()> {
    if !(cfg.inflation >= 0.0) || !cfg.inflation.is_finite() {
        return Err(Error::domain("inflation must be finite and nonnegative"));
    }
    if !(cfg.tol >= 0.0) {
        return Err(Error::domain("tolerance must be nonnegative"));
    }
    Ok(())
}

fn finish(data: &SampleMatrix, z: Zonotope, cfg: &FitConfig) -> Result<FitResult> {
    let prepared = PreparedZonotope::new(&z);
    if let Some(i) = (0..data.nrows()).find(|&i| !prepared.contains(&data.row(i), cfg.tol)) {
        return Err(Error::Solver(format!(
            "fitted zonotope does not enclose sample row {i}"
        )));
    }
    let depth = select_core(data, &z, cfg.depth)?;
    let core_depth = depth.depths[depth.argmax_index];
    let family = NestedZonotopeFamily::new(z, depth.core.clone(), cfg.tol)?;
    Ok(FitResult {
        family,
        basis: None,
        core_index: depth.argmax_index,
        core_depth,
    })
}

fn select_core(data: &SampleMatrix, z: &Zonotope, method: DepthMethod) -> Result<DepthResult> {
    match method {
        DepthMethod::Euclidean => euclidean_depth(data),
        DepthMethod::Mahalanobis => mahalanobis_depth(data),
        DepthMethod::TukeyApprox => tukey_approx_depth(data, &z.facet_normals()?),
    }
}
