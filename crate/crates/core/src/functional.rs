//! Prediction sets for function-valued outputs.
//!
//! Model errors `e_i = F_i - f(X_i)` are reduced with an SVD
//! `e = U S V^T` (not mean-centred). A row maps to coordinates
//! `u = S^-1 V^T e`; the first `k` are the kept modes and the rest are the
//! truncated modes. A nested family is fitted and calibrated on the kept
//! coordinates. The truncated coordinates of the calibration errors are
//! bounded by their interval hull `E`. The set for confidence `eps` is
//! `f(x) + V S (Z^{s(eps)} x E)`.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{self, AlphaGrid, CalibratedFamily, QuantileRule, BELOW_GRID};
use crate::data::SampleMatrix;
use crate::fitting::{fit, FitConfig, FitResult};
use crate::linalg::canonical_sign;
use crate::sets::{interval_hull, Hyperrectangle, PreparedFamily, PreparedZonotope, Zonotope};
use crate::{Error, Result};

/// Default share of the error variance kept by the SVD.
pub const DEFAULT_VARIANCE_FRACTION: f64 = 0.99;

/// Singular values below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-12;

pub fn compute_errors(truths: &SampleMatrix, predictions: &SampleMatrix) -> Result<SampleMatrix> {
    if truths.nrows() != predictions.nrows() {
        return Err(Error::dims(truths.nrows(), predictions.nrows()));
    }
    if truths.dim() != predictions.dim() {
        return Err(Error::dims(truths.dim(), predictions.dim()));
    }
    SampleMatrix::new(truths.matrix() - predictions.matrix())
}

/// Right singular vectors `V` (`l x r`) and singular values of an error
/// matrix, with the kept rank `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSvd {
    v: DMatrix<f64>,
    sigma: DVector<f64>,
    k: usize,
    variance_fraction: f64,
}

impl ErrorSvd {
    pub fn new(v: DMatrix<f64>, sigma: DVector<f64>, k: usize, variance_fraction: f64) -> Result<Self> {
        let r = sigma.len();
        if v.ncols() != r {
            return Err(Error::dims(r, v.ncols()));
        }
        if r == 0 || k < 1 || k > r {
            return Err(Error::domain(format!("kept rank {k} outside 1..={r}")));
        }
        if sigma.iter().any(|s| !(*s > 0.0)) || sigma.as_slice().windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::domain("singular values must be positive and nonincreasing"));
        }
        Ok(Self {
            v,
            sigma,
            k,
            variance_fraction,
        })
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn sigma(&self) -> &DVector<f64> {
        &self.sigma
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn output_dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn variance_fraction(&self) -> f64 {
        self.variance_fraction
    }

    /// `V S`, the map from coordinates back to outputs.
    pub fn back_map(&self) -> DMatrix<f64> {
        let mut m = self.v.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            m.column_mut(j).scale_mut(*s);
        }
        m
    }

    /// `S^-1 V^T e`.
    pub fn coordinates(&self, e: &DVector<f64>) -> DVector<f64> {
        (self.v.transpose() * e).component_div(&self.sigma)
    }
}

/// Thin SVD of the (uncentred) error matrix. `k` is the smallest rank whose
/// squared singular values reach `variance_fraction` of the total.
pub fn error_svd(errors: &SampleMatrix, variance_fraction: f64) -> Result<ErrorSvd> {
    if errors.nrows() < 2 {
        return Err(Error::domain("the error SVD needs at least two rows"));
    }
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(Error::domain(format!(
            "variance fraction must lie in (0, 1], got {variance_fraction}"
        )));
    }
    let svd = errors.matrix().clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let smax = order.first().map_or(0.0, |&i| svd.singular_values[i]);
    if !(smax > 0.0) {
        return Err(Error::Degenerate("all errors are zero".into()));
    }
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| svd.singular_values[i] > RANK_TOL * smax)
        .collect();
    let r = kept.len();
    let l = errors.dim();
    let mut v = DMatrix::zeros(l, r);
    let mut sigma = DVector::zeros(r);
    for (j, &i) in kept.iter().enumerate() {
        v.set_column(j, &v_t.row(i).transpose());
        sigma[j] = svd.singular_values[i];
        canonical_sign(&mut v, j);
    }
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    let mut k = r;
    for (j, s) in sigma.iter().enumerate() {
        acc += s * s;
        if acc >= variance_fraction * total * (1.0 - 1e-12) {
            k = j + 1;
            break;
        }
    }
    ErrorSvd::new(v, sigma, k, variance_fraction)
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub kept: SampleMatrix,
    pub truncated: SampleMatrix,
    /// `|e - V S u|_2` per row: the part of the error outside the span of `V`.
    pub residual_norms: Vec<f64>,
}

pub fn project_errors(svd: &ErrorSvd, errors: &SampleMatrix) -> Result<Projection> {
    if errors.dim() != svd.output_dim() {
        return Err(Error::dims(svd.output_dim(), errors.dim()));
    }
    let n = errors.nrows();
    let (r, k) = (svd.rank(), svd.k());
    let proj = errors.matrix() * &svd.v;
    let coords = DMatrix::from_fn(n, r, |i, j| proj[(i, j)] / svd.sigma[j]);
    let back = &proj * svd.v.transpose();
    let residual_norms = (0..n).map(|i| (errors.matrix().row(i) - back.row(i)).norm()).collect();
    Ok(Projection {
        kept: SampleMatrix::new(coords.columns(0, k).into_owned())?,
        truncated: SampleMatrix::new(coords.columns(k, r - k).into_owned())?,
        residual_norms,
    })
}

#[derive(Debug, Clone, PartialEq)]
struct Fitted {
    svd: ErrorSvd,
    calibrated: CalibratedFamily,
    trunc_box: Hyperrectangle,
}

/// A calibrated functional model. Zero calibration errors give a degenerate
/// model whose prediction sets are the base point alone.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalConformalModel {
    output_dim: usize,
    fitted: Option<Fitted>,
    tol: f64,
}

/// Fits, calibrates and bounds on the same errors.
pub fn build_model(
    errors: &SampleMatrix,
    cfg: &FitConfig,
    variance_fraction: f64,
    grid: &AlphaGrid,
) -> Result<FunctionalConformalModel> {
    build_model_split(errors, errors, cfg, variance_fraction, grid)
}

/// SVD and zonotope fit on `fit_errors`; scores and truncation box on
/// `calibration_errors`.
pub fn build_model_split(
    fit_errors: &SampleMatrix,
    calibration_errors: &SampleMatrix,
    cfg: &FitConfig,
    variance_fraction: f64,
    grid: &AlphaGrid,
) -> Result<FunctionalConformalModel> {
    fit_functional(fit_errors, cfg, variance_fraction)?.calibrate(calibration_errors, grid)
}

/// The uncalibrated half of a functional model: the error SVD and the
/// enclosing fit of the kept coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalFit {
    output_dim: usize,
    fitted: Option<(ErrorSvd, FitResult)>,
    tol: f64,
}

pub fn fit_functional(fit_errors: &SampleMatrix, cfg: &FitConfig, variance_fraction: f64) -> Result<FunctionalFit> {
    let output_dim = fit_errors.dim();
    let svd = match error_svd(fit_errors, variance_fraction) {
        Ok(svd) => svd,
        Err(Error::Degenerate(msg)) => {
            log::warn!("{msg}; prediction sets collapse to the base point");
            return Ok(FunctionalFit {
                output_dim,
                fitted: None,
                tol: cfg.tol,
            });
        }
        Err(e) => return Err(e),
    };
    let fit_proj = project_errors(&svd, fit_errors)?;
    let result = fit(&fit_proj.kept, cfg)?;
    Ok(FunctionalFit {
        output_dim,
        fitted: Some((svd, result)),
        tol: cfg.tol,
    })
}

impl FunctionalFit {
    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn is_degenerate(&self) -> bool {
        self.fitted.is_none()
    }

    pub fn svd(&self) -> Option<&ErrorSvd> {
        self.fitted.as_ref().map(|f| &f.0)
    }

    pub fn fit_result(&self) -> Option<&FitResult> {
        self.fitted.as_ref().map(|f| &f.1)
    }

    /// Scores `calibration_errors` and bounds their truncated coordinates.
    pub fn calibrate(&self, calibration_errors: &SampleMatrix, grid: &AlphaGrid) -> Result<FunctionalConformalModel> {
        if calibration_errors.dim() != self.output_dim {
            return Err(Error::dims(self.output_dim, calibration_errors.dim()));
        }
        if calibration_errors.is_empty() {
            return Err(Error::domain("calibration needs at least one error row"));
        }
        let Some((svd, result)) = &self.fitted else {
            return Ok(FunctionalConformalModel {
                output_dim: self.output_dim,
                fitted: None,
                tol: self.tol,
            });
        };
        let cal_proj = project_errors(svd, calibration_errors)?;
        let calibrated = calibration::calibrate(&result.family, &cal_proj.kept, grid, self.tol)?;
        let trunc_box = if cal_proj.truncated.dim() == 0 {
            Hyperrectangle::new(DVector::zeros(0), DVector::zeros(0))?
        } else {
            interval_hull(&cal_proj.truncated)?
        };
        Ok(FunctionalConformalModel {
            output_dim: self.output_dim,
            fitted: Some(Fitted {
                svd: svd.clone(),
                calibrated,
                trunc_box,
            }),
            tol: self.tol,
        })
    }
}

/// Per-`eps` zonotopes in output space around one base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalPredictionSet {
    pub alpha_levels: Vec<f64>,
    /// Calibrated family level used for each entry of `alpha_levels`.
    pub calibrated_alphas: Vec<f64>,
    pub sets: Vec<Zonotope>,
    pub base_point: Vec<f64>,
}

impl FunctionalPredictionSet {
    /// Axis-aligned envelope of each set.
    pub fn envelopes(&self) -> Vec<Hyperrectangle> {
        self.sets.iter().map(Zonotope::interval_bounds).collect()
    }
}

/// Membership of one truth in a model's sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Containment {
    /// Kept coordinates inside the calibrated level, per requested `eps`.
    pub kept: Vec<bool>,
    pub in_trunc_box: bool,
    pub residual_norm: f64,
}

impl Containment {
    pub fn contains(&self, level: usize, residual_tol: f64) -> bool {
        self.kept[level] && self.in_trunc_box && self.residual_norm <= residual_tol
    }
}

impl FunctionalConformalModel {
    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn is_degenerate(&self) -> bool {
        self.fitted.is_none()
    }

    pub fn svd(&self) -> Option<&ErrorSvd> {
        self.fitted.as_ref().map(|f| &f.svd)
    }

    pub fn calibrated(&self) -> Option<&CalibratedFamily> {
        self.fitted.as_ref().map(|f| &f.calibrated)
    }

    pub fn trunc_box(&self) -> Option<&Hyperrectangle> {
        self.fitted.as_ref().map(|f| &f.trunc_box)
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn with_rule(mut self, rule: QuantileRule) -> Self {
        if let Some(f) = self.fitted.as_mut() {
            f.calibrated = f.calibrated.clone().with_rule(rule);
        }
        self
    }

    fn check_point(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.output_dim {
            return Err(Error::dims(self.output_dim, v.len()));
        }
        Ok(())
    }

    /// The reduced-space set `Z^{s(eps)} x E` and its level.
    pub fn reduced_set(&self, eps: f64) -> Result<(Zonotope, f64)> {
        let f = self
            .fitted
            .as_ref()
            .ok_or_else(|| Error::Degenerate("model has no reduced space".into()))?;
        let level = f.calibrated.level_set(eps)?;
        let e = Zonotope::from_hyperrectangle(&f.trunc_box);
        Ok((level.zonotope.cartesian_product(&e), level.alpha))
    }

    pub fn predict(&self, base_point: &DVector<f64>, eps_levels: &[f64]) -> Result<FunctionalPredictionSet> {
        self.check_point(base_point)?;
        let mut sets = Vec::with_capacity(eps_levels.len());
        let mut alphas = Vec::with_capacity(eps_levels.len());
        let back = self.svd().map(ErrorSvd::back_map);
        for &eps in eps_levels {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::domain(format!("eps must lie in (0, 1), got {eps}")));
            }
            match &back {
                None => {
                    sets.push(Zonotope::singleton(base_point.clone())?);
                    alphas.push(1.0);
                }
                Some(m) => {
                    let (r, alpha) = self.reduced_set(eps)?;
                    sets.push(r.linear_map(m)?.translate(base_point)?);
                    alphas.push(alpha);
                }
            }
        }
        Ok(FunctionalPredictionSet {
            alpha_levels: eps_levels.to_vec(),
            calibrated_alphas: alphas,
            sets,
            base_point: base_point.iter().copied().collect(),
        })
    }

    /// Prepares repeated containment checks at the given `eps` levels.
    pub fn checker(&self, eps_levels: &[f64]) -> Result<ContainmentChecker<'_>> {
        let mut alphas = Vec::with_capacity(eps_levels.len());
        for &eps in eps_levels {
            let alpha = match self.calibrated() {
                Some(c) => c.alpha_for(eps)?.0,
                None => {
                    if !(eps > 0.0 && eps < 1.0) {
                        return Err(Error::domain(format!("eps must lie in (0, 1), got {eps}")));
                    }
                    1.0
                }
            };
            alphas.push(alpha);
        }
        Ok(ContainmentChecker {
            model: self,
            family: self.calibrated().map(|c| PreparedFamily::new(c.family())),
            alphas,
        })
    }

    /// Whether `truth` lies in the set for `eps` around `base_point`: kept
    /// coordinates in the calibrated level, truncated coordinates in `E`, and
    /// the out-of-span residual at most `residual_tol`.
    pub fn contains_function(
        &self,
        eps: f64,
        base_point: &DVector<f64>,
        truth: &DVector<f64>,
        residual_tol: f64,
    ) -> Result<bool> {
        let c = self.checker(&[eps])?.check(base_point, truth)?;
        Ok(c.contains(0, residual_tol))
    }

    /// Scores of `errors` computed in the full reduced space, against the
    /// product sets `Z^a x E`. Agrees with the kept-coordinate scores whenever
    /// every row lies in `E`.
    pub fn product_scores(&self, errors: &SampleMatrix) -> Result<Vec<f64>> {
        let f = self
            .fitted
            .as_ref()
            .ok_or_else(|| Error::Degenerate("model has no reduced space".into()))?;
        let proj = project_errors(&f.svd, errors)?;
        let e = Zonotope::from_hyperrectangle(&f.trunc_box);
        let family = f.calibrated.family();
        let grid = f.calibrated.grid().values();
        let mut cache: Vec<Option<PreparedZonotope>> = vec![None; grid.len()];
        let mut scores = Vec::with_capacity(errors.nrows());
        for i in 0..errors.nrows() {
            let mut u = proj.kept.row(i).iter().copied().collect::<Vec<_>>();
            u.extend(proj.truncated.row(i).iter());
            let u = DVector::from_vec(u);
            let mut member = |idx: usize| -> Result<bool> {
                if cache[idx].is_none() {
                    let z = family.nested_at(grid[idx])?.cartesian_product(&e);
                    cache[idx] = Some(PreparedZonotope::new(&z));
                }
                Ok(cache[idx].as_ref().expect("filled").contains(&u, self.tol))
            };
            let last = grid.len() - 1;
            let score = if !member(0)? {
                BELOW_GRID
            } else if member(last)? {
                grid[last]
            } else {
                let (mut lo, mut hi) = (0, last);
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if member(mid)? {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                grid[lo]
            };
            scores.push(score);
        }
        Ok(scores)
    }
}

/// Repeated containment checks against fixed `eps` levels.
pub struct ContainmentChecker<'a> {
    model: &'a FunctionalConformalModel,
    family: Option<PreparedFamily>,
    alphas: Vec<f64>,
}

impl ContainmentChecker<'_> {
    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn check(&self, base_point: &DVector<f64>, truth: &DVector<f64>) -> Result<Containment> {
        self.model.check_point(base_point)?;
        self.model.check_point(truth)?;
        let e = truth - base_point;
        let tol = self.model.tol;
        let (Some(f), Some(family)) = (self.model.fitted.as_ref(), self.family.as_ref()) else {
            let inside = e.amax() <= crate::sets::flat_tolerance(tol, 0.0, base_point.amax());
            return Ok(Containment {
                kept: vec![inside; self.alphas.len()],
                in_trunc_box: true,
                residual_norm: if inside { 0.0 } else { e.norm() },
            });
        };
        let u = f.svd.coordinates(&e);
        let k = f.svd.k();
        let kept = u.rows(0, k).into_owned();
        let trunc = u.rows(k, u.len() - k).into_owned();
        let residual_norm = (&e - f.svd.v() * f.svd.v().transpose() * &e).norm();
        let probe = family.probe(&kept);
        Ok(Containment {
            kept: self.alphas.iter().map(|a| probe.contains(*a, tol)).collect(),
            in_trunc_box: f.trunc_box.contains(&trunc, tol)?,
            residual_norm,
        })
    }

    /// Checks every row pair in parallel.
    pub fn check_rows(&self, bases: &SampleMatrix, truths: &SampleMatrix) -> Result<Vec<Containment>> {
        if bases.nrows() != truths.nrows() {
            return Err(Error::dims(bases.nrows(), truths.nrows()));
        }
        (0..bases.nrows())
            .into_par_iter()
            .map(|i| self.check(&bases.row(i), &truths.row(i)))
            .collect()
    }
}

/// Side file holding `V` for a JSON file at `path`: `<stem>.v.csv`.
fn v_file_name(path: &Path) -> PathBuf {
    let stem = path.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
    PathBuf::from(format!("{stem}.v.csv"))
}

fn write_v(path: &Path, svd: &ErrorSvd) -> Result<PathBuf> {
    let name = v_file_name(path);
    let dir = path.parent().unwrap_or(Path::new(""));
    SampleMatrix::new(svd.v.clone())?.write_csv_path(dir.join(&name))?;
    Ok(name)
}

fn read_svd(path: &Path, output_dim: usize, v_file: &Path, sigma: Vec<f64>, k: usize, fraction: f64) -> Result<ErrorSvd> {
    let dir = path.parent().unwrap_or(Path::new(""));
    let v = SampleMatrix::read_csv_path(dir.join(v_file), false)?.into_matrix();
    if v.nrows() != output_dim {
        return Err(Error::dims(output_dim, v.nrows()));
    }
    ErrorSvd::new(v, DVector::from_vec(sigma), k, fraction)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let out = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(out, value)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?)
}

#[derive(Serialize, Deserialize)]
struct SvdFile {
    /// Path of the `V` matrix CSV, relative to the JSON file.
    v_file: PathBuf,
    sigma: Vec<f64>,
    k: usize,
    variance_fraction: f64,
}

impl SvdFile {
    fn write(path: &Path, svd: &ErrorSvd) -> Result<Self> {
        Ok(Self {
            v_file: write_v(path, svd)?,
            sigma: svd.sigma.iter().copied().collect(),
            k: svd.k,
            variance_fraction: svd.variance_fraction,
        })
    }

    fn read(self, path: &Path, output_dim: usize) -> Result<ErrorSvd> {
        read_svd(path, output_dim, &self.v_file, self.sigma, self.k, self.variance_fraction)
    }
}

#[derive(Serialize, Deserialize)]
struct FitFile {
    output_dim: usize,
    tol: f64,
    svd: Option<SvdFile>,
    fit: Option<FitResult>,
}

impl FunctionalFit {
    /// Writes the fit as JSON at `path` and `V` as CSV next to it
    /// (`<stem>.v.csv`).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let (svd, fit) = match &self.fitted {
            Some((svd, fit)) => (Some(SvdFile::write(path, svd)?), Some(fit.clone())),
            None => (None, None),
        };
        write_json(
            path,
            &FitFile {
                output_dim: self.output_dim,
                tol: self.tol,
                svd,
                fit,
            },
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file: FitFile = read_json(path)?;
        let fitted = match (file.svd, file.fit) {
            (None, None) => None,
            (Some(svd), Some(fit)) => {
                let svd = svd.read(path, file.output_dim)?;
                if fit.family.dim() != svd.k {
                    return Err(Error::dims(svd.k, fit.family.dim()));
                }
                Some((svd, fit))
            }
            _ => return Err(Error::domain("fit file is missing fitted components")),
        };
        Ok(Self {
            output_dim: file.output_dim,
            fitted,
            tol: file.tol,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    output_dim: usize,
    tol: f64,
    svd: Option<SvdFile>,
    calibrated: Option<CalibratedFamily>,
    trunc_box: Option<Hyperrectangle>,
}

impl FunctionalConformalModel {
    /// Writes the model as JSON at `path` and `V` as CSV next to it
    /// (`<stem>.v.csv`).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let svd = match &self.fitted {
            Some(f) => Some(SvdFile::write(path, &f.svd)?),
            None => None,
        };
        write_json(
            path,
            &ModelFile {
                output_dim: self.output_dim,
                tol: self.tol,
                svd,
                calibrated: self.fitted.as_ref().map(|f| f.calibrated.clone()),
                trunc_box: self.fitted.as_ref().map(|f| f.trunc_box.clone()),
            },
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file: ModelFile = read_json(path)?;
        let fitted = match (file.svd, file.calibrated, file.trunc_box) {
            (None, None, None) => None,
            (Some(svd), Some(calibrated), Some(trunc_box)) => {
                let svd = svd.read(path, file.output_dim)?;
                let k = svd.k;
                if calibrated.family().dim() != k {
                    return Err(Error::dims(k, calibrated.family().dim()));
                }
                if trunc_box.dim() != svd.rank() - k {
                    return Err(Error::dims(svd.rank() - k, trunc_box.dim()));
                }
                Some(Fitted {
                    svd,
                    calibrated,
                    trunc_box,
                })
            }
            _ => return Err(Error::domain("model file is missing fitted components")),
        };
        Ok(Self {
            output_dim: file.output_dim,
            fitted,
            tol: file.tol,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn low_rank_errors(n: usize, l: usize, noise: f64, seed: u64) -> SampleMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, l, |i, j| {
            let t = j as f64 / l as f64;
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            let w = ((i * 7919) % 13) as f64 / 13.0 - 0.5;
            (3.0 + w) * (std::f64::consts::PI * t).sin() * (1.0 + 0.1 * a) + noise * b
        });
        SampleMatrix::new(m).unwrap()
    }

    #[test]
    fn errors_are_differences() {
        let t = SampleMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let p = SampleMatrix::from_rows(&[vec![0.5, 2.0], vec![3.0, 1.0]]).unwrap();
        let e = compute_errors(&t, &p).unwrap();
        assert_eq!(e.matrix() + p.matrix(), *t.matrix());
        assert_eq!(compute_errors(&t, &t).unwrap().matrix(), &DMatrix::zeros(2, 2));
        let shifted = SampleMatrix::new(p.matrix().map(|v| v + 1.5)).unwrap();
        assert!(compute_errors(&shifted, &p).unwrap().matrix().iter().all(|v| *v == 1.5));
        let short = SampleMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(compute_errors(&short, &p).is_err());
    }

    #[test]
    fn rank_selection() {
        let rank_one = SampleMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-2.0, -4.0, -6.0], vec![0.5, 1.0, 1.5]]).unwrap();
        for f in [0.1, 0.99, 1.0] {
            assert_eq!(error_svd(&rank_one, f).unwrap().k(), 1);
        }
        // singular values (10, 1): 100 / 101 >= 0.99
        let two = SampleMatrix::from_rows(&[vec![10.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let svd = error_svd(&two, 0.99).unwrap();
        assert_eq!(svd.sigma().as_slice(), &[10.0, 1.0]);
        assert_eq!(svd.k(), 1);
        assert_eq!(error_svd(&two, 1.0).unwrap().k(), 2);
        assert!(matches!(
            error_svd(&SampleMatrix::new(DMatrix::zeros(3, 2)).unwrap(), 0.9),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn projection_round_trip() {
        let e = low_rank_errors(40, 12, 0.05, 1);
        let svd = error_svd(&e, 1.0).unwrap();
        let p = project_errors(&svd, &e).unwrap();
        let back = svd.back_map();
        for i in 0..e.nrows() {
            let mut u = p.kept.row(i).iter().copied().collect::<Vec<_>>();
            u.extend(p.truncated.row(i).iter());
            let rec = &back * DVector::from_vec(u);
            assert!((rec - e.row(i)).norm() <= 1e-8 * e.row(i).norm());
            assert!(p.residual_norms[i] <= 1e-8 * e.row(i).norm());
        }
        let first = svd.v().column(0) * svd.sigma()[0];
        let single = SampleMatrix::from_vectors(&[first]).unwrap();
        let q = project_errors(&svd, &single).unwrap();
        assert!((q.kept.row(0)[0] - 1.0).abs() < 1e-12);
        assert!(q.kept.row(0).iter().skip(1).all(|v| v.abs() < 1e-12));
        assert!(q.truncated.row(0).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn calibration_rows_are_jointly_enclosed() {
        let e = low_rank_errors(80, 16, 0.02, 2);
        let grid = AlphaGrid::uniform(200).unwrap();
        let model = build_model(&e, &FitConfig::default(), 0.9, &grid).unwrap();
        let f = model.fitted.as_ref().unwrap();
        let p = project_errors(&f.svd, &e).unwrap();
        let fam = PreparedFamily::new(f.calibrated.family());
        let mut scores = Vec::new();
        for i in 0..e.nrows() {
            let s = calibration::membership_score(&fam, &p.kept.row(i), &grid, 1e-9);
            assert!(s >= 0.0);
            assert!(fam.contains_at(&p.kept.row(i), s, 1e-9));
            assert!(f.trunc_box.contains(&p.truncated.row(i), 1e-9).unwrap());
            scores.push(s);
        }
        assert_eq!(model.product_scores(&e).unwrap(), scores);
    }

    #[test]
    fn smaller_fraction_keeps_fewer_modes() {
        let e = low_rank_errors(60, 10, 0.3, 3);
        let grid = AlphaGrid::uniform(100).unwrap();
        let lo = build_model(&e, &FitConfig::default(), 0.5, &grid).unwrap();
        let hi = build_model(&e, &FitConfig::default(), 0.999, &grid).unwrap();
        assert!(lo.svd().unwrap().k() < hi.svd().unwrap().k());
        assert!(lo.trunc_box().unwrap().dim() > hi.trunc_box().unwrap().dim());
    }

    #[test]
    fn exact_rank_leaves_no_truncation() {
        let e = SampleMatrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 2.0, 0.0], vec![1.0, 1.0, 1.0], vec![-1.0, 0.5, -1.0]]).unwrap();
        let model = build_model(&e, &FitConfig::default(), 1.0, &AlphaGrid::uniform(50).unwrap()).unwrap();
        assert_eq!(model.svd().unwrap().k(), 2);
        assert_eq!(model.trunc_box().unwrap().dim(), 0);
        let base = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let set = model.predict(&base, &[0.5]).unwrap();
        let (z, _) = model.reduced_set(0.5).unwrap();
        let direct = z.linear_map(&model.svd().unwrap().back_map()).unwrap().translate(&base).unwrap();
        assert_eq!(set.sets[0], direct);
    }

    #[test]
    fn sets_shrink_as_eps_grows() {
        let e = low_rank_errors(100, 8, 0.1, 4);
        let model = build_model(&e, &FitConfig::default(), 0.95, &AlphaGrid::uniform(500).unwrap()).unwrap();
        let base = DVector::from_element(8, 0.3);
        let set = model.predict(&base, &[0.1, 0.2, 0.5]).unwrap();
        assert!(set.calibrated_alphas.windows(2).all(|w| w[0] <= w[1]));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for w in 1..3 {
            let outer = PreparedZonotope::new(&set.sets[w - 1]);
            for _ in 0..200 {
                let x = set.sets[w].sample(&mut rng);
                assert!(outer.contains(&x, 1e-7));
            }
        }
    }

    #[test]
    fn core_point_truth_is_always_covered() {
        let e = low_rank_errors(60, 10, 0.2, 5);
        let model = build_model(&e, &FitConfig::default(), 0.9, &AlphaGrid::uniform(100).unwrap()).unwrap();
        let f = model.fitted.as_ref().unwrap();
        let mut u: Vec<f64> = f.calibrated.family().core().iter().copied().collect();
        u.extend(f.trunc_box.center().iter());
        let base = DVector::from_element(10, -1.0);
        let truth = &base + f.svd.back_map() * DVector::from_vec(u);
        for eps in [0.05, 0.2, 0.9] {
            assert!(model.contains_function(eps, &base, &truth, f64::INFINITY).unwrap());
        }
    }

    #[test]
    fn orthogonal_residual_fails_strict_check() {
        // errors live in the first two coordinates only
        let e = SampleMatrix::from_rows(&[vec![1.0, 0.5, 0.0], vec![-0.5, 1.0, 0.0], vec![0.2, -0.3, 0.0], vec![0.7, 0.1, 0.0]]).unwrap();
        let model = build_model(&e, &FitConfig::default(), 1.0, &AlphaGrid::uniform(50).unwrap()).unwrap();
        let base = DVector::zeros(3);
        let f = model.fitted.as_ref().unwrap();
        let mut u: Vec<f64> = f.calibrated.family().core().iter().copied().collect();
        u.extend(f.trunc_box.center().iter());
        let truth = f.svd.back_map() * DVector::from_vec(u) + DVector::from_vec(vec![0.0, 0.0, 5.0]);
        assert!(!model.contains_function(0.1, &base, &truth, 1e-6).unwrap());
        assert!(model.contains_function(0.1, &base, &truth, f64::INFINITY).unwrap());
    }

    #[test]
    fn zero_errors_give_singletons() {
        let e = SampleMatrix::new(DMatrix::zeros(5, 4)).unwrap();
        let model = build_model(&e, &FitConfig::default(), 0.99, &AlphaGrid::uniform(10).unwrap()).unwrap();
        assert!(model.is_degenerate());
        let base = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let set = model.predict(&base, &[0.1, 0.2]).unwrap();
        for z in &set.sets {
            assert!(z.is_singleton());
            assert_eq!(z.center(), &base);
        }
        assert!(model.contains_function(0.1, &base, &base, 0.0).unwrap());
    }

    #[test]
    fn save_and_load() {
        let dir = std::env::temp_dir().join(format!("zonoconform-model-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let e = low_rank_errors(30, 6, 0.1, 6);
        let model = build_model(&e, &FitConfig::default(), 0.9, &AlphaGrid::uniform(100).unwrap()).unwrap();
        let path = dir.join("m.json");
        model.save(&path).unwrap();
        assert!(dir.join("m.v.csv").exists());
        assert_eq!(FunctionalConformalModel::load(&path).unwrap(), model);
        let zero = build_model(&SampleMatrix::new(DMatrix::zeros(3, 2)).unwrap(), &FitConfig::default(), 0.9, &AlphaGrid::uniform(10).unwrap()).unwrap();
        zero.save(dir.join("z.json")).unwrap();
        assert_eq!(FunctionalConformalModel::load(dir.join("z.json")).unwrap(), zero);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
