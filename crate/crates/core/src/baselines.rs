//! Reference conformal methods: the supremum (modulation) band and the
//! Mahalanobis ellipsoid.
//!
//! Both use the usual split-conformal quantile: the `ceil((1-eps)(n+1))`-th
//! smallest calibration score, clamped to `n`. Each calibration row is scored
//! on its own (sup over the output coordinates only).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SampleMatrix;
use crate::linalg::{covariance, SpdFactor};
use crate::sets::Hyperrectangle;
use crate::{Error, Result};

/// Floor applied to per-coordinate standard deviations.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Largest output dimension accepted by the elliptical baseline.
pub const MAX_ELLIPTICAL_DIM: usize = 32;

/// Condition-number ceiling for the elliptical covariance.
pub const MAX_ELLIPTICAL_CONDITION: f64 = 1e12;

/// 1-based index `ceil((1-eps)(n+1))`, clamped to `[1, n]`.
pub fn conformal_index(eps: f64, n: usize) -> usize {
    let raw = ((1.0 - eps) * (n as f64 + 1.0) - 1e-9).ceil();
    (raw.max(1.0) as usize).min(n)
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("eps must lie in (0, 1), got {eps}")))
    }
}

fn sorted(mut scores: Vec<f64>) -> Vec<f64> {
    scores.sort_by(f64::total_cmp);
    scores
}

/// Supremum band `f(x) +- q sigma(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationModel {
    sigma_t: Vec<f64>,
    scores: Vec<f64>,
}

/// `sigma(t)` is the root mean square of the errors per coordinate, i.e. the
/// spread around the predictor rather than around the error mean.
pub fn modulation_calibrate(errors: &SampleMatrix) -> Result<ModulationModel> {
    let n = errors.nrows();
    if n < 2 {
        return Err(Error::domain("modulation calibration needs at least two rows"));
    }
    let m = errors.matrix();
    let mut floored = 0;
    let sigma_t: Vec<f64> = (0..errors.dim())
        .map(|j| {
            let s = (m.column(j).norm_squared() / (n - 1) as f64).sqrt();
            if s < SIGMA_FLOOR {
                floored += 1;
                SIGMA_FLOOR
            } else {
                s
            }
        })
        .collect();
    if floored > 0 {
        log::warn!("{floored} output coordinate(s) have zero spread; sigma floored at {SIGMA_FLOOR:e}");
    }
    let scores = (0..n)
        .into_par_iter()
        .map(|i| {
            m.row(i)
                .iter()
                .zip(&sigma_t)
                .map(|(e, s)| e.abs() / s)
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(ModulationModel {
        sigma_t,
        scores: sorted(scores),
    })
}

impl ModulationModel {
    pub fn sigma_t(&self) -> &[f64] {
        &self.sigma_t
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn dim(&self) -> usize {
        self.sigma_t.len()
    }

    pub fn score(&self, e: &DVector<f64>) -> Result<f64> {
        if e.len() != self.dim() {
            return Err(Error::dims(self.dim(), e.len()));
        }
        Ok(e.iter().zip(&self.sigma_t).map(|(e, s)| e.abs() / s).fold(0.0, f64::max))
    }

    pub fn quantile(&self, eps: f64) -> Result<f64> {
        check_eps(eps)?;
        Ok(self.scores[conformal_index(eps, self.scores.len()) - 1])
    }

    pub fn contains(&self, base_point: &DVector<f64>, truth: &DVector<f64>, eps: f64) -> Result<bool> {
        if base_point.len() != truth.len() {
            return Err(Error::dims(base_point.len(), truth.len()));
        }
        Ok(self.score(&(truth - base_point))? <= self.quantile(eps)?)
    }
}

/// Band `[base - q sigma, base + q sigma]` per coordinate.
pub fn modulation_band(model: &ModulationModel, base_point: &DVector<f64>, eps: f64) -> Result<Hyperrectangle> {
    if base_point.len() != model.dim() {
        return Err(Error::dims(model.dim(), base_point.len()));
    }
    let q = model.quantile(eps)?;
    Hyperrectangle::new(
        base_point.clone(),
        DVector::from_iterator(model.dim(), model.sigma_t.iter().map(|s| q * s)),
    )
}

/// Ellipsoid `{y : |y - f(x)|_{Sigma^-1} <= q}` centred at the prediction.
#[derive(Debug, Clone)]
pub struct EllipticalModel {
    sigma_hat: DMatrix<f64>,
    factor: SpdFactor,
    scores: Vec<f64>,
}

pub fn elliptical_calibrate(errors: &SampleMatrix) -> Result<EllipticalModel> {
    let (n, d) = (errors.nrows(), errors.dim());
    if d > MAX_ELLIPTICAL_DIM {
        return Err(Error::UnsupportedDimension {
            dim: d,
            max: MAX_ELLIPTICAL_DIM,
            hint: "reduce the outputs with the error SVD first",
        });
    }
    if n <= d {
        return Err(Error::domain(format!(
            "elliptical calibration needs more rows than dimensions ({n} <= {d})"
        )));
    }
    let (_, sigma_hat) = covariance(errors.matrix());
    let factor = SpdFactor::new(&sigma_hat, MAX_ELLIPTICAL_CONDITION, "use the modulation band instead")?;
    let scores = (0..n)
        .into_par_iter()
        .map(|i| factor.mahalanobis(&errors.row(i)))
        .collect();
    Ok(EllipticalModel {
        sigma_hat,
        factor,
        scores: sorted(scores),
    })
}

impl EllipticalModel {
    pub fn sigma_hat(&self) -> &DMatrix<f64> {
        &self.sigma_hat
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn dim(&self) -> usize {
        self.sigma_hat.nrows()
    }

    pub fn score(&self, e: &DVector<f64>) -> Result<f64> {
        if e.len() != self.dim() {
            return Err(Error::dims(self.dim(), e.len()));
        }
        Ok(self.factor.mahalanobis(e))
    }

    pub fn quantile(&self, eps: f64) -> Result<f64> {
        check_eps(eps)?;
        Ok(self.scores[conformal_index(eps, self.scores.len()) - 1])
    }

    /// Axis extents of the ellipsoid: `q sqrt(Sigma_ii)`.
    pub fn envelope(&self, base_point: &DVector<f64>, eps: f64) -> Result<Hyperrectangle> {
        if base_point.len() != self.dim() {
            return Err(Error::dims(self.dim(), base_point.len()));
        }
        let q = self.quantile(eps)?;
        Hyperrectangle::new(
            base_point.clone(),
            DVector::from_fn(self.dim(), |i, _| q * self.sigma_hat[(i, i)].sqrt()),
        )
    }

    /// Area of the projection onto coordinates `(i, j)`: `pi q^2 sqrt(det)` of
    /// the 2x2 covariance block.
    pub fn projected_area_2d(&self, eps: f64, i: usize, j: usize) -> Result<f64> {
        let d = self.dim();
        if i >= d || j >= d || i == j {
            return Err(Error::domain(format!("invalid coordinate pair ({i}, {j}) for dimension {d}")));
        }
        let q = self.quantile(eps)?;
        let s = &self.sigma_hat;
        let det = (s[(i, i)] * s[(j, j)] - s[(i, j)] * s[(j, i)]).max(0.0);
        Ok(std::f64::consts::PI * q * q * det.sqrt())
    }
}

pub fn elliptical_contains(
    model: &EllipticalModel,
    base_point: &DVector<f64>,
    truth: &DVector<f64>,
    eps: f64,
) -> Result<bool> {
    if base_point.len() != truth.len() {
        return Err(Error::dims(base_point.len(), truth.len()));
    }
    Ok(model.score(&(truth - base_point))? <= model.quantile(eps)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn conformal_index_values() {
        assert_eq!(conformal_index(0.1, 9), 9);
        assert_eq!(conformal_index(0.1, 99), 90);
        assert_eq!(conformal_index(0.5, 3), 2);
        assert_eq!(conformal_index(0.01, 10), 10);
        assert_eq!(conformal_index(0.99, 10), 1);
    }

    #[test]
    fn identical_rows_give_tight_band() {
        let e = SampleMatrix::from_rows(&vec![vec![1.0, -2.0, 0.5]; 6]).unwrap();
        let m = modulation_calibrate(&e).unwrap();
        assert!(m.scores().windows(2).all(|w| w[0] == w[1]));
        let base = DVector::from_vec(vec![10.0, 10.0, 10.0]);
        let truth = &base + e.row(0);
        for eps in [0.1, 0.5, 0.9] {
            assert!(m.contains(&base, &truth, eps).unwrap());
            let band = modulation_band(&m, &base, eps).unwrap();
            // the sup coordinate touches the band edge
            let edge = (0..3).any(|j| ((truth[j] - base[j]).abs() - band.radius()[j]).abs() < 1e-12);
            assert!(edge);
        }
    }

    #[test]
    fn modulation_scale_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = SampleMatrix::new(gaussian(50, 4, &mut rng)).unwrap();
        let mut scaled = e.matrix().clone();
        scaled.column_mut(2).scale_mut(2.0);
        let a = modulation_calibrate(&e).unwrap();
        let b = modulation_calibrate(&SampleMatrix::new(scaled).unwrap()).unwrap();
        for (x, y) in a.scores().iter().zip(b.scores()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        let base = DVector::zeros(4);
        let ba = modulation_band(&a, &base, 0.1).unwrap();
        let bb = modulation_band(&b, &base, 0.1).unwrap();
        assert!((bb.radius()[2] - 2.0 * ba.radius()[2]).abs() < 1e-12);
        assert!((bb.radius()[0] - ba.radius()[0]).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_coordinate_is_floored() {
        let e = SampleMatrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.5, 0.0]]).unwrap();
        let m = modulation_calibrate(&e).unwrap();
        assert_eq!(m.sigma_t()[1], SIGMA_FLOOR);
        assert!(modulation_calibrate(&SampleMatrix::from_rows(&[vec![1.0]]).unwrap()).is_err());
        assert!(m.quantile(0.0).is_err());
    }

    #[test]
    fn whitened_scores_are_norms() {
        // rows +-e_i have covariance exactly I * 2n/(2n-1); rescale to I
        let d = 3;
        let mut rows = Vec::new();
        for i in 0..d {
            for s in [1.0, -1.0] {
                let mut r = vec![0.0; d];
                r[i] = s;
                rows.push(r);
            }
        }
        let n = rows.len() as f64;
        let c = ((n - 1.0) / 2.0).sqrt();
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
        let e = SampleMatrix::from_rows(&rows).unwrap();
        let m = elliptical_calibrate(&e).unwrap();
        assert!((m.sigma_hat() - DMatrix::identity(d, d)).amax() < 1e-12);
        let x = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        assert!((m.score(&x).unwrap() - x.norm()).abs() < 1e-12);
    }

    #[test]
    fn elliptical_ranking_is_linear_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = gaussian(40, 3, &mut rng);
        let a = gaussian(3, 3, &mut rng) + DMatrix::identity(3, 3) * 3.0;
        let m1 = elliptical_calibrate(&SampleMatrix::new(e.clone()).unwrap()).unwrap();
        let m2 = elliptical_calibrate(&SampleMatrix::new(&e * a.transpose()).unwrap()).unwrap();
        let order = |m: &EllipticalModel, x: &DMatrix<f64>| {
            let s: Vec<f64> = (0..x.nrows()).map(|i| m.score(&x.row(i).transpose()).unwrap()).collect();
            let mut idx: Vec<usize> = (0..s.len()).collect();
            idx.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
            idx
        };
        assert_eq!(order(&m1, &e), order(&m2, &(&e * a.transpose())));
    }

    #[test]
    fn elliptical_boundary_and_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = SampleMatrix::new(gaussian(30, 2, &mut rng)).unwrap();
        let m = elliptical_calibrate(&e).unwrap();
        let base = DVector::from_vec(vec![1.0, 1.0]);
        assert!(elliptical_contains(&m, &base, &base, 0.3).unwrap());
        // the row holding the quantile score sits exactly on the boundary
        let q = m.quantile(0.2).unwrap();
        let row = (0..30).find(|&i| m.score(&e.row(i)).unwrap() == q).unwrap();
        assert!(elliptical_contains(&m, &base, &(&base + e.row(row)), 0.2).unwrap());
        let wide = SampleMatrix::new(gaussian(40, 33, &mut rng)).unwrap();
        assert!(matches!(elliptical_calibrate(&wide), Err(Error::UnsupportedDimension { .. })));
        let flat = SampleMatrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]).unwrap();
        assert!(matches!(elliptical_calibrate(&flat), Err(Error::SingularCovariance { .. })));
    }

    #[test]
    fn gaussian_coverage_matches_chi_distribution() {
        // for 2D standard normal errors, P(|e| <= q) = 1 - exp(-q^2 / 2)
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = elliptical_calibrate(&SampleMatrix::new(gaussian(2000, 2, &mut rng)).unwrap()).unwrap();
        let test = gaussian(20000, 2, &mut rng);
        let base = DVector::zeros(2);
        let eps = 0.1;
        let hits = (0..test.nrows())
            .filter(|&i| elliptical_contains(&m, &base, &test.row(i).transpose(), eps).unwrap())
            .count() as f64
            / test.nrows() as f64;
        let q = m.quantile(eps).unwrap();
        let s = m.sigma_hat();
        // oracle coverage for the fitted ellipse, approximating Sigma_hat by I
        let oracle = 1.0 - (-q * q / 2.0).exp();
        assert!((s - DMatrix::identity(2, 2)).amax() < 0.1);
        assert!((hits - oracle).abs() < 0.02, "{hits} vs {oracle}");
        assert!(hits >= 1.0 - eps - 3.0 * (eps * (1.0 - eps) / 20000.0).sqrt() - 0.01);
    }
}
