use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{check_alpha, flat_tolerance};
use crate::data::SampleMatrix;
use crate::{Error, Result, DEFAULT_TOL};

/// Axis-aligned box `{x : |x_i - c_i| <= r_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxRepr", into = "BoxRepr")]
pub struct Hyperrectangle {
    center: DVector<f64>,
    radius: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct BoxRepr {
    center: Vec<f64>,
    radius: Vec<f64>,
}

impl TryFrom<BoxRepr> for Hyperrectangle {
    type Error = Error;

    fn try_from(r: BoxRepr) -> Result<Self> {
        Hyperrectangle::new(DVector::from_vec(r.center), DVector::from_vec(r.radius))
    }
}

impl From<Hyperrectangle> for BoxRepr {
    fn from(b: Hyperrectangle) -> Self {
        Self {
            center: b.center.iter().copied().collect(),
            radius: b.radius.iter().copied().collect(),
        }
    }
}

impl Hyperrectangle {
    pub fn new(center: DVector<f64>, radius: DVector<f64>) -> Result<Self> {
        if center.len() != radius.len() {
            return Err(Error::dims(center.len(), radius.len()));
        }
        if radius.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::domain("box radii must be finite and nonnegative"));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("box center must be finite"));
        }
        Ok(Self { center, radius })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn radius(&self) -> &DVector<f64> {
        &self.radius
    }

    pub fn lower(&self) -> DVector<f64> {
        &self.center - &self.radius
    }

    pub fn upper(&self) -> DVector<f64> {
        &self.center + &self.radius
    }

    /// Same convention as zonotope membership: each coordinate may exceed its
    /// radius by the factor `1 + tol`.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        if x.len() != self.dim() {
            return Err(Error::dims(self.dim(), x.len()));
        }
        let flat = flat_tolerance(tol, self.radius.amax(), self.center.amax());
        Ok((0..self.dim()).all(|i| {
            let dev = (x[i] - self.center[i]).abs();
            if self.radius[i] > 0.0 {
                dev <= (1.0 + tol) * self.radius[i]
            } else {
                dev <= flat
            }
        }))
    }

    /// Radii scaled by `1 + factor`.
    pub fn inflate(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0) {
            return Err(Error::domain("inflation must be nonnegative"));
        }
        Self::new(self.center.clone(), &self.radius * (1.0 + factor))
    }

    /// `<(1-a) c + a p, (1-a) r>`; `core` must lie in the box.
    pub fn nested_at(&self, core: &DVector<f64>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !self.contains(core, DEFAULT_TOL)? {
            return Err(Error::domain("core point lies outside the box"));
        }
        Self::new(
            &self.center * (1.0 - alpha) + core * alpha,
            &self.radius * (1.0 - alpha),
        )
    }
}

/// Smallest box containing every row.
pub fn interval_hull(points: &SampleMatrix) -> Result<Hyperrectangle> {
    if points.is_empty() {
        return Err(Error::domain("interval hull of an empty sample"));
    }
    let m = points.matrix();
    let d = points.dim();
    let mut center = DVector::zeros(d);
    let mut radius = DVector::zeros(d);
    for j in 0..d {
        let col = m.column(j);
        let (lo, hi) = (col.min(), col.max());
        center[j] = 0.5 * (lo + hi);
        radius[j] = 0.5 * (hi - lo);
    }
    // (lo + hi) / 2 can round so that an extreme point sits just outside
    for j in 0..d {
        let col = m.column(j);
        let dev = col.iter().map(|v| (v - center[j]).abs()).fold(0.0, f64::max);
        radius[j] = radius[j].max(dev);
    }
    Hyperrectangle::new(center, radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn hull_of_two_points() {
        let pts = SampleMatrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 4.0]]).unwrap();
        let b = interval_hull(&pts).unwrap();
        assert_eq!(b.center(), &v(&[1.0, 2.0]));
        assert_eq!(b.radius(), &v(&[1.0, 2.0]));
        for x in pts.rows() {
            assert!(b.contains(&x, 0.0).unwrap());
        }
    }

    #[test]
    fn hull_of_one_point_is_flat() {
        let pts = SampleMatrix::from_rows(&[vec![0.3, -1.0]]).unwrap();
        let b = interval_hull(&pts).unwrap();
        assert_eq!(b.radius(), &v(&[0.0, 0.0]));
        assert!(b.contains(&v(&[0.3, -1.0]), 1e-9).unwrap());
        assert!(interval_hull(&SampleMatrix::from_rows(&[]).unwrap()).is_err());
    }

    #[test]
    fn nested_boxes() {
        let b = Hyperrectangle::new(v(&[0.0, 0.0]), v(&[2.0, 1.0])).unwrap();
        let core = v(&[1.0, 0.0]);
        assert_eq!(b.nested_at(&core, 0.0).unwrap(), b);
        let half = b.nested_at(&core, 0.5).unwrap();
        assert_eq!(half.center(), &v(&[0.5, 0.0]));
        assert_eq!(half.radius(), &v(&[1.0, 0.5]));
        let point = b.nested_at(&core, 1.0).unwrap();
        assert_eq!(point.radius(), &v(&[0.0, 0.0]));
        assert_eq!(point.center(), &core);
        assert!(b.nested_at(&v(&[3.0, 0.0]), 0.5).is_err());
        assert!(b.nested_at(&core, 1.5).is_err());
    }

    #[test]
    fn negative_radius_is_rejected() {
        assert!(Hyperrectangle::new(v(&[0.0]), v(&[-1.0])).is_err());
    }
}
