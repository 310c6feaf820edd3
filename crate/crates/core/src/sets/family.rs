use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{check_alpha, Zonotope};
use crate::{Error, Result};

/// A base zonotope `Z` and a core point `p` inside it, giving the nested sets
/// `Z^a = <c(1-a) + p a, G(1-a)>`.
///
/// All members share the shape of `Z`; they differ only by a translation and
/// a contraction, and `p` is the one point contained in every member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FamilyRepr", into = "FamilyRepr")]
pub struct NestedZonotopeFamily {
    base: Zonotope,
    core: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct FamilyRepr {
    base: Zonotope,
    core: Vec<f64>,
}

impl TryFrom<FamilyRepr> for NestedZonotopeFamily {
    type Error = Error;

    fn try_from(r: FamilyRepr) -> Result<Self> {
        NestedZonotopeFamily::new(r.base, DVector::from_vec(r.core), crate::DEFAULT_TOL)
    }
}

impl From<NestedZonotopeFamily> for FamilyRepr {
    fn from(f: NestedZonotopeFamily) -> Self {
        Self {
            base: f.base,
            core: f.core.iter().copied().collect(),
        }
    }
}

impl NestedZonotopeFamily {
    pub fn new(base: Zonotope, core: DVector<f64>, tol: f64) -> Result<Self> {
        if !base.contains(&core, tol)? {
            return Err(Error::domain("core point is not a member of the base zonotope"));
        }
        Ok(Self { base, core })
    }

    pub fn base(&self) -> &Zonotope {
        &self.base
    }

    pub fn core(&self) -> &DVector<f64> {
        &self.core
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn nested_at(&self, alpha: f64) -> Result<Zonotope> {
        check_alpha(alpha)?;
        if alpha == 0.0 {
            return Ok(self.base.clone());
        }
        let s = 1.0 - alpha;
        Zonotope::new(
            self.base.center() * s + &self.core * alpha,
            self.base.generators() * s,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn family() -> NestedZonotopeFamily {
        let z = Zonotope::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[3.0, 1.0, -1.0, 1.0]),
        )
        .unwrap();
        NestedZonotopeFamily::new(z, DVector::from_vec(vec![-2.0, 1.0]), 1e-9).unwrap()
    }

    #[test]
    fn endpoints() {
        let f = family();
        assert_eq!(&f.nested_at(0.0).unwrap(), f.base());
        let top = f.nested_at(1.0).unwrap();
        assert_eq!(top.center(), f.core());
        assert!(top.is_singleton());
    }

    #[test]
    fn midpoint_evaluation() {
        let half = family().nested_at(0.5).unwrap();
        assert_eq!(half.center(), &DVector::from_vec(vec![-1.0, 0.5]));
        assert_eq!(
            half.generators(),
            &DMatrix::from_row_slice(2, 2, &[1.5, 0.5, -0.5, 0.5])
        );
    }

    #[test]
    fn alpha_out_of_range() {
        assert!(family().nested_at(-0.1).is_err());
        assert!(family().nested_at(1.1).is_err());
    }

    #[test]
    fn core_must_be_inside() {
        let z = family().base().clone();
        assert!(NestedZonotopeFamily::new(z, DVector::from_vec(vec![10.0, 0.0]), 1e-9).is_err());
    }
}
