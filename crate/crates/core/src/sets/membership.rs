//! Membership tests with per-zonotope precomputation.
//!
//! A point `x` lies in `<c, G>` at tolerance `tol` when some `xi` with
//! `|xi|_inf <= 1 + tol` solves `G xi = x - c`. Depending on `G` this is
//! decided by
//!
//! - a cached inverse when `G` is square and well conditioned,
//! - the facet description `|a^T (x - c)| <= (1 + tol) h_a` for small
//!   full-dimensional zonotopes, where `h_a = sum_k |a^T g_k|` (the gauge of a
//!   zonotope is the largest such ratio, so both tests agree exactly),
//! - a feasibility LP in `xi` otherwise.

use nalgebra::{DMatrix, DVector};

use super::{flat_tolerance, NestedZonotopeFamily, Zonotope};
use crate::lp::{LinearProgram, LpOutcome, Relation};

/// Largest dimension for which the facet description is precomputed.
const MAX_FACET_DIM: usize = 10;
/// Largest facet count for which the facet description is precomputed.
const MAX_FACETS: usize = 20_000;

#[derive(Debug, Clone)]
enum Kind {
    Singleton,
    Inverse(DMatrix<f64>),
    Facets {
        normals: DMatrix<f64>,
        support: DVector<f64>,
    },
    Lp,
}

#[derive(Debug, Clone)]
pub struct PreparedZonotope {
    zonotope: Zonotope,
    kind: Kind,
}

impl PreparedZonotope {
    pub fn new(z: &Zonotope) -> Self {
        let kind = classify(z);
        Self {
            zonotope: z.clone(),
            kind,
        }
    }

    pub fn zonotope(&self) -> &Zonotope {
        &self.zonotope
    }

    /// Dimensions are not checked; see [`Zonotope::contains`].
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        let z = &self.zonotope;
        let y = x - z.center();
        match &self.kind {
            Kind::Singleton => y.amax() <= flat_tolerance(tol, 0.0, z.center().amax()),
            Kind::Inverse(inv) => (inv * y).amax() <= 1.0 + tol,
            Kind::Facets { normals, support } => {
                let s = normals * y;
                s.iter().zip(support.iter()).all(|(a, h)| a.abs() <= (1.0 + tol) * h)
            }
            Kind::Lp => lp_member(z.generators(), &y, tol, z.generator_scale(), z.center().amax()),
        }
    }
}

fn classify(z: &Zonotope) -> Kind {
    let g = z.generators();
    let n = z.dim();
    if z.is_singleton() {
        return Kind::Singleton;
    }
    if g.is_square() {
        let sv = g.singular_values();
        if sv.min() > 1e-12 * sv.max() {
            if let Some(inv) = g.clone().try_inverse() {
                return Kind::Inverse(inv);
            }
        }
    }
    if n <= MAX_FACET_DIM {
        let nonzero = g.column_iter().filter(|c| c.amax() > 0.0).count();
        if n >= 1 && subsets_at_most(nonzero, n - 1, MAX_FACETS) {
            if let Ok(normals) = z.facet_normals() {
                let a = DMatrix::from_fn(normals.len(), n, |i, j| normals[i][j]);
                let support = DVector::from_fn(normals.len(), |i, _| {
                    (a.row(i) * g).iter().map(|v| v.abs()).sum()
                });
                if support.iter().all(|h| *h > 0.0) {
                    return Kind::Facets { normals: a, support };
                }
            }
        }
    }
    Kind::Lp
}

fn subsets_at_most(n: usize, k: usize, cap: usize) -> bool {
    if k > n {
        return true;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > cap as u128 {
            return false;
        }
    }
    true
}

/// Feasibility of `G xi = y`, `|xi|_inf <= 1 + tol`, with each row scaled to
/// unit max-norm. Rows of `G` that are zero demand `|y_i|` below the flat
/// tolerance.
fn lp_member(g: &DMatrix<f64>, y: &DVector<f64>, tol: f64, scale: f64, center_norm: f64) -> bool {
    let (n, p) = g.shape();
    let flat = flat_tolerance(tol, scale, center_norm);
    let bound = 1.0 + tol;
    let mut lp = LinearProgram::new(p);
    for j in 0..p {
        lp.set_bounds(j, -bound, bound);
    }
    for i in 0..n {
        let row_scale = g.row(i).amax();
        if row_scale == 0.0 {
            if y[i].abs() > flat {
                return false;
            }
            continue;
        }
        let coeffs = g.row(i).iter().map(|v| v / row_scale).collect();
        lp.add_constraint(coeffs, Relation::Eq, y[i] / row_scale);
    }
    matches!(lp.solve(), Ok(LpOutcome::Optimal(_)))
}

/// A nested family prepared for repeated membership queries across levels.
#[derive(Debug, Clone)]
pub struct PreparedFamily {
    family: NestedZonotopeFamily,
    base: PreparedZonotope,
    /// The core in the coordinates of the fast path (`G^-1 (p - c)` or
    /// `A (p - c)`).
    core_coords: Option<DVector<f64>>,
}

impl PreparedFamily {
    pub fn new(family: &NestedZonotopeFamily) -> Self {
        let base = PreparedZonotope::new(family.base());
        let offset = family.core() - family.base().center();
        let core_coords = match &base.kind {
            Kind::Inverse(inv) => Some(inv * offset),
            Kind::Facets { normals, .. } => Some(normals * offset),
            _ => None,
        };
        Self {
            family: family.clone(),
            base,
            core_coords,
        }
    }

    pub fn family(&self) -> &NestedZonotopeFamily {
        &self.family
    }

    pub fn base(&self) -> &PreparedZonotope {
        &self.base
    }

    /// Precomputes the point-dependent part of the level tests for `x`.
    pub fn probe(&self, x: &DVector<f64>) -> Probe<'_> {
        let y = x - self.family.base().center();
        let coords = match &self.base.kind {
            Kind::Inverse(inv) => Some(inv * y),
            Kind::Facets { normals, .. } => Some(normals * y),
            _ => None,
        };
        Probe {
            family: self,
            x: x.clone(),
            coords,
        }
    }

    pub fn contains_at(&self, x: &DVector<f64>, alpha: f64, tol: f64) -> bool {
        self.probe(x).contains(alpha, tol)
    }
}

/// Membership of one point in the levels of a [`PreparedFamily`].
pub struct Probe<'a> {
    family: &'a PreparedFamily,
    x: DVector<f64>,
    coords: Option<DVector<f64>>,
}

impl Probe<'_> {
    /// Whether the point lies in `Z^alpha`.
    pub fn contains(&self, alpha: f64, tol: f64) -> bool {
        let fam = &self.family.family;
        let core = fam.core();
        if alpha >= 1.0 || self.family.base.zonotope.is_singleton() {
            let flat = flat_tolerance(tol, 0.0, core.amax());
            return (&self.x - core).amax() <= flat;
        }
        if alpha == 0.0 {
            return self.base_contains(tol);
        }
        let shrink = 1.0 - alpha;
        let (Some(s), Some(q)) = (&self.coords, &self.family.core_coords) else {
            let z = fam.nested_at(alpha).expect("alpha checked by caller");
            let y = &self.x - z.center();
            return lp_member(z.generators(), &y, tol, z.generator_scale(), z.center().amax());
        };
        match &self.family.base.kind {
            Kind::Inverse(_) => s
                .iter()
                .zip(q.iter())
                .all(|(s, q)| (s - alpha * q).abs() <= (1.0 + tol) * shrink),
            Kind::Facets { support, .. } => s
                .iter()
                .zip(q.iter())
                .zip(support.iter())
                .all(|((s, q), h)| (s - alpha * q).abs() <= (1.0 + tol) * shrink * h),
            _ => unreachable!("coordinates exist only for the fast paths"),
        }
    }

    fn base_contains(&self, tol: f64) -> bool {
        match (&self.coords, &self.family.base.kind) {
            (Some(s), Kind::Inverse(_)) => s.amax() <= 1.0 + tol,
            (Some(s), Kind::Facets { support, .. }) => s
                .iter()
                .zip(support.iter())
                .all(|(a, h)| a.abs() <= (1.0 + tol) * h),
            _ => self.family.base.contains(&self.x, tol),
        }
    }
}
