use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Hyperrectangle, PreparedZonotope};
use crate::linalg::{canonical_direction, generalized_cross, rank};
use crate::{Error, Result};

/// Largest number of generator subsets enumerated by [`Zonotope::facet_normals`].
const MAX_FACET_SUBSETS: u128 = 2_000_000;

/// `<c, G>`: the set `{c + G xi : xi in [-1, 1]^p}`.
///
/// `p = 0` is allowed and denotes the singleton `{c}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ZonotopeRepr", into = "ZonotopeRepr")]
pub struct Zonotope {
    center: DVector<f64>,
    generators: DMatrix<f64>,
}

/// JSON form; generators are listed column by column.
#[derive(Serialize, Deserialize)]
struct ZonotopeRepr {
    center: Vec<f64>,
    generators: Vec<Vec<f64>>,
}

impl TryFrom<ZonotopeRepr> for Zonotope {
    type Error = Error;

    fn try_from(r: ZonotopeRepr) -> Result<Self> {
        let n = r.center.len();
        if let Some(bad) = r.generators.iter().find(|g| g.len() != n) {
            return Err(Error::dims(n, bad.len()));
        }
        let g = DMatrix::from_fn(n, r.generators.len(), |i, j| r.generators[j][i]);
        Zonotope::new(DVector::from_vec(r.center), g)
    }
}

impl From<Zonotope> for ZonotopeRepr {
    fn from(z: Zonotope) -> Self {
        Self {
            center: z.center.iter().copied().collect(),
            generators: z
                .generators
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
        }
    }
}

impl Zonotope {
    pub fn new(center: DVector<f64>, generators: DMatrix<f64>) -> Result<Self> {
        if generators.nrows() != center.len() {
            return Err(Error::dims(center.len(), generators.nrows()));
        }
        if center.iter().chain(generators.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("zonotope entries must be finite"));
        }
        Ok(Self { center, generators })
    }

    pub fn singleton(point: DVector<f64>) -> Result<Self> {
        let n = point.len();
        Self::new(point, DMatrix::zeros(n, 0))
    }

    /// Box with `G = diag(r)`.
    pub fn from_hyperrectangle(b: &Hyperrectangle) -> Self {
        Self {
            center: b.center().clone(),
            generators: DMatrix::from_diagonal(b.radius()),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn generators(&self) -> &DMatrix<f64> {
        &self.generators
    }

    /// Largest absolute generator entry.
    pub fn generator_scale(&self) -> f64 {
        self.generators.amax()
    }

    pub fn is_singleton(&self) -> bool {
        self.generator_scale() == 0.0
    }

    /// `c + G xi`.
    pub fn point(&self, xi: &DVector<f64>) -> Result<DVector<f64>> {
        if xi.len() != self.num_generators() {
            return Err(Error::dims(self.num_generators(), xi.len()));
        }
        Ok(&self.center + &self.generators * xi)
    }

    /// A point with coefficients drawn uniformly from `[-1, 1]^p`. The draw
    /// covers the whole set but is not uniform over its volume.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let xi = DVector::from_fn(self.num_generators(), |_, _| rng.random_range(-1.0..=1.0));
        &self.center + &self.generators * xi
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        if x.len() != self.dim() {
            return Err(Error::dims(self.dim(), x.len()));
        }
        Ok(PreparedZonotope::new(self).contains(x, tol))
    }

    /// Exact image `<Mc, MG>`.
    pub fn linear_map(&self, m: &DMatrix<f64>) -> Result<Self> {
        if m.ncols() != self.dim() {
            return Err(Error::dims(self.dim(), m.ncols()));
        }
        Self::new(m * &self.center, m * &self.generators)
    }

    /// Minkowski sum with the point `v`.
    pub fn translate(&self, v: &DVector<f64>) -> Result<Self> {
        if v.len() != self.dim() {
            return Err(Error::dims(self.dim(), v.len()));
        }
        Ok(Self {
            center: &self.center + v,
            generators: self.generators.clone(),
        })
    }

    /// `self x other` with block-diagonal generators.
    pub fn cartesian_product(&self, other: &Zonotope) -> Self {
        let (n1, p1) = self.generators.shape();
        let (n2, p2) = other.generators.shape();
        let mut g = DMatrix::zeros(n1 + n2, p1 + p2);
        g.view_mut((0, 0), (n1, p1)).copy_from(&self.generators);
        g.view_mut((n1, p1), (n2, p2)).copy_from(&other.generators);
        let mut c = DVector::zeros(n1 + n2);
        c.rows_mut(0, n1).copy_from(&self.center);
        c.rows_mut(n1, n2).copy_from(&other.center);
        Self {
            center: c,
            generators: g,
        }
    }

    /// Drops generator columns that are exactly zero.
    pub fn without_zero_generators(&self) -> Self {
        let keep: Vec<usize> = (0..self.num_generators())
            .filter(|&j| self.generators.column(j).iter().any(|v| *v != 0.0))
            .collect();
        Self {
            center: self.center.clone(),
            generators: self.generators.select_columns(&keep),
        }
    }

    /// Tightest axis-aligned box containing the set.
    pub fn interval_bounds(&self) -> Hyperrectangle {
        let radius = DVector::from_fn(self.dim(), |i, _| {
            self.generators.row(i).iter().map(|v| v.abs()).sum()
        });
        Hyperrectangle::new(self.center.clone(), radius).expect("radius is nonnegative")
    }

    /// Unit facet normals, one per facet pair, with the first significant
    /// component positive.
    ///
    /// A square invertible `G` gives the normalised rows of `G^-1`. Otherwise
    /// every `(n-1)`-subset of nonzero generators is crossed and duplicates are
    /// merged at an angle tolerance of 1e-9.
    pub fn facet_normals(&self) -> Result<Vec<DVector<f64>>> {
        let n = self.dim();
        if n == 0 || rank(&self.generators, 1e-12) < n {
            return Err(Error::domain(
                "facet normals need a full-dimensional zonotope",
            ));
        }
        if self.generators.is_square() {
            if let Some(inv) = self.generators.clone().try_inverse() {
                let normals: Vec<_> = inv
                    .row_iter()
                    .filter_map(|r| canonical_direction(&r.transpose()))
                    .collect();
                if normals.len() == n {
                    return Ok(normals);
                }
            }
        }
        if n == 1 {
            return Ok(vec![DVector::from_element(1, 1.0)]);
        }
        let cols: Vec<DVector<f64>> = self
            .generators
            .column_iter()
            .filter(|c| c.iter().any(|v| *v != 0.0))
            .map(|c| c.into_owned())
            .collect();
        subset_normals(&cols, n)
    }

    /// Area of the projection onto coordinates `(i, j)`.
    pub fn projected_area_2d(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.dim();
        if i == j || i >= n || j >= n {
            return Err(Error::domain(format!(
                "invalid projection dimensions ({i}, {j}) for a {n}-dimensional set"
            )));
        }
        let gi = self.generators.row(i);
        let gj = self.generators.row(j);
        let p = self.num_generators();
        let mut area = 0.0;
        for a in 0..p {
            for b in a + 1..p {
                area += (gi[a] * gj[b] - gj[a] * gi[b]).abs();
            }
        }
        Ok(4.0 * area)
    }
}

/// Canonical unit normals of the hyperplanes spanned by `(n-1)`-subsets of
/// `cols`, merged at tolerance 1e-9 and kept in enumeration order.
pub(crate) fn subset_normals(cols: &[DVector<f64>], n: usize) -> Result<Vec<DVector<f64>>> {
    if n == 1 {
        return Ok(vec![DVector::from_element(1, 1.0)]);
    }
    let subsets = binomial(cols.len() as u128, (n - 1) as u128);
    if subsets > MAX_FACET_SUBSETS {
        return Err(Error::UnsupportedDimension {
            dim: n,
            max: 10,
            hint: "too many generator subsets; use a square generator matrix (rotated-box fit)",
        });
    }
    let mut found: Vec<DVector<f64>> = Vec::new();
    let mut rows = DMatrix::zeros(n - 1, n);
    for subset in Combinations::new(cols.len(), n - 1) {
        let mut scale = 1.0;
        for (r, &k) in subset.iter().enumerate() {
            rows.set_row(r, &cols[k].transpose());
            scale *= cols[k].norm();
        }
        let cross = generalized_cross(&rows);
        if cross.norm() <= 1e-10 * scale {
            continue;
        }
        if let Some(u) = canonical_direction(&cross) {
            found.push(u);
        }
    }
    // sweep in order of the first component so only near neighbours are compared
    let mut order: Vec<usize> = (0..found.len()).collect();
    order.sort_by(|&a, &b| found[a][0].total_cmp(&found[b][0]).then(a.cmp(&b)));
    let mut kept = vec![false; found.len()];
    let mut window_start = 0;
    for (pos, &i) in order.iter().enumerate() {
        while found[order[window_start]][0] < found[i][0] - 1e-9 {
            window_start += 1;
        }
        let dup = order[window_start..pos]
            .iter()
            .any(|&j| kept[j] && (&found[j] - &found[i]).amax() <= 1e-9);
        kept[i] = !dup;
    }
    Ok(found.into_iter().zip(kept).filter_map(|(u, k)| k.then_some(u)).collect())
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
        if acc > u64::MAX as u128 {
            return acc;
        }
    }
    acc
}

/// Lexicographic `k`-subsets of `0..n`.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}
