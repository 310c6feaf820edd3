//! Polytopes in vertex and half-space form, convex hulls, and the
//! overapproximation of a polytope by a zonotope with prescribed generator
//! directions.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::SampleMatrix;
use crate::linalg::{canonical_direction, generalized_cross, rank};
use crate::lp::{LinearProgram, LpOutcome, Relation, SimplexOptions};
use crate::sets::{HalfSpace, Zonotope};
use crate::{Error, Result};

/// Largest dimension handled by [`convex_hull`].
pub const MAX_HULL_DIM: usize = 6;

const HULL_HINT: &str = "use the rotated-box fit for high-dimensional data";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VPolytope {
    vertices: Vec<Vec<f64>>,
}

impl VPolytope {
    pub fn new(vertices: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = vertices.first() else {
            return Err(Error::domain("a polytope needs at least one vertex"));
        };
        let d = first.len();
        if let Some(bad) = vertices.iter().find(|v| v.len() != d) {
            return Err(Error::dims(d, bad.len()));
        }
        if vertices.iter().flat_map(|v| v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::domain("vertices must be finite"));
        }
        Ok(Self {
            vertices: vertices.iter().map(|v| v.iter().copied().collect()).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> Vec<DVector<f64>> {
        self.vertices.iter().map(|v| DVector::from_column_slice(v)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HPolytope {
    halfspaces: Vec<HalfSpace>,
}

impl HPolytope {
    pub fn new(halfspaces: Vec<HalfSpace>) -> Result<Self> {
        if halfspaces.is_empty() {
            return Err(Error::domain("an H-polytope needs at least one half-space"));
        }
        Ok(Self { halfspaces })
    }

    pub fn halfspaces(&self) -> &[HalfSpace] {
        &self.halfspaces
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.halfspaces.iter().all(|h| h.contains(x, tol))
    }

    /// Unit normals, one per half-space.
    pub fn normals(&self) -> Vec<DVector<f64>> {
        self.halfspaces.iter().map(|h| h.normal()).collect()
    }
}

/// Vertices of the convex hull of the rows of `points`.
///
/// In the plane the vertices come in counter-clockwise order starting from
/// the lowest-x point; otherwise they follow input order.
pub fn convex_hull(points: &SampleMatrix) -> Result<VPolytope> {
    let pts: Vec<DVector<f64>> = points.rows().collect();
    let d = points.dim();
    check_hull_input(&pts, d)?;
    let idx = match d {
        1 => interval_ends(&pts),
        2 => monotone_chain(&pts),
        _ => {
            let hull = Hull::build(&pts)?;
            hull.vertex_indices(&pts)
        }
    };
    if d == 2 && idx.len() < 3 {
        return Err(Error::Degenerate("points are collinear".into()));
    }
    VPolytope::new(idx.into_iter().map(|i| pts[i].clone()).collect())
}

/// Facet half-spaces of a full-dimensional polytope, with unit normals and
/// coplanar facets merged.
pub fn vrep_to_hrep(p: &VPolytope) -> Result<HPolytope> {
    let pts = p.vertices();
    let d = p.dim();
    check_hull_input(&pts, d)?;
    let faces: Vec<(DVector<f64>, f64)> = match d {
        1 => {
            let lo = pts.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
            vec![(DVector::from_element(1, 1.0), hi), (DVector::from_element(1, -1.0), -lo)]
        }
        2 => {
            let ring = monotone_chain(&pts);
            if ring.len() < 3 {
                return Err(Error::Degenerate("points are collinear".into()));
            }
            (0..ring.len())
                .map(|k| {
                    let u = &pts[ring[k]];
                    let v = &pts[ring[(k + 1) % ring.len()]];
                    let a = DVector::from_vec(vec![v[1] - u[1], u[0] - v[0]]).normalize();
                    let b = a.dot(u);
                    (a, b)
                })
                .collect()
        }
        _ => Hull::build(&pts)?.merged_facets(),
    };
    let halfspaces = faces
        .into_iter()
        .map(|(a, b)| HalfSpace::new(a, b))
        .collect::<Result<Vec<_>>>()?;
    HPolytope::new(halfspaces)
}

fn check_hull_input(pts: &[DVector<f64>], d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::domain("points have no coordinates"));
    }
    if d > MAX_HULL_DIM {
        return Err(Error::UnsupportedDimension {
            dim: d,
            max: MAX_HULL_DIM,
            hint: HULL_HINT,
        });
    }
    if pts.len() < d + 1 {
        return Err(Error::Degenerate(format!(
            "{} points cannot span {d} dimensions",
            pts.len()
        )));
    }
    let mut centered = DMatrix::from_fn(pts.len(), d, |i, j| pts[i][j]);
    let mean = DVector::from_fn(d, |j, _| centered.column(j).mean());
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    if rank(&centered, 1e-10) < d {
        return Err(Error::Degenerate(format!(
            "points lie in a proper affine subspace of dimension {d}"
        )));
    }
    Ok(())
}

fn interval_ends(pts: &[DVector<f64>]) -> Vec<usize> {
    let mut lo = 0;
    let mut hi = 0;
    for (i, p) in pts.iter().enumerate() {
        if p[0] < pts[lo][0] {
            lo = i;
        }
        if p[0] > pts[hi][0] {
            hi = i;
        }
    }
    vec![lo, hi]
}

fn cross2(o: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; collinear boundary points are dropped.
fn monotone_chain(pts: &[DVector<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| {
        pts[a][0]
            .total_cmp(&pts[b][0])
            .then(pts[a][1].total_cmp(&pts[b][1]))
            .then(a.cmp(&b))
    });
    order.dedup_by(|a, b| pts[*a] == pts[*b]);
    if order.len() < 3 {
        return order;
    }
    let mut hull: Vec<usize> = Vec::with_capacity(2 * order.len());
    for pass in 0..2 {
        let start = hull.len();
        let seq: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(order.iter())
        } else {
            Box::new(order.iter().rev())
        };
        for &i in seq {
            while hull.len() >= start + 2
                && cross2(&pts[hull[hull.len() - 2]], &pts[hull[hull.len() - 1]], &pts[i]) <= 0.0
            {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    hull
}

#[derive(Debug, Clone)]
struct Facet {
    verts: Vec<usize>,
    normal: DVector<f64>,
    offset: f64,
}

/// Simplicial hull in dimension 3 and above, built incrementally.
struct Hull {
    facets: Vec<Facet>,
    eps: f64,
    d: usize,
}

impl Hull {
    fn build(pts: &[DVector<f64>]) -> Result<Self> {
        let d = pts[0].len();
        let extent = pts
            .iter()
            .flat_map(|p| p.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(1e-300);
        let eps = 1e-10 * extent;

        let simplex = initial_simplex(pts, eps)?;
        let interior = simplex
            .iter()
            .fold(DVector::zeros(d), |acc, &i| acc + &pts[i])
            / (d + 1) as f64;
        let mut facets = Vec::new();
        for skip in 0..=d {
            let verts: Vec<usize> = simplex
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != skip)
                .map(|(_, &i)| i)
                .collect();
            facets.push(make_facet(pts, verts, &interior)?);
        }
        let mut used = vec![false; pts.len()];
        simplex.iter().for_each(|&i| used[i] = true);

        for (pi, p) in pts.iter().enumerate() {
            if used[pi] {
                continue;
            }
            let visible: Vec<usize> = (0..facets.len())
                .filter(|&f| facets[f].normal.dot(p) - facets[f].offset > eps)
                .collect();
            if visible.is_empty() {
                continue;
            }
            let mut ridges: HashMap<Vec<usize>, usize> = HashMap::new();
            for &f in &visible {
                let v = &facets[f].verts;
                for skip in 0..v.len() {
                    let ridge: Vec<usize> = v
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| *k != skip)
                        .map(|(_, &i)| i)
                        .collect();
                    *ridges.entry(ridge).or_insert(0) += 1;
                }
            }
            let mut horizon: Vec<Vec<usize>> = ridges
                .into_iter()
                .filter(|(_, c)| *c == 1)
                .map(|(r, _)| r)
                .collect();
            horizon.sort();
            let mut keep = vec![true; facets.len()];
            visible.iter().for_each(|&f| keep[f] = false);
            let mut next: Vec<Facet> = facets
                .into_iter()
                .zip(keep)
                .filter(|(_, k)| *k)
                .map(|(f, _)| f)
                .collect();
            for ridge in horizon {
                let mut verts = ridge;
                verts.push(pi);
                match make_facet(pts, verts, &interior) {
                    Ok(f) => next.push(f),
                    Err(_) => continue,
                }
            }
            facets = next;
            used[pi] = true;
        }
        Ok(Self { facets, eps, d })
    }

    /// Facets merged by plane, as `(unit normal, offset)`.
    fn merged_facets(&self) -> Vec<(DVector<f64>, f64)> {
        let mut out: Vec<(DVector<f64>, f64)> = Vec::new();
        for f in &self.facets {
            let dup = out.iter().any(|(a, b)| {
                (a - &f.normal).amax() <= 1e-9 && (b - f.offset).abs() <= self.eps.max(1e-12) * 10.0
            });
            if !dup {
                out.push((f.normal.clone(), f.offset));
            }
        }
        out
    }

    /// Points on the hull boundary whose active planes span the space.
    fn vertex_indices(&self, pts: &[DVector<f64>]) -> Vec<usize> {
        let planes = self.merged_facets();
        let mut candidates: Vec<usize> = self.facets.iter().flat_map(|f| f.verts.clone()).collect();
        candidates.sort_unstable();
        candidates.dedup();
        candidates
            .into_iter()
            .filter(|&i| {
                let active: Vec<&DVector<f64>> = planes
                    .iter()
                    .filter(|(a, b)| (a.dot(&pts[i]) - b).abs() <= 10.0 * self.eps)
                    .map(|(a, _)| a)
                    .collect();
                if active.len() < self.d {
                    return false;
                }
                let m = DMatrix::from_fn(active.len(), self.d, |r, c| active[r][c]);
                rank(&m, 1e-9) == self.d
            })
            .collect()
    }
}

fn initial_simplex(pts: &[DVector<f64>], eps: f64) -> Result<Vec<usize>> {
    let d = pts[0].len();
    let first = (0..pts.len())
        .min_by(|&a, &b| pts[a][0].total_cmp(&pts[b][0]).then(a.cmp(&b)))
        .expect("nonempty");
    let mut chosen = vec![first];
    let mut basis: Vec<DVector<f64>> = Vec::new();
    while chosen.len() < d + 1 {
        let mut best = (0.0, usize::MAX, None);
        for (i, p) in pts.iter().enumerate() {
            let mut r = p - &pts[first];
            for b in &basis {
                let proj = b.dot(&r);
                r -= b * proj;
            }
            let norm = r.norm();
            if norm > best.0 {
                best = (norm, i, Some(r));
            }
        }
        let (norm, i, Some(r)) = best else {
            return Err(Error::Degenerate("points do not span the space".into()));
        };
        if norm <= eps {
            return Err(Error::Degenerate("points do not span the space".into()));
        }
        basis.push(r / norm);
        chosen.push(i);
    }
    Ok(chosen)
}

fn make_facet(pts: &[DVector<f64>], mut verts: Vec<usize>, interior: &DVector<f64>) -> Result<Facet> {
    // ridges are matched by their sorted vertex lists
    verts.sort_unstable();
    let d = interior.len();
    let base = &pts[verts[0]];
    let rows = DMatrix::from_fn(d - 1, d, |r, c| pts[verts[r + 1]][c] - base[c]);
    let cross = generalized_cross(&rows);
    let norm = cross.norm();
    if !(norm > 0.0) {
        return Err(Error::Degenerate("flat facet".into()));
    }
    let mut normal = cross / norm;
    let mut offset = normal.dot(base);
    if normal.dot(interior) > offset {
        normal.neg_mut();
        offset = -offset;
    }
    Ok(Facet {
        verts,
        normal,
        offset,
    })
}

/// Smallest-sum zonotope `<c, sum_k alpha_k d_k>` containing `p`.
///
/// Directions are normalised and merged when closer than 1e-9; generators
/// with `alpha_k = 0` are dropped. The program is solved through the
/// equivalent support form: for every normal `a` of a hyperplane spanned by
/// `n - 1` directions, `|a^T (v - c)| <= sum_k alpha_k |a^T d_k|` over all
/// vertices `v`. Its dual has one row per coordinate and per direction and one
/// column per support constraint, so constraints are generated as dual
/// columns, most violated first, and `(c, alpha)` is read off the multipliers.
pub fn overapprox_zonotope(p: &VPolytope, directions: &[DVector<f64>]) -> Result<Zonotope> {
    let n = p.dim();
    let dirs = merge_directions(directions, n)?;
    if rank(&DMatrix::from_fn(n, dirs.len(), |i, j| dirs[j][i]), 1e-10) < n {
        return Err(Error::Infeasible(
            "directions do not span the space, so no enclosing zonotope exists".into(),
        ));
    }
    let verts = p.vertices();
    let normals = crate::sets::subset_normals(&dirs, n)?;
    let k = dirs.len();
    let dir_matrix = DMatrix::from_fn(k, n, |j, i| dirs[j][i]);

    // per normal: vertex support interval and generator weights |a^T d_k|
    let hi: Vec<f64> = normals
        .iter()
        .map(|a| verts.iter().map(|v| a.dot(v)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let lo: Vec<f64> = normals
        .iter()
        .map(|a| verts.iter().map(|v| a.dot(v)).fold(f64::INFINITY, f64::min))
        .collect();
    let weights = |a: &DVector<f64>| -> DVector<f64> { (&dir_matrix * a).abs() };
    let normal_block = DMatrix::from_fn(normals.len(), n, |r, i| normals[r][i]);

    let mut active: Vec<usize> = (0..normals.len()).collect();
    active.sort_by(|&x, &y| (hi[y] - lo[y]).total_cmp(&(hi[x] - lo[x])).then(x.cmp(&y)));
    active.truncate((2 * n).max(k).min(normals.len()));
    let mut in_active = vec![false; normals.len()];
    active.iter().for_each(|&i| in_active[i] = true);

    let scale = hi.iter().chain(lo.iter()).fold(1.0_f64, |m, v| m.max(v.abs()));
    let batch = 4 * (n + k);
    // max sum_i y_i h_i  s.t.  sum_i y_i s_i a_i = 0,  sum_i y_i w_i <= 1,  y >= 0,
    // one column per normal and sign; stored as a minimisation of -h^T y
    let column = |ai: usize, sign: f64| -> (Vec<f64>, f64) {
        let a = &normals[ai];
        let mut col: Vec<f64> = a.iter().map(|v| sign * v).collect();
        col.extend(weights(a).iter());
        (col, if sign > 0.0 { -hi[ai] } else { lo[ai] })
    };
    let mut lp = LinearProgram::new(2 * active.len());
    let mut rows = vec![vec![0.0; 2 * active.len()]; n + k];
    let mut obj = vec![0.0; 2 * active.len()];
    for (t, &ai) in active.iter().enumerate() {
        for (col_idx, sign) in [(2 * t, 1.0), (2 * t + 1, -1.0)] {
            let (col, cost) = column(ai, sign);
            obj[col_idx] = cost;
            for (r, v) in col.into_iter().enumerate() {
                rows[r][col_idx] = v;
            }
        }
    }
    lp.set_objective(&obj);
    for (r, coeffs) in rows.into_iter().enumerate() {
        let (relation, rhs) = if r < n { (Relation::Eq, 0.0) } else { (Relation::Le, 1.0) };
        lp.add_constraint(coeffs, relation, rhs);
    }
    let (mut outcome, warm) = lp.solve_warm(SimplexOptions::default())?;
    let Some(mut warm) = warm else {
        return Err(Error::Solver("overapproximation dual lost feasibility".into()));
    };
    loop {
        let sol = match outcome {
            LpOutcome::Optimal(s) => s,
            LpOutcome::Infeasible { residual } => {
                return Err(Error::Solver(format!(
                    "overapproximation dual lost feasibility (residual {residual:.3e})"
                )))
            }
            LpOutcome::Unbounded => {
                return Err(Error::Infeasible("overapproximation program infeasible".into()))
            }
        };
        let c = DVector::from_fn(n, |i, _| -sol.duals[i]);
        let alpha = DVector::from_fn(k, |j, _| (-sol.duals[n + j]).max(0.0));

        let support: Vec<usize> = (0..k).filter(|&j| alpha[j] > 0.0).collect();
        let ds = DMatrix::from_fn(n, support.len(), |i, t| dirs[support[t]][i]);
        let alpha_s = DVector::from_fn(support.len(), |t, _| alpha[support[t]]);
        // per normal: required half-width and the zonotope's support, in chunks
        let mut need = vec![0.0; normals.len()];
        let mut reach = vec![0.0; normals.len()];
        for start in (0..normals.len()).step_by(4096) {
            let len = (normals.len() - start).min(4096);
            let block = normal_block.rows(start, len);
            let ac = &block * &c;
            let r = (&block * &ds).abs() * &alpha_s;
            for t in 0..len {
                let i = start + t;
                need[i] = (hi[i] - ac[t]).max(ac[t] - lo[i]);
                reach[i] = r[t];
            }
        }
        let mut violated: Vec<(f64, usize)> = (0..normals.len())
            .filter(|&i| !in_active[i])
            .filter_map(|i| {
                let v = need[i] - reach[i];
                (v > 1e-10 * scale).then_some((v, i))
            })
            .collect();
        if violated.is_empty() {
            // absorb the remaining round-off so every vertex is enclosed
            let gamma = (0..normals.len())
                .map(|i| if reach[i] > 0.0 { need[i] / reach[i] } else { 0.0 })
                .fold(1.0_f64, f64::max);
            let total: f64 = alpha.sum();
            let keep: Vec<usize> = (0..k).filter(|&j| alpha[j] > 1e-14 * total).collect();
            let g = DMatrix::from_fn(n, keep.len(), |i, j| dirs[keep[j]][i] * alpha[keep[j]] * gamma);
            return Zonotope::new(c, g);
        }
        let order = |x: &(f64, usize), y: &(f64, usize)| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1));
        if violated.len() > batch {
            violated.select_nth_unstable_by(batch, order);
            violated.truncate(batch);
        }
        violated.sort_by(order);
        for &(_, i) in violated.iter().take(batch) {
            in_active[i] = true;
            for sign in [1.0, -1.0] {
                let (col, cost) = column(i, sign);
                warm.add_column(&col, cost, 0.0, f64::INFINITY);
            }
        }
        outcome = warm.resolve()?;
    }
}

/// Default generator directions: the facet normals of the polytope.
pub fn overapprox_zonotope_default(p: &VPolytope) -> Result<Zonotope> {
    let h = vrep_to_hrep(p)?;
    overapprox_zonotope(p, &h.normals())
}

fn merge_directions(directions: &[DVector<f64>], n: usize) -> Result<Vec<DVector<f64>>> {
    if directions.is_empty() {
        return Err(Error::domain("at least one direction is required"));
    }
    let mut out: Vec<DVector<f64>> = Vec::new();
    for d in directions {
        if d.len() != n {
            return Err(Error::dims(n, d.len()));
        }
        let Some(u) = canonical_direction(d) else {
            continue;
        };
        if !out.iter().any(|v| (v - &u).amax() <= 1e-9) {
            out.push(u);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(rows: &[&[f64]]) -> SampleMatrix {
        SampleMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn square_with_interior_points() {
        let pts = sample(&[
            &[0.0, 0.0],
            &[1.0, 0.0],
            &[0.5, 0.5],
            &[1.0, 1.0],
            &[0.0, 1.0],
            &[0.2, 0.7],
            &[0.5, 0.0],
        ]);
        let hull = convex_hull(&pts).unwrap();
        assert_eq!(hull.len(), 4);
        let h = vrep_to_hrep(&hull).unwrap();
        assert_eq!(h.halfspaces().len(), 4);
        for x in pts.rows() {
            assert!(h.contains(&x, 1e-12));
        }
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pts = sample(&[&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]]);
        assert!(matches!(convex_hull(&pts), Err(Error::Degenerate(_))));
    }

    #[test]
    fn seven_dimensions_are_unsupported() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| (0..7).map(|j| ((i * 7 + j) as f64).sin()).collect()).collect();
        let pts = SampleMatrix::from_rows(&rows).unwrap();
        assert!(matches!(convex_hull(&pts), Err(Error::UnsupportedDimension { dim: 7, .. })));
    }

    #[test]
    fn cube_hull_and_facets() {
        let mut rows = Vec::new();
        for m in 0..8 {
            rows.push(vec![(m & 1) as f64, ((m >> 1) & 1) as f64, ((m >> 2) & 1) as f64]);
        }
        rows.push(vec![0.5, 0.5, 0.5]);
        rows.push(vec![0.5, 0.5, 1.0]);
        rows.push(vec![0.5, 0.0, 0.0]);
        let hull = convex_hull(&SampleMatrix::from_rows(&rows).unwrap()).unwrap();
        assert_eq!(hull.len(), 8);
        assert_eq!(vrep_to_hrep(&hull).unwrap().halfspaces().len(), 6);
    }

    #[test]
    fn simplex_in_three_dimensions() {
        let p = VPolytope::new(vec![
            DVector::from_vec(vec![0.0, 0.0, 0.0]),
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
        ])
        .unwrap();
        let h = vrep_to_hrep(&p).unwrap();
        assert_eq!(h.halfspaces().len(), 4);
        for v in p.vertices() {
            let on = h.halfspaces().iter().filter(|s| s.violation(&v).abs() < 1e-12).count();
            assert_eq!(on, 3);
        }
    }

    #[test]
    fn box_is_reproduced_with_axis_directions() {
        let p = VPolytope::new(vec![
            DVector::from_vec(vec![-1.0, 2.0]),
            DVector::from_vec(vec![3.0, 2.0]),
            DVector::from_vec(vec![3.0, 3.0]),
            DVector::from_vec(vec![-1.0, 3.0]),
        ])
        .unwrap();
        let dirs = vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, -1.0])];
        let z = overapprox_zonotope(&p, &dirs).unwrap();
        assert!((z.center() - DVector::from_vec(vec![1.0, 2.5])).amax() < 1e-12);
        assert!((z.projected_area_2d(0, 1).unwrap() - 4.0).abs() < 1e-9);
    }

    /// The direct program: `v_j = c + sum_k b_kj d_k`, `|b_kj| <= alpha_k`.
    fn direct_program_value(p: &VPolytope, dirs: &[DVector<f64>]) -> f64 {
        let n = p.dim();
        let verts = p.vertices();
        let (k, m) = (dirs.len(), verts.len());
        let nv = n + k + k * m;
        let b = |kk: usize, j: usize| n + k + kk * m + j;
        let mut lp = LinearProgram::new(nv);
        for i in 0..n {
            lp.set_free(i);
        }
        for kk in 0..k {
            for j in 0..m {
                lp.set_free(b(kk, j));
            }
        }
        let mut obj = vec![0.0; nv];
        obj[n..n + k].iter_mut().for_each(|v| *v = 1.0);
        lp.set_objective(&obj);
        for (j, v) in verts.iter().enumerate() {
            for i in 0..n {
                let mut row = vec![0.0; nv];
                row[i] = 1.0;
                for kk in 0..k {
                    row[b(kk, j)] = dirs[kk][i];
                }
                lp.add_constraint(row, Relation::Eq, v[i]);
            }
            for kk in 0..k {
                let mut up = vec![0.0; nv];
                up[b(kk, j)] = 1.0;
                up[n + kk] = -1.0;
                lp.add_constraint(up, Relation::Le, 0.0);
                let mut down = vec![0.0; nv];
                down[b(kk, j)] = -1.0;
                down[n + kk] = -1.0;
                lp.add_constraint(down, Relation::Le, 0.0);
            }
        }
        match lp.solve().unwrap() {
            LpOutcome::Optimal(s) => s.objective,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn support_form_matches_direct_program() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let rows: Vec<Vec<f64>> = (0..12)
                .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)])
                .collect();
            let hull = convex_hull(&SampleMatrix::from_rows(&rows).unwrap()).unwrap();
            let dirs = vrep_to_hrep(&hull).unwrap().normals();
            let z = overapprox_zonotope(&hull, &dirs).unwrap();
            let merged = merge_directions(&dirs, 2).unwrap();
            let direct = direct_program_value(&hull, &merged);
            let ours: f64 = z.generators().column_iter().map(|c| c.norm()).sum();
            assert!((ours - direct).abs() <= 1e-8 * direct.max(1.0), "{ours} vs {direct}");
            for v in hull.vertices() {
                assert!(z.contains(&v, 1e-8).unwrap());
            }
        }
    }

    #[test]
    fn triangle_with_edge_normals() {
        let p = VPolytope::new(vec![
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![2.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        ])
        .unwrap();
        let z = overapprox_zonotope_default(&p).unwrap();
        // the optimum leaves the slanted direction unused: the bounding box
        // [0, 2] x [0, 1] already attains the minimal sum
        let dirs = vrep_to_hrep(&p).unwrap().normals();
        let direct = direct_program_value(&p, &merge_directions(&dirs, 2).unwrap());
        let ours: f64 = z.generators().column_iter().map(|c| c.norm()).sum();
        assert!((ours - direct).abs() < 1e-9);
        assert!(z.num_generators() <= 3);
        for v in p.vertices() {
            assert!(z.contains(&v, 1e-9).unwrap());
        }
    }

    #[test]
    fn non_spanning_directions_are_infeasible() {
        let p = VPolytope::new(vec![
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        ])
        .unwrap();
        let dirs = vec![DVector::from_vec(vec![1.0, 1.0]), DVector::from_vec(vec![-2.0, -2.0])];
        assert!(matches!(overapprox_zonotope(&p, &dirs), Err(Error::Infeasible(_))));
        assert!(overapprox_zonotope(&p, &[]).is_err());
    }
}
