//! Dense two-phase primal simplex with bounded variables.
//!
//! Variables carry individual `[lower, upper]` bounds, either of which may be
//! infinite, so free variables and box constraints need no extra rows.
//! Pricing is Dantzig's rule with ties broken by lowest index; after a run of
//! degenerate pivots the solver falls back to Bland's rule for the rest of
//! the phase, which rules out cycling.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
struct Constraint {
    coeffs: Vec<f64>,
    relation: Relation,
    rhs: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Phase-one residual accepted as feasible.
    pub feas_tol: f64,
    /// Reduced-cost threshold for optimality.
    pub opt_tol: f64,
    /// Smallest admissible pivot magnitude.
    pub piv_tol: f64,
    pub max_iter: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_limit: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-9,
            opt_tol: 1e-10,
            piv_tol: 1e-11,
            max_iter: 200_000,
            degenerate_limit: 50,
        }
    }
}

/// `min c^T x` subject to linear rows and per-variable bounds.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Constraint>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row multipliers `y` with `c - A^T y` the reduced costs; `y >= 0` on
    /// `Ge` rows and `y <= 0` on `Le` rows at an optimum.
    pub duals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal(LpSolution),
    /// Phase one ended with this much residual infeasibility.
    Infeasible { residual: f64 },
    Unbounded,
}

impl LinearProgram {
    /// A program in `num_vars` variables, each bounded to `[0, inf)`, with a
    /// zero objective.
    pub fn new(num_vars: usize) -> Self {
        Self {
            objective: vec![0.0; num_vars],
            lower: vec![0.0; num_vars],
            upper: vec![f64::INFINITY; num_vars],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_objective(&mut self, c: &[f64]) {
        assert_eq!(c.len(), self.num_vars());
        self.objective.copy_from_slice(c);
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        assert!(lower <= upper, "empty bound interval for variable {j}");
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn set_free(&mut self, j: usize) {
        self.set_bounds(j, f64::NEG_INFINITY, f64::INFINITY);
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.num_vars());
        self.rows.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        self.solve_with(SimplexOptions::default())
    }

    pub fn solve_with(&self, opts: SimplexOptions) -> Result<LpOutcome> {
        Ok(self.solve_warm(opts)?.0)
    }

    /// Solves and keeps the final tableau so that columns can be appended
    /// and the program re-solved from the current basis. The warm state is
    /// `None` when phase one fails.
    pub fn solve_warm(&self, opts: SimplexOptions) -> Result<(LpOutcome, Option<WarmStart>)> {
        let mut tab = Tableau::build(self);
        if let PhaseEnd::Unbounded = tab.run(&opts)? {
            return Err(Error::Solver("phase one reported an unbounded ray".into()));
        }
        let residual = tab.artificial_mass();
        if residual > opts.feas_tol {
            return Ok((LpOutcome::Infeasible { residual }, None));
        }
        tab.start_phase_two(&self.objective);
        let mut warm = WarmStart {
            tab,
            opts,
            pending: Vec::new(),
        };
        let outcome = warm.finish()?;
        Ok((outcome, Some(warm)))
    }
}

/// A solved program that accepts new columns.
pub struct WarmStart {
    tab: Tableau,
    opts: SimplexOptions,
    pending: Vec<NewColumn>,
}

struct NewColumn {
    coeffs: Vec<f64>,
    cost: f64,
    lower: f64,
    upper: f64,
}

impl WarmStart {
    pub fn num_vars(&self) -> usize {
        self.tab.struct_cols.len() + self.pending.len()
    }

    /// Appends a variable with the given constraint coefficients, objective
    /// coefficient and bounds; it starts nonbasic at a finite bound (or 0).
    /// Columns are queued until the next [`WarmStart::resolve`].
    pub fn add_column(&mut self, coeffs: &[f64], cost: f64, lower: f64, upper: f64) {
        assert_eq!(coeffs.len(), self.tab.m);
        assert!(lower <= upper, "empty bound interval for a new column");
        self.pending.push(NewColumn {
            coeffs: coeffs.to_vec(),
            cost,
            lower,
            upper,
        });
    }

    pub fn resolve(&mut self) -> Result<LpOutcome> {
        let cols = std::mem::take(&mut self.pending);
        self.tab.add_columns(&cols);
        self.finish()
    }

    fn finish(&mut self) -> Result<LpOutcome> {
        match self.tab.run(&self.opts)? {
            PhaseEnd::Unbounded => Ok(LpOutcome::Unbounded),
            PhaseEnd::Optimal => {
                let x = self.tab.structural_values();
                let objective = x
                    .iter()
                    .zip(&self.tab.struct_cols)
                    .map(|(v, &j)| v * self.tab.cost[j])
                    .sum();
                let duals = self.tab.duals();
                Ok(LpOutcome::Optimal(LpSolution { x, objective, duals }))
            }
        }
    }
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

struct Tableau {
    m: usize,
    ncols: usize,
    n_struct: usize,
    first_artificial: usize,
    /// `B^-1 A`, row-major.
    t: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// Values of nonbasic variables.
    x: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    reduced: Vec<f64>,
    /// -1 where a row was negated to make its initial residual nonnegative.
    flips: Vec<f64>,
    /// Tableau column of each structural variable.
    struct_cols: Vec<usize>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.rows.len();
        let n_slack = lp.rows.iter().filter(|r| r.relation != Relation::Eq).count();
        let first_artificial = n + n_slack;
        let ncols = first_artificial + m;

        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        lower.extend(std::iter::repeat_n(0.0, n_slack + m));
        upper.extend(std::iter::repeat_n(f64::INFINITY, n_slack + m));

        let mut x = vec![0.0; ncols];
        for j in 0..n {
            x[j] = if lower[j].is_finite() {
                lower[j]
            } else if upper[j].is_finite() {
                upper[j]
            } else {
                0.0
            };
        }

        let mut t = vec![0.0; m * ncols];
        let mut beta = vec![0.0; m];
        let mut basis = vec![0; m];
        let mut in_basis = vec![false; ncols];
        let mut flips = vec![1.0; m];
        let mut slack = n;
        for (i, row) in lp.rows.iter().enumerate() {
            let r = &mut t[i * ncols..(i + 1) * ncols];
            r[..n].copy_from_slice(&row.coeffs);
            match row.relation {
                Relation::Le => {
                    r[slack] = 1.0;
                    slack += 1;
                }
                Relation::Ge => {
                    r[slack] = -1.0;
                    slack += 1;
                }
                Relation::Eq => {}
            }
            let activity: f64 = r[..n].iter().zip(&x[..n]).map(|(a, v)| a * v).sum();
            let resid = row.rhs - activity;
            if resid < 0.0 {
                r[..first_artificial].iter_mut().for_each(|v| *v = -*v);
                flips[i] = -1.0;
            }
            r[first_artificial + i] = 1.0;
            beta[i] = resid.abs();
            basis[i] = first_artificial + i;
            in_basis[first_artificial + i] = true;
        }

        let mut cost = vec![0.0; ncols];
        cost[first_artificial..].iter_mut().for_each(|c| *c = 1.0);
        let mut tab = Self {
            m,
            ncols,
            n_struct: n,
            first_artificial,
            t,
            beta,
            basis,
            in_basis,
            x,
            lower,
            upper,
            cost,
            reduced: vec![0.0; ncols],
            flips,
            struct_cols: (0..n).collect(),
        };
        tab.recompute_reduced_costs();
        tab
    }

    fn recompute_reduced_costs(&mut self) {
        let ncols = self.ncols;
        self.reduced.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * ncols..(i + 1) * ncols];
                for (d, a) in self.reduced.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
        for (j, d) in self.reduced.iter_mut().enumerate() {
            if self.in_basis[j] {
                *d = 0.0;
            }
        }
    }

    fn artificial_mass(&self) -> f64 {
        let basic: f64 = (0..self.m)
            .filter(|&i| self.basis[i] >= self.first_artificial)
            .map(|i| self.beta[i].abs())
            .sum();
        let nonbasic: f64 = (self.first_artificial..self.first_artificial + self.m)
            .filter(|&j| !self.in_basis[j])
            .map(|j| self.x[j].abs())
            .sum();
        basic + nonbasic
    }

    fn start_phase_two(&mut self, objective: &[f64]) {
        for j in self.first_artificial..self.first_artificial + self.m {
            self.upper[j] = 0.0;
            if !self.in_basis[j] {
                self.x[j] = 0.0;
            }
        }
        self.cost.iter_mut().for_each(|c| *c = 0.0);
        self.cost[..self.n_struct].copy_from_slice(objective);
        self.recompute_reduced_costs();
    }

    /// Artificial column `i` is `flips[i] e_i` in the original rows, so its
    /// reduced cost `0 - y_i flips[i]` gives the multiplier.
    fn duals(&mut self) -> Vec<f64> {
        let art = self.first_artificial;
        self.cost[art..art + self.m].iter_mut().for_each(|c| *c = 0.0);
        self.recompute_reduced_costs();
        (0..self.m)
            .map(|i| -self.reduced[self.first_artificial + i] * self.flips[i])
            .collect()
    }

    /// The artificial block holds `B^-1` of the sign-adjusted rows, so a new
    /// column `a` enters the tableau as `B^-1 (flips * a)`.
    fn add_columns(&mut self, cols: &[NewColumn]) {
        if cols.is_empty() {
            return;
        }
        let (m, old) = (self.m, self.ncols);
        let art = self.first_artificial;
        let entries: Vec<Vec<f64>> = cols
            .iter()
            .map(|c| {
                let signed: Vec<f64> = c.coeffs.iter().zip(&self.flips).map(|(a, f)| a * f).collect();
                (0..m)
                    .map(|i| {
                        let binv = &self.t[i * old + art..i * old + art + m];
                        binv.iter().zip(&signed).map(|(b, a)| b * a).sum()
                    })
                    .collect()
            })
            .collect();
        let width = old + cols.len();
        let mut t = Vec::with_capacity(m * width);
        for i in 0..m {
            t.extend_from_slice(&self.t[i * old..(i + 1) * old]);
            t.extend(entries.iter().map(|e| e[i]));
        }
        self.t = t;
        self.ncols = width;
        for (k, (c, col)) in cols.iter().zip(&entries).enumerate() {
            let x = if c.lower.is_finite() {
                c.lower
            } else if c.upper.is_finite() {
                c.upper
            } else {
                0.0
            };
            if x != 0.0 {
                for (b, a) in self.beta.iter_mut().zip(col) {
                    *b -= a * x;
                }
            }
            let reduced = c.cost - (0..m).map(|i| self.cost[self.basis[i]] * col[i]).sum::<f64>();
            self.struct_cols.push(old + k);
            self.lower.push(c.lower);
            self.upper.push(c.upper);
            self.cost.push(c.cost);
            self.x.push(x);
            self.in_basis.push(false);
            self.reduced.push(reduced);
        }
    }

    fn structural_values(&self) -> Vec<f64> {
        let mut value = self.x.clone();
        for (i, &b) in self.basis.iter().enumerate() {
            value[b] = self.beta[i];
        }
        self.struct_cols.iter().map(|&j| value[j]).collect()
    }

    fn choose_entering(&self, opts: &SimplexOptions, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.ncols {
            if self.in_basis[j] || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.reduced[j];
            let eligible = (d < -opts.opt_tol && self.x[j] < self.upper[j])
                || (d > opts.opt_tol && self.x[j] > self.lower[j]);
            if !eligible {
                continue;
            }
            if bland {
                return Some(j);
            }
            if best.is_none_or(|(_, b)| d.abs() > b) {
                best = Some((j, d.abs()));
            }
        }
        best.map(|(j, _)| j)
    }

    fn run(&mut self, opts: &SimplexOptions) -> Result<PhaseEnd> {
        let ncols = self.ncols;
        let mut bland = false;
        let mut degenerate = 0usize;
        for iter in 0..opts.max_iter {
            if iter % 64 == 63 {
                self.recompute_reduced_costs();
            }
            let Some(q) = self.choose_entering(opts, bland) else {
                return Ok(PhaseEnd::Optimal);
            };
            let dir = if self.reduced[q] < 0.0 { 1.0 } else { -1.0 };

            let mut theta = self.upper[q] - self.lower[q];
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.t[i * ncols + q];
                if a.abs() <= opts.piv_tol {
                    continue;
                }
                let rate = -dir * a;
                let b = self.basis[i];
                let limit = if rate < 0.0 {
                    if !self.lower[b].is_finite() {
                        continue;
                    }
                    ((self.beta[i] - self.lower[b]) / -rate).max(0.0)
                } else {
                    if !self.upper[b].is_finite() {
                        continue;
                    }
                    ((self.upper[b] - self.beta[i]) / rate).max(0.0)
                };
                let better = match leave {
                    None => limit < theta,
                    Some((li, _)) => {
                        if limit < theta - 1e-12 {
                            true
                        } else if limit <= theta + 1e-12 {
                            if bland {
                                b < self.basis[li]
                            } else {
                                a.abs() > self.t[li * ncols + q].abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    theta = limit.min(theta);
                    leave = Some((i, rate));
                }
            }
            if !theta.is_finite() {
                // entries below the pivot tolerance are noise; price without them
                let d = self.cost[q]
                    - (0..self.m)
                        .map(|i| self.t[i * ncols + q])
                        .zip(&self.basis)
                        .filter(|(a, _)| a.abs() > opts.piv_tol)
                        .map(|(a, &b)| self.cost[b] * a)
                        .sum::<f64>();
                if d * dir < -opts.opt_tol {
                    return Ok(PhaseEnd::Unbounded);
                }
                self.reduced[q] = 0.0;
                continue;
            }

            if theta <= 1e-12 {
                degenerate += 1;
                if degenerate > opts.degenerate_limit {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }

            for i in 0..self.m {
                let a = self.t[i * ncols + q];
                if a != 0.0 {
                    self.beta[i] -= dir * a * theta;
                }
            }
            let entering_value = self.x[q] + dir * theta;

            match leave {
                None => {
                    // bound flip
                    self.x[q] = if dir > 0.0 {
                        self.upper[q]
                    } else {
                        self.lower[q]
                    };
                }
                Some((r, rate)) => {
                    let b = self.basis[r];
                    self.x[b] = if rate < 0.0 {
                        self.lower[b]
                    } else {
                        self.upper[b]
                    };
                    self.in_basis[b] = false;
                    self.in_basis[q] = true;
                    self.basis[r] = q;
                    self.beta[r] = entering_value;
                    self.pivot(r, q);
                }
            }
        }
        Err(Error::Solver(format!(
            "simplex did not terminate within {} iterations",
            opts.max_iter
        )))
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let ncols = self.ncols;
        let p = self.t[r * ncols + q];
        {
            let row = &mut self.t[r * ncols..(r + 1) * ncols];
            row.iter_mut().for_each(|v| *v /= p);
            row[q] = 1.0;
        }
        let (before, rest) = self.t.split_at_mut(r * ncols);
        let (pivot_row, after) = rest.split_at_mut(ncols);
        for row in before
            .chunks_exact_mut(ncols)
            .chain(after.chunks_exact_mut(ncols))
        {
            let f = row[q];
            if f != 0.0 {
                for (v, pr) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * pr;
                }
                row[q] = 0.0;
            }
        }
        let f = self.reduced[q];
        if f != 0.0 {
            for (d, pr) in self.reduced.iter_mut().zip(pivot_row.iter()) {
                *d -= f * pr;
            }
        }
        self.reduced[q] = 0.0;
    }
}
