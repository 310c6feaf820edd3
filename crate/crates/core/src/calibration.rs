//! Conformal calibration of a nested family.
//!
//! Each calibration point is scored by the largest grid level `a` with the
//! point still inside `Z^a`. Membership is monotone in `a`, so the score is
//! found by binary search. Points outside the base set get the score `-1`.
//!
//! With the scores sorted ascending, the set for confidence `eps` is
//! `Z^{a_(k)}`. The paper rule uses `k = ceil(eps n)`. The strict rule uses
//! `k = floor(eps (n + 1))`, the finite-sample index for `n` exchangeable
//! calibration points. At most `k - 1` of the calibration scores lie below
//! `a_(k)`, so the returned set holds at least `n - k + 1` calibration points.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SampleMatrix;
use crate::sets::{NestedZonotopeFamily, PreparedFamily, Zonotope};
use crate::{Error, Result};

/// Score of a point outside the base set.
pub const BELOW_GRID: f64 = -1.0;

/// Smallest Monte Carlo sample accepted by [`calibrate_from_density`].
pub const MIN_MC_SAMPLES: usize = 1000;

/// Strictly increasing levels in `[0, 1]` starting at 0 and ending at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct AlphaGrid {
    values: Vec<f64>,
    uniform: bool,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f64>>,
}

impl TryFrom<GridRepr> for AlphaGrid {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        match r.values {
            None => AlphaGrid::uniform(r.size),
            Some(v) => {
                if v.len() != r.size {
                    return Err(Error::dims(r.size, v.len()));
                }
                AlphaGrid::from_values(v)
            }
        }
    }
}

impl From<AlphaGrid> for GridRepr {
    fn from(g: AlphaGrid) -> Self {
        Self {
            size: g.values.len(),
            values: (!g.uniform).then_some(g.values),
        }
    }
}

impl AlphaGrid {
    /// `m` evenly spaced levels `i / (m - 1)`.
    pub fn uniform(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::domain("an alpha grid needs at least two levels"));
        }
        let denom = (m - 1) as f64;
        Ok(Self {
            values: (0..m).map(|i| i as f64 / denom).collect(),
            uniform: true,
        })
    }

    /// Uniform grid with `max(1000, n + 1)` levels.
    pub fn default_for(n: usize) -> Self {
        Self::uniform(1000.max(n + 1)).expect("size is at least 1000")
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || values[0] != 0.0 || *values.last().unwrap() != 1.0 {
            return Err(Error::domain("alpha grid must start at 0 and end at 1"));
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("alpha grid must be strictly increasing"));
        }
        Ok(Self {
            values,
            uniform: false,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileRule {
    /// `k = ceil(eps n)`.
    #[default]
    Paper,
    /// `k = floor(eps (n + 1))`.
    Strict,
}

impl QuantileRule {
    /// 1-based index into the ascending scores; 0 means no calibration point
    /// may be excluded.
    pub fn index(self, eps: f64, n: usize) -> usize {
        let raw = match self {
            Self::Paper => eps * n as f64,
            Self::Strict => eps * (n + 1) as f64,
        };
        // absorb rounding in products such as 0.1 * 30
        let near = raw.round();
        let raw = if (raw - near).abs() <= 1e-9 * near.max(1.0) { near } else { raw };
        let k = match self {
            Self::Paper => raw.ceil(),
            Self::Strict => raw.floor(),
        };
        (k.max(0.0) as usize).min(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelWarning {
    /// `eps` is too small for the calibration size; the base set is returned
    /// and the guarantee is not sharp.
    TooFewCalibrationPoints,
    /// The selected score is the outside-base sentinel; the base set is
    /// returned but does not carry the requested coverage.
    OutsideBaseSet,
    /// The base set holds less probability mass than requested.
    BaseMassBelowTarget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    pub zonotope: Zonotope,
    pub alpha: f64,
    pub warning: Option<LevelWarning>,
}

/// Largest grid level whose set contains `x`, or [`BELOW_GRID`].
pub fn membership_score(family: &PreparedFamily, x: &DVector<f64>, grid: &AlphaGrid, tol: f64) -> f64 {
    let probe = family.probe(x);
    let v = grid.values();
    if !probe.contains(v[0], tol) {
        return BELOW_GRID;
    }
    let last = v.len() - 1;
    if probe.contains(v[last], tol) {
        return v[last];
    }
    let (mut lo, mut hi) = (0, last);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if probe.contains(v[mid], tol) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    v[lo]
}

/// Scores of all rows, in row order.
pub fn score_rows(family: &PreparedFamily, data: &SampleMatrix, grid: &AlphaGrid, tol: f64) -> Result<Vec<f64>> {
    if data.dim() != family.family().dim() {
        return Err(Error::dims(family.family().dim(), data.dim()));
    }
    Ok((0..data.nrows())
        .into_par_iter()
        .map(|i| membership_score(family, &data.row(i), grid, tol))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CalibratedRepr", into = "CalibratedRepr")]
pub struct CalibratedFamily {
    family: NestedZonotopeFamily,
    scores: Vec<f64>,
    grid: AlphaGrid,
    rule: QuantileRule,
    tol: f64,
}

#[derive(Serialize, Deserialize)]
struct CalibratedRepr {
    family: NestedZonotopeFamily,
    grid: AlphaGrid,
    rule: QuantileRule,
    tol: f64,
    n: usize,
    scores: Vec<f64>,
}

impl TryFrom<CalibratedRepr> for CalibratedFamily {
    type Error = Error;

    fn try_from(r: CalibratedRepr) -> Result<Self> {
        if r.n != r.scores.len() {
            return Err(Error::dims(r.n, r.scores.len()));
        }
        CalibratedFamily::from_scores(r.family, r.scores, r.grid, r.tol).map(|c| c.with_rule(r.rule))
    }
}

impl From<CalibratedFamily> for CalibratedRepr {
    fn from(c: CalibratedFamily) -> Self {
        Self {
            n: c.scores.len(),
            family: c.family,
            grid: c.grid,
            rule: c.rule,
            tol: c.tol,
            scores: c.scores,
        }
    }
}

/// Scores every row of `data` and sorts the scores ascending.
pub fn calibrate(family: &NestedZonotopeFamily, data: &SampleMatrix, grid: &AlphaGrid, tol: f64) -> Result<CalibratedFamily> {
    if data.is_empty() {
        return Err(Error::domain("calibration needs at least one sample"));
    }
    let prepared = PreparedFamily::new(family);
    let scores = score_rows(&prepared, data, grid, tol)?;
    CalibratedFamily::from_scores(family.clone(), scores, grid.clone(), tol)
}

impl CalibratedFamily {
    /// Sorts `scores`; each must be a grid level or [`BELOW_GRID`].
    pub fn from_scores(family: NestedZonotopeFamily, mut scores: Vec<f64>, grid: AlphaGrid, tol: f64) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::domain("calibration needs at least one score"));
        }
        if let Some(bad) = scores
            .iter()
            .find(|s| **s != BELOW_GRID && grid.values().binary_search_by(|v| v.total_cmp(s)).is_err())
        {
            return Err(Error::domain(format!("score {bad} is not a grid level")));
        }
        scores.sort_by(f64::total_cmp);
        Ok(Self {
            family,
            scores,
            grid,
            rule: QuantileRule::default(),
            tol,
        })
    }

    pub fn with_rule(mut self, rule: QuantileRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn family(&self) -> &NestedZonotopeFamily {
        &self.family
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn grid(&self) -> &AlphaGrid {
        &self.grid
    }

    pub fn rule(&self) -> QuantileRule {
        self.rule
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn n(&self) -> usize {
        self.scores.len()
    }

    /// The calibrated level for `eps`, with a warning when it falls back to
    /// the base set.
    pub fn alpha_for(&self, eps: f64) -> Result<(f64, Option<LevelWarning>)> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::domain(format!("eps must lie in (0, 1), got {eps}")));
        }
        let k = self.rule.index(eps, self.n());
        if k < 1 {
            return Ok((0.0, Some(LevelWarning::TooFewCalibrationPoints)));
        }
        let a = self.scores[k - 1];
        if a < 0.0 {
            return Ok((0.0, Some(LevelWarning::OutsideBaseSet)));
        }
        Ok((a, None))
    }

    pub fn level_set(&self, eps: f64) -> Result<LevelSet> {
        let (alpha, warning) = self.alpha_for(eps)?;
        if let Some(w) = warning {
            log::warn!("eps = {eps}: {w:?}; returning the base set");
        }
        Ok(LevelSet {
            zonotope: self.family.nested_at(alpha)?,
            alpha,
            warning,
        })
    }

    /// Fraction of calibration scores at or above the level for `eps`.
    pub fn calibration_coverage(&self, eps: f64) -> Result<f64> {
        let (alpha, _) = self.alpha_for(eps)?;
        let inside = self.scores.iter().filter(|s| **s >= alpha).count();
        Ok(inside as f64 / self.n() as f64)
    }
}

/// Coverage of each grid level under a known distribution, estimated by
/// Monte Carlo from a caller-supplied sampler.
#[derive(Debug, Clone)]
pub struct DensityCalibration {
    family: NestedZonotopeFamily,
    grid: AlphaGrid,
    coverage: Vec<f64>,
    stderr: Vec<f64>,
    samples: usize,
}

/// Estimates `P(X in Z^a)` for every grid level from `mc_samples` draws of
/// `sampler`, seeded by `seed`.
pub fn calibrate_from_density<F>(
    family: &NestedZonotopeFamily,
    mut sampler: F,
    grid: &AlphaGrid,
    mc_samples: usize,
    seed: u64,
    tol: f64,
) -> Result<DensityCalibration>
where
    F: FnMut(&mut ChaCha8Rng) -> DVector<f64>,
{
    if mc_samples < MIN_MC_SAMPLES {
        return Err(Error::domain(format!(
            "density calibration needs at least {MIN_MC_SAMPLES} samples, got {mc_samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(mc_samples);
    for _ in 0..mc_samples {
        let x = sampler(&mut rng);
        if x.len() != family.dim() {
            return Err(Error::dims(family.dim(), x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("sampler produced a non-finite value"));
        }
        draws.push(x);
    }
    let prepared = PreparedFamily::new(family);
    let mut scores: Vec<f64> = draws
        .par_iter()
        .map(|x| membership_score(&prepared, x, grid, tol))
        .collect();
    scores.sort_by(f64::total_cmp);
    let n = mc_samples as f64;
    let coverage: Vec<f64> = grid
        .values()
        .iter()
        .map(|a| {
            let below = scores.partition_point(|s| s < a);
            (mc_samples - below) as f64 / n
        })
        .collect();
    let stderr = coverage.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
    Ok(DensityCalibration {
        family: family.clone(),
        grid: grid.clone(),
        coverage,
        stderr,
        samples: mc_samples,
    })
}

impl DensityCalibration {
    pub fn grid(&self) -> &AlphaGrid {
        &self.grid
    }

    /// Estimated `P(X in Z^a)` per grid level; nonincreasing.
    pub fn coverage(&self) -> &[f64] {
        &self.coverage
    }

    /// `s(a) = 1 - P(X in Z^a)` per grid level; nondecreasing.
    pub fn s(&self) -> Vec<f64> {
        self.coverage.iter().map(|c| 1.0 - c).collect()
    }

    pub fn stderr(&self) -> &[f64] {
        &self.stderr
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// The deepest level whose estimated coverage is at least `1 - eps`.
    pub fn level_set(&self, eps: f64) -> Result<LevelSet> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::domain(format!("eps must lie in (0, 1), got {eps}")));
        }
        let target = 1.0 - eps;
        let idx = self.coverage.iter().rposition(|c| *c >= target);
        let (alpha, warning) = match idx {
            Some(i) => (self.grid.values()[i], None),
            None => (0.0, Some(LevelWarning::BaseMassBelowTarget)),
        };
        Ok(LevelSet {
            zonotope: self.family.nested_at(alpha)?,
            alpha,
            warning,
        })
    }
}
