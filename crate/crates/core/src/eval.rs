//! Coverage and efficiency metrics, and comparison tables.
//!
//! Efficiency is the mean area of 2D coordinate projections of a set. Exact
//! volumes of high-dimensional zonotopes are out of reach, and projections are
//! cheap for both zonotopes and boxes.

use std::fmt::Write as _;
use std::io::{Read, Write};

use nalgebra::DVector;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::EllipticalModel;
use crate::data::{format_float, SampleMatrix};
use crate::sets::{Hyperrectangle, Zonotope};
use crate::{Error, Result};

/// Pairs averaged by default when the output has too many to enumerate.
pub const DEFAULT_PAIR_BUDGET: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub method: String,
    pub eps: f64,
    pub n_test: usize,
    pub covered: usize,
    pub coverage: f64,
    pub mc_stderr: f64,
}

impl CoverageReport {
    pub fn from_counts(method: impl Into<String>, eps: f64, covered: usize, n_test: usize) -> Result<Self> {
        if n_test == 0 {
            return Err(Error::domain("coverage needs at least one test row"));
        }
        if covered > n_test {
            return Err(Error::domain(format!("{covered} covered out of {n_test}")));
        }
        let p = covered as f64 / n_test as f64;
        Ok(Self {
            method: method.into(),
            eps,
            n_test,
            covered,
            coverage: p,
            mc_stderr: (p * (1.0 - p) / n_test as f64).sqrt(),
        })
    }

    /// `coverage >= 1 - eps - k * sqrt(eps (1 - eps) / n_test)`.
    pub fn meets_target(&self, k: f64) -> bool {
        self.coverage >= 1.0 - self.eps - k * (self.eps * (1.0 - self.eps) / self.n_test as f64).sqrt()
    }
}

/// Counts the rows whose full vector `contains(truth, base)` accepts.
pub fn empirical_coverage<F>(
    method: &str,
    eps: f64,
    test_truths: &SampleMatrix,
    test_bases: &SampleMatrix,
    contains: F,
) -> Result<CoverageReport>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> Result<bool> + Sync,
{
    if test_truths.nrows() != test_bases.nrows() {
        return Err(Error::dims(test_truths.nrows(), test_bases.nrows()));
    }
    if test_truths.is_empty() {
        return Err(Error::domain("coverage needs at least one test row"));
    }
    let hits = (0..test_truths.nrows())
        .into_par_iter()
        .map(|i| contains(&test_truths.row(i), &test_bases.row(i)).map(usize::from))
        .collect::<Result<Vec<_>>>()?;
    CoverageReport::from_counts(method, eps, hits.iter().sum(), test_truths.nrows())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub method: String,
    pub eps: f64,
    pub mean_projected_area: f64,
    pub pairs_sampled: usize,
    pub seed: u64,
}

/// Sets with computable 2D coordinate projections.
pub trait ProjectedArea {
    fn dim(&self) -> usize;
    fn projected_area_2d(&self, i: usize, j: usize) -> Result<f64>;
}

impl ProjectedArea for Zonotope {
    fn dim(&self) -> usize {
        Zonotope::dim(self)
    }

    fn projected_area_2d(&self, i: usize, j: usize) -> Result<f64> {
        Zonotope::projected_area_2d(self, i, j)
    }
}

/// Bands project to rectangles.
impl ProjectedArea for Hyperrectangle {
    fn dim(&self) -> usize {
        Hyperrectangle::dim(self)
    }

    fn projected_area_2d(&self, i: usize, j: usize) -> Result<f64> {
        let d = self.dim();
        if i >= d || j >= d || i == j {
            return Err(Error::domain(format!("invalid coordinate pair ({i}, {j}) for dimension {d}")));
        }
        Ok(4.0 * self.radius()[i] * self.radius()[j])
    }
}

/// An elliptical model's set at one `eps`.
pub struct EllipseAt<'a> {
    pub model: &'a EllipticalModel,
    pub eps: f64,
}

impl ProjectedArea for EllipseAt<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn projected_area_2d(&self, i: usize, j: usize) -> Result<f64> {
        self.model.projected_area_2d(self.eps, i, j)
    }
}

/// Coordinate pairs `(i, j)`, `i < j`: all of them when there are at most
/// `pair_budget`, otherwise a seeded sample of `pair_budget` distinct pairs.
pub fn coordinate_pairs(dim: usize, pair_budget: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if pair_budget == 0 {
        return Err(Error::domain("pair budget must be at least 1"));
    }
    let total = dim * dim.saturating_sub(1) / 2;
    let decode = |mut k: usize| {
        let mut i = 0;
        while k >= dim - 1 - i {
            k -= dim - 1 - i;
            i += 1;
        }
        (i, i + 1 + k)
    };
    if total <= pair_budget {
        return Ok((0..total).map(decode).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, total, pair_budget).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(decode).collect())
}

pub fn efficiency(
    method: &str,
    eps: f64,
    set: &(dyn ProjectedArea + Sync),
    pair_budget: usize,
    seed: u64,
) -> Result<EfficiencyReport> {
    let pairs = coordinate_pairs(set.dim(), pair_budget, seed)?;
    if pairs.is_empty() {
        return Err(Error::domain("projected areas need at least two dimensions"));
    }
    let areas = pairs
        .par_iter()
        .map(|&(i, j)| set.projected_area_2d(i, j))
        .collect::<Result<Vec<_>>>()?;
    Ok(EfficiencyReport {
        method: method.into(),
        eps,
        mean_projected_area: areas.iter().sum::<f64>() / areas.len() as f64,
        pairs_sampled: pairs.len(),
        seed,
    })
}

/// One line of a comparison table; coverage and efficiency joined on
/// `(method, eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub eps: f64,
    pub n_test: Option<usize>,
    pub covered: Option<usize>,
    pub coverage: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub mean_projected_area: Option<f64>,
    pub pairs_sampled: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub const CSV_HEADER: [&str; 9] = [
    "method",
    "eps",
    "n_test",
    "covered",
    "coverage",
    "mc_stderr",
    "mean_projected_area",
    "pairs_sampled",
    "seed",
];

pub fn compare_report(coverage: &[CoverageReport], efficiency: &[EfficiencyReport]) -> ComparisonTable {
    let mut rows: Vec<ComparisonRow> = Vec::new();
    let find = |rows: &mut Vec<ComparisonRow>, method: &str, eps: f64| -> usize {
        match rows.iter().position(|r| r.method == method && r.eps == eps) {
            Some(i) => i,
            None => {
                rows.push(ComparisonRow {
                    method: method.into(),
                    eps,
                    n_test: None,
                    covered: None,
                    coverage: None,
                    mc_stderr: None,
                    mean_projected_area: None,
                    pairs_sampled: None,
                    seed: None,
                });
                rows.len() - 1
            }
        }
    };
    for c in coverage {
        let i = find(&mut rows, &c.method, c.eps);
        rows[i].n_test = Some(c.n_test);
        rows[i].covered = Some(c.covered);
        rows[i].coverage = Some(c.coverage);
        rows[i].mc_stderr = Some(c.mc_stderr);
    }
    for e in efficiency {
        let i = find(&mut rows, &e.method, e.eps);
        rows[i].mean_projected_area = Some(e.mean_projected_area);
        rows[i].pairs_sampled = Some(e.pairs_sampled);
        rows[i].seed = Some(e.seed);
    }
    rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.eps.total_cmp(&b.eps)));
    ComparisonTable { rows }
}

/// `1.23×10^-4`.
pub fn scientific(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.2e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    format!("{mantissa}×10^{exp}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn opt_float(v: Option<f64>) -> String {
    v.map_or_else(String::new, format_float)
}

fn parse_opt<T: std::str::FromStr>(s: &str, row: usize, col: usize) -> Result<Option<T>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Parse {
        row,
        col,
        message: format!("cannot parse {s:?}"),
    })
}

impl ComparisonTable {
    /// Fixed-width text: coverage in percent, areas as `X×10^Y`.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<24} {:>6} {:>10} {:>10} {:>14} {:>7}\n",
            "method", "eps", "coverage%", "stderr%", "mean_area", "pairs"
        );
        for r in &self.rows {
            let pct = |v: Option<f64>| v.map_or_else(|| "-".into(), |v| format!("{:.2}", 100.0 * v));
            let _ = writeln!(
                out,
                "{:<24} {:>6} {:>10} {:>10} {:>14} {:>7}",
                r.method,
                r.eps,
                pct(r.coverage),
                pct(r.mc_stderr),
                r.mean_projected_area.map_or_else(|| "-".into(), scientific),
                r.pairs_sampled.map_or_else(|| "-".into(), |p| p.to_string()),
            );
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                format_float(r.eps),
                opt(r.n_test),
                opt(r.covered),
                opt_float(r.coverage),
                opt_float(r.mc_stderr),
                opt_float(r.mean_projected_area),
                opt(r.pairs_sampled),
                opt(r.seed),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().ne(CSV_HEADER) {
            return Err(Error::Parse {
                row: 0,
                col: 0,
                message: "unexpected comparison header".into(),
            });
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            let eps = parse_opt(&rec[1], row, 1)?.ok_or(Error::Parse {
                row,
                col: 1,
                message: "missing eps".into(),
            })?;
            rows.push(ComparisonRow {
                method: rec[0].to_string(),
                eps,
                n_test: parse_opt(&rec[2], row, 2)?,
                covered: parse_opt(&rec[3], row, 3)?,
                coverage: parse_opt(&rec[4], row, 4)?,
                mc_stderr: parse_opt(&rec[5], row, 5)?,
                mean_projected_area: parse_opt(&rec[6], row, 6)?,
                pairs_sampled: parse_opt(&rec[7], row, 7)?,
                seed: parse_opt(&rec[8], row, 8)?,
            });
        }
        Ok(Self { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn rows(n: usize) -> SampleMatrix {
        SampleMatrix::new(DMatrix::from_fn(n, 2, |i, j| (i + j) as f64)).unwrap()
    }

    #[test]
    fn constant_evaluators() {
        let x = rows(10);
        let all = empirical_coverage("m", 0.1, &x, &x, |_, _| Ok(true)).unwrap();
        assert_eq!((all.coverage, all.covered, all.mc_stderr), (1.0, 10, 0.0));
        let none = empirical_coverage("m", 0.1, &x, &x, |_, _| Ok(false)).unwrap();
        assert_eq!(none.coverage, 0.0);
        let half = empirical_coverage("m", 0.1, &x, &x, |t, _| Ok(t[0] < 5.0)).unwrap();
        assert_eq!(half.coverage, 0.5);
        assert!((half.mc_stderr - (0.25f64 / 10.0).sqrt()).abs() < 1e-15);
        assert!(empirical_coverage("m", 0.1, &rows(0), &rows(0), |_, _| Ok(true)).is_err());
    }

    #[test]
    fn box_areas_by_enumeration() {
        let b = Hyperrectangle::new(DVector::zeros(4), DVector::from_vec(vec![1.0, 2.0, 0.5, 3.0])).unwrap();
        let w = [2.0, 4.0, 1.0, 6.0];
        let mut sum = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                sum += w[i] * w[j];
            }
        }
        let r = efficiency("box", 0.1, &b, 512, 0).unwrap();
        assert_eq!(r.pairs_sampled, 6);
        assert!((r.mean_projected_area - sum / 6.0).abs() < 1e-12);
        let z = Zonotope::from_hyperrectangle(&b);
        let rz = efficiency("box", 0.1, &z, 512, 0).unwrap();
        assert!((rz.mean_projected_area - r.mean_projected_area).abs() < 1e-12);
        let point = Zonotope::singleton(DVector::zeros(3)).unwrap();
        assert_eq!(efficiency("pt", 0.1, &point, 512, 0).unwrap().mean_projected_area, 0.0);
        assert!(efficiency("box", 0.1, &b, 0, 0).is_err());
    }

    #[test]
    fn pair_sampling() {
        let all = coordinate_pairs(5, 100, 0).unwrap();
        assert_eq!(all.len(), 10);
        assert_eq!(all[0], (0, 1));
        assert_eq!(all[9], (3, 4));
        let a = coordinate_pairs(300, 50, 7).unwrap();
        assert_eq!(a, coordinate_pairs(300, 50, 7).unwrap());
        assert_ne!(a, coordinate_pairs(300, 50, 8).unwrap());
        assert_eq!(a.len(), 50);
        assert!(a.iter().all(|&(i, j)| i < j && j < 300));
        let mut dedup = a.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 50);
    }

    #[test]
    fn table_sorting_and_round_trip() {
        let empty = compare_report(&[], &[]);
        let mut buf = Vec::new();
        empty.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().trim(), CSV_HEADER.join(","));
        assert_eq!(empty.to_text().lines().count(), 1);

        let cov = vec![
            CoverageReport::from_counts("zonotope", 0.2, 81, 100).unwrap(),
            CoverageReport::from_counts("band", 0.1, 7, 7).unwrap(),
            CoverageReport::from_counts("zonotope", 0.1, 91, 100).unwrap(),
            CoverageReport::from_counts("band", 0.2, 1, 3).unwrap(),
        ];
        let eff = vec![EfficiencyReport {
            method: "band".into(),
            eps: 0.1,
            mean_projected_area: 1.0 / 3.0 * 1e-7,
            pairs_sampled: 6,
            seed: 42,
        }];
        let t = compare_report(&cov, &eff);
        let keys: Vec<(String, f64)> = t.rows.iter().map(|r| (r.method.clone(), r.eps)).collect();
        assert_eq!(
            keys,
            vec![("band".into(), 0.1), ("band".into(), 0.2), ("zonotope".into(), 0.1), ("zonotope".into(), 0.2)]
        );
        assert_eq!(t.rows[0].seed, Some(42));
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = ComparisonTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        for (a, b) in back.rows.iter().zip(&t.rows) {
            assert_eq!(a.coverage.map(f64::to_bits), b.coverage.map(f64::to_bits));
        }
        assert!(t.to_text().contains("3.33×10^-8"));
    }

    #[test]
    fn scientific_format() {
        assert_eq!(scientific(12345.0), "1.23×10^4");
        assert_eq!(scientific(0.0), "0");
    }
}
