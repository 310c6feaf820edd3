//! `zonoconform` command-line tool.
//!
//! CSV inputs hold one sample per row and one dimension per column, with no
//! header unless `--header` is given. Functional data come as two aligned
//! CSVs of truths and model predictions.

mod files;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use zonoconform::baselines::{
    elliptical_calibrate, elliptical_contains, modulation_band, modulation_calibrate, EllipticalModel,
    MAX_ELLIPTICAL_DIM,
};
use zonoconform::calibration::calibrate;
use zonoconform::data::format_float;
use zonoconform::eval::{
    compare_report, efficiency, empirical_coverage, ComparisonTable, CoverageReport, EfficiencyReport, EllipseAt,
    ProjectedArea, DEFAULT_PAIR_BUDGET,
};
use zonoconform::fitting::fit;
use zonoconform::functional::{compute_errors, fit_functional, project_errors, DEFAULT_VARIANCE_FRACTION};
use zonoconform::sets::PreparedFamily;
use zonoconform::{
    AlphaGrid, CalibratedFamily, DepthMethod, FitConfig, FitMethod, FunctionalConformalModel,
    FunctionalPredictionSet, QuantileRule, SampleMatrix, Zonotope, DEFAULT_TOL,
};

use files::{create_dir, read_matrix, write_json, Data, FitFile, ModelFile};

#[derive(Parser)]
#[command(name = "zonoconform", version, about = "Conformal prediction sets from calibrated nested zonotopes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an enclosing zonotope family to samples or to surrogate errors.
    Fit(FitArgs),
    /// Score calibration data against a fit and store the calibrated model.
    Calibrate(CalibrateArgs),
    /// Prediction sets and axis envelopes around base points.
    Predict(PredictArgs),
    /// Empirical coverage and projected-area efficiency on held-out data.
    Coverage(CoverageArgs),
    /// Merge coverage reports into one comparison table.
    Compare(CompareArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Samples CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Ground-truth outputs CSV (functional mode).
    #[arg(long, requires = "predictions")]
    truths: Option<PathBuf>,
    /// Model outputs CSV aligned with --truths.
    #[arg(long, requires = "truths")]
    predictions: Option<PathBuf>,
    /// CSV files start with a header row.
    #[arg(long)]
    header: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Data> {
        Data::load(
            self.input.as_deref(),
            self.truths.as_deref(),
            self.predictions.as_deref(),
            self.header,
        )?
        .context("no data given; use --input, or --truths with --predictions")
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = FitMethod::RotatedBox)]
    method: FitMethod,
    #[arg(long, default_value_t = DepthMethod::Mahalanobis)]
    depth: DepthMethod,
    /// Relative margin added to the fitted extent.
    #[arg(long, default_value_t = 0.0)]
    inflation: f64,
    /// Share of error variance kept by the SVD (functional mode).
    #[arg(long, default_value_t = DEFAULT_VARIANCE_FRACTION)]
    variance_fraction: f64,
    /// Membership tolerance relative to the generator scale.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Unused: fitting is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Fit file written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Uniform alpha grid size; defaults to max(1000, n + 1).
    #[arg(long)]
    grid_size: Option<usize>,
    /// Use the floor(eps (n + 1)) quantile index instead of ceil(eps n).
    #[arg(long)]
    strict_quantile: bool,
    /// Levels reported in the calibration diagnostics.
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2")]
    eps: Vec<f64>,
    /// Membership tolerance for multivariate fits; functional fits keep the
    /// one they were fitted with.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Model file written by `calibrate`.
    #[arg(long)]
    model: PathBuf,
    /// Base points CSV, one per row (model predictions in functional mode).
    /// Defaults to the origin.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    header: bool,
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    eps: Vec<f64>,
    /// Write generators once per level and only centres per row; all rows
    /// share the same generators.
    #[arg(long)]
    compact: bool,
    /// Output directory for `sets.json` and `envelope_<eps>.csv`. Envelope
    /// files hold a lower and an upper row per base point.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct CompactLevel {
    eps: f64,
    alpha: f64,
    /// Generator columns shared by every row.
    generators: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct CompactRow {
    base_point: Vec<f64>,
    /// Set centre per level.
    centers: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct CompactSets {
    levels: Vec<CompactLevel>,
    rows: Vec<CompactRow>,
}

impl CompactSets {
    fn new(sets: &[FunctionalPredictionSet]) -> Self {
        let levels = match sets.first() {
            Some(first) => first
                .sets
                .iter()
                .enumerate()
                .map(|(i, z)| CompactLevel {
                    eps: first.alpha_levels[i],
                    alpha: first.calibrated_alphas[i],
                    generators: z.generators().column_iter().map(|c| c.iter().copied().collect()).collect(),
                })
                .collect(),
            None => Vec::new(),
        };
        let rows = sets
            .iter()
            .map(|s| CompactRow {
                base_point: s.base_point.clone(),
                centers: s.sets.iter().map(|z| z.center().iter().copied().collect()).collect(),
            })
            .collect();
        Self { levels, rows }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Method {
    Zonotope,
    RotatedBox,
    Modulation,
    Elliptical,
}

impl Method {
    fn label(self) -> &'static str {
        match self {
            Method::Zonotope => "zonotope",
            Method::RotatedBox => "rotated_box",
            Method::Modulation => "modulation",
            Method::Elliptical => "elliptical",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct CoverageArgs {
    /// Model file written by `calibrate`.
    #[arg(long)]
    model: PathBuf,
    /// Held-out test data.
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    eps: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "zonotope")]
    methods: Vec<Method>,
    /// Calibration samples for the baselines.
    #[arg(long)]
    calibration_input: Option<PathBuf>,
    #[arg(long, requires = "calibration_predictions")]
    calibration_truths: Option<PathBuf>,
    #[arg(long, requires = "calibration_truths")]
    calibration_predictions: Option<PathBuf>,
    /// Fit samples for the rotated_box comparison.
    #[arg(long)]
    fit_input: Option<PathBuf>,
    #[arg(long, requires = "fit_predictions")]
    fit_truths: Option<PathBuf>,
    #[arg(long, requires = "fit_truths")]
    fit_predictions: Option<PathBuf>,
    /// Depth used by the rotated_box comparison.
    #[arg(long, default_value_t = DepthMethod::Mahalanobis)]
    depth: DepthMethod,
    /// Variance fraction used by the rotated_box comparison.
    #[arg(long, default_value_t = DEFAULT_VARIANCE_FRACTION)]
    variance_fraction: f64,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    strict_quantile: bool,
    /// Largest norm of a truth's error outside the SVD span that still
    /// counts as covered.
    #[arg(long, default_value_t = f64::INFINITY)]
    residual_tol: f64,
    /// Coordinate pairs averaged for the projected-area efficiency.
    #[arg(long, default_value_t = DEFAULT_PAIR_BUDGET)]
    pair_budget: usize,
    /// Seed for sampling coordinate pairs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Report files written by `coverage`, JSON or CSV.
    #[arg(long, value_delimiter = ',', required = true)]
    input: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Writes the merged table here; the text table always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Default, Serialize, Deserialize)]
struct ReportFile {
    coverage: Vec<CoverageReport>,
    efficiency: Vec<EfficiencyReport>,
}

fn check_eps(eps: &[f64]) -> Result<()> {
    ensure!(!eps.is_empty(), "no eps levels given");
    for &e in eps {
        ensure!(e > 0.0 && e < 1.0, "eps {e} is outside (0, 1)");
    }
    Ok(())
}

fn grid_for(size: Option<usize>, n: usize) -> Result<AlphaGrid> {
    Ok(match size {
        Some(m) => AlphaGrid::uniform(m)?,
        None => AlphaGrid::default_for(n),
    })
}

fn rule(strict: bool) -> QuantileRule {
    if strict {
        QuantileRule::Strict
    } else {
        QuantileRule::Paper
    }
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let cfg = FitConfig {
        method: a.method,
        depth: a.depth,
        inflation: a.inflation,
        tol: a.tol,
    };
    match a.data.load()? {
        Data::Samples(x) => {
            let result = fit(&x, &cfg)?;
            write_json(&a.out, &result)?;
            println!(
                "fit {}: {} rows, dim {}, {} generators, core row {} depth {}",
                a.method,
                x.nrows(),
                x.dim(),
                result.family.base().num_generators(),
                result.core_index,
                format_float(result.core_depth)
            );
        }
        data @ Data::Functional { .. } => {
            let errors = data.errors()?;
            let result = fit_functional(&errors, &cfg, a.variance_fraction)?;
            result.save(&a.out)?;
            match (result.svd(), result.fit_result()) {
                (Some(svd), Some(f)) => println!(
                    "fit {}: {} rows, output dim {}, kept {} of rank {}, {} generators, core row {} depth {}",
                    a.method,
                    errors.nrows(),
                    errors.dim(),
                    svd.k(),
                    svd.rank(),
                    f.family.base().num_generators(),
                    f.core_index,
                    format_float(f.core_depth)
                ),
                _ => println!("fit: all errors are zero; sets collapse to the base point"),
            }
        }
    }
    Ok(())
}

fn print_diagnostics(cal: &CalibratedFamily, eps: &[f64]) -> Result<()> {
    for &e in eps {
        let (alpha, warning) = cal.alpha_for(e)?;
        let coverage = cal.calibration_coverage(e)?;
        let note = warning.map_or(String::new(), |w| format!(" (warning: {w:?})"));
        println!(
            "eps {}: alpha {}, calibration coverage {:.4}{note}",
            format_float(e),
            format_float(alpha),
            coverage
        );
    }
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<()> {
    check_eps(&a.eps)?;
    let data = a.data.load()?;
    let grid = grid_for(a.grid_size, data.nrows())?;
    match FitFile::load(&a.fit)? {
        FitFile::Multivariate(f) => {
            let x = data.expect_samples("a multivariate fit")?;
            let cal = calibrate(&f.family, &x, &grid, a.tol)?.with_rule(rule(a.strict_quantile));
            write_json(&a.out, &cal)?;
            println!("calibrated on {} rows, grid size {}", cal.n(), cal.grid().len());
            print_diagnostics(&cal, &a.eps)?;
        }
        FitFile::Functional(f) => {
            let errors = match data {
                d @ Data::Functional { .. } => d.errors()?,
                Data::Samples(_) => bail!("a functional fit expects --truths and --predictions"),
            };
            let model = f.calibrate(&errors, &grid)?.with_rule(rule(a.strict_quantile));
            model.save(&a.out)?;
            match (model.svd(), model.calibrated(), model.trunc_box()) {
                (Some(svd), Some(cal), Some(b)) => {
                    println!(
                        "calibrated on {} rows, grid size {}, kept dims {}, truncation box dims {}",
                        cal.n(),
                        cal.grid().len(),
                        svd.k(),
                        b.dim()
                    );
                    print_diagnostics(cal, &a.eps)?;
                }
                _ => println!("calibrated a degenerate model; sets are the base point"),
            }
        }
    }
    Ok(())
}

fn base_points(input: Option<&Path>, header: bool, dim: usize) -> Result<SampleMatrix> {
    let bases = match input {
        Some(p) => read_matrix(p, header)?,
        None => SampleMatrix::new(DMatrix::zeros(1, dim))?,
    };
    ensure!(
        bases.dim() == dim,
        "base points have {} columns but the model has dimension {dim}",
        bases.dim()
    );
    Ok(bases)
}

fn multivariate_set(cal: &CalibratedFamily, base: &DVector<f64>, eps: &[f64]) -> Result<FunctionalPredictionSet> {
    let mut alphas = Vec::with_capacity(eps.len());
    let mut sets = Vec::with_capacity(eps.len());
    for &e in eps {
        let level = cal.level_set(e)?;
        if let Some(w) = level.warning {
            log::warn!("eps {e}: {w:?}");
        }
        alphas.push(level.alpha);
        sets.push(level.zonotope.translate(base)?);
    }
    Ok(FunctionalPredictionSet {
        alpha_levels: eps.to_vec(),
        calibrated_alphas: alphas,
        sets,
        base_point: base.iter().copied().collect(),
    })
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    check_eps(&a.eps)?;
    let model = ModelFile::load(&a.model)?;
    let bases = base_points(a.input.as_deref(), a.header, model.dim())?;
    let sets = bases
        .rows()
        .map(|b| match &model {
            ModelFile::Multivariate(cal) => multivariate_set(cal, &b, &a.eps),
            ModelFile::Functional(m) => Ok(m.predict(&b, &a.eps)?),
        })
        .collect::<Result<Vec<_>>>()?;
    let dir = create_dir(&a.out)?;
    if a.compact {
        write_json(&dir.join("sets.json"), &CompactSets::new(&sets))?;
    } else {
        write_json(&dir.join("sets.json"), &sets)?;
    }
    for (level, &e) in a.eps.iter().enumerate() {
        let path = dir.join(format!("envelope_{}.csv", format_float(e)));
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        for set in &sets {
            let env = set.sets[level].interval_bounds();
            for bound in [env.lower(), env.upper()] {
                let line: Vec<String> = bound.iter().map(|v| format_float(*v)).collect();
                writeln!(w, "{}", line.join(","))?;
            }
        }
        w.flush().with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "{} base points, {} levels, written to {}",
        sets.len(),
        a.eps.len(),
        dir.display()
    );
    Ok(())
}

/// Test rows as `(truths, bases)`; samples are measured from the origin.
fn test_pairs(data: Data) -> (SampleMatrix, SampleMatrix) {
    match data {
        Data::Samples(x) => {
            let zeros = SampleMatrix::new(DMatrix::zeros(x.nrows(), x.dim())).expect("finite zeros");
            (x, zeros)
        }
        Data::Functional { truths, predictions } => (truths, predictions),
    }
}

enum Evaluated {
    Multivariate(CalibratedFamily),
    Functional(FunctionalConformalModel),
}

impl Evaluated {
    fn coverage(
        &self,
        label: &str,
        eps: &[f64],
        truths: &SampleMatrix,
        bases: &SampleMatrix,
        residual_tol: f64,
    ) -> Result<Vec<CoverageReport>> {
        match self {
            Evaluated::Multivariate(cal) => {
                let prepared = PreparedFamily::new(cal.family());
                eps.iter()
                    .map(|&e| {
                        let (alpha, _) = cal.alpha_for(e)?;
                        Ok(empirical_coverage(label, e, truths, bases, |t, b| {
                            Ok(prepared.contains_at(&(t - b), alpha, cal.tol()))
                        })?)
                    })
                    .collect()
            }
            Evaluated::Functional(m) => {
                let checks = m.checker(eps)?.check_rows(bases, truths)?;
                eps.iter()
                    .enumerate()
                    .map(|(level, &e)| {
                        let covered = checks.iter().filter(|c| c.contains(level, residual_tol)).count();
                        Ok(CoverageReport::from_counts(label, e, covered, checks.len())?)
                    })
                    .collect()
            }
        }
    }

    fn set_at_origin(&self, eps: f64) -> Result<Zonotope> {
        Ok(match self {
            Evaluated::Multivariate(cal) => cal.level_set(eps)?.zonotope,
            Evaluated::Functional(m) => m.predict(&DVector::zeros(m.output_dim()), &[eps])?.sets.remove(0),
        })
    }
}

struct CoverageRun<'a> {
    args: &'a CoverageArgs,
    truths: SampleMatrix,
    bases: SampleMatrix,
    report: ReportFile,
}

impl CoverageRun<'_> {
    fn add_efficiency(&mut self, label: &str, eps: f64, set: &(dyn ProjectedArea + Sync)) {
        if set.dim() < 2 {
            eprintln!("note: {label}: efficiency needs at least two dimensions, skipped");
            return;
        }
        match efficiency(label, eps, set, self.args.pair_budget, self.args.seed) {
            Ok(r) => self.report.efficiency.push(r),
            Err(e) => eprintln!("note: {label}: efficiency skipped: {e}"),
        }
    }

    fn evaluate_zonotope(&mut self, label: &str, model: &Evaluated) -> Result<()> {
        let eps = &self.args.eps;
        let reports = model.coverage(label, eps, &self.truths, &self.bases, self.args.residual_tol)?;
        self.report.coverage.extend(reports);
        for &e in eps {
            let set = model.set_at_origin(e)?;
            self.add_efficiency(label, e, &set);
        }
        Ok(())
    }

    fn run(&mut self, method: Method, model: &ModelFile) -> Result<()> {
        let a = self.args;
        let label = method.label();
        match method {
            Method::Zonotope => {
                let evaluated = match model {
                    ModelFile::Multivariate(c) => Evaluated::Multivariate(c.clone()),
                    ModelFile::Functional(m) => Evaluated::Functional(m.clone()),
                };
                self.evaluate_zonotope(label, &evaluated)
            }
            Method::RotatedBox => {
                let cal_data = calibration_data(a)?.context("needs calibration data")?;
                let fit_data = Data::load(
                    a.fit_input.as_deref(),
                    a.fit_truths.as_deref(),
                    a.fit_predictions.as_deref(),
                    a.data.header,
                )?
                .context("needs fit data (--fit-input, or --fit-truths with --fit-predictions)")?;
                let cfg = FitConfig {
                    method: FitMethod::RotatedBox,
                    depth: a.depth,
                    ..FitConfig::default()
                };
                let grid = grid_for(a.grid_size, cal_data.nrows())?;
                let evaluated = match model {
                    ModelFile::Multivariate(_) => {
                        let family = fit(&fit_data.expect_samples(label)?, &cfg)?.family;
                        let x = cal_data.expect_samples(label)?;
                        Evaluated::Multivariate(
                            calibrate(&family, &x, &grid, cfg.tol)?.with_rule(rule(a.strict_quantile)),
                        )
                    }
                    ModelFile::Functional(_) => {
                        let f = fit_functional(&fit_data.errors()?, &cfg, a.variance_fraction)?;
                        Evaluated::Functional(f.calibrate(&cal_data.errors()?, &grid)?.with_rule(rule(a.strict_quantile)))
                    }
                };
                self.evaluate_zonotope(label, &evaluated)
            }
            Method::Modulation => {
                let errors = calibration_data(a)?.context("needs calibration data")?.errors()?;
                let m = modulation_calibrate(&errors)?;
                for &e in &a.eps {
                    let r = empirical_coverage(label, e, &self.truths, &self.bases, |t, b| m.contains(b, t, e))?;
                    self.report.coverage.push(r);
                    let band = modulation_band(&m, &DVector::zeros(m.dim()), e)?;
                    self.add_efficiency(label, e, &band);
                }
                Ok(())
            }
            Method::Elliptical => {
                let errors = calibration_data(a)?.context("needs calibration data")?.errors()?;
                match model {
                    ModelFile::Multivariate(_) => {
                        let dim = self.truths.dim();
                        if dim > MAX_ELLIPTICAL_DIM {
                            bail!("dimension {dim} exceeds {MAX_ELLIPTICAL_DIM}");
                        }
                        let m = elliptical_calibrate(&errors)?;
                        for &e in &a.eps {
                            let r = empirical_coverage(label, e, &self.truths, &self.bases, |t, b| {
                                elliptical_contains(&m, b, t, e)
                            })?;
                            self.report.coverage.push(r);
                            self.add_efficiency(label, e, &EllipseAt { model: &m, eps: e });
                        }
                    }
                    ModelFile::Functional(f) => {
                        // Adapted baseline: the ellipse lives in the model's kept SVD
                        // coordinates and coverage is checked there.
                        let label = "elliptical_svd";
                        let svd = f.svd().context("the model has no SVD coordinates")?;
                        let m = elliptical_calibrate(&project_errors(svd, &errors)?.kept)?;
                        let test = project_errors(svd, &compute_errors(&self.truths, &self.bases)?)?.kept;
                        let zeros = SampleMatrix::new(DMatrix::zeros(test.nrows(), test.dim()))?;
                        let map = svd.back_map().columns(0, svd.k()).into_owned();
                        for &e in &a.eps {
                            let r = empirical_coverage(label, e, &test, &zeros, |t, b| elliptical_contains(&m, b, t, e))?;
                            self.report.coverage.push(r);
                            let ellipse = MappedEllipse::new(&m, &map, e)?;
                            self.add_efficiency(label, e, &ellipse);
                        }
                    }
                }
                Ok(())
            }
        }
    }
}

/// An elliptical set `{u : u^T S^-1 u <= q^2}` seen through a linear map
/// `x = M u`.
struct MappedEllipse {
    /// `M S M^T`.
    shape: DMatrix<f64>,
    q: f64,
}

impl MappedEllipse {
    fn new(model: &EllipticalModel, map: &DMatrix<f64>, eps: f64) -> Result<Self> {
        Ok(Self {
            shape: map * model.sigma_hat() * map.transpose(),
            q: model.quantile(eps)?,
        })
    }
}

impl ProjectedArea for MappedEllipse {
    fn dim(&self) -> usize {
        self.shape.nrows()
    }

    fn projected_area_2d(&self, i: usize, j: usize) -> zonoconform::Result<f64> {
        let s = &self.shape;
        let det = s[(i, i)] * s[(j, j)] - s[(i, j)] * s[(j, i)];
        Ok(std::f64::consts::PI * self.q * self.q * det.max(0.0).sqrt())
    }
}

fn calibration_data(a: &CoverageArgs) -> Result<Option<Data>> {
    Data::load(
        a.calibration_input.as_deref(),
        a.calibration_truths.as_deref(),
        a.calibration_predictions.as_deref(),
        a.data.header,
    )
}

fn write_report(report: &ReportFile, format: Format, path: &Path) -> Result<ComparisonTable> {
    let table = compare_report(&report.coverage, &report.efficiency);
    match format {
        Format::Json => write_json(path, report)?,
        Format::Csv => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            table.write_csv(BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(table)
}

fn cmd_coverage(a: CoverageArgs) -> Result<()> {
    check_eps(&a.eps)?;
    let model = ModelFile::load(&a.model)?;
    let (truths, bases) = test_pairs(a.data.load()?);
    ensure!(
        truths.dim() == model.dim(),
        "test data have {} columns but the model has dimension {}",
        truths.dim(),
        model.dim()
    );
    let mut run = CoverageRun {
        args: &a,
        truths,
        bases,
        report: ReportFile::default(),
    };
    for &method in &a.methods {
        if let Err(e) = run.run(method, &model) {
            eprintln!("note: {}: skipped: {}", method.label(), one_line(&e));
        }
    }
    ensure!(!run.report.coverage.is_empty(), "no method produced a report");
    let table = write_report(&run.report, a.format, &a.out)?;
    print!("{}", table.to_text());
    Ok(())
}

fn read_report(path: &Path) -> Result<ReportFile> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    if path.extension().is_some_and(|x| x == "csv") {
        let table = ComparisonTable::read_csv(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
        let mut report = ReportFile::default();
        for r in table.rows {
            if let (Some(n_test), Some(covered)) = (r.n_test, r.covered) {
                report.coverage.push(CoverageReport::from_counts(&r.method, r.eps, covered, n_test)?);
            }
            if let (Some(area), Some(pairs), Some(seed)) = (r.mean_projected_area, r.pairs_sampled, r.seed) {
                report.efficiency.push(EfficiencyReport {
                    method: r.method,
                    eps: r.eps,
                    mean_projected_area: area,
                    pairs_sampled: pairs,
                    seed,
                });
            }
        }
        Ok(report)
    } else {
        serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
    }
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let mut merged = ReportFile::default();
    for path in &a.input {
        let r = read_report(path)?;
        merged.coverage.extend(r.coverage);
        merged.efficiency.extend(r.efficiency);
    }
    let table = match &a.out {
        Some(out) => write_report(&merged, a.format, out)?,
        None => compare_report(&merged.coverage, &merged.efficiency),
    };
    print!("{}", table.to_text());
    Ok(())
}

fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").replace('\n', " ")
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("ZONOCONFORM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .with_context(|| format!("ZONOCONFORM_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Coverage(a) => cmd_coverage(a),
        Command::Compare(a) => cmd_compare(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}
