//! Reading inputs and the fit/model files written by earlier subcommands.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;

use zonoconform::functional::{compute_errors, FunctionalFit};
use zonoconform::{CalibratedFamily, FitResult, FunctionalConformalModel, SampleMatrix};

pub fn read_matrix(path: &Path, header: bool) -> Result<SampleMatrix> {
    SampleMatrix::read_csv_path(path, header).with_context(|| format!("reading {}", path.display()))
}

/// Samples, or aligned truths and predictions of a functional surrogate.
pub enum Data {
    Samples(SampleMatrix),
    Functional {
        truths: SampleMatrix,
        predictions: SampleMatrix,
    },
}

impl Data {
    pub fn load(
        input: Option<&Path>,
        truths: Option<&Path>,
        predictions: Option<&Path>,
        header: bool,
    ) -> Result<Option<Data>> {
        match (input, truths, predictions) {
            (Some(i), None, None) => Ok(Some(Data::Samples(read_matrix(i, header)?))),
            (None, Some(t), Some(p)) => {
                let truths = read_matrix(t, header)?;
                let predictions = read_matrix(p, header)?;
                if truths.nrows() != predictions.nrows() || truths.dim() != predictions.dim() {
                    bail!(
                        "truths are {}x{} but predictions are {}x{}",
                        truths.nrows(),
                        truths.dim(),
                        predictions.nrows(),
                        predictions.dim()
                    );
                }
                Ok(Some(Data::Functional { truths, predictions }))
            }
            (None, None, None) => Ok(None),
            _ => bail!("give either an input CSV or both truths and predictions"),
        }
    }

    pub fn nrows(&self) -> usize {
        match self {
            Data::Samples(x) => x.nrows(),
            Data::Functional { truths, .. } => truths.nrows(),
        }
    }

    /// The rows a set is built around: samples themselves, or prediction
    /// errors.
    pub fn errors(&self) -> Result<SampleMatrix> {
        match self {
            Data::Samples(x) => Ok(x.clone()),
            Data::Functional { truths, predictions } => Ok(compute_errors(truths, predictions)?),
        }
    }

    pub fn expect_samples(self, what: &str) -> Result<SampleMatrix> {
        match self {
            Data::Samples(x) => Ok(x),
            Data::Functional { .. } => bail!("{what} expects --input samples, not truths and predictions"),
        }
    }
}

fn read_value(path: &Path) -> Result<Value> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

pub enum FitFile {
    Multivariate(FitResult),
    Functional(FunctionalFit),
}

impl FitFile {
    pub fn load(path: &Path) -> Result<Self> {
        let value = read_value(path)?;
        if value.get("output_dim").is_some() {
            let fit = FunctionalFit::load(path).with_context(|| format!("loading {}", path.display()))?;
            Ok(FitFile::Functional(fit))
        } else {
            let fit = serde_json::from_value(value).with_context(|| format!("{} is not a fit file", path.display()))?;
            Ok(FitFile::Multivariate(fit))
        }
    }
}

pub enum ModelFile {
    Multivariate(CalibratedFamily),
    Functional(FunctionalConformalModel),
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self> {
        let value = read_value(path)?;
        if value.get("output_dim").is_some() {
            let model =
                FunctionalConformalModel::load(path).with_context(|| format!("loading {}", path.display()))?;
            Ok(ModelFile::Functional(model))
        } else {
            let model =
                serde_json::from_value(value).with_context(|| format!("{} is not a model file", path.display()))?;
            Ok(ModelFile::Multivariate(model))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelFile::Multivariate(c) => c.family().dim(),
            ModelFile::Functional(m) => m.output_dim(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).with_context(|| format!("writing {}", path.display()))
}

pub fn create_dir(path: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(path.to_path_buf())
}
