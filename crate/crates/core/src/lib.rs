//! Conformal prediction sets built from calibrated families of nested
//! zonotopes.
//!
//! A data-enclosing zonotope `Z = <c, G>` and a deep core point `p` define the
//! family `Z^a = <c(1-a) + p a, G(1-a)>`, `a in [0, 1]`, which shrinks
//! monotonically from `Z` to `{p}`. Calibration scores every calibration
//! sample by the largest grid level that still contains it; the sorted scores
//! then pick the level whose set carries the requested coverage.
//!
//! For function-valued surrogates ([`functional`]) the construction runs on a
//! truncated SVD of the model errors. The discarded modes are bounded by a box
//! appended through a Cartesian product and the result is mapped back to the
//! output grid exactly, since zonotopes are closed under linear maps.
//!
//! Module map:
//!
//! - [`sets`]: zonotopes, boxes, nested families, membership.
//! - [`polytope`]: convex hulls, H-representations, zonotope overapproximation.
//! - [`depth`]: data depth for picking the core point.
//! - [`fitting`]: enclosing-zonotope fits (rotated box, convex hull).
//! - [`calibration`]: membership scores, quantile rule, density calibration.
//! - [`functional`]: the error-SVD pipeline for functional outputs.
//! - [`baselines`]: modulation bands and elliptical sets for comparison.
//! - [`eval`]: coverage and efficiency metrics and report tables.

pub mod baselines;
pub mod calibration;
pub mod data;
pub mod depth;
mod error;
pub mod eval;
pub mod fitting;
pub mod functional;
pub mod linalg;
pub mod lp;
pub mod polytope;
pub mod sets;
pub mod synthetic;

pub use calibration::{AlphaGrid, CalibratedFamily, LevelSet, QuantileRule};
pub use data::SampleMatrix;
pub use error::{Error, Result};
pub use fitting::{DepthMethod, FitConfig, FitMethod, FitResult};
pub use functional::{FunctionalConformalModel, FunctionalPredictionSet};
pub use sets::{HalfSpace, Hyperrectangle, NestedZonotopeFamily, Zonotope};

/// Default membership tolerance, relative to the generator scale.
pub const DEFAULT_TOL: f64 = 1e-9;
