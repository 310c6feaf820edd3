//! Seeded synthetic data for tests, examples and benchmarks.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::SampleMatrix;

/// Zero-mean 2D Gaussian with unit variances and correlation 0.8.
pub fn correlated_gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SampleMatrix {
    let rho: f64 = 0.8;
    let c = (1.0 - rho * rho).sqrt();
    let mut m = DMatrix::zeros(n, 2);
    for i in 0..n {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        m[(i, 0)] = a;
        m[(i, 1)] = rho * a + c * b;
    }
    SampleMatrix::new(m).expect("finite samples")
}

/// Noisy upper half-ring with angles bunched toward one end and a shear.
pub fn skewed_half_moon<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SampleMatrix {
    let noise = Normal::new(0.0, 0.1).expect("valid std");
    let mut m = DMatrix::zeros(n, 2);
    for i in 0..n {
        let u: f64 = rng.random();
        let theta = PI * u * u;
        let r = 1.0 + noise.sample(rng);
        let x = r * theta.cos();
        let y = r * theta.sin();
        m[(i, 0)] = x;
        m[(i, 1)] = y + 0.3 * x;
    }
    SampleMatrix::new(m).expect("finite samples")
}

/// Points `(x, sin x + noise)`, `x ~ U(0, 2 pi)`, noise std 0.1.
pub fn sine<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SampleMatrix {
    let noise = Normal::new(0.0, 0.1).expect("valid std");
    let mut m = DMatrix::zeros(n, 2);
    for i in 0..n {
        let x = rng.random_range(0.0..2.0 * PI);
        m[(i, 0)] = x;
        m[(i, 1)] = x.sin() + noise.sample(rng);
    }
    SampleMatrix::new(m).expect("finite samples")
}

/// Number of smooth modes in [`smooth_error_field`].
pub const FIELD_MODES: usize = 8;

/// Grid points `t_q = (q + 1/2) / l` on `(0, 1)`.
pub fn unit_grid(l: usize) -> Vec<f64> {
    (0..l).map(|q| (q as f64 + 0.5) / l as f64).collect()
}

/// Rows `e(t) = sum_j a_j sin(j pi t) / j + w(t)` with `a_j ~ N(0, 1)` for
/// `j = 1..=8` and white noise `w` whose std is 1% of the field's RMS.
pub fn smooth_error_field<R: Rng + ?Sized>(n: usize, l: usize, rng: &mut R) -> SampleMatrix {
    let t = unit_grid(l);
    let mean_square: f64 = 0.5 * (1..=FIELD_MODES).map(|j| 1.0 / (j * j) as f64).sum::<f64>();
    let noise = Normal::new(0.0, 0.01 * mean_square.sqrt()).expect("valid std");
    let basis = DMatrix::from_fn(FIELD_MODES, l, |j, q| ((j + 1) as f64 * PI * t[q]).sin() / (j + 1) as f64);
    let mut m = DMatrix::zeros(n, l);
    for i in 0..n {
        let a = DVector::from_fn(FIELD_MODES, |_, _| StandardNormal.sample(rng));
        let row = basis.tr_mul(&a);
        for q in 0..l {
            m[(i, q)] = row[q] + noise.sample(rng);
        }
    }
    SampleMatrix::new(m).expect("finite samples")
}

/// Surrogate outputs and the truths they miss by a [`smooth_error_field`].
#[derive(Debug, Clone)]
pub struct FunctionalDataset {
    pub predictions: SampleMatrix,
    pub truths: SampleMatrix,
}

/// Predictions `sin(2 pi t + phi)` with random phase; truths add the error
/// field.
pub fn functional_dataset<R: Rng + ?Sized>(n: usize, l: usize, rng: &mut R) -> FunctionalDataset {
    let t = unit_grid(l);
    let mut p = DMatrix::zeros(n, l);
    for i in 0..n {
        let phi = rng.random_range(0.0..2.0 * PI);
        for q in 0..l {
            p[(i, q)] = (2.0 * PI * t[q] + phi).sin();
        }
    }
    let e = smooth_error_field(n, l, rng);
    let truths = SampleMatrix::new(&p + e.matrix()).expect("finite samples");
    FunctionalDataset {
        predictions: SampleMatrix::new(p).expect("finite samples"),
        truths,
    }
}
