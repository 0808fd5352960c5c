//! Builders shared by the integration suites.

#![allow(dead_code)]

use std::f64::consts::TAU;
use std::sync::Arc;

use homogbc::fields::{BoundaryData, LinearTensorField, PeriodicFieldExpr, Phase};
use homogbc::operators::MonotoneMapSpec;
use homogbc::strip::StripOperator;

/// `cos 2π y_axis` in `d` dimensions.
pub fn cosine(d: usize, axis: usize) -> PeriodicFieldExpr {
    let mut freq = vec![0; d];
    freq[axis] = 1;
    PeriodicFieldExpr::scalar(d, 0.0).with_term(&[1.0], &freq, Phase::Cos)
}

pub fn cosine_data(d: usize, axis: usize) -> Arc<dyn BoundaryData> {
    Arc::new(cosine(d, axis))
}

/// `1/3 + cos 2π y_axis`.
pub fn shifted_cosine(d: usize, axis: usize) -> Arc<dyn BoundaryData> {
    let mut freq = vec![0; d];
    freq[axis] = 1;
    Arc::new(PeriodicFieldExpr::scalar(d, 1.0 / 3.0).with_term(&[1.0], &freq, Phase::Cos))
}

/// The laminate `a(y) = (2 + cos 2πy₁)/3` times the identity.
pub fn laminate(d: usize) -> LinearTensorField {
    let mut freq = vec![0; d];
    freq[0] = 1;
    let a = PeriodicFieldExpr::scalar(d, 2.0 / 3.0).with_term(&[1.0 / 3.0], &freq, Phase::Cos);
    LinearTensorField::isotropic(a, 1.0 / 3.0)
}

pub fn laminate_op(d: usize) -> StripOperator {
    StripOperator::Linear(laminate(d))
}

pub fn laplace(d: usize) -> StripOperator {
    StripOperator::Linear(LinearTensorField::identity(d))
}

pub fn nonvariational() -> StripOperator {
    StripOperator::Nonlinear(MonotoneMapSpec::non_variational_3d())
}

pub fn planar_kinked() -> StripOperator {
    StripOperator::Nonlinear(MonotoneMapSpec::reduced2d())
}

/// Harmonic and arithmetic means of the laminate coefficient.
pub const LAMINATE_HARMONIC: f64 = 0.577_350_269_189_625_8;
pub const LAMINATE_ARITHMETIC: f64 = 2.0 / 3.0;

/// The closed-form solution `(1/3 + cos 2πx) e^{-2πz}`.
pub fn closed_form(y: &[f64]) -> f64 {
    (1.0 / 3.0 + (TAU * y[0]).cos()) * (-TAU * y[y.len() - 1]).exp()
}

/// Least-squares slope of `ln e` against `ln h`.
pub fn fitted_order(hs: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
