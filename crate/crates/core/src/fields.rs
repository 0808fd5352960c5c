//! Exactly evaluable periodic fields: trigonometric polynomials with
//! integer frequencies, used for boundary data and coefficient entries.

use std::f64::consts::TAU;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary data seen by the strip solver: any vector-valued function of the
/// physical point.
pub trait BoundaryData: Send + Sync + fmt::Debug {
    fn components(&self) -> usize;
    fn eval(&self, y: &[f64], out: &mut [f64]);
    /// Upper bound for `sup |∇φ|`, when known.
    fn gradient_bound(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Cos,
    Sin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldTerm {
    pub coef: Vec<f64>,
    pub freq: Vec<i64>,
    pub phase: Phase,
}

fn default_period() -> f64 {
    1.0
}

/// `c + Σ_k a_k cos|sin(2π k·y / period)` with values in `R^N`.
///
/// The field is periodic with respect to `period · Z^d`; the default period
/// is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicFieldExpr {
    pub dim: usize,
    #[serde(default = "default_period")]
    pub period: f64,
    pub constant: Vec<f64>,
    #[serde(default)]
    pub terms: Vec<FieldTerm>,
}

impl PeriodicFieldExpr {
    pub fn constant(dim: usize, value: &[f64]) -> Self {
        Self {
            dim,
            period: 1.0,
            constant: value.to_vec(),
            terms: Vec::new(),
        }
    }

    pub fn scalar(dim: usize, value: f64) -> Self {
        Self::constant(dim, &[value])
    }

    /// Adds `coef · cos(2π freq·y/period)` (or `sin`).
    pub fn with_term(mut self, coef: &[f64], freq: &[i64], phase: Phase) -> Self {
        self.terms.push(FieldTerm {
            coef: coef.to_vec(),
            freq: freq.to_vec(),
            phase,
        });
        self
    }

    pub fn with_period(mut self, period: f64) -> Self {
        self.period = period;
        self
    }

    pub fn components(&self) -> usize {
        self.constant.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dim == 2 || self.dim == 3) {
            return Err(Error::invalid(format!("field dimension {} unsupported", self.dim)));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::invalid("field period must be positive"));
        }
        for t in &self.terms {
            if t.freq.len() != self.dim || t.coef.len() != self.components() {
                return Err(Error::invalid("field term has inconsistent sizes"));
            }
        }
        Ok(())
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.coef.iter().all(|&c| c == 0.0) || t.freq.iter().all(|&k| k == 0))
    }

    /// Angular frequency vector `2π k / period`.
    fn omega(&self, t: &FieldTerm) -> Vec<f64> {
        t.freq.iter().map(|&k| TAU * k as f64 / self.period).collect()
    }

    /// Phase argument with exact reduction modulo one period.
    fn argument(&self, t: &FieldTerm, y: &[f64]) -> f64 {
        let s: f64 = t.freq.iter().zip(y).map(|(&k, &x)| k as f64 * x).sum::<f64>() / self.period;
        TAU * (s - s.floor())
    }

    pub fn eval_into(&self, y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.constant);
        for t in &self.terms {
            let th = self.argument(t, y);
            let v = match t.phase {
                Phase::Cos => th.cos(),
                Phase::Sin => th.sin(),
            };
            for (o, c) in out.iter_mut().zip(&t.coef) {
                *o += c * v;
            }
        }
    }

    pub fn eval(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.components()];
        self.eval_into(y, &mut out);
        out
    }

    /// First component; convenient for scalar coefficient fields.
    pub fn eval_scalar(&self, y: &[f64]) -> f64 {
        let mut v = self.constant[0];
        for t in &self.terms {
            let th = self.argument(t, y);
            v += t.coef[0]
                * match t.phase {
                    Phase::Cos => th.cos(),
                    Phase::Sin => th.sin(),
                };
        }
        v
    }

    /// Partial derivative `∂^order` evaluated analytically. Orders up to five
    /// are supported, matching the regularity the coefficient theory uses.
    pub fn derivative(&self, y: &[f64], order: &[u32]) -> Result<Vec<f64>> {
        if order.len() != self.dim {
            return Err(Error::invalid("multi-index length differs from dimension"));
        }
        let total: u32 = order.iter().sum();
        if total > 5 {
            return Err(Error::invalid(format!("derivative order {total} exceeds 5")));
        }
        if total == 0 {
            return Ok(self.eval(y));
        }
        let mut out = vec![0.0; self.components()];
        for t in &self.terms {
            let w = self.omega(t);
            let factor: f64 = w.iter().zip(order).map(|(wi, &m)| wi.powi(m as i32)).product();
            if factor == 0.0 {
                continue;
            }
            let th = self.argument(t, y) + total as f64 * std::f64::consts::FRAC_PI_2;
            let v = match t.phase {
                Phase::Cos => th.cos(),
                Phase::Sin => th.sin(),
            };
            for (o, c) in out.iter_mut().zip(&t.coef) {
                *o += c * factor * v;
            }
        }
        Ok(out)
    }

    /// Closed-form upper bound for `‖f‖_{C^m} = Σ_{j≤m} max_{|α|=j} sup|∂^α f|`.
    pub fn cm_norm_bound(&self, m: u32) -> f64 {
        let c0 = self.constant.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let mut total = c0;
        for t in &self.terms {
            let amp = t.coef.iter().fold(0.0f64, |a, c| a.max(c.abs()));
            let wmax = self.omega(t).iter().fold(0.0f64, |a, w| a.max(w.abs()));
            total += amp * (0..=m).map(|j| wmax.powi(j as i32)).sum::<f64>();
        }
        total
    }

    /// Upper bound for `sup|∇f|` (Euclidean norm of the gradient).
    pub fn gradient_sup_bound(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let amp = t.coef.iter().fold(0.0f64, |a, c| a.max(c.abs()));
                amp * crate::lattice::norm(&self.omega(t))
            })
            .sum()
    }

    /// `y ↦ f(m y)`: frequencies scaled by an integer factor.
    pub fn rescaled(&self, m: i64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.freq.iter_mut().for_each(|k| *k *= m);
        }
        out
    }

    /// Sup and inf of each component over a uniform sample of the period cell.
    pub fn sampled_range(&self, per_axis: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.components();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        let total = per_axis.pow(self.dim as u32);
        let mut y = vec![0.0; self.dim];
        let mut v = vec![0.0; n];
        for idx in 0..total {
            let mut r = idx;
            for yj in y.iter_mut() {
                *yj = self.period * (r % per_axis) as f64 / per_axis as f64;
                r /= per_axis;
            }
            self.eval_into(&y, &mut v);
            for c in 0..n {
                lo[c] = lo[c].min(v[c]);
                hi[c] = hi[c].max(v[c]);
            }
        }
        (lo, hi)
    }
}

impl BoundaryData for PeriodicFieldExpr {
    fn components(&self) -> usize {
        self.constant.len()
    }

    fn eval(&self, y: &[f64], out: &mut [f64]) {
        self.eval_into(y, out);
    }

    fn gradient_bound(&self) -> Option<f64> {
        Some(self.gradient_sup_bound())
    }
}

/// Coefficient tensor `A^{αβ}_{ij}(y)` of a linear N-component system.
///
/// Entries are stored as a `(N d) × (N d)` row-major matrix with row index
/// `i d + α` and column index `j d + β`, so that the flux is
/// `σ^i_α = A^{αβ}_{ij} ∂_β u^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTensorField {
    pub dim: usize,
    pub components: usize,
    pub entries: Vec<PeriodicFieldExpr>,
    pub lambda: f64,
}

/// Sampled ellipticity bounds of a tensor field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorReport {
    pub lambda_hat: f64,
    pub upper_hat: f64,
    pub samples: usize,
    pub satisfies_declared: bool,
}

impl LinearTensorField {
    pub fn size(&self) -> usize {
        self.dim * self.components
    }

    /// Constant tensor from a `(N d)²` row-major matrix.
    pub fn constant(dim: usize, components: usize, matrix: &[f64], lambda: f64) -> Self {
        let entries = matrix.iter().map(|&v| PeriodicFieldExpr::scalar(dim, v)).collect();
        Self {
            dim,
            components,
            entries,
            lambda,
        }
    }

    /// `A(y) = a(y) I` for a scalar equation.
    pub fn isotropic(coef: PeriodicFieldExpr, lambda: f64) -> Self {
        let d = coef.dim;
        let zero = PeriodicFieldExpr::scalar(d, 0.0).with_period(coef.period);
        let mut entries = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                entries.push(if r == c { coef.clone() } else { zero.clone() });
            }
        }
        Self {
            dim: d,
            components: 1,
            entries,
            lambda,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::isotropic(PeriodicFieldExpr::scalar(dim, 1.0), 1.0)
    }

    /// Block-diagonal system of `n` copies of a scalar tensor.
    pub fn decoupled(scalar: &LinearTensorField, n: usize) -> Self {
        let d = scalar.dim;
        let s = d * n;
        let zero = PeriodicFieldExpr::scalar(d, 0.0);
        let mut entries = vec![zero; s * s];
        for i in 0..n {
            for a in 0..d {
                for b in 0..d {
                    entries[(i * d + a) * s + i * d + b] = scalar.entries[a * d + b].clone();
                }
            }
        }
        Self {
            dim: d,
            components: n,
            entries,
            lambda: scalar.lambda,
        }
    }

    pub fn eval_into(&self, y: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.entries) {
            *o = e.eval_scalar(y);
        }
    }

    pub fn eval(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.entries.len()];
        self.eval_into(y, &mut out);
        out
    }

    pub fn is_constant(&self) -> bool {
        self.entries.iter().all(PeriodicFieldExpr::is_constant)
    }

    /// Structural symmetry `A^{αβ}_{ij} = A^{βα}_{ji}`.
    pub fn is_symmetric(&self) -> bool {
        let s = self.size();
        (0..s).all(|r| (0..s).all(|c| self.entries[r * s + c] == self.entries[c * s + r]))
    }

    /// `y ↦ A(m y)`.
    pub fn rescaled(&self, m: i64) -> Self {
        Self {
            entries: self.entries.iter().map(|e| e.rescaled(m)).collect(),
            ..self.clone()
        }
    }

    pub fn validate_shape(&self) -> Result<()> {
        let s = self.size();
        if self.entries.len() != s * s {
            return Err(Error::invalid(format!(
                "tensor needs {} entries, got {}",
                s * s,
                self.entries.len()
            )));
        }
        for e in &self.entries {
            e.validate()?;
            if e.dim != self.dim || e.components() != 1 {
                return Err(Error::invalid("tensor entries must be scalar fields of the tensor dimension"));
            }
        }
        Ok(())
    }

    /// Samples the symmetric part of the quadratic form at random points and
    /// reports its extreme eigenvalues. A nonpositive lower bound is an error.
    pub fn validate(&self, samples: usize, seed: u64) -> Result<TensorReport> {
        self.validate_shape()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = self.size();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut witness = vec![0.0; self.dim];
        let mut buf = vec![0.0; s * s];
        for _ in 0..samples.max(1) {
            let y: Vec<f64> = (0..self.dim).map(|_| rng.gen::<f64>()).collect();
            self.eval_into(&y, &mut buf);
            let m = DMatrix::from_row_slice(s, s, &buf);
            let sym = (&m + m.transpose()) * 0.5;
            let eig = SymmetricEigen::new(sym).eigenvalues;
            let (emin, emax) = eig.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)));
            if emin < lo {
                lo = emin;
                witness = y.clone();
            }
            hi = hi.max(emax);
        }
        if lo <= 0.0 {
            return Err(Error::OperatorInvalid {
                p: witness,
                q: Vec::new(),
                quotient: lo,
            });
        }
        Ok(TensorReport {
            lambda_hat: lo,
            upper_hat: hi,
            samples,
            satisfies_declared: lo >= self.lambda - 1e-12 && hi <= 1.0 + 1e-12,
        })
    }

    /// Cell average of the symmetric diagonal blocks, one `d × d` matrix per
    /// component; used to build constant-coefficient preconditioners.
    pub fn mean_diagonal_blocks(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let d = self.dim;
        let s = self.size();
        let total = per_axis.pow(d as u32);
        let mut acc = vec![vec![0.0; d * d]; self.components];
        let mut y = vec![0.0; d];
        let mut buf = vec![0.0; s * s];
        for idx in 0..total {
            let mut r = idx;
            for yj in y.iter_mut() {
                *yj = ((r % per_axis) as f64 + 0.5) / per_axis as f64;
                r /= per_axis;
            }
            self.eval_into(&y, &mut buf);
            for (i, block) in acc.iter_mut().enumerate() {
                for a in 0..d {
                    for b in 0..d {
                        let v = 0.5 * (buf[(i * d + a) * s + i * d + b] + buf[(i * d + b) * s + i * d + a]);
                        block[a * d + b] += v / total as f64;
                    }
                }
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_field_evaluates_to_constant() {
        let f = PeriodicFieldExpr::constant(2, &[1.5, -2.0]);
        assert_eq!(f.eval(&[0.3, 0.7]), vec![1.5, -2.0]);
    }

    #[test]
    fn cosine_derivative() {
        let f = PeriodicFieldExpr::scalar(2, 0.0).with_term(&[1.0], &[1, 0], Phase::Cos);
        let d = f.derivative(&[0.25, 0.0], &[1, 0]).unwrap();
        assert!((d[0] + 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn two_pi_periodic_data() {
        let f = PeriodicFieldExpr::scalar(2, 1.0 / 3.0)
            .with_term(&[1.0], &[1, 0], Phase::Cos)
            .with_period(TAU);
        assert!((f.eval_scalar(&[0.0, 0.0]) - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_order_limit() {
        let f = PeriodicFieldExpr::scalar(2, 0.0);
        assert!(f.derivative(&[0.0, 0.0], &[3, 3]).is_err());
    }

    #[test]
    fn higher_derivatives_match_finite_differences() {
        let f = PeriodicFieldExpr::scalar(3, 0.2)
            .with_term(&[0.7], &[1, -2, 1], Phase::Sin)
            .with_term(&[0.3], &[0, 1, 3], Phase::Cos);
        let y = [0.13, 0.41, 0.77];
        let h = 1e-5;
        let d2 = f.derivative(&y, &[0, 1, 1]).unwrap()[0];
        let g = |a: f64, b: f64| f.eval_scalar(&[y[0], y[1] + a, y[2] + b]);
        let fd = (g(h, h) - g(h, -h) - g(-h, h) + g(-h, -h)) / (4.0 * h * h);
        assert!((d2 - fd).abs() < 1e-3 * d2.abs().max(1.0));
    }

    #[test]
    fn laminate_tensor_is_elliptic() {
        let a = PeriodicFieldExpr::scalar(2, 2.0 / 3.0).with_term(&[1.0 / 3.0], &[1, 0], Phase::Cos);
        let t = LinearTensorField::isotropic(a, 1.0 / 3.0);
        let r = t.validate(2000, 1).unwrap();
        assert!(r.lambda_hat >= 1.0 / 3.0 - 1e-12 && r.upper_hat <= 1.0 + 1e-12);
        assert!(r.satisfies_declared);
    }

    #[test]
    fn indefinite_tensor_rejected() {
        let t = LinearTensorField::constant(2, 1, &[1.0, 0.0, 0.0, -0.5], 0.1);
        assert!(matches!(t.validate(10, 0), Err(Error::OperatorInvalid { .. })));
    }
}
