//! Monotone flux laws `a(y, p)` and their sampled validation.
//!
//! A [`FluxLaw`] is either the gradient of a convex potential (the energy
//! solver applies) or a direct monotone map (the residual solver applies).
//! The built-in `NonVariational3d` law is the three-dimensional positively
//! 1-homogeneous operator whose second cell problem depends on the approach
//! direction; `Reduced2d` is its restriction to functions independent of the
//! first coordinate.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{LinearTensorField, PeriodicFieldExpr};
use crate::interp::PeriodicInterpolant;
use crate::lattice::{dot, norm};

/// `f(p1, p3) = (sqrt(8 p1² + 9 p3²) + p3) / 8`, the positive root of
/// `8 f² - 2 p3 f - (p1² + p3²) = 0`.
pub fn nonvariational_f(p1: f64, p3: f64) -> f64 {
    ((8.0 * p1 * p1 + 9.0 * p3 * p3).sqrt() + p3) / 8.0
}

/// Relative defect of the quadratic identity satisfied by [`nonvariational_f`].
pub fn nonvariational_identity_defect(p1: f64, p3: f64) -> f64 {
    let f = nonvariational_f(p1, p3);
    let scale = p1 * p1 + p3 * p3;
    if scale == 0.0 {
        return 0.0;
    }
    (8.0 * f * f - 2.0 * p3 * f - scale).abs() / scale
}

/// Huber smoothing of `|t|` with width `tau`; exact `|t|` when `tau == 0`.
pub fn huber(t: f64, tau: f64) -> f64 {
    if tau > 0.0 && t.abs() < tau {
        t * t / (2.0 * tau)
    } else if tau > 0.0 {
        t.abs() - 0.5 * tau
    } else {
        t.abs()
    }
}

/// Antiderivative of [`huber`] vanishing at zero.
pub fn huber_integral(t: f64, tau: f64) -> f64 {
    if tau > 0.0 && t.abs() <= tau {
        t * t * t / (6.0 * tau)
    } else {
        t.signum() * (0.5 * t * t - 0.5 * tau * t.abs() + tau * tau / 6.0)
    }
}

/// A `y`-periodic monotone map `p ↦ a(y, p)` for scalar equations.
#[derive(Debug, Clone, PartialEq)]
pub enum FluxLaw {
    /// `a(y, p) = A(y) p` for a scalar tensor field.
    Linear(LinearTensorField),
    /// `(p1, (9/8) p2 + (3/8) |p2|)`.
    Reduced2d,
    /// `(p1, p2, p3 + f(p1, p3))`.
    NonVariational3d,
    /// `p + p |p|`; monotone but not homogeneous.
    PowerGrowth { dim: usize },
    /// `w(y) · base(p)` with a positive periodic weight.
    Weighted {
        weight: PeriodicFieldExpr,
        base: Box<FluxLaw>,
    },
    /// `q ↦ Pᵀ base(P q)` for an orthonormal frame `P` (columns stored).
    Projected {
        base: Box<FluxLaw>,
        frame: Vec<Vec<f64>>,
    },
    /// Homogeneous planar map given by samples on the unit circle:
    /// `a(q) = |q| · table(arg q)`.
    Tabulated(PeriodicInterpolant),
}

/// How the flux is defined: by a potential, directly, or as the built-in
/// non-variational operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    GradientOfPotential,
    Direct,
    BuiltinNonVariational,
}

impl FluxLaw {
    pub fn dim(&self) -> usize {
        match self {
            FluxLaw::Linear(t) => t.dim,
            FluxLaw::Reduced2d | FluxLaw::Tabulated(_) => 2,
            FluxLaw::NonVariational3d => 3,
            FluxLaw::PowerGrowth { dim } => *dim,
            FluxLaw::Weighted { base, .. } => base.dim(),
            FluxLaw::Projected { frame, .. } => frame.len(),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        match self {
            FluxLaw::PowerGrowth { .. } => false,
            FluxLaw::Weighted { base, .. } | FluxLaw::Projected { base, .. } => base.is_homogeneous(),
            _ => true,
        }
    }

    pub fn has_potential(&self) -> bool {
        match self {
            FluxLaw::Linear(t) => t.is_symmetric(),
            FluxLaw::Reduced2d | FluxLaw::PowerGrowth { .. } => true,
            FluxLaw::NonVariational3d | FluxLaw::Tabulated(_) => false,
            FluxLaw::Weighted { base, .. } | FluxLaw::Projected { base, .. } => base.has_potential(),
        }
    }

    pub fn y_dependent(&self) -> bool {
        match self {
            FluxLaw::Linear(t) => !t.is_constant(),
            FluxLaw::Weighted { weight, base } => !weight.is_constant() || base.y_dependent(),
            FluxLaw::Projected { base, .. } => base.y_dependent(),
            _ => false,
        }
    }

    /// The same law composed with `y ↦ m y`.
    pub fn rescaled(&self, m: i64) -> Self {
        match self {
            FluxLaw::Linear(t) => FluxLaw::Linear(t.rescaled(m)),
            FluxLaw::Weighted { weight, base } => FluxLaw::Weighted {
                weight: weight.rescaled(m),
                base: Box::new(base.rescaled(m)),
            },
            FluxLaw::Projected { base, frame } => FluxLaw::Projected {
                base: Box::new(base.rescaled(m)),
                frame: frame.clone(),
            },
            other => other.clone(),
        }
    }

    /// Flux `a(y, p)` with the `|·|` kink of `Reduced2d` smoothed at width `tau`.
    pub fn flux(&self, y: &[f64], p: &[f64], tau: f64, out: &mut [f64]) {
        match self {
            FluxLaw::Linear(t) => {
                let d = t.dim;
                for (r, o) in out.iter_mut().enumerate().take(d) {
                    *o = (0..d).map(|c| t.entries[r * d + c].eval_scalar(y) * p[c]).sum();
                }
            }
            FluxLaw::Reduced2d => {
                out[0] = p[0];
                out[1] = 1.125 * p[1] + 0.375 * huber(p[1], tau);
            }
            FluxLaw::NonVariational3d => {
                out[0] = p[0];
                out[1] = p[1];
                out[2] = p[2] + nonvariational_f(p[0], p[2]);
            }
            FluxLaw::PowerGrowth { .. } => {
                let s = 1.0 + norm(p);
                for (o, x) in out.iter_mut().zip(p) {
                    *o = s * x;
                }
            }
            FluxLaw::Weighted { weight, base } => {
                base.flux(y, p, tau, out);
                let w = weight.eval_scalar(y);
                out.iter_mut().for_each(|o| *o *= w);
            }
            FluxLaw::Projected { base, frame } => {
                let db = base.dim();
                let mut full = [0.0; 3];
                for (k, col) in frame.iter().enumerate() {
                    for i in 0..db {
                        full[i] += col[i] * p[k];
                    }
                }
                let mut f = [0.0; 3];
                base.flux(y, &full[..db], tau, &mut f[..db]);
                for (o, col) in out.iter_mut().zip(frame) {
                    *o = dot(col, &f[..db]);
                }
            }
            FluxLaw::Tabulated(table) => {
                let r = norm(p);
                if r == 0.0 {
                    out[0] = 0.0;
                    out[1] = 0.0;
                } else {
                    table.eval_into(p[1].atan2(p[0]), out);
                    out[0] *= r;
                    out[1] *= r;
                }
            }
        }
    }

    /// Convex potential `F(y, p)` with `∇_p F = a`, when one exists.
    pub fn potential(&self, y: &[f64], p: &[f64], tau: f64) -> Option<f64> {
        match self {
            FluxLaw::Linear(t) => {
                if !t.is_symmetric() {
                    return None;
                }
                let d = t.dim;
                let mut e = 0.0;
                for r in 0..d {
                    for c in 0..d {
                        e += p[r] * t.entries[r * d + c].eval_scalar(y) * p[c];
                    }
                }
                Some(0.5 * e)
            }
            FluxLaw::Reduced2d => {
                Some(0.5 * p[0] * p[0] + 0.5625 * p[1] * p[1] + 0.375 * huber_integral(p[1], tau))
            }
            FluxLaw::PowerGrowth { .. } => {
                let r = norm(p);
                Some(0.5 * r * r + r * r * r / 3.0)
            }
            FluxLaw::Weighted { weight, base } => base.potential(y, p, tau).map(|f| weight.eval_scalar(y) * f),
            FluxLaw::Projected { base, frame } => {
                let db = base.dim();
                let mut full = [0.0; 3];
                for (k, col) in frame.iter().enumerate() {
                    for i in 0..db {
                        full[i] += col[i] * p[k];
                    }
                }
                base.potential(y, &full[..db], tau)
            }
            FluxLaw::NonVariational3d | FluxLaw::Tabulated(_) => None,
        }
    }

    pub fn flux_vec(&self, y: &[f64], p: &[f64], tau: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.flux(y, p, tau, &mut out);
        out
    }

    /// Central-difference Jacobian `∂a_i/∂p_j`, row-major.
    pub fn jacobian_fd(&self, y: &[f64], p: &[f64], tau: f64, step: f64) -> Vec<f64> {
        let d = self.dim();
        let mut jac = vec![0.0; d * d];
        let mut pp = p.to_vec();
        let mut fp = vec![0.0; d];
        let mut fm = vec![0.0; d];
        for j in 0..d {
            pp[j] = p[j] + step;
            self.flux(y, &pp, tau, &mut fp);
            pp[j] = p[j] - step;
            self.flux(y, &pp, tau, &mut fm);
            pp[j] = p[j];
            for i in 0..d {
                jac[i * d + j] = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
        jac
    }

    /// Average symmetrized Jacobian over unit gradients and a lattice of
    /// points `y`; the constant-coefficient reference operator for
    /// preconditioning.
    pub fn reference_matrix(&self) -> Vec<f64> {
        let d = self.dim();
        if let FluxLaw::Linear(t) = self {
            return t.mean_diagonal_blocks(8).remove(0);
        }
        let dirs = sphere_points(d, if d == 2 { 32 } else { 64 });
        let ys: Vec<Vec<f64>> = if self.y_dependent() {
            lattice_points(d, 3)
        } else {
            vec![vec![0.0; d]]
        };
        let mut acc = vec![0.0; d * d];
        let mut count = 0.0;
        for y in &ys {
            for p in &dirs {
                let j = self.jacobian_fd(y, p, 0.0, 1e-6);
                for a in 0..d {
                    for b in 0..d {
                        acc[a * d + b] += 0.5 * (j[a * d + b] + j[b * d + a]);
                    }
                }
                count += 1.0;
            }
        }
        acc.iter_mut().for_each(|v| *v /= count);
        acc
    }
}

/// Deterministic, roughly uniform points on the unit circle or sphere.
pub(crate) fn sphere_points(d: usize, count: usize) -> Vec<Vec<f64>> {
    if d == 2 {
        (0..count)
            .map(|k| {
                let t = TAU * (k as f64 + 0.5) / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect()
    } else {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        (0..count)
            .map(|k| {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                let r = (1.0 - z * z).sqrt();
                let t = golden * k as f64;
                vec![r * t.cos(), r * t.sin(), z]
            })
            .collect()
    }
}

fn lattice_points(d: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let total = per_axis.pow(d as u32);
    (0..total)
        .map(|idx| {
            let mut r = idx;
            (0..d)
                .map(|_| {
                    let v = (r % per_axis) as f64 / per_axis as f64;
                    r /= per_axis;
                    v
                })
                .collect()
        })
        .collect()
}

/// A flux law together with its declared structural constants.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneMapSpec {
    pub law: FluxLaw,
    pub lambda: f64,
    pub homogeneous: bool,
}

impl MonotoneMapSpec {
    pub fn new(law: FluxLaw, lambda: f64) -> Self {
        let homogeneous = law.is_homogeneous();
        Self {
            law,
            lambda,
            homogeneous,
        }
    }

    pub fn non_variational_3d() -> Self {
        Self::new(FluxLaw::NonVariational3d, 0.5)
    }

    pub fn reduced2d() -> Self {
        Self::new(FluxLaw::Reduced2d, 0.75)
    }

    pub fn quadratic(tensor: LinearTensorField) -> Self {
        let lambda = tensor.lambda;
        Self::new(FluxLaw::Linear(tensor), lambda)
    }

    pub fn identity(dim: usize) -> Self {
        Self::quadratic(LinearTensorField::identity(dim))
    }

    pub fn kind(&self) -> MapKind {
        match &self.law {
            FluxLaw::NonVariational3d => MapKind::BuiltinNonVariational,
            l if l.has_potential() => MapKind::GradientOfPotential,
            _ => MapKind::Direct,
        }
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }
}

/// Outcome of sampled monotonicity validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorReport {
    pub lambda_hat: f64,
    pub lipschitz_hat: f64,
    pub samples: usize,
    pub radius: f64,
    /// Pair attaining the smallest monotonicity quotient.
    pub witness: (Vec<f64>, Vec<f64>),
}

fn random_in_ball(rng: &mut ChaCha8Rng, d: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm(&v);
        if n <= 1.0 && n > 0.0 {
            return v.iter().map(|x| x * radius).collect();
        }
    }
}

/// Samples pairs `p, q` in the ball of the given radius (and points `y` in
/// the unit cell) and records the extreme monotonicity and Lipschitz
/// quotients of the exact, unsmoothed map.
pub fn validate_operator(op: &MonotoneMapSpec, sample_count: usize, radius: f64, seed: u64) -> Result<OperatorReport> {
    if sample_count < 1000 {
        return Err(Error::invalid("operator validation needs at least 1000 samples"));
    }
    let d = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut witness = (Vec::new(), Vec::new());
    let mut fp = vec![0.0; d];
    let mut fq = vec![0.0; d];
    for _ in 0..sample_count {
        let y: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
        let p = random_in_ball(&mut rng, d, radius);
        let q = random_in_ball(&mut rng, d, radius);
        op.law.flux(&y, &p, 0.0, &mut fp);
        op.law.flux(&y, &q, 0.0, &mut fq);
        let dp: Vec<f64> = p.iter().zip(&q).map(|(a, b)| a - b).collect();
        let da: Vec<f64> = fp.iter().zip(&fq).map(|(a, b)| a - b).collect();
        let n2 = dot(&dp, &dp);
        if n2 < 1e-24 {
            continue;
        }
        let m = dot(&da, &dp) / n2;
        let l = norm(&da) / n2.sqrt();
        if m < lo {
            lo = m;
            witness = (p.clone(), q.clone());
        }
        hi = hi.max(l);
    }
    if lo <= 0.0 {
        return Err(Error::OperatorInvalid {
            p: witness.0,
            q: witness.1,
            quotient: lo,
        });
    }
    Ok(OperatorReport {
        lambda_hat: lo,
        lipschitz_hat: hi,
        samples: sample_count,
        radius,
        witness,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub max_defect: f64,
    pub accepted: bool,
}

/// Largest relative defect `|a(tp) - t a(p)| / (t|p|)` over samples with
/// `t ∈ [0.1, 10]`. Maps whose defect exceeds `1e-10` are rejected as
/// homogeneous regardless of the declared flag.
pub fn homogeneity_check(op: &MonotoneMapSpec, samples: usize, seed: u64) -> HomogeneityReport {
    let d = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut a1 = vec![0.0; d];
    let mut a2 = vec![0.0; d];
    for _ in 0..samples {
        let y: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
        let p = random_in_ball(&mut rng, d, 2.0);
        let t: f64 = 10f64.powf(rng.gen_range(-1.0..1.0));
        let tp: Vec<f64> = p.iter().map(|x| t * x).collect();
        op.law.flux(&y, &tp, 0.0, &mut a1);
        op.law.flux(&y, &p, 0.0, &mut a2);
        let diff: f64 = a1.iter().zip(&a2).map(|(x, z)| (x - t * z).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(diff / (t * norm(&p) + 1e-300));
    }
    HomogeneityReport {
        max_defect: worst,
        accepted: worst <= 1e-10,
    }
}

/// Largest gap between the analytic flux and central differences of the
/// potential with step `h`, over random `(y, p)` with `|p| ≤ 2`.
pub fn potential_gradient_consistency(op: &MonotoneMapSpec, samples: usize, h: f64, seed: u64) -> Result<f64> {
    if !op.law.has_potential() {
        return Err(Error::Unsupported("operator has no potential".into()));
    }
    let d = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut a = vec![0.0; d];
    for _ in 0..samples {
        let y: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
        let p = random_in_ball(&mut rng, d, 2.0);
        op.law.flux(&y, &p, 0.0, &mut a);
        let mut pp = p.clone();
        for j in 0..d {
            pp[j] = p[j] + h;
            let fp = op.law.potential(&y, &pp, 0.0).unwrap();
            pp[j] = p[j] - h;
            let fm = op.law.potential(&y, &pp, 0.0).unwrap();
            pp[j] = p[j];
            worst = worst.max(((fp - fm) / (2.0 * h) - a[j]).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_map_quotients_are_one() {
        let r = validate_operator(&MonotoneMapSpec::identity(2), 1000, 1.0, 3).unwrap();
        assert!((r.lambda_hat - 1.0).abs() < 1e-12);
        assert!((r.lipschitz_hat - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(validate_operator(&MonotoneMapSpec::identity(2), 10, 1.0, 3).is_err());
    }

    #[test]
    fn decreasing_map_rejected_with_witness() {
        let t = LinearTensorField::constant(2, 1, &[1.0, 0.0, 0.0, -1.0], 0.1);
        let err = validate_operator(&MonotoneMapSpec::quadratic(t), 1000, 1.0, 1).unwrap_err();
        match err {
            Error::OperatorInvalid { p, q, quotient } => {
                assert!(quotient <= 0.0);
                assert_eq!(p.len(), 2);
                assert_eq!(q.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nonvariational_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let p1: f64 = rng.gen_range(-5.0..5.0);
            let p3: f64 = rng.gen_range(-5.0..5.0);
            assert!(nonvariational_identity_defect(p1, p3) < 1e-10);
            if p3 >= 0.0 {
                assert!(nonvariational_f(p1, p3) >= 0.0);
            }
        }
    }

    #[test]
    fn nonvariational_is_homogeneous_and_power_growth_is_not() {
        let s7 = homogeneity_check(&MonotoneMapSpec::non_variational_3d(), 2000, 1);
        assert!(s7.max_defect <= 1e-12 && s7.accepted);
        let id = homogeneity_check(&MonotoneMapSpec::identity(3), 200, 1);
        assert_eq!(id.max_defect, 0.0);
        let pg = MonotoneMapSpec::new(FluxLaw::PowerGrowth { dim: 2 }, 1.0);
        assert!(!pg.homogeneous);
        // t = 2, |p| = 1: |a(2p) - 2a(p)| / 2 = |2p + 4p - 2p - 2p| / 2 = 1
        let y = [0.0, 0.0];
        let p = [1.0, 0.0];
        let a2 = pg.law.flux_vec(&y, &[2.0, 0.0], 0.0);
        let a1 = pg.law.flux_vec(&y, &p, 0.0);
        assert!(((a2[0] - 2.0 * a1[0]).abs() / 2.0) > 0.1);
        assert!(!homogeneity_check(&pg, 200, 2).accepted);
    }

    #[test]
    fn reduced_potential_matches_flux() {
        let d = potential_gradient_consistency(&MonotoneMapSpec::reduced2d(), 500, 1e-4, 5).unwrap();
        assert!(d < 1e-6, "defect {d}");
        let q = potential_gradient_consistency(&MonotoneMapSpec::identity(2), 500, 1e-4, 5).unwrap();
        assert!(q < 1e-8);
        assert!(potential_gradient_consistency(&MonotoneMapSpec::non_variational_3d(), 10, 1e-4, 5).is_err());
    }

    #[test]
    fn huber_smoothing_keeps_slope_bounds() {
        let tau = 0.1;
        for k in -100..100 {
            let t = k as f64 * 0.003;
            let s = (huber(t + 1e-7, tau) - huber(t - 1e-7, tau)) / 2e-7;
            assert!(s.abs() <= 1.0 + 1e-6);
            assert!((huber(t, tau) - t.abs()).abs() <= 0.5 * tau + 1e-15);
        }
        assert_eq!(huber(0.0, tau), 0.0);
    }

    #[test]
    fn projected_nonvariational_along_e2_is_reduced_map() {
        let law = FluxLaw::Projected {
            base: Box::new(FluxLaw::NonVariational3d),
            frame: vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        };
        for q in [[0.3, -0.7], [-1.2, 0.4], [0.0, 2.0]] {
            let a = law.flux_vec(&[0.0; 2], &q, 0.0);
            let b = FluxLaw::Reduced2d.flux_vec(&[0.0; 2], &q, 0.0);
            assert!((a[0] - b[0]).abs() < 1e-15 && (a[1] - b[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn kinds() {
        assert_eq!(MonotoneMapSpec::non_variational_3d().kind(), MapKind::BuiltinNonVariational);
        assert_eq!(MonotoneMapSpec::reduced2d().kind(), MapKind::GradientOfPotential);
        let nonsym = LinearTensorField::constant(2, 1, &[1.0, 0.2, 0.0, 1.0], 0.5);
        assert_eq!(MonotoneMapSpec::quadratic(nonsym).kind(), MapKind::Direct);
    }
}
