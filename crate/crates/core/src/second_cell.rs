//! Directional limits of the boundary-layer constant at a rational
//! direction, computed from a half-space problem for the homogenized
//! operator with boundary data `φ*(ξ, x·η)`.
//!
//! The half-space problem depends only on `(x·η, x·ξ̂)`, so it is always
//! solved as a two-dimensional strip with lateral period `P/|ξ|`. The
//! module also predicts `φ*(n)` near rational directions, fits a Hölder
//! modulus over direction sweeps, and certifies the jump of the planar
//! non-variational example.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;

use crate::boundary_layer::{
    boundary_layer_limit, boundary_layer_limit_with_solution, phi_star_profile, BoundaryLayerResult, HeightLadder,
    PhiStarProfile,
};
use crate::error::{Error, Result};
use crate::fields::{BoundaryData, LinearTensorField, PeriodicFieldExpr, Phase};
use crate::homogenization::{default_h_cell, homogenize_linear, EffectiveMap};
use crate::interp::{InterpKind, PeriodicInterpolant};
use crate::lattice::{decompose_direction, dirichlet_approximate, dot, make_rational_direction, norm, RationalDirection};
use crate::operators::{FluxLaw, MonotoneMapSpec};
use crate::strip::{StripOperator, StripProblem};

/// A sampled profile used as boundary data of a two-dimensional strip:
/// `y ↦ profile(y₁)`.
#[derive(Debug, Clone)]
pub struct ProfileData {
    pub interpolant: PeriodicInterpolant,
}

impl BoundaryData for ProfileData {
    fn components(&self) -> usize {
        self.interpolant.components()
    }

    fn eval(&self, y: &[f64], out: &mut [f64]) {
        self.interpolant.eval_into(y[0], out);
    }
}

/// The homogenized operator as seen by the second cell problem.
#[derive(Debug, Clone)]
pub enum EffectiveOperator {
    /// Constant tensor `A⁰`.
    Linear(LinearTensorField),
    Nonlinear(Arc<EffectiveMap>),
}

impl EffectiveOperator {
    pub fn from_operator(op: &StripOperator, h_cell: f64) -> Result<Self> {
        Ok(match op {
            StripOperator::Linear(t) => {
                EffectiveOperator::Linear(homogenize_linear(t, h_cell)?.to_tensor_field(t.lambda))
            }
            StripOperator::Nonlinear(spec) => {
                EffectiveOperator::Nonlinear(Arc::new(EffectiveMap::new(spec.clone(), h_cell)))
            }
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            EffectiveOperator::Linear(t) => t.dim,
            EffectiveOperator::Nonlinear(m) => m.spec().dim(),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, EffectiveOperator::Linear(_))
    }

    /// Planar operator `q ↦ Pᵀ a⁰(P q)` for the orthonormal columns
    /// `frame = [η, ξ̂]`.
    pub fn reduced(&self, frame: &[Vec<f64>], tabulation: usize) -> Result<StripOperator> {
        let d = self.dim();
        if frame.len() != 2 || frame.iter().any(|c| c.len() != d) {
            return Err(Error::invalid("reduction frame needs two columns of the operator's dimension"));
        }
        match self {
            EffectiveOperator::Linear(t) => {
                let comps = t.components;
                let s = t.size();
                let mut full = vec![0.0; s * s];
                t.eval_into(&vec![0.0; d], &mut full);
                let rs = 2 * comps;
                let mut red = vec![0.0; rs * rs];
                for i in 0..comps {
                    for a in 0..2 {
                        for j in 0..comps {
                            for b in 0..2 {
                                let mut acc = 0.0;
                                for al in 0..d {
                                    for be in 0..d {
                                        acc += frame[a][al] * full[(i * d + al) * s + j * d + be] * frame[b][be];
                                    }
                                }
                                red[(i * 2 + a) * rs + j * 2 + b] = acc;
                            }
                        }
                    }
                }
                Ok(StripOperator::Linear(LinearTensorField::constant(2, comps, &red, t.lambda)))
            }
            EffectiveOperator::Nonlinear(map) => {
                let spec = map.spec();
                if map.is_exact() && spec.law == FluxLaw::NonVariational3d && is_e2_e3_frame(frame) {
                    return Ok(StripOperator::Nonlinear(MonotoneMapSpec::reduced2d()));
                }
                let law = map.reduced_law(frame, tabulation)?;
                Ok(StripOperator::Nonlinear(MonotoneMapSpec {
                    homogeneous: law.is_homogeneous(),
                    law,
                    lambda: spec.lambda,
                }))
            }
        }
    }
}

/// `[±e₂, e₃]`, on which the non-variational law restricts to the
/// variational planar law `(q₁, (9/8) q₂ + (3/8)|q₂|)`.
fn is_e2_e3_frame(frame: &[Vec<f64>]) -> bool {
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
    (close(&frame[0], &[0.0, 1.0, 0.0]) || close(&frame[0], &[0.0, -1.0, 0.0])) && close(&frame[1], &[0.0, 0.0, 1.0])
}

/// Knobs of the two-dimensional second cell solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondCellOptions {
    /// Top-slice oscillation at which the height ladder stops.
    pub tolerance: f64,
    pub ladder: HeightLadder,
    /// Grid cells per lateral period.
    pub cells_per_period: usize,
    /// Smoothing width of kinked laws; `None` uses the grid spacing.
    pub tau: Option<f64>,
    /// Circle samples used to tabulate a sampled effective map.
    pub tabulation: usize,
    /// Profile interpolation; `None` picks cubic for linear operators and
    /// linear otherwise.
    pub interpolation: Option<InterpKind>,
}

impl Default for SecondCellOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-7,
            ladder: HeightLadder::default(),
            cells_per_period: 32,
            tau: None,
            tabulation: 64,
            interpolation: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionalLimit {
    pub value: Vec<f64>,
    pub eta: Vec<f64>,
    /// Sum of the strip, profile and interpolation contributions.
    pub error_bar: f64,
    pub strip_error_bar: f64,
    pub profile_error_bar: f64,
    pub interpolation_error: f64,
    pub limit: BoundaryLayerResult,
}

impl DirectionalLimit {
    pub fn scalar(&self) -> f64 {
        self.value[0]
    }
}

/// Interpolation error estimated by rebuilding the interpolant from every
/// other sample and scaling its error at the dropped samples by the order.
pub fn interpolation_error_estimate(profile: &PhiStarProfile, kind: InterpKind) -> f64 {
    let values = profile.values();
    let k = values.len();
    if k < 8 || k % 2 != 0 {
        return PeriodicInterpolant::new(profile.shift_period(), values, kind).midpoint_discrepancy();
    }
    let half: Vec<Vec<f64>> = values.iter().step_by(2).cloned().collect();
    let coarse = PeriodicInterpolant::new(profile.shift_period(), half, kind);
    let step = profile.shift_period() / k as f64;
    let mut worst = 0.0f64;
    for j in (1..k).step_by(2) {
        let v = coarse.eval(j as f64 * step);
        for (a, b) in v.iter().zip(&values[j]) {
            worst = worst.max((a - b).abs());
        }
    }
    let order = match kind {
        InterpKind::Linear => 2,
        InterpKind::Cubic => 4,
    };
    worst / f64::from(1u32 << order)
}

/// Boundary-layer limit of the second cell problem for approach direction
/// `eta`.
pub fn directional_limit(
    xi: &RationalDirection,
    eta: &[f64],
    profile: &PhiStarProfile,
    effective: &EffectiveOperator,
    opts: &SecondCellOptions,
) -> Result<DirectionalLimit> {
    let d = xi.dim();
    if eta.len() != d || (norm(eta) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("approach direction must be a unit vector of the same dimension"));
    }
    if dot(eta, &xi.xi_hat).abs() > 1e-9 {
        return Err(Error::invalid("approach direction must be orthogonal to ξ"));
    }
    if profile.xi.xi != xi.xi {
        return Err(Error::invalid("profile belongs to a different direction"));
    }
    let frame = vec![eta.to_vec(), xi.xi_hat.clone()];
    let operator = effective.reduced(&frame, opts.tabulation)?;
    let kind = opts.interpolation.unwrap_or(if effective.is_linear() {
        InterpKind::Cubic
    } else {
        InterpKind::Linear
    });
    let interpolation_error = interpolation_error_estimate(profile, kind);
    let data = ProfileData {
        interpolant: profile.interpolant(kind),
    };
    let period = profile.shift_period();
    let mut problem = StripProblem::new(make_rational_direction(&[0, 1])?, operator, Arc::new(data))
        .with_period(period)
        .with_target_h(period / opts.cells_per_period as f64);
    if let Some(tau) = opts.tau {
        problem = problem.with_tau(tau);
    }
    let limit = boundary_layer_limit(&problem, opts.tolerance, &opts.ladder)?;
    Ok(DirectionalLimit {
        value: limit.value.clone(),
        eta: eta.to_vec(),
        error_bar: limit.error_bar + profile.error_bar + interpolation_error,
        strip_error_bar: limit.error_bar,
        profile_error_bar: profile.error_bar,
        interpolation_error,
        limit,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EtaSpread {
    pub limits: Vec<DirectionalLimit>,
    /// Largest pairwise difference of the limits.
    pub spread: f64,
    /// Largest individual error bar.
    pub error_bar: f64,
}

/// Directional limits for several approach directions and their spread.
pub fn eta_independence_check(
    xi: &RationalDirection,
    profile: &PhiStarProfile,
    effective: &EffectiveOperator,
    etas: &[Vec<f64>],
    opts: &SecondCellOptions,
) -> Result<EtaSpread> {
    if etas.len() < 2 {
        return Err(Error::invalid("at least two approach directions are needed"));
    }
    let limits = etas
        .par_iter()
        .map(|eta| directional_limit(xi, eta, profile, effective, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut spread = 0.0f64;
    for (i, a) in limits.iter().enumerate() {
        for b in &limits[i + 1..] {
            for (x, y) in a.value.iter().zip(&b.value) {
                spread = spread.max((x - y).abs());
            }
        }
    }
    let error_bar = limits.iter().map(|l| l.error_bar).fold(0.0, f64::max);
    Ok(EtaSpread {
        limits,
        spread,
        error_bar,
    })
}

/// Orthonormal basis of `ξ^⊥`, starting from the default transverse
/// direction.
pub fn transverse_basis(xi: &RationalDirection) -> Vec<Vec<f64>> {
    let t1 = xi.default_transverse();
    if xi.dim() == 2 {
        return vec![t1];
    }
    let x = &xi.xi_hat;
    let t2 = vec![
        x[1] * t1[2] - x[2] * t1[1],
        x[2] * t1[0] - x[0] * t1[2],
        x[0] * t1[1] - x[1] * t1[0],
    ];
    vec![t1, t2]
}

#[derive(Debug, Clone, Serialize)]
pub struct AngleRow {
    /// Angle of `η` from the first transverse basis vector.
    pub angle: f64,
    pub limit: DirectionalLimit,
}

/// `L(ξ, η(θ))` with `η(θ) = cos θ t₁ + sin θ t₂` in three dimensions.
pub fn approach_angle_sweep(
    xi: &RationalDirection,
    profile: &PhiStarProfile,
    effective: &EffectiveOperator,
    angles: &[f64],
    opts: &SecondCellOptions,
) -> Result<Vec<AngleRow>> {
    if xi.dim() != 3 {
        return Err(Error::invalid("approach angles need a three-dimensional direction"));
    }
    let basis = transverse_basis(xi);
    angles
        .par_iter()
        .map(|&th| {
            let (s, c) = th.sin_cos();
            let mut eta: Vec<f64> = (0..3).map(|i| c * basis[0][i] + s * basis[1][i]).collect();
            for e in &mut eta {
                if e.abs() < 1e-15 {
                    *e = 0.0;
                }
            }
            Ok(AngleRow {
                angle: th,
                limit: directional_limit(xi, &eta, profile, effective, opts)?,
            })
        })
        .collect()
}

/// Everything needed to predict `φ*(n)` from rational approximants.
#[derive(Debug, Clone)]
pub struct PredictionSetup {
    pub operator: StripOperator,
    pub data: Arc<dyn BoundaryData>,
    /// Denominator budget `Q` of the rational approximation.
    pub q_budget: i64,
    /// Target spacing of the profile strip solves.
    pub h: f64,
    pub tau: Option<f64>,
    pub tolerance: f64,
    /// Profile samples per period; doubled for nonlinear operators.
    pub profile_samples: usize,
    pub ladder: HeightLadder,
    /// Exponent of the approximation error term `Ĉ |ξ|^α ε^α`.
    pub alpha: f64,
    pub h_cell: f64,
    pub second: SecondCellOptions,
}

impl PredictionSetup {
    pub fn new(operator: StripOperator, data: Arc<dyn BoundaryData>) -> Self {
        let d = operator.dim();
        Self {
            operator,
            data,
            q_budget: 8,
            h: 1.0 / 16.0,
            tau: None,
            tolerance: 1e-6,
            profile_samples: 16,
            ladder: HeightLadder::default(),
            alpha: 0.5,
            h_cell: default_h_cell(d),
            second: SecondCellOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// `n` is itself rational; the value is the directional limit at `n`.
    DirectRational,
    /// Value of the nearest rational approximant's directional limit.
    Prediction,
}

#[derive(Debug, Clone, Serialize)]
pub struct Prediction {
    pub n: Vec<f64>,
    pub value: Vec<f64>,
    pub error_bar: f64,
    /// `Ĉ |ξ|^α ε^α`.
    pub approximation_term: f64,
    pub approximant: Vec<i64>,
    pub epsilon: f64,
    pub eta: Vec<f64>,
    pub provenance: Provenance,
    pub limit: DirectionalLimit,
}

/// Predicts `φ*` at arbitrary unit directions, caching one profile per
/// rational approximant.
pub struct Predictor {
    pub setup: PredictionSetup,
    pub effective: EffectiveOperator,
    profiles: Mutex<HashMap<Vec<i64>, Arc<PhiStarProfile>>>,
}

impl Predictor {
    pub fn new(setup: PredictionSetup) -> Result<Self> {
        if setup.data.gradient_bound().is_none() {
            return Err(Error::invalid("data needs a gradient bound for the approximation term"));
        }
        let effective = EffectiveOperator::from_operator(&setup.operator, setup.h_cell)?;
        Ok(Self {
            setup,
            effective,
            profiles: Mutex::new(HashMap::new()),
        })
    }

    fn sample_count(&self) -> usize {
        if self.effective.is_linear() {
            self.setup.profile_samples
        } else {
            2 * self.setup.profile_samples
        }
    }

    pub fn profile(&self, xi: &RationalDirection) -> Result<Arc<PhiStarProfile>> {
        if let Some(p) = self.profiles.lock().expect("profile cache").get(&xi.xi) {
            return Ok(p.clone());
        }
        let mut base = StripProblem::new(xi.clone(), self.setup.operator.clone(), self.setup.data.clone())
            .with_target_h(self.setup.h);
        if let Some(tau) = self.setup.tau {
            base = base.with_tau(tau);
        }
        let profile = Arc::new(phi_star_profile(&base, self.sample_count(), self.setup.tolerance, &self.setup.ladder)?);
        self.profiles
            .lock()
            .expect("profile cache")
            .entry(xi.xi.clone())
            .or_insert(profile.clone());
        Ok(profile)
    }

    pub fn approximant(&self, n: &[f64]) -> Result<RationalDirection> {
        let approx = dirichlet_approximate(n, self.setup.q_budget)?;
        make_rational_direction(&approx.xi)
    }

    pub fn predict(&self, n: &[f64]) -> Result<Prediction> {
        let xi = self.approximant(n)?;
        let approach = decompose_direction(n, &xi)?;
        let profile = self.profile(&xi)?;
        let limit = directional_limit(&xi, &approach.eta, &profile, &self.effective, &self.setup.second)?;
        let rational = approach.epsilon < 1e-12;
        let c_hat = self.setup.data.gradient_bound().expect("checked in new");
        let approximation_term = if rational {
            0.0
        } else {
            c_hat * (xi.norm * approach.epsilon).powf(self.setup.alpha)
        };
        Ok(Prediction {
            n: n.to_vec(),
            value: limit.value.clone(),
            error_bar: limit.error_bar + approximation_term,
            approximation_term,
            approximant: xi.xi.clone(),
            epsilon: approach.epsilon,
            eta: approach.eta,
            provenance: if rational {
                Provenance::DirectRational
            } else {
                Provenance::Prediction
            },
            limit,
        })
    }
}

/// One-shot prediction of `φ*(n)`.
pub fn predict_phi_star(n: &[f64], setup: &PredictionSetup) -> Result<Prediction> {
    Predictor::new(setup.clone())?.predict(n)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub n: Vec<f64>,
    pub prediction: Option<Prediction>,
    /// Solver error that prevented this row, if any.
    pub failure: Option<String>,
}

/// `|Δφ*| ≈ C |Δn|^α` fitted in log-log over pairs above the noise level.
#[derive(Debug, Clone, Serialize)]
pub struct HolderFit {
    pub c: f64,
    pub alpha: f64,
    pub pairs_used: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub fit: Option<HolderFit>,
    /// No pair rose above the combined error bars.
    pub degenerate: bool,
    /// Largest `|Δφ*|` over all pairs.
    pub max_jump: f64,
}

/// Fits `log|Δv| = log C + α log|Δn|` over pairs whose difference exceeds
/// their combined error bars. Each point is `(n, value, error_bar)`.
pub fn holder_fit(points: &[(Vec<f64>, f64, f64)]) -> (Option<HolderFit>, f64) {
    let mut logs = Vec::new();
    let mut max_jump = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let dv = (a.1 - b.1).abs();
            max_jump = max_jump.max(dv);
            let dn = a.0.iter().zip(&b.0).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            if dv > a.2 + b.2 && dn > 0.0 {
                logs.push((dn.ln(), dv.ln()));
            }
        }
    }
    if logs.len() < 2 {
        return (None, max_jump);
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 1e-12 {
        return (None, max_jump);
    }
    let alpha = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let fit = HolderFit {
        c: (my - alpha * mx).exp(),
        alpha,
        pairs_used: logs.len(),
    };
    (Some(fit), max_jump)
}

/// Predicts `φ*` at each direction (rows in input order) and fits a Hölder
/// modulus over the first solution component.
pub fn continuity_sweep(setup: &PredictionSetup, directions: &[Vec<f64>]) -> Result<SweepReport> {
    for (i, a) in directions.iter().enumerate() {
        if directions[i + 1..].iter().any(|b| b == a) {
            return Err(Error::invalid("sweep directions must be pairwise distinct"));
        }
    }
    let predictor = Predictor::new(setup.clone())?;
    // one profile per distinct approximant, computed before the rows
    let mut distinct: Vec<RationalDirection> = Vec::new();
    for n in directions {
        if let Ok(xi) = predictor.approximant(n) {
            if !distinct.iter().any(|x| x.xi == xi.xi) {
                distinct.push(xi);
            }
        }
    }
    distinct.par_iter().for_each(|xi| {
        let _ = predictor.profile(xi);
    });
    let rows: Vec<SweepRow> = directions
        .par_iter()
        .map(|n| match predictor.predict(n) {
            Ok(p) => SweepRow {
                n: n.clone(),
                prediction: Some(p),
                failure: None,
            },
            Err(e) => SweepRow {
                n: n.clone(),
                prediction: None,
                failure: Some(e.to_string()),
            },
        })
        .collect();
    if rows.iter().all(|r| r.prediction.is_none()) {
        return Err(Error::SolverFailure {
            method: "continuity-sweep",
            iterations: 0,
            residual: f64::NAN,
            reason: rows[0].failure.clone().unwrap_or_default(),
            trace: Vec::new(),
        });
    }
    let points: Vec<(Vec<f64>, f64, f64)> = rows
        .iter()
        .filter_map(|r| r.prediction.as_ref().map(|p| (r.n.clone(), p.value[0], p.error_bar)))
        .collect();
    let (fit, max_jump) = holder_fit(&points);
    Ok(SweepReport {
        degenerate: fit.is_none(),
        rows,
        fit,
        max_jump,
    })
}

/// Residual `-∇·a(∇w)` of `w = (1/3 + cos y) e^{-z}` under the planar law
/// `(w_y, (9/8) w_z + (3/8)|w_z|)` in the form with branches split by the
/// sign of `cos y`; the `cos y ≥ 0` branch is taken at `cos y = 0`.
pub fn subsolution_residual_formula(y: f64, z: f64) -> f64 {
    let c = y.cos();
    let branch = if c < 0.0 {
        -4.0 / 9.0 - c / 3.0
    } else {
        0.25 * (c - 1.0)
    };
    branch * (-z).exp()
}

/// Exact residual `-∇·a(∇w)` for the same `w`, split by the sign of
/// `w_z = -(1/3 + cos y) e^{-z}`.
pub fn exact_subsolution_residual(y: f64, z: f64) -> f64 {
    let c = y.cos();
    let g = 1.0 / 3.0 + c;
    let branch = if g >= 0.0 { 0.25 * (c - 1.0) } else { -0.5 * (1.0 + c) };
    branch * (-z).exp()
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualScan {
    pub max: f64,
    /// Sample points where the maximum is attained (within 1e-15).
    pub argmax: Vec<(f64, f64)>,
    pub samples: usize,
}

/// Maximum of `f` over `y_samples × z_samples` points of
/// `[0, 2π) × [0, z_max]`.
pub fn subsolution_residual(
    f: fn(f64, f64) -> f64,
    y_samples: usize,
    z_samples: usize,
    z_max: f64,
) -> ResidualScan {
    let mut max = f64::NEG_INFINITY;
    let mut argmax = Vec::new();
    for i in 0..y_samples {
        let y = TAU * i as f64 / y_samples as f64;
        for j in 0..z_samples {
            let z = z_max * j as f64 / (z_samples.max(2) - 1) as f64;
            let r = f(y, z);
            if r > max + 1e-15 {
                max = r;
                argmax.clear();
                argmax.push((y, z));
            } else if (r - max).abs() <= 1e-15 {
                argmax.push((y, z));
            }
        }
    }
    ResidualScan {
        max,
        argmax,
        samples: y_samples * z_samples,
    }
}

/// Gap between the planar solution and its explicit subsolution.
#[derive(Debug, Clone, Serialize)]
pub struct GapCertificate {
    /// `min_y (v(y, z₁) - w(y, z₁))` at `z₁ = 1/(2π)`.
    pub delta_hat: f64,
    pub argmin_y: f64,
    pub height: f64,
    /// `max (w - v)` over all nodes; comparison says this is at most the
    /// discretization error.
    pub ordering_violation: f64,
    /// Boundary-layer limit of `v`.
    pub limit: BoundaryLayerResult,
    pub h: f64,
    pub tau: f64,
}

/// Solves the planar problem with data `1/3 + cos 2πy` (unit period) and
/// certifies `lim v ≥ δ̂ > 0` through the gap to
/// `w = (1/3 + cos 2πy) e^{-2πz}` at height `1/(2π)`.
pub fn gap_certificate(h: f64, tau: f64, tolerance: f64, ladder: &HeightLadder) -> Result<GapCertificate> {
    let data = PeriodicFieldExpr::scalar(2, 1.0 / 3.0).with_term(&[1.0], &[1, 0], Phase::Cos);
    let problem = StripProblem::new(
        make_rational_direction(&[0, 1])?,
        StripOperator::Nonlinear(MonotoneMapSpec::reduced2d()),
        Arc::new(data),
    )
    .with_h(h)
    .with_tau(tau);
    let (limit, sol) = boundary_layer_limit_with_solution(&problem, tolerance, ladder)?;
    let subsolution = |y: f64, z: f64| (1.0 / 3.0 + (TAU * y).cos()) * (-TAU * z).exp();
    let z1 = 1.0 / TAU;
    let slice = sol.grid.slice_len();
    let layers = sol.vertical_slices();
    let dz = sol.grid.vertical_step();
    // four-point Lagrange interpolation in z around z₁
    let k0 = ((z1 / dz).floor() as usize).saturating_sub(1).min(layers - 4);
    let zs: Vec<f64> = (k0..k0 + 4).map(|k| sol.slice_height(k)).collect();
    let weights: Vec<f64> = (0..4)
        .map(|a| {
            (0..4)
                .filter(|&b| b != a)
                .map(|b| (z1 - zs[b]) / (zs[a] - zs[b]))
                .product()
        })
        .collect();
    let mut delta_hat = f64::INFINITY;
    let mut argmin_y = 0.0;
    for j in 0..slice {
        let y = sol.grid.node_coord(j)[0];
        let v: f64 = (0..4).map(|a| weights[a] * sol.values[(k0 + a) * slice + j]).sum();
        let gap = v - subsolution(y, z1);
        if gap < delta_hat {
            delta_hat = gap;
            argmin_y = y.rem_euclid(1.0);
        }
    }
    let mut ordering_violation = f64::NEG_INFINITY;
    for node in 0..sol.grid.n_nodes() {
        let x = sol.grid.node_coord(node);
        ordering_violation = ordering_violation.max(subsolution(x[0], x[1]) - sol.values[node]);
    }
    Ok(GapCertificate {
        delta_hat,
        argmin_y,
        height: z1,
        ordering_violation,
        limit,
        h,
        tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_residual_is_nonpositive_and_vanishes_only_on_the_axis() {
        let scan = subsolution_residual(subsolution_residual_formula, 256, 256, 4.0);
        assert!(scan.max <= 0.0);
        assert!(scan.argmax.iter().all(|&(y, _)| y == 0.0));
        assert!((subsolution_residual_formula(std::f64::consts::PI, 0.0) + 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn exact_residual_matches_finite_differences() {
        let w = |y: f64, z: f64| (1.0 / 3.0 + y.cos()) * (-z).exp();
        let flux_z = |y: f64, z: f64| {
            let h = 1e-5;
            let wz = (w(y, z + h) - w(y, z - h)) / (2.0 * h);
            1.125 * wz + 0.375 * wz.abs()
        };
        let h = 1e-4;
        for i in 0..37 {
            let y = 0.17 * i as f64;
            let z = 0.3 + 0.05 * i as f64;
            let wyy = (w(y + h, z) - 2.0 * w(y, z) + w(y - h, z)) / (h * h);
            let dflux = (flux_z(y, z + h) - flux_z(y, z - h)) / (2.0 * h);
            let fd = -(wyy + dflux);
            assert!((fd - exact_subsolution_residual(y, z)).abs() < 1e-5, "y = {y}: {fd}");
        }
        let scan = subsolution_residual(exact_subsolution_residual, 256, 64, 4.0);
        assert!(scan.max <= 0.0);
    }

    #[test]
    fn holder_fit_recovers_a_power_law() {
        let pts: Vec<(Vec<f64>, f64, f64)> = (0..6)
            .map(|k| {
                let t = 0.01 * (k as f64 + 1.0).powi(2);
                (vec![t, 0.0], 2.0 * t.sqrt(), 0.0)
            })
            .collect();
        let (fit, _) = holder_fit(&pts);
        let fit = fit.unwrap();
        assert!(fit.alpha > 0.3 && fit.alpha < 1.0, "{fit:?}");
        let (none, jump) = holder_fit(&[(vec![0.0], 1.0, 0.1), (vec![1.0], 1.05, 0.1)]);
        assert!(none.is_none() && (jump - 0.05).abs() < 1e-12);
    }

    #[test]
    fn reduced_linear_tensor_is_the_frame_restriction() {
        let t = LinearTensorField::constant(3, 1, &[1.0, 0.1, 0.0, 0.1, 0.8, 0.2, 0.0, 0.2, 0.6], 0.5);
        let eff = EffectiveOperator::Linear(t);
        let frame = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let StripOperator::Linear(r) = eff.reduced(&frame, 16).unwrap() else {
            panic!("linear")
        };
        let mut m = vec![0.0; 4];
        r.eval_into(&[0.0, 0.0], &mut m);
        assert_eq!(m, vec![0.8, 0.2, 0.2, 0.6]);
    }

    #[test]
    fn nonvariational_restriction_to_e2_e3_is_the_planar_law() {
        let eff = EffectiveOperator::Nonlinear(Arc::new(EffectiveMap::new(MonotoneMapSpec::non_variational_3d(), 0.25)));
        let frame = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let StripOperator::Nonlinear(spec) = eff.reduced(&frame, 16).unwrap() else {
            panic!("nonlinear")
        };
        assert_eq!(spec.law, FluxLaw::Reduced2d);
        let projected = FluxLaw::Projected {
            base: Box::new(FluxLaw::NonVariational3d),
            frame,
        };
        for p in [[0.3, -0.7], [-1.0, 0.2], [0.5, 0.0]] {
            let a = projected.flux_vec(&[0.0, 0.0], &p, 0.0);
            let b = FluxLaw::Reduced2d.flux_vec(&[0.0, 0.0], &p, 0.0);
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-14));
        }
    }

    #[test]
    fn linear_limit_is_the_profile_average() {
        let t = LinearTensorField::constant(2, 1, &[1.0, 0.3, 0.3, 0.5], 0.4);
        let xi = make_rational_direction(&[1, 2]).unwrap();
        let data = PeriodicFieldExpr::scalar(2, 0.2).with_term(&[1.0], &[1, 0], Phase::Cos);
        let base = StripProblem::new(xi.clone(), StripOperator::Linear(t.clone()), Arc::new(data))
            .with_target_h(1.0 / 16.0);
        let profile = phi_star_profile(&base, 8, 1e-7, &HeightLadder::default()).unwrap();
        let eff = EffectiveOperator::Linear(t);
        let eta = xi.default_transverse();
        let l = directional_limit(&xi, &eta, &profile, &eff, &SecondCellOptions::default()).unwrap();
        assert!((l.scalar() - profile.mean[0]).abs() <= 2.0 * l.error_bar.max(1e-10), "{} vs {}", l.scalar(), profile.mean[0]);
    }
}
