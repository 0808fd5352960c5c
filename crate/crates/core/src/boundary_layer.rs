//! Boundary layer limits: far-field constants of strip solves, their
//! exponential approach, and the profile `s ↦ φ*(ξ, s)` over one period of
//! shifts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::{InterpKind, PeriodicInterpolant};
use crate::lattice::RationalDirection;
use crate::strip::{solve, StripProblem, StripSolution};

/// Strip heights tried by [`boundary_layer_limit`], as multiples of the
/// period bound `M` (times the cell period).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightLadder {
    pub multiples: Vec<f64>,
}

impl Default for HeightLadder {
    fn default() -> Self {
        Self {
            multiples: vec![4.0, 8.0, 16.0, 32.0, 64.0],
        }
    }
}

impl HeightLadder {
    /// `4M, 8M, …` up to `max_multiple · M`.
    pub fn up_to(max_multiple: f64) -> Self {
        let mut multiples = vec![4.0];
        while multiples.last().unwrap() * 2.0 <= max_multiple * (1.0 + 1e-12) {
            multiples.push(multiples.last().unwrap() * 2.0);
        }
        Self { multiples }
    }

    pub fn validate(&self) -> Result<()> {
        if self.multiples.len() < 2 {
            return Err(Error::Config("the height ladder needs at least two rungs".into()));
        }
        if self.multiples[0] < 4.0 - 1e-12 {
            return Err(Error::Config("strip heights below 4M are not allowed".into()));
        }
        if self.multiples.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("ladder heights must increase".into()));
        }
        Ok(())
    }
}

/// Least-squares fit `osc ≈ C e^{-rate · z}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub amplitude: f64,
    /// Decay per unit height (`c/M` in `C e^{-cR/M}`).
    pub rate: f64,
    /// The dimensionless constant `c = rate · M`.
    pub c: f64,
    /// Root-mean-square residual of the fit in `ln(osc)`.
    pub fit_residual: f64,
    pub points: Vec<(f64, f64)>,
    /// Set when every oscillation vanishes (constant data).
    pub degenerate: bool,
}

/// Fits `ln(osc)` against height; `m` is the period bound used to report
/// `c`.
pub fn decay_fit(points: &[(f64, f64)], m: f64) -> Result<DecayFit> {
    if points.iter().all(|&(_, o)| o <= 0.0) {
        return Ok(DecayFit {
            amplitude: 0.0,
            rate: 0.0,
            c: 0.0,
            fit_residual: 0.0,
            points: points.to_vec(),
            degenerate: true,
        });
    }
    let used: Vec<(f64, f64)> = points.iter().copied().filter(|&(_, o)| o > 0.0).collect();
    if used.len() < 3 {
        return Err(Error::invalid(format!(
            "decay fit needs at least 3 positive oscillations, got {}",
            used.len()
        )));
    }
    let n = used.len() as f64;
    let (sx, sy) = used.iter().fold((0.0, 0.0), |(a, b), &(z, o)| (a + z, b + o.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (sxx, sxy) = used
        .iter()
        .fold((0.0, 0.0), |(a, b), &(z, o)| (a + (z - mx).powi(2), b + (z - mx) * (o.ln() - my)));
    if sxx == 0.0 {
        return Err(Error::invalid("decay fit needs distinct heights"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = used
        .iter()
        .map(|&(z, o)| (o.ln() - intercept - slope * z).powi(2))
        .sum();
    Ok(DecayFit {
        amplitude: intercept.exp(),
        rate: -slope,
        c: -slope * m,
        fit_residual: (rss / n).sqrt(),
        points: used,
        degenerate: false,
    })
}

/// Far-field constant of a strip problem with its error indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLayerResult {
    /// `c*`: top-slice mean of the tallest solve.
    pub value: Vec<f64>,
    /// Fitted decay per unit height, when a fit was possible.
    pub decay_rate: Option<f64>,
    pub decay: Option<DecayFit>,
    /// Top-slice oscillation plus the change of `c*` between the two
    /// tallest solves plus the algebraic error of the tallest solve.
    pub error_bar: f64,
    pub heights_used: Vec<f64>,
    pub values_by_height: Vec<Vec<f64>>,
    pub top_oscillations: Vec<f64>,
    /// `sup |u| / sup |data|` of the tallest solve.
    pub linf_ratio: f64,
    pub iterations: Vec<usize>,
    pub converged: bool,
}

impl BoundaryLayerResult {
    pub fn scalar(&self) -> f64 {
        self.value[0]
    }
}

/// Ladder heights for `problem`, rounded up to multiples of `h`.
pub fn ladder_heights(problem: &StripProblem, ladder: &HeightLadder) -> Vec<f64> {
    let m = problem.xi.period_bound * problem.period;
    ladder
        .multiples
        .iter()
        .map(|k| (k * m / problem.h - 1e-9).ceil() * problem.h)
        .collect()
}

/// Slice oscillations of a solve suitable for the decay fit: the lower
/// half of the strip, above the roundoff floor.
pub fn decay_points(sol: &StripSolution) -> Vec<(f64, f64)> {
    let n = sol.vertical_slices();
    let osc0 = sol.slice_stats(0).1;
    let floor = 1e-7 * osc0;
    let half = sol.slice_height(n - 1) / 2.0;
    (0..n)
        .map(|k| (sol.slice_height(k), sol.slice_stats(k).1))
        .take_while(|&(z, o)| z <= half + 1e-12 && o > floor)
        .collect()
}

/// Solves `base` on increasing heights until the top-slice oscillation
/// falls below `tolerance` (at least two rungs are solved).
///
/// Exhausting the ladder yields `converged = false` rather than an error.
pub fn boundary_layer_limit(base: &StripProblem, tolerance: f64, ladder: &HeightLadder) -> Result<BoundaryLayerResult> {
    boundary_layer_limit_with_solution(base, tolerance, ladder).map(|(r, _)| r)
}

/// Like [`boundary_layer_limit`], also returning the solve on the tallest
/// strip.
pub fn boundary_layer_limit_with_solution(
    base: &StripProblem,
    tolerance: f64,
    ladder: &HeightLadder,
) -> Result<(BoundaryLayerResult, StripSolution)> {
    if !(tolerance > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    ladder.validate()?;
    let heights = ladder_heights(base, ladder);
    let mut used = Vec::new();
    let mut values = Vec::new();
    let mut oscs = Vec::new();
    let mut iterations = Vec::new();
    let mut last: Option<StripSolution> = None;
    for (k, &r) in heights.iter().enumerate() {
        let sol = solve(&base.clone().with_height(r))?;
        let (mean, osc) = sol.slice_stats(sol.vertical_slices() - 1);
        used.push(r);
        values.push(mean);
        oscs.push(osc);
        iterations.push(sol.iterations);
        last = Some(sol);
        if k >= 1 && osc <= tolerance {
            break;
        }
    }
    let sol = last.expect("ladder has rungs");
    let n = values.len();
    let change = values[n - 1]
        .iter()
        .zip(&values[n - 2])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let error_bar = oscs[n - 1] + change + sol.algebraic_error_estimate();
    let decay = decay_fit(&decay_points(&sol), base.xi.period_bound * base.period).ok();
    let converged = oscs[n - 1] <= tolerance;
    let result = BoundaryLayerResult {
        value: values[n - 1].clone(),
        decay_rate: decay.as_ref().filter(|d| !d.degenerate).map(|d| d.rate),
        decay,
        error_bar,
        heights_used: used,
        values_by_height: values,
        top_oscillations: oscs,
        linf_ratio: sol.linf_ratio(),
        iterations,
        converged,
    };
    Ok((result, sol))
}

/// Sampled `s ↦ φ*(ξ, s)` over one period `[0, P/|ξ|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiStarProfile {
    pub xi: RationalDirection,
    /// Cell period `P`; the shift period is `P / |ξ|`.
    pub period: f64,
    pub shifts: Vec<f64>,
    pub samples: Vec<BoundaryLayerResult>,
    /// `(|ξ|/P) ∫ φ*(ξ, t) dt` over one shift period, by the trapezoid rule.
    pub mean: Vec<f64>,
    /// Largest sample error bar.
    pub error_bar: f64,
    pub converged: bool,
}

impl PhiStarProfile {
    pub fn shift_period(&self) -> f64 {
        self.period / self.xi.norm
    }

    pub fn values(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|r| r.value.clone()).collect()
    }

    pub fn interpolant(&self, kind: InterpKind) -> PeriodicInterpolant {
        PeriodicInterpolant::new(self.shift_period(), self.values(), kind)
    }
}

/// Boundary layer limits at `sample_count` equally spaced shifts, computed
/// in parallel and returned in shift order.
pub fn phi_star_profile(
    base: &StripProblem,
    sample_count: usize,
    tolerance: f64,
    ladder: &HeightLadder,
) -> Result<PhiStarProfile> {
    if sample_count < 8 {
        return Err(Error::invalid("a profile needs at least 8 samples"));
    }
    let period = base.period / base.xi.norm;
    let shifts: Vec<f64> = (0..sample_count)
        .map(|j| base.shift + period * j as f64 / sample_count as f64)
        .collect();
    let samples = shifts
        .par_iter()
        .map(|&s| boundary_layer_limit(&base.clone().with_shift(s), tolerance, ladder))
        .collect::<Result<Vec<_>>>()?;
    let comps = samples[0].value.len();
    // periodic trapezoid rule on a uniform grid
    let mean = (0..comps)
        .map(|c| samples.iter().map(|r| r.value[c]).sum::<f64>() / sample_count as f64)
        .collect();
    let error_bar = samples.iter().map(|r| r.error_bar).fold(0.0, f64::max);
    let converged = samples.iter().all(|r| r.converged);
    Ok(PhiStarProfile {
        xi: base.xi.clone(),
        period: base.period,
        shifts,
        samples,
        mean,
        error_bar,
        converged,
    })
}

/// `|φ*(ξ, s + P/|ξ|) − φ*(ξ, s)|` at the first sample, with the combined
/// error bar it should stay within.
pub fn shift_periodicity_defect(
    base: &StripProblem,
    profile: &PhiStarProfile,
    tolerance: f64,
    ladder: &HeightLadder,
) -> Result<(f64, f64)> {
    let s = profile.shifts[0] + profile.shift_period();
    let r = boundary_layer_limit(&base.clone().with_shift(s), tolerance, ladder)?;
    let defect = r
        .value
        .iter()
        .zip(&profile.samples[0].value)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok((defect, r.error_bar + profile.samples[0].error_bar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{BoundaryData, LinearTensorField, PeriodicFieldExpr, Phase};
    use crate::lattice::make_rational_direction;
    use crate::strip::StripOperator;
    use std::f64::consts::TAU;
    use std::sync::Arc;

    fn laplace(xi: &[i64], data: PeriodicFieldExpr) -> StripProblem {
        let d = xi.len();
        let data: Arc<dyn BoundaryData> = Arc::new(data);
        StripProblem::new(
            make_rational_direction(xi).unwrap(),
            StripOperator::Linear(LinearTensorField::identity(d)),
            data,
        )
    }

    #[test]
    fn decay_fit_recovers_exponential() {
        let pts: Vec<(f64, f64)> = (0..10).map(|k| (k as f64 * 0.1, 2.0 * (-3.0 * k as f64 * 0.1).exp())).collect();
        let f = decay_fit(&pts, 1.0).unwrap();
        assert!((f.rate - 3.0).abs() < 1e-12);
        assert!((f.amplitude - 2.0).abs() < 1e-12);
        assert!(decay_fit(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)], 1.0).unwrap().degenerate);
        assert!(decay_fit(&[(0.0, 1.0), (1.0, 0.5)], 1.0).is_err());
    }

    #[test]
    fn laplace_cosine_limit_is_zero_with_rate_two_pi() {
        let data = PeriodicFieldExpr::scalar(2, 0.0).with_term(&[1.0], &[1, 0], Phase::Cos);
        let r = boundary_layer_limit(&laplace(&[0, 1], data), 1e-8, &HeightLadder::up_to(8.0)).unwrap();
        assert!(r.converged);
        assert!(r.value[0].abs() <= 1e-8);
        let rate = r.decay_rate.unwrap();
        assert!((rate / TAU - 1.0).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn constant_data_limit_is_exact() {
        let r = boundary_layer_limit(
            &laplace(&[1, 1], PeriodicFieldExpr::scalar(2, 0.75)).with_h(2f64.sqrt() / 16.0),
            1e-6,
            &HeightLadder::up_to(8.0),
        )
        .unwrap();
        assert!((r.value[0] - 0.75).abs() < 1e-10, "{r:?}");
        assert!(r.decay.unwrap().degenerate);
    }

    #[test]
    fn laplace_profile_of_diagonal_wave_vanishes() {
        let data = PeriodicFieldExpr::scalar(2, 0.0).with_term(&[1.0], &[1, 1], Phase::Cos);
        let p = phi_star_profile(&laplace(&[0, 1], data), 8, 1e-8, &HeightLadder::up_to(8.0)).unwrap();
        assert!(p.samples.iter().all(|r| r.value[0].abs() < 1e-8));
        assert!(p.mean[0].abs() < 1e-8);
    }

    #[test]
    fn profile_of_axis_wave_follows_shift() {
        // data cos 2π y₂ is constant on every horizontal line
        let data = PeriodicFieldExpr::scalar(2, 0.2).with_term(&[1.0], &[0, 1], Phase::Cos);
        let p = phi_star_profile(&laplace(&[0, 1], data), 8, 1e-8, &HeightLadder::up_to(8.0)).unwrap();
        for (s, r) in p.shifts.iter().zip(&p.samples) {
            assert!((r.value[0] - 0.2 - (TAU * s).cos()).abs() < 1e-10);
        }
        assert!((p.mean[0] - 0.2).abs() < 1e-10);
    }
}
