//! TOML experiment configuration: operator, data, directions and numeric
//! knobs, with validation of the ranges the solvers rely on.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::boundary_layer::HeightLadder;
use crate::error::{Error, Result};
use crate::fields::{BoundaryData, LinearTensorField, PeriodicFieldExpr};
use crate::homogenization::default_h_cell;
use crate::lattice::{make_rational_direction, DirectionSpec, RationalDirection};
use crate::operators::{FluxLaw, MonotoneMapSpec};
use crate::report::sha256_hex;
use crate::strip::{SolverOptions, StripOperator, StripProblem, TopBoundary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CellSolve,
    PhiStar,
    SecondCell,
    Homogenize,
    Sweep,
    DiscontinuityDemo,
    DecayFit,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::CellSolve => "cell-solve",
            ExperimentKind::PhiStar => "phi-star",
            ExperimentKind::SecondCell => "second-cell",
            ExperimentKind::Homogenize => "homogenize",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::DiscontinuityDemo => "discontinuity-demo",
            ExperimentKind::DecayFit => "decay-fit",
        }
    }
}

/// Operator literal of a configuration file, selected by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    /// `-Δ` in `dim` dimensions.
    Laplace { dim: usize },
    /// `a(y) I` with a scalar coefficient.
    Isotropic { coefficient: PeriodicFieldExpr, lambda: f64 },
    /// Full tensor field, systems included.
    Tensor { field: LinearTensorField },
    /// The three-dimensional non-variational law `(p₁, p₂, p₃ + f(p₁, p₃))`.
    NonVariational3d,
    /// The planar law `(p₁, (9/8) p₂ + (3/8)|p₂|)`.
    Reduced2d,
    /// `w(y) · (p₁, (9/8) p₂ + (3/8)|p₂|)`.
    WeightedReduced2d { weight: PeriodicFieldExpr, lambda: f64 },
    /// `p + |p| p`.
    PowerGrowth { dim: usize },
}

impl OperatorConfig {
    pub fn build(&self) -> Result<StripOperator> {
        Ok(match self {
            OperatorConfig::Laplace { dim } => {
                if !(*dim == 2 || *dim == 3) {
                    return Err(Error::Config(format!("dimension {dim} is not 2 or 3")));
                }
                StripOperator::Linear(LinearTensorField::identity(*dim))
            }
            OperatorConfig::Isotropic { coefficient, lambda } => {
                StripOperator::Linear(LinearTensorField::isotropic(coefficient.clone(), *lambda))
            }
            OperatorConfig::Tensor { field } => StripOperator::Linear(field.clone()),
            OperatorConfig::NonVariational3d => StripOperator::Nonlinear(MonotoneMapSpec::non_variational_3d()),
            OperatorConfig::Reduced2d => StripOperator::Nonlinear(MonotoneMapSpec::reduced2d()),
            OperatorConfig::WeightedReduced2d { weight, lambda } => StripOperator::Nonlinear(MonotoneMapSpec::new(
                FluxLaw::Weighted {
                    weight: weight.clone(),
                    base: Box::new(FluxLaw::Reduced2d),
                },
                *lambda,
            )),
            OperatorConfig::PowerGrowth { dim } => {
                StripOperator::Nonlinear(MonotoneMapSpec::new(FluxLaw::PowerGrowth { dim: *dim }, 1.0))
            }
        })
    }

    pub fn is_nonlinear(&self) -> bool {
        !matches!(
            self,
            OperatorConfig::Laplace { .. } | OperatorConfig::Isotropic { .. } | OperatorConfig::Tensor { .. }
        )
    }
}

/// Numeric knobs; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Strip grid spacing in units of the data period. Sweeps treat it as a
    /// target and fit it to each direction's lateral period.
    pub h: f64,
    /// Lateral cell counts overriding `h` along each period vector.
    pub lateral_cells: Option<Vec<usize>>,
    /// Single strip height for `cell-solve`; the ladder is used otherwise.
    pub height: Option<f64>,
    pub shift: f64,
    pub top: TopBoundary,
    /// Height ladder as multiples of `M = max|ℓ_j| · period`.
    pub ladder: Vec<f64>,
    /// Top-slice oscillation at which the ladder stops.
    pub tolerance: f64,
    pub linear_tol: f64,
    pub nonlinear_tol: f64,
    pub max_iterations: Option<usize>,
    /// Smoothing width of kinked laws; the grid spacing when absent.
    pub tau: Option<f64>,
    /// Denominator budget of rational approximation.
    pub q_budget: i64,
    pub profile_samples: usize,
    pub h_cell: Option<f64>,
    pub eps_ladder: Vec<f64>,
    pub cells_per_eps: usize,
    pub eps_height: f64,
    /// Exponent of the approximation term in predictions.
    pub alpha: f64,
    /// Grid cells per lateral period of second cell solves.
    pub second_cells_per_period: usize,
    /// Number of approach angles in the discontinuity demo.
    pub angles: usize,
    /// Repeat the finest solve on a refined mesh where supported.
    pub mesh_check: bool,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            h: 1.0 / 16.0,
            lateral_cells: None,
            height: None,
            shift: 0.0,
            top: TopBoundary::NeumannZero,
            ladder: HeightLadder::default().multiples,
            tolerance: 1e-6,
            linear_tol: 1e-10,
            nonlinear_tol: 1e-8,
            max_iterations: None,
            tau: None,
            q_budget: 8,
            profile_samples: 16,
            h_cell: None,
            eps_ladder: vec![0.25, 0.125, 0.0625],
            cells_per_eps: 16,
            eps_height: 2.0,
            alpha: 0.5,
            second_cells_per_period: 32,
            angles: 9,
            mesh_check: false,
        }
    }
}

/// One experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    pub operator: OperatorConfig,
    #[serde(default)]
    pub data: Option<PeriodicFieldExpr>,
    /// Direction literals such as `"rational: [1, 2]"` or `"unit: [0.6, 0.8]"`.
    #[serde(default)]
    pub directions: Vec<String>,
    /// Approach directions for second cell problems.
    #[serde(default)]
    pub eta: Vec<Vec<f64>>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Digest of the canonical serialization.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_toml()?.as_bytes()))
    }

    pub fn operator(&self) -> Result<StripOperator> {
        self.operator.build()
    }

    pub fn data(&self) -> Result<Arc<dyn BoundaryData>> {
        self.data
            .clone()
            .map(|d| Arc::new(d) as Arc<dyn BoundaryData>)
            .ok_or_else(|| Error::Config("this experiment needs a [data] table".into()))
    }

    pub fn direction_specs(&self) -> Result<Vec<DirectionSpec>> {
        self.directions.iter().map(|s| s.parse()).collect()
    }

    /// The configured directions, all of which must be rational.
    pub fn rational_directions(&self) -> Result<Vec<RationalDirection>> {
        self.direction_specs()?
            .into_iter()
            .map(|d| match d {
                DirectionSpec::Rational(v) => make_rational_direction(&v),
                DirectionSpec::Unit(_) => Err(Error::Config("this experiment needs rational directions".into())),
            })
            .collect()
    }

    pub fn ladder(&self) -> HeightLadder {
        HeightLadder {
            multiples: self.numerics.ladder.clone(),
        }
    }

    pub fn h_cell(&self, dim: usize) -> f64 {
        self.numerics.h_cell.unwrap_or_else(|| default_h_cell(dim))
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            linear_tol: self.numerics.linear_tol,
            nonlinear_tol: self.numerics.nonlinear_tol,
            max_iterations: self.numerics.max_iterations,
            ..SolverOptions::default()
        }
    }

    /// Strip problem for `xi` with every configured knob applied.
    pub fn strip_problem(&self, xi: &RationalDirection) -> Result<StripProblem> {
        let n = &self.numerics;
        let mut p = StripProblem::new(xi.clone(), self.operator()?, self.data()?)
            .with_h(n.h)
            .with_shift(n.shift)
            .with_top(n.top.clone())
            .with_options(self.solver_options());
        if let Some(cells) = &n.lateral_cells {
            p = p.with_lateral_cells(cells.clone());
        }
        if let Some(tau) = n.tau {
            p = p.with_tau(tau);
        }
        if let Some(r) = n.height {
            p = p.with_height(r);
        }
        Ok(p)
    }

    /// Checks the ranges every driver relies on. Failures are configuration
    /// errors.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        let n = &self.numerics;
        let op = self.operator().map_err(cfg)?;
        if !(n.h > 0.0) {
            return Err(Error::Config("h must be positive".into()));
        }
        if !(n.tolerance > 0.0 && n.linear_tol > 0.0 && n.nonlinear_tol > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if let Some(tau) = n.tau {
            if !(tau > 0.0) {
                return Err(Error::Config(format!("tau = {tau} must be positive")));
            }
        }
        self.ladder().validate().map_err(cfg)?;
        if n.q_budget < 1 {
            return Err(Error::Config("q_budget must be at least 1".into()));
        }
        if n.profile_samples < 8 {
            return Err(Error::Config("profile_samples must be at least 8".into()));
        }
        if let Some(hc) = n.h_cell {
            let m = (1.0 / hc).round();
            if !(hc > 0.0) || (m * hc - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("h_cell = {hc} does not divide the unit cell")));
            }
        }
        for &e in &n.eps_ladder {
            let m = (1.0 / e).round();
            if !(e > 0.0) || (m * e - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("ε = {e} is not the reciprocal of an integer")));
            }
        }
        if !(n.alpha > 0.0 && n.alpha <= 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1]".into()));
        }
        if n.second_cells_per_period < 8 || n.cells_per_eps < 8 {
            return Err(Error::Config("at least 8 cells per period are needed".into()));
        }
        let d = op.dim();
        for eta in &self.eta {
            if eta.len() != d {
                return Err(Error::Config(format!("approach direction {eta:?} is not {d}-dimensional")));
            }
        }
        let specs = self.direction_specs().map_err(|e| match e {
            Error::Config(m) => Error::Config(m),
            other => cfg(other),
        })?;
        for spec in &specs {
            let dim = match spec {
                DirectionSpec::Rational(v) => v.len(),
                DirectionSpec::Unit(v) => v.len(),
            };
            if dim != d {
                return Err(Error::Config(format!("direction `{spec}` does not match the operator dimension {d}")));
            }
            spec.unit_vector().map_err(cfg)?;
            if let DirectionSpec::Rational(v) = spec {
                if self.data.is_some() && self.experiment != ExperimentKind::Sweep {
                    let xi = make_rational_direction(v).map_err(cfg)?;
                    let p = self.strip_problem(&xi).map_err(cfg)?;
                    p.validate().map_err(cfg)?;
                    if let Some(r) = n.height {
                        let m = xi.period_bound * p.period;
                        if r < 4.0 * m - 1e-12 {
                            return Err(Error::Config(format!(
                                "height {r} is below 4M = {} for direction {}",
                                4.0 * m,
                                xi
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAPLACE: &str = r#"
experiment = "cell-solve"
seed = 3
directions = ["rational: [1, 2]"]

[operator]
kind = "laplace"
dim = 2

[data]
dim = 2
period = 1.0
constant = [0.0]
terms = [{ coef = [1.0], freq = [1, 0], phase = "cos" }]

[numerics]
h = 0.06987712429686843
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(LAPLACE).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::CellSolve);
        let text = cfg.to_toml().unwrap();
        let again = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash().unwrap(), again.hash().unwrap());
    }

    #[test]
    fn rejects_spacing_that_does_not_fit_the_period() {
        let bad = LAPLACE.replace("h = 0.06987712429686843", "h = 0.1");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_short_heights_and_ladders() {
        let short = LAPLACE.replace("[numerics]", "[numerics]\nheight = 4.0");
        assert!(matches!(ExperimentConfig::from_toml(&short), Err(Error::Config(_))));
        let ladder = LAPLACE.replace("[numerics]", "[numerics]\nladder = [2.0, 4.0]");
        assert!(matches!(ExperimentConfig::from_toml(&ladder), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_nonpositive_tau_and_unknown_keys() {
        let tau = LAPLACE.replace("[numerics]", "[numerics]\ntau = 0.0");
        assert!(matches!(ExperimentConfig::from_toml(&tau), Err(Error::Config(_))));
        let unknown = LAPLACE.replace("seed = 3", "seed = 3\nbogus = 1");
        assert!(matches!(ExperimentConfig::from_toml(&unknown), Err(Error::Config(_))));
    }
}
