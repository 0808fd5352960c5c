//! Cell problems on truncated periodic strips `{s < y·ξ̂ < s + R}`.
//!
//! The strip is discretized with Q1 elements on a grid whose lateral axes
//! follow the period lattice of `ξ`, so coefficients and data evaluated at
//! physical points are automatically periodic across the lateral
//! identification. Dirichlet data is imposed on the bottom slice; the top
//! slice carries either the natural (zero-flux) condition or a constant.
//!
//! Linear systems are solved with BiCGSTAB. Nonlinear scalar equations are
//! solved by minimizing the discrete energy when the flux has a potential,
//! and by an Anderson-accelerated residual iteration otherwise. All three
//! use the Fourier constant-coefficient solver as preconditioner.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::{BoundaryData, LinearTensorField, PeriodicFieldExpr};
use crate::grid::StructuredGrid;
use crate::lattice::RationalDirection;
use crate::discrete::{anderson, assemble_forcing, assemble_tensor, descent, law_energy, law_residual, DiscreteSystem};
use crate::linalg::{bicgstab, norm2, norm_inf, FastBoundary, FastSolver, StencilMatrix};
use crate::operators::{FluxLaw, MapKind, MonotoneMapSpec};
use crate::report::fmt_f64;

/// Condition imposed on the top slice of the strip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopBoundary {
    NeumannZero,
    DirichletConstant(Vec<f64>),
}

/// Differential operator of a strip problem.
#[derive(Debug, Clone, PartialEq)]
pub enum StripOperator {
    Linear(LinearTensorField),
    Nonlinear(MonotoneMapSpec),
}

impl StripOperator {
    pub fn dim(&self) -> usize {
        match self {
            StripOperator::Linear(t) => t.dim,
            StripOperator::Nonlinear(m) => m.dim(),
        }
    }

    pub fn components(&self) -> usize {
        match self {
            StripOperator::Linear(t) => t.components,
            StripOperator::Nonlinear(_) => 1,
        }
    }

    /// Hex SHA-256 of the operator's debug representation.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(format!("{self:?}").as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Iteration controls shared by the strip solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Relative residual target of the Krylov solve.
    pub linear_tol: f64,
    /// Target for the preconditioned update, relative to the data scale.
    pub nonlinear_tol: f64,
    /// Iteration cap; `20 √(nodes)` when absent.
    pub max_iterations: Option<usize>,
    pub anderson_memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            linear_tol: 1e-10,
            nonlinear_tol: 1e-8,
            max_iterations: None,
            anderson_memory: 5,
        }
    }
}

/// A boundary-layer cell problem on the strip `{s < y·ξ̂ < s + R}`.
///
/// `period` scales the unit cell: the coefficient and data periods are
/// `period · Z^d`, the lateral cell is spanned by `period · ℓ_j`.
#[derive(Debug, Clone)]
pub struct StripProblem {
    pub xi: RationalDirection,
    pub shift: f64,
    pub height: f64,
    pub h: f64,
    pub period: f64,
    /// Overrides the lateral cell counts derived from `h`, for directions
    /// whose period vectors have incommensurate lengths.
    pub lateral_cells: Option<Vec<usize>>,
    pub top: TopBoundary,
    pub operator: StripOperator,
    pub data: Arc<dyn BoundaryData>,
    /// Huber width of the nonlinear flux; defaults to `h`.
    pub tau: Option<f64>,
    /// Flux forcing `f` of `-∇·(A∇u) = ∇·f`, with `N d` components ordered
    /// `i d + α`.
    pub forcing: Option<PeriodicFieldExpr>,
    pub options: SolverOptions,
}

fn divide(length: f64, h: f64, what: &str) -> Result<usize> {
    let n = (length / h).round();
    if n < 1.0 || (n * h - length).abs() > 1e-9 * length.max(1.0) {
        return Err(Error::InvalidMesh(format!(
            "h = {h} does not divide the {what} length {length}"
        )));
    }
    Ok(n as usize)
}

impl StripProblem {
    /// Strip of height `4M` with `h = 1/16` and a zero-flux top.
    pub fn new(xi: RationalDirection, operator: StripOperator, data: Arc<dyn BoundaryData>) -> Self {
        let height = 4.0 * xi.period_bound;
        Self {
            xi,
            shift: 0.0,
            height,
            h: 1.0 / 16.0,
            period: 1.0,
            lateral_cells: None,
            top: TopBoundary::NeumannZero,
            operator,
            data,
            tau: None,
            forcing: None,
            options: SolverOptions::default(),
        }
    }

    pub fn with_shift(mut self, s: f64) -> Self {
        self.shift = s;
        self
    }

    pub fn with_height(mut self, r: f64) -> Self {
        self.height = r;
        self
    }

    /// Smallest height of at least `r` that is a whole number of steps of
    /// the current spacing.
    pub fn with_height_fitted(mut self, r: f64) -> Self {
        self.height = (r / self.h - 1e-9).ceil().max(1.0) * self.h;
        self
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    /// Picks a spacing of at most `h_target` that fits the lateral periods:
    /// in d = 2 the spacing divides the period length, in d = 3 each
    /// lateral axis gets its own cell count.
    pub fn with_target_h(mut self, h_target: f64) -> Self {
        let lengths = self.xi.period_lengths();
        let cells = |l: f64| ((self.period * l) / h_target - 1e-9).ceil().max(1.0);
        if lengths.len() == 1 {
            self.h = self.period * lengths[0] / cells(lengths[0]);
            self.lateral_cells = None;
        } else {
            self.h = h_target;
            self.lateral_cells = Some(lengths.iter().map(|&l| cells(l) as usize).collect());
        }
        self
    }

    pub fn with_period(mut self, period: f64) -> Self {
        self.period = period;
        self
    }

    pub fn with_lateral_cells(mut self, cells: Vec<usize>) -> Self {
        self.lateral_cells = Some(cells);
        self
    }

    pub fn with_top(mut self, top: TopBoundary) -> Self {
        self.top = top;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = Some(tau);
        self
    }

    pub fn with_forcing(mut self, f: PeriodicFieldExpr) -> Self {
        self.forcing = Some(f);
        self
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    pub fn tau_value(&self) -> f64 {
        self.tau.unwrap_or(self.h)
    }

    pub fn components(&self) -> usize {
        self.operator.components()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.xi.dim();
        if self.operator.dim() != d {
            return Err(Error::invalid(format!(
                "operator dimension {} does not match direction dimension {d}",
                self.operator.dim()
            )));
        }
        if self.data.components() != self.components() {
            return Err(Error::invalid(format!(
                "data has {} components, operator expects {}",
                self.data.components(),
                self.components()
            )));
        }
        if !(self.h > 0.0 && self.height > 0.0 && self.period > 0.0) {
            return Err(Error::InvalidMesh("h, height and period must be positive".into()));
        }
        if self.h > self.period / 8.0 * (1.0 + 1e-12) {
            return Err(Error::InvalidMesh(format!(
                "h = {} gives fewer than 8 cells per period {}",
                self.h, self.period
            )));
        }
        if let TopBoundary::DirichletConstant(c) = &self.top {
            if c.len() != self.components() {
                return Err(Error::invalid("top constant has the wrong number of components"));
            }
        }
        if let StripOperator::Nonlinear(_) = &self.operator {
            if let Some(t) = self.tau {
                if !(t > 0.0) {
                    return Err(Error::invalid("smoothing width tau must be positive"));
                }
            }
            if self.forcing.is_some() {
                return Err(Error::Unsupported("forcing is only available for linear operators".into()));
            }
        }
        if let Some(f) = &self.forcing {
            if f.components() != self.components() * d {
                return Err(Error::invalid("forcing must have N·d components"));
            }
        }
        self.cell_counts().map(|_| ())
    }

    fn cell_counts(&self) -> Result<(Vec<usize>, usize)> {
        let lengths = self.xi.period_lengths();
        let lateral = match &self.lateral_cells {
            Some(c) => {
                if c.len() != lengths.len() || c.iter().any(|&n| n == 0) {
                    return Err(Error::InvalidMesh("one positive cell count per period vector".into()));
                }
                for (&n, l) in c.iter().zip(&lengths) {
                    if self.period * l / n as f64 > self.period / 8.0 * (1.0 + 1e-12) {
                        return Err(Error::InvalidMesh("lateral spacing above period/8".into()));
                    }
                }
                c.clone()
            }
            None => lengths
                .iter()
                .map(|l| divide(self.period * l, self.h, "lateral period"))
                .collect::<Result<_>>()?,
        };
        let vertical = divide(self.height, self.h, "strip height")?;
        Ok((lateral, vertical))
    }

    pub fn build_grid(&self) -> Result<StructuredGrid> {
        let (lateral, vertical) = self.cell_counts()?;
        StructuredGrid::strip(&self.xi, self.shift, self.period, &lateral, vertical, self.height)
    }
}

/// Strip grid for `{s < y·ξ̂ < s + R}` with unit period and spacing `h`.
pub fn build_strip_grid(xi: &RationalDirection, s: f64, r: f64, h: f64) -> Result<StructuredGrid> {
    if h > 1.0 / 8.0 * (1.0 + 1e-12) {
        return Err(Error::InvalidMesh(format!("h = {h} gives fewer than 8 cells per unit length")));
    }
    let lateral = xi
        .period_lengths()
        .iter()
        .map(|l| divide(*l, h, "lateral period"))
        .collect::<Result<Vec<_>>>()?;
    let vertical = divide(r, h, "strip height")?;
    StructuredGrid::strip(xi, s, 1.0, &lateral, vertical, r)
}

/// Discrete residual norms, scaled by the inverse cell volume so that they
/// approximate the pointwise residual of the differential equation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Sup norm over nodes strictly between bottom and top slices.
    pub interior_sup: f64,
    pub interior_l2: f64,
    /// `‖G(u)‖₂ / ‖G(lift)‖₂` over unconstrained rows.
    pub relative: f64,
}

/// Assembled discrete operator of a strip problem.
#[derive(Debug)]
pub struct StripDiscretization {
    pub problem: StripProblem,
    pub grid: StructuredGrid,
    comps: usize,
    matrix: Option<StencilMatrix>,
    load: Vec<f64>,
    free: Vec<bool>,
}

impl StripDiscretization {
    pub fn new(problem: &StripProblem) -> Result<Self> {
        problem.validate()?;
        let grid = problem.build_grid()?;
        let comps = problem.components();
        let n = grid.n_nodes();
        let sl = grid.slice_len();
        let top_fixed = matches!(problem.top, TopBoundary::DirichletConstant(_));
        let free: Vec<bool> = (0..n)
            .map(|node| node >= sl && !(top_fixed && node >= n - sl))
            .collect();
        let mut load = vec![0.0; n * comps];
        let matrix = match &problem.operator {
            StripOperator::Linear(t) => {
                let m = assemble_tensor(&grid, t);
                if let Some(f) = &problem.forcing {
                    assemble_forcing(&grid, f, comps, &mut load);
                }
                Some(m)
            }
            StripOperator::Nonlinear(_) => None,
        };
        Ok(Self {
            problem: problem.clone(),
            grid,
            comps,
            matrix,
            load,
            free,
        })
    }

    pub fn components(&self) -> usize {
        self.comps
    }

    pub fn is_free(&self, node: usize) -> bool {
        self.free[node]
    }

    /// Zeroes the rows of constrained nodes.
    pub fn mask(&self, v: &mut [f64]) {
        let c = self.comps;
        for (node, &f) in self.free.iter().enumerate() {
            if !f {
                v[node * c..(node + 1) * c].iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }

    /// Nodal values of `f` at physical node coordinates.
    pub fn interpolate(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
        let c = self.comps;
        let mut out = vec![0.0; self.grid.n_nodes() * c];
        for node in 0..self.grid.n_nodes() {
            let v = f(&self.grid.node_coord(node));
            out[node * c..(node + 1) * c].copy_from_slice(&v[..c]);
        }
        out
    }

    /// Boundary values on constrained nodes, zero elsewhere.
    pub fn lift(&self) -> Vec<f64> {
        let c = self.comps;
        let n = self.grid.n_nodes();
        let sl = self.grid.slice_len();
        let mut out = vec![0.0; n * c];
        for node in 0..sl {
            let y = self.grid.node_coord(node);
            self.problem.data.eval(&y, &mut out[node * c..(node + 1) * c]);
        }
        if let TopBoundary::DirichletConstant(top) = &self.problem.top {
            for node in n - sl..n {
                out[node * c..(node + 1) * c].copy_from_slice(top);
            }
        }
        out
    }

    /// Replaces the constrained values of `u` by the boundary data.
    pub fn impose(&self, u: &mut [f64]) {
        let lift = self.lift();
        let c = self.comps;
        for (node, &f) in self.free.iter().enumerate() {
            if !f {
                u[node * c..(node + 1) * c].copy_from_slice(&lift[node * c..(node + 1) * c]);
            }
        }
    }

    /// Discrete residual `G(u)` on every row (constrained rows included).
    /// For a potential flux it is the gradient of [`Self::energy`].
    pub fn residual(&self, u: &[f64], out: &mut [f64]) {
        match (&self.matrix, &self.problem.operator) {
            (Some(m), _) => {
                m.apply(u, out);
                for (o, l) in out.iter_mut().zip(&self.load) {
                    *o -= l;
                }
            }
            (None, StripOperator::Nonlinear(spec)) => {
                law_residual(&self.grid, &spec.law, self.problem.tau_value(), &[0.0; 3][..self.grid.dim], u, out);
            }
            (None, StripOperator::Linear(_)) => unreachable!("linear operators are assembled"),
        }
    }

    /// Discrete energy `Σ_cells Σ_g w_g F(y_g, ∇u_h)`, when the flux has a
    /// potential.
    pub fn energy(&self, u: &[f64]) -> Option<f64> {
        let law = match &self.problem.operator {
            StripOperator::Nonlinear(spec) => spec.law.clone(),
            StripOperator::Linear(t) if t.components == 1 && self.problem.forcing.is_none() => {
                FluxLaw::Linear(t.clone())
            }
            StripOperator::Linear(_) => return None,
        };
        if !law.has_potential() {
            return None;
        }
        law_energy(&self.grid, &law, self.problem.tau_value(), &[0.0; 3][..self.grid.dim], u)
    }

    pub fn residual_report(&self, u: &[f64]) -> ResidualReport {
        let c = self.comps;
        let n = self.grid.n_nodes();
        let sl = self.grid.slice_len();
        let mut g = vec![0.0; n * c];
        self.residual(u, &mut g);
        let vol = self.grid.cell_volume;
        let mut sup = 0.0f64;
        let mut l2 = 0.0;
        for node in sl..n - sl {
            for v in &g[node * c..(node + 1) * c] {
                let s = v / vol;
                sup = sup.max(s.abs());
                l2 += s * s * vol;
            }
        }
        self.mask(&mut g);
        let mut g0 = vec![0.0; n * c];
        let mut lift = self.lift();
        // boundary values of u itself, zero inside
        for (node, &f) in self.free.iter().enumerate() {
            if !f {
                lift[node * c..(node + 1) * c].copy_from_slice(&u[node * c..(node + 1) * c]);
            }
        }
        self.residual(&lift, &mut g0);
        self.mask(&mut g0);
        let reference = norm2(&g0);
        ResidualReport {
            interior_sup: sup,
            interior_l2: l2.sqrt(),
            relative: if reference > 0.0 { norm2(&g) / reference } else { norm2(&g) },
        }
    }

    fn preconditioner(&self) -> Result<FastSolver> {
        let tensors = match &self.problem.operator {
            StripOperator::Linear(t) => t.mean_diagonal_blocks(8),
            StripOperator::Nonlinear(spec) => vec![spec.law.reference_matrix()],
        };
        let top_dirichlet = matches!(self.problem.top, TopBoundary::DirichletConstant(_));
        FastSolver::new(&self.grid, &tensors, FastBoundary::Strip { top_dirichlet })
    }

    fn max_iterations(&self) -> usize {
        self.problem
            .options
            .max_iterations
            .unwrap_or_else(|| (20.0 * (self.grid.n_nodes() as f64).sqrt()).ceil() as usize)
    }

    fn data_scale(&self, lift: &[f64]) -> f64 {
        let c = self.comps;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut sup = 0.0f64;
        for (node, &f) in self.free.iter().enumerate() {
            if !f {
                for v in &lift[node * c..(node + 1) * c] {
                    lo = lo.min(*v);
                    hi = hi.max(*v);
                    sup = sup.max(v.abs());
                }
            }
        }
        let s = (hi - lo).max(sup);
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }
}

impl DiscreteSystem for StripDiscretization {
    fn gradient(&self, u: &[f64], out: &mut [f64]) {
        self.residual(u, out);
        self.mask(out);
    }

    fn energy(&self, u: &[f64]) -> Option<f64> {
        StripDiscretization::energy(self, u)
    }
}

/// Nodal solution of a strip problem with its convergence record.
#[derive(Debug, Clone)]
pub struct StripSolution {
    pub problem: StripProblem,
    pub grid: StructuredGrid,
    /// `values[node * N + i]`.
    pub values: Vec<f64>,
    /// Relative algebraic residual `‖G(u)‖₂ / ‖G(lift)‖₂` on free rows.
    pub residual_norm: f64,
    pub iterations: usize,
    pub method: &'static str,
    /// Final discrete energy, for potential fluxes.
    pub energy: Option<f64>,
    /// Energy after each accepted descent step, starting from the initial
    /// guess.
    pub energy_trace: Vec<f64>,
    pub residual_trace: Vec<f64>,
}

impl StripSolution {
    pub fn components(&self) -> usize {
        self.problem.components()
    }

    pub fn vertical_slices(&self) -> usize {
        self.grid.vertical_nodes()
    }

    /// Height above the bottom of slice `k`.
    pub fn slice_height(&self, k: usize) -> f64 {
        k as f64 * self.grid.vertical_step()
    }

    /// Per-component mean and the oscillation (max - min, largest over
    /// components) of slice `k`.
    pub fn slice_stats(&self, k: usize) -> (Vec<f64>, f64) {
        let c = self.components();
        let sl = self.grid.slice_len();
        let vals = &self.values[k * sl * c..(k + 1) * sl * c];
        let mut mean = vec![0.0; c];
        let mut osc = 0.0f64;
        for (i, m) in mean.iter_mut().enumerate() {
            let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
            for node in 0..sl {
                let v = vals[node * c + i];
                lo = lo.min(v);
                hi = hi.max(v);
                sum += v;
            }
            *m = sum / sl as f64;
            osc = osc.max(hi - lo);
        }
        (mean, osc)
    }

    pub fn top_mean(&self) -> Vec<f64> {
        self.slice_stats(self.vertical_slices() - 1).0
    }

    pub fn top_oscillation(&self) -> f64 {
        self.slice_stats(self.vertical_slices() - 1).1
    }

    /// Size of the error left by stopping the iterative solve: the stopping
    /// tolerance times `sup |boundary data|`.
    pub fn algebraic_error_estimate(&self) -> f64 {
        let c = self.components();
        let data = norm_inf(&self.values[..self.grid.slice_len() * c]);
        let tol = match self.problem.operator {
            StripOperator::Linear(_) => self.problem.options.linear_tol,
            StripOperator::Nonlinear(_) => self.problem.options.nonlinear_tol,
        };
        tol * data
    }

    /// `sup |u| / sup |boundary data|`.
    pub fn linf_ratio(&self) -> f64 {
        let c = self.components();
        let sl = self.grid.slice_len();
        let data = norm_inf(&self.values[..sl * c]);
        let all = norm_inf(&self.values);
        if data > 0.0 {
            all / data
        } else if all == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    }

    /// Nodal values with coordinates, one row per node.
    pub fn to_csv(&self) -> String {
        let d = self.grid.dim;
        let c = self.components();
        let mut s = String::new();
        let mut header = vec!["node".to_string()];
        header.extend((1..=d).map(|k| format!("y{k}")));
        header.extend((1..=c).map(|k| format!("u{k}")));
        s.push_str(&header.join(","));
        s.push('\n');
        for node in 0..self.grid.n_nodes() {
            let mut row = vec![node.to_string()];
            row.extend(self.grid.node_coord(node).iter().map(|v| fmt_f64(*v)));
            row.extend(self.values[node * c..(node + 1) * c].iter().map(|v| fmt_f64(*v)));
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Solves a linear strip problem by preconditioned BiCGSTAB.
pub fn solve_linear(problem: &StripProblem) -> Result<StripSolution> {
    if !matches!(problem.operator, StripOperator::Linear(_)) {
        return Err(Error::invalid("solve_linear needs a linear operator"));
    }
    let disc = StripDiscretization::new(problem)?;
    let pre = disc.preconditioner()?;
    let k = disc.matrix.as_ref().expect("linear operator is assembled");
    let n = disc.grid.n_nodes() * disc.comps;
    let lift = disc.lift();
    let mut b = vec![0.0; n];
    k.apply(&lift, &mut b);
    for (bi, l) in b.iter_mut().zip(&disc.load) {
        *bi = l - *bi;
    }
    disc.mask(&mut b);
    let reference = norm2(&b);
    let mut x = lift.clone();
    let mut values = lift;
    let mut trace = vec![reference];
    let mut iterations = 0;
    if reference > 0.0 {
        // constant-coefficient harmonic extension as initial guess
        let mut x0 = vec![0.0; n];
        pre.apply(&b, &mut x0);
        let mut kx = vec![0.0; n];
        k.apply(&x0, &mut kx);
        let mut r0: Vec<f64> = b.iter().zip(&kx).map(|(bi, ki)| bi - ki).collect();
        disc.mask(&mut r0);
        let apply = |v: &[f64], out: &mut [f64]| {
            k.apply(v, out);
            disc.mask(out);
        };
        let precond = |v: &[f64], out: &mut [f64]| pre.apply(v, out);
        let mut delta = vec![0.0; n];
        let out = bicgstab(
            &apply,
            &precond,
            &r0,
            &mut delta,
            problem.options.linear_tol,
            Some(reference),
            disc.max_iterations(),
        )?;
        iterations = out.iterations;
        trace = out.trace;
        for i in 0..n {
            x[i] += x0[i] + delta[i];
        }
        values = x;
    }
    let report = disc.residual_report(&values);
    let energy = disc.energy(&values);
    Ok(StripSolution {
        problem: problem.clone(),
        grid: disc.grid,
        values,
        residual_norm: report.relative,
        iterations,
        method: "bicgstab",
        energy,
        energy_trace: energy.into_iter().collect(),
        residual_trace: trace,
    })
}

/// Solves a nonlinear scalar strip problem: energy descent for potential
/// fluxes, Anderson-accelerated residual iteration otherwise.
pub fn solve_nonlinear(problem: &StripProblem) -> Result<StripSolution> {
    let spec = match &problem.operator {
        StripOperator::Nonlinear(s) => s.clone(),
        StripOperator::Linear(_) => return Err(Error::invalid("solve_nonlinear needs a monotone map")),
    };
    let disc = StripDiscretization::new(problem)?;
    let pre = disc.preconditioner()?;
    let lift = disc.lift();
    let scale = disc.data_scale(&lift);
    let n = lift.len();

    // harmonic extension for the reference operator
    let b_ref = spec.law.reference_matrix();
    let reference_disc = StripDiscretization::new(&StripProblem {
        operator: StripOperator::Linear(LinearTensorField::constant(disc.grid.dim, 1, &b_ref, 1.0)),
        tau: None,
        ..problem.clone()
    })?;
    let mut kl = vec![0.0; n];
    reference_disc.residual(&lift, &mut kl);
    disc.mask(&mut kl);
    let mut corr = vec![0.0; n];
    pre.apply(&kl, &mut corr);
    let mut u: Vec<f64> = lift.iter().zip(&corr).map(|(l, c)| l - c).collect();

    let mut g0 = vec![0.0; n];
    disc.residual(&lift, &mut g0);
    disc.mask(&mut g0);
    let reference = norm2(&g0);

    let tol = problem.options.nonlinear_tol * scale;
    let max_iter = disc.max_iterations();
    let (iterations, energy_trace, residual_trace, method) = match spec.kind() {
        MapKind::GradientOfPotential => {
            let (it, et, rt) = descent(&disc, &pre, &mut u, tol, max_iter)?;
            (it, et, rt, "preconditioned-ncg")
        }
        MapKind::Direct | MapKind::BuiltinNonVariational => {
            let (it, rt) = anderson(&disc, &pre, &mut u, tol, max_iter, problem.options.anderson_memory)?;
            (it, Vec::new(), rt, "anderson-richardson")
        }
    };
    let mut g = vec![0.0; n];
    disc.residual(&u, &mut g);
    disc.mask(&mut g);
    let energy = disc.energy(&u);
    Ok(StripSolution {
        problem: problem.clone(),
        grid: disc.grid,
        values: u,
        residual_norm: if reference > 0.0 { norm2(&g) / reference } else { norm2(&g) },
        iterations,
        method,
        energy,
        energy_trace,
        residual_trace,
    })
}

/// Dispatches on the operator type.
pub fn solve(problem: &StripProblem) -> Result<StripSolution> {
    match problem.operator {
        StripOperator::Linear(_) => solve_linear(problem),
        StripOperator::Nonlinear(_) => solve_nonlinear(problem),
    }
}

/// Residual norms of a computed or injected solution.
pub fn discrete_residual(solution: &StripSolution) -> Result<ResidualReport> {
    let disc = StripDiscretization::new(&solution.problem)?;
    Ok(disc.residual_report(&solution.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Phase;
    use crate::lattice::make_rational_direction;
    use std::f64::consts::TAU;

    fn cos_data(freq: &[i64]) -> Arc<dyn BoundaryData> {
        let d = freq.len();
        Arc::new(PeriodicFieldExpr::scalar(d, 0.0).with_term(&[1.0], freq, Phase::Cos))
    }

    #[test]
    fn axis_grid_shape() {
        let xi = make_rational_direction(&[0, 1]).unwrap();
        let g = build_strip_grid(&xi, 0.0, 4.0, 1.0 / 8.0).unwrap();
        assert_eq!(g.cells, vec![8, 32]);
        assert!((g.vertical_step() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn non_dividing_mesh_rejected() {
        let xi = make_rational_direction(&[1, 1]).unwrap();
        assert!(matches!(build_strip_grid(&xi, 0.0, 4.0, 0.1), Err(Error::InvalidMesh(_))));
        let h = 2f64.sqrt() / 16.0;
        let g = build_strip_grid(&xi, 0.0, 64.0 * h, h).unwrap();
        assert_eq!(g.cells[0], 16);
    }

    #[test]
    fn coefficients_periodic_across_lateral_identification() {
        let xi = make_rational_direction(&[1, 2]).unwrap();
        let h = 5f64.sqrt() / 32.0;
        let g = build_strip_grid(&xi, 0.0, 64.0 * h, h).unwrap();
        let a = PeriodicFieldExpr::scalar(2, 1.0)
            .with_term(&[0.5], &[1, 0], Phase::Cos)
            .with_term(&[0.25], &[1, 3], Phase::Sin);
        for r in 0..g.vertical_nodes() {
            let left = g.node_coord(g.node_index(&[0, r]));
            // one full lateral period further along ℓ
            let right: Vec<f64> = left
                .iter()
                .zip(&xi.periods[0])
                .map(|(y, l)| y + *l as f64)
                .collect();
            assert!((a.eval_scalar(&left) - a.eval_scalar(&right)).abs() < 1e-12);
        }
    }

    #[test]
    fn laplace_dirichlet_strip_matches_separated_solution() {
        let xi = make_rational_direction(&[0, 1]).unwrap();
        let r = 3.0;
        let mut errs = Vec::new();
        for h in [1.0 / 16.0, 1.0 / 32.0] {
            let p = StripProblem::new(xi.clone(), StripOperator::Linear(LinearTensorField::identity(2)), cos_data(&[1, 0]))
                .with_height(r)
                .with_h(h)
                .with_top(TopBoundary::DirichletConstant(vec![0.0]));
            let s = solve_linear(&p).unwrap();
            assert!(s.residual_norm <= 1e-9);
            let mut err = 0.0f64;
            for node in 0..s.grid.n_nodes() {
                let y = s.grid.node_coord(node);
                let exact = (TAU * y[0]).cos() * (TAU * (r - y[1])).sinh() / (TAU * r).sinh();
                err = err.max((s.values[node] - exact).abs());
            }
            errs.push(err);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order >= 1.9, "order {order}, errors {errs:?}");
    }

    #[test]
    fn constant_data_is_reproduced() {
        let xi = make_rational_direction(&[1, 1, 0]).unwrap();
        let a = LinearTensorField::isotropic(
            PeriodicFieldExpr::scalar(3, 1.0).with_term(&[0.4], &[1, 0, 1], Phase::Cos),
            0.6,
        );
        let p = StripProblem::new(xi, StripOperator::Linear(a), Arc::new(PeriodicFieldExpr::scalar(3, 2.5)))
            .with_lateral_cells(vec![12, 12])
            .with_height(1.0)
            .with_h(1.0 / 8.0);
        let s = solve_linear(&p).unwrap();
        assert!(s.values.iter().all(|v| (v - 2.5).abs() < 1e-10));
    }

    #[test]
    fn decoupled_system_matches_scalar_solves() {
        let xi = make_rational_direction(&[0, 1]).unwrap();
        let scalar = LinearTensorField::isotropic(
            PeriodicFieldExpr::scalar(2, 0.7).with_term(&[0.2], &[1, 1], Phase::Cos),
            0.5,
        );
        let d1 = PeriodicFieldExpr::scalar(2, 0.0).with_term(&[1.0], &[1, 0], Phase::Cos);
        let d2 = PeriodicFieldExpr::scalar(2, 0.3).with_term(&[0.5], &[2, 0], Phase::Sin);
        let both = PeriodicFieldExpr::constant(2, &[0.0, 0.3])
            .with_term(&[1.0, 0.0], &[1, 0], Phase::Cos)
            .with_term(&[0.0, 0.5], &[2, 0], Phase::Sin);
        let base = |op, data: Arc<dyn BoundaryData>| {
            StripProblem::new(xi.clone(), op, data).with_height(2.0).with_h(1.0 / 16.0)
        };
        let sys = solve_linear(&base(StripOperator::Linear(LinearTensorField::decoupled(&scalar, 2)), Arc::new(both))).unwrap();
        let s1 = solve_linear(&base(StripOperator::Linear(scalar.clone()), Arc::new(d1))).unwrap();
        let s2 = solve_linear(&base(StripOperator::Linear(scalar), Arc::new(d2))).unwrap();
        for node in 0..s1.values.len() {
            assert!((sys.values[2 * node] - s1.values[node]).abs() < 1e-8);
            assert!((sys.values[2 * node + 1] - s2.values[node]).abs() < 1e-8);
        }
    }

    #[test]
    fn vertical_forcing_gives_linear_profile() {
        let xi = make_rational_direction(&[0, 1]).unwrap();
        let p = StripProblem::new(xi, StripOperator::Linear(LinearTensorField::identity(2)), Arc::new(PeriodicFieldExpr::scalar(2, 0.0)))
            .with_height(1.0)
            .with_h(1.0 / 8.0)
            .with_forcing(PeriodicFieldExpr::constant(2, &[0.0, 0.5]));
        let s = solve_linear(&p).unwrap();
        for node in 0..s.grid.n_nodes() {
            let z = s.grid.node_coord(node)[1];
            assert!((s.values[node] + 0.5 * z).abs() < 1e-9);
        }
    }

    #[test]
    fn quadratic_energy_path_agrees_with_linear_solve() {
        let xi = make_rational_direction(&[1, 1]).unwrap();
        let h = 2f64.sqrt() / 16.0;
        let base = StripProblem::new(xi, StripOperator::Linear(LinearTensorField::identity(2)), cos_data(&[1, 0]))
            .with_height(32.0 * h)
            .with_h(h);
        let lin = solve_linear(&base).unwrap();
        let mut nl = base.clone();
        nl.operator = StripOperator::Nonlinear(MonotoneMapSpec::identity(2));
        nl.options.nonlinear_tol = 1e-11;
        let s = solve_nonlinear(&nl).unwrap();
        for (a, b) in lin.values.iter().zip(&s.values) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(s.energy_trace.windows(2).all(|w| w[1] <= w[0] + 1e-14 * w[0].abs().max(1.0)));
    }

    #[test]
    fn energy_gradient_matches_finite_differences() {
        let xi = make_rational_direction(&[0, 1]).unwrap();
        let data = Arc::new(PeriodicFieldExpr::scalar(2, 1.0 / 3.0).with_term(&[1.0], &[1, 0], Phase::Cos));
        let p = StripProblem::new(xi, StripOperator::Nonlinear(MonotoneMapSpec::reduced2d()), data)
            .with_height(1.0)
            .with_h(1.0 / 8.0);
        let disc = StripDiscretization::new(&p).unwrap();
        let n = disc.grid.n_nodes();
        let u: Vec<f64> = (0..n).map(|i| ((i * 7919 % 101) as f64 / 101.0 - 0.5) * 0.8).collect();
        let mut g = vec![0.0; n];
        disc.residual(&u, &mut g);
        let eps = 1e-6;
        for node in (0..n).step_by(7) {
            let mut up = u.clone();
            let mut um = u.clone();
            up[node] += eps;
            um[node] -= eps;
            let fd = (disc.energy(&up).unwrap() - disc.energy(&um).unwrap()) / (2.0 * eps);
            assert!((fd - g[node]).abs() <= 1e-6 * g[node].abs().max(1e-3), "node {node}: {fd} vs {}", g[node]);
        }
    }
}
