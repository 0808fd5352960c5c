//! Homogenized operators: periodic correctors and the effective tensor for
//! linear problems, the sampled effective flux for monotone laws, and an
//! ε-refinement study comparing oscillating and homogenized strip solves.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::Serialize;

use crate::discrete::{anderson, assemble_tensor, descent, law_energy, law_residual, DiscreteSystem};
use crate::error::{Error, Result};
use crate::fields::{BoundaryData, LinearTensorField};
use crate::grid::StructuredGrid;
use crate::interp::{InterpKind, PeriodicInterpolant};
use crate::lattice::{norm, RationalDirection};
use crate::linalg::{bicgstab, norm2, FastBoundary, FastSolver};
use crate::operators::{FluxLaw, MapKind, MonotoneMapSpec};
use crate::strip::{solve, StripOperator, StripProblem, StripSolution, TopBoundary};

/// Default cell spacing on the unit torus for the given dimension.
pub fn default_h_cell(dim: usize) -> f64 {
    if dim == 2 {
        1.0 / 64.0
    } else {
        1.0 / 24.0
    }
}

fn torus_cells(h_cell: f64) -> Result<usize> {
    if !(h_cell > 0.0 && h_cell <= 0.25) {
        return Err(Error::invalid(format!("cell spacing {h_cell} must lie in (0, 1/4]")));
    }
    let n = (1.0 / h_cell).round();
    if (n * h_cell - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidMesh(format!("cell spacing {h_cell} does not divide the unit cell")));
    }
    Ok(n as usize)
}

/// Effective constant tensor with the correctors that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct HomogenizedTensor {
    pub dim: usize,
    pub components: usize,
    /// Row-major `(N d) × (N d)` matrix indexed by `(i α), (j β)`.
    pub a0: Vec<f64>,
    pub h_cell: f64,
    /// Largest absolute cell average over all correctors.
    pub corrector_mean: f64,
    /// Krylov iterations per corrector, in `(j β)` order.
    pub iterations: Vec<usize>,
    /// Nodal corrector values per `(j β)`, `N` values per node.
    #[serde(skip)]
    pub correctors: Vec<Vec<f64>>,
}

impl HomogenizedTensor {
    pub fn size(&self) -> usize {
        self.dim * self.components
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.a0[row * self.size() + col]
    }

    pub fn to_tensor_field(&self, lambda: f64) -> LinearTensorField {
        LinearTensorField::constant(self.dim, self.components, &self.a0, lambda)
    }

    /// Largest entry of `A⁰ - A⁰ᵀ`.
    pub fn asymmetry(&self) -> f64 {
        let s = self.size();
        let mut worst = 0.0f64;
        for r in 0..s {
            for c in 0..s {
                worst = worst.max((self.a0[r * s + c] - self.a0[c * s + r]).abs());
            }
        }
        worst
    }

    /// Extreme values of `ξᵀ A⁰ ξ / |ξ|²` over sampled unit vectors of the
    /// scalar blocks, or of the whole matrix for systems.
    pub fn ellipticity_range(&self) -> (f64, f64) {
        let s = self.size();
        let m = nalgebra::DMatrix::from_fn(s, s, |r, c| 0.5 * (self.a0[r * s + c] + self.a0[c * s + r]));
        let eig = m.symmetric_eigenvalues();
        (eig.min(), eig.max())
    }
}

/// Solves the `N d` periodic corrector problems
/// `-∇·(A (∇χ^{jβ} + e_{jβ})) = 0` with zero mean and averages the flux.
pub fn homogenize_linear(tensor: &LinearTensorField, h_cell: f64) -> Result<HomogenizedTensor> {
    tensor.validate_shape()?;
    let d = tensor.dim;
    let comps = tensor.components;
    let s = tensor.size();
    if tensor.is_constant() {
        let mut a0 = vec![0.0; s * s];
        tensor.eval_into(&vec![0.0; d], &mut a0);
        return Ok(HomogenizedTensor {
            dim: d,
            components: comps,
            a0,
            h_cell,
            corrector_mean: 0.0,
            iterations: vec![0; s],
            correctors: vec![Vec::new(); s],
        });
    }
    let n = torus_cells(h_cell)?;
    let grid = StructuredGrid::torus(d, n, 1.0)?;
    let matrix = assemble_tensor(&grid, tensor);
    let pre = FastSolver::new(&grid, &tensor.mean_diagonal_blocks(8), FastBoundary::Torus)?;
    let nodes = grid.n_nodes();
    let max_iter = (20.0 * ((nodes * comps) as f64).sqrt()).ceil() as usize + 50;

    let solved: Vec<Result<(Vec<f64>, usize)>> = (0..s)
        .into_par_iter()
        .map(|col| {
            let mut b = vec![0.0; nodes * comps];
            let magnitude = corrector_load(&grid, tensor, col, &mut b);
            let mut x = vec![0.0; nodes * comps];
            if norm2(&b) <= 1e-13 * magnitude {
                return Ok((x, 0));
            }
            let reference = norm2(&b).max(1e-6 * magnitude);
            let apply = |v: &[f64], out: &mut [f64]| matrix.apply(v, out);
            let precond = |v: &[f64], out: &mut [f64]| pre.apply(v, out);
            let out = bicgstab(&apply, &precond, &b, &mut x, 1e-11, Some(reference), max_iter)?;
            remove_mean(&mut x, comps);
            Ok((x, out.iterations))
        })
        .collect();
    let mut correctors = Vec::with_capacity(s);
    let mut iterations = Vec::with_capacity(s);
    for r in solved {
        let (x, it) = r?;
        correctors.push(x);
        iterations.push(it);
    }

    let mut a0 = vec![0.0; s * s];
    for (col, chi) in correctors.iter().enumerate() {
        let flux = averaged_flux(&grid, tensor, col, chi);
        for row in 0..s {
            a0[row * s + col] = flux[row];
        }
    }
    let corrector_mean = correctors
        .iter()
        .flat_map(|chi| (0..comps).map(move |c| chi.iter().skip(c).step_by(comps).sum::<f64>() / nodes as f64))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(HomogenizedTensor {
        dim: d,
        components: comps,
        a0,
        h_cell,
        corrector_mean,
        iterations,
        correctors,
    })
}

/// `b_{(a, i)} = -Σ_g w_g ∇φ_a · A_{(i ·), col}(y_g)`. Returns the norm the
/// load would have without cancellation between cells.
fn corrector_load(grid: &StructuredGrid, tensor: &LinearTensorField, col: usize, b: &mut [f64]) -> f64 {
    let d = grid.dim;
    let nc = grid.corners();
    let comps = tensor.components;
    let s = tensor.size();
    let mut nodes = vec![0; nc];
    let mut y = vec![0.0; d];
    let mut a = vec![0.0; s * s];
    let mut magnitude = vec![0.0; b.len()];
    for cell in 0..grid.n_cells() {
        grid.cell_nodes(cell, &mut nodes);
        for g in 0..nc {
            grid.gauss_point(cell, g, &mut y);
            tensor.eval_into(&y, &mut a);
            let w = grid.gauss_weight[g];
            for k in 0..nc {
                let gk = &grid.grad[(g * nc + k) * d..(g * nc + k + 1) * d];
                for i in 0..comps {
                    let mut acc = 0.0;
                    for al in 0..d {
                        acc += gk[al] * a[(i * d + al) * s + col];
                    }
                    b[nodes[k] * comps + i] -= w * acc;
                    magnitude[nodes[k] * comps + i] += (w * acc).abs();
                }
            }
        }
    }
    norm2(&magnitude)
}

/// Cell average of `A (∇χ + e_col)`.
fn averaged_flux(grid: &StructuredGrid, tensor: &LinearTensorField, col: usize, chi: &[f64]) -> Vec<f64> {
    let d = grid.dim;
    let nc = grid.corners();
    let comps = tensor.components;
    let s = tensor.size();
    let mut nodes = vec![0; nc];
    let mut y = vec![0.0; d];
    let mut a = vec![0.0; s * s];
    let mut grad = vec![0.0; s];
    let mut acc = vec![0.0; s];
    for cell in 0..grid.n_cells() {
        grid.cell_nodes(cell, &mut nodes);
        for g in 0..nc {
            grid.gauss_point(cell, g, &mut y);
            tensor.eval_into(&y, &mut a);
            grad.iter_mut().for_each(|v| *v = 0.0);
            grad[col] = 1.0;
            for k in 0..nc {
                let gk = &grid.grad[(g * nc + k) * d..(g * nc + k + 1) * d];
                for j in 0..comps {
                    let v = chi[nodes[k] * comps + j];
                    for be in 0..d {
                        grad[j * d + be] += v * gk[be];
                    }
                }
            }
            let w = grid.gauss_weight[g];
            for (r, ar) in acc.iter_mut().enumerate() {
                *ar += w * (0..s).map(|c| a[r * s + c] * grad[c]).sum::<f64>();
            }
        }
    }
    acc
}

fn remove_mean(x: &mut [f64], comps: usize) {
    let nodes = x.len() / comps;
    for c in 0..comps {
        let mean = x.iter().skip(c).step_by(comps).sum::<f64>() / nodes as f64;
        x.iter_mut().skip(c).step_by(comps).for_each(|v| *v -= mean);
    }
}

/// One evaluation of the effective flux.
#[derive(Debug, Clone, Serialize)]
pub struct EffectiveMapSample {
    pub p: Vec<f64>,
    pub a0_of_p: Vec<f64>,
    /// Cell average of the potential at the corrected gradient, when the
    /// law has one.
    pub corrector_energy: Option<f64>,
    pub iterations: usize,
    /// True when the law does not depend on `y` and no cell problem was
    /// solved.
    pub exact: bool,
}

struct CellSystem<'a> {
    grid: &'a StructuredGrid,
    law: &'a FluxLaw,
    tau: f64,
    p: &'a [f64],
}

impl DiscreteSystem for CellSystem<'_> {
    fn gradient(&self, u: &[f64], out: &mut [f64]) {
        law_residual(self.grid, self.law, self.tau, self.p, u, out);
    }

    fn energy(&self, u: &[f64]) -> Option<f64> {
        law_energy(self.grid, self.law, self.tau, self.p, u)
    }
}

/// Effective flux `a⁰(p)`: the cell average of `a(y, p + ∇χ_p)` where
/// `χ_p` is the zero-mean periodic corrector.
///
/// `tau` smooths kinks of the law; `None` uses the cell spacing.
pub fn homogenize_nonlinear(spec: &MonotoneMapSpec, p: &[f64], h_cell: f64, tau: Option<f64>) -> Result<EffectiveMapSample> {
    let law = &spec.law;
    let d = law.dim();
    if p.len() != d {
        return Err(Error::invalid(format!("gradient has {} entries, law expects {d}", p.len())));
    }
    let tau = tau.unwrap_or(h_cell);
    if !(tau > 0.0) {
        return Err(Error::invalid("smoothing width must be positive"));
    }
    if !law.y_dependent() {
        return Ok(EffectiveMapSample {
            p: p.to_vec(),
            a0_of_p: law.flux_vec(&vec![0.0; d], p, 0.0),
            corrector_energy: law.potential(&vec![0.0; d], p, 0.0),
            iterations: 0,
            exact: true,
        });
    }
    let n = torus_cells(h_cell)?;
    let grid = StructuredGrid::torus(d, n, 1.0)?;
    let pre = FastSolver::new(&grid, &[law.reference_matrix()], FastBoundary::Torus)?;
    let sys = CellSystem {
        grid: &grid,
        law,
        tau,
        p,
    };
    let mut chi = vec![0.0; grid.n_nodes()];
    let scale = norm(p).max(f64::MIN_POSITIVE);
    let tol = 1e-10 * scale;
    let max_iter = 2000;
    let iterations = match spec.kind() {
        MapKind::GradientOfPotential => descent(&sys, &pre, &mut chi, tol, max_iter)?.0,
        _ => anderson(&sys, &pre, &mut chi, tol, max_iter, 5)?.0,
    };
    remove_mean(&mut chi, 1);
    let nc = grid.corners();
    let mut nodes = vec![0; nc];
    let mut y = vec![0.0; d];
    let mut q = vec![0.0; d];
    let mut f = vec![0.0; d];
    let mut acc = vec![0.0; d];
    for cell in 0..grid.n_cells() {
        grid.cell_nodes(cell, &mut nodes);
        for g in 0..nc {
            grid.gauss_point(cell, g, &mut y);
            q.copy_from_slice(p);
            for k in 0..nc {
                let gk = &grid.grad[(g * nc + k) * d..(g * nc + k + 1) * d];
                for a in 0..d {
                    q[a] += chi[nodes[k]] * gk[a];
                }
            }
            law.flux(&y, &q, tau, &mut f);
            let w = grid.gauss_weight[g];
            for a in 0..d {
                acc[a] += w * f[a];
            }
        }
    }
    Ok(EffectiveMapSample {
        p: p.to_vec(),
        a0_of_p: acc,
        corrector_energy: sys.energy(&chi),
        iterations,
        exact: false,
    })
}

/// Sampled effective flux with a cache keyed by gradient direction.
///
/// For homogeneous laws only the direction of `p` is solved for and the
/// magnitude is scaled back in.
#[derive(Debug)]
pub struct EffectiveMap {
    spec: MonotoneMapSpec,
    h_cell: f64,
    tau: Option<f64>,
    cache: RwLock<HashMap<Vec<i64>, Vec<f64>>>,
}

fn cache_key(p: &[f64]) -> Vec<i64> {
    p.iter().map(|v| (v * 1e12).round() as i64).collect()
}

impl EffectiveMap {
    pub fn new(spec: MonotoneMapSpec, h_cell: f64) -> Self {
        Self {
            spec,
            h_cell,
            tau: None,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = Some(tau);
        self
    }

    pub fn spec(&self) -> &MonotoneMapSpec {
        &self.spec
    }

    /// True when no cell problem is needed.
    pub fn is_exact(&self) -> bool {
        !self.spec.law.y_dependent()
    }

    pub fn cached_samples(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    pub fn eval(&self, p: &[f64]) -> Result<Vec<f64>> {
        let d = self.spec.dim();
        if self.is_exact() {
            return Ok(self.spec.law.flux_vec(&vec![0.0; d], p, 0.0));
        }
        let r = norm(p);
        if r == 0.0 {
            return Ok(vec![0.0; d]);
        }
        let homogeneous = self.spec.homogeneous;
        let key_point: Vec<f64> = if homogeneous { p.iter().map(|v| v / r).collect() } else { p.to_vec() };
        let key = cache_key(&key_point);
        let scale = if homogeneous { r } else { 1.0 };
        if let Some(v) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(v.iter().map(|x| x * scale).collect());
        }
        let sample = homogenize_nonlinear(&self.spec, &key_point, self.h_cell, self.tau)?;
        let value = sample.a0_of_p;
        self.cache.write().expect("cache lock").entry(key).or_insert_with(|| value.clone());
        Ok(value.iter().map(|x| x * scale).collect())
    }

    /// Planar restriction `q ↦ Pᵀ a⁰(P q)` to the span of the orthonormal
    /// `frame` columns: exact for `y`-independent laws, otherwise tabulated
    /// from `samples` directions on the unit circle.
    pub fn reduced_law(&self, frame: &[Vec<f64>], samples: usize) -> Result<FluxLaw> {
        if frame.len() != 2 || frame.iter().any(|c| c.len() != self.spec.dim()) {
            return Err(Error::invalid("reduction needs two frame columns of the law's dimension"));
        }
        if self.is_exact() {
            return Ok(FluxLaw::Projected {
                base: Box::new(self.spec.law.clone()),
                frame: frame.to_vec(),
            });
        }
        if !self.spec.homogeneous {
            return Err(Error::Unsupported(
                "tabulated effective maps need a positively homogeneous law".into(),
            ));
        }
        if samples < 8 {
            return Err(Error::invalid("at least 8 circle samples are needed"));
        }
        let d = self.spec.dim();
        let values: Result<Vec<Vec<f64>>> = (0..samples)
            .into_par_iter()
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / samples as f64;
                let (s, c) = th.sin_cos();
                let p: Vec<f64> = (0..d).map(|i| c * frame[0][i] + s * frame[1][i]).collect();
                let a = self.eval(&p)?;
                Ok(frame.iter().map(|col| col.iter().zip(&a).map(|(x, y)| x * y).sum()).collect())
            })
            .collect();
        Ok(FluxLaw::Tabulated(PeriodicInterpolant::new(
            std::f64::consts::TAU,
            values?,
            InterpKind::Cubic,
        )))
    }
}

/// Homogenized counterpart of a strip operator.
pub fn homogenized_operator(op: &StripOperator, h_cell: f64) -> Result<StripOperator> {
    match op {
        StripOperator::Linear(t) => {
            let h = homogenize_linear(t, h_cell)?;
            Ok(StripOperator::Linear(h.to_tensor_field(t.lambda)))
        }
        StripOperator::Nonlinear(spec) => {
            if !spec.law.y_dependent() {
                return Ok(op.clone());
            }
            if spec.dim() != 2 {
                return Err(Error::Unsupported(
                    "effective maps of y-dependent laws are tabulated in two dimensions only".into(),
                ));
            }
            let map = EffectiveMap::new(spec.clone(), h_cell);
            let law = map.reduced_law(&[vec![1.0, 0.0], vec![0.0, 1.0]], 64)?;
            Ok(StripOperator::Nonlinear(MonotoneMapSpec {
                law,
                lambda: spec.lambda,
                homogeneous: true,
            }))
        }
    }
}

fn rescaled_operator(op: &StripOperator, m: i64) -> StripOperator {
    match op {
        StripOperator::Linear(t) => StripOperator::Linear(t.rescaled(m)),
        StripOperator::Nonlinear(spec) => StripOperator::Nonlinear(MonotoneMapSpec {
            law: spec.law.rescaled(m),
            ..spec.clone()
        }),
    }
}

/// Knobs of the ε-refinement study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonStudyOptions {
    /// Strip height in units of the data period.
    pub height: f64,
    /// Grid cells per coefficient period at the smallest ε.
    pub cells_per_eps: usize,
    pub h_cell: f64,
    /// Re-solve the smallest ε on a mesh refined once more.
    pub mesh_check: bool,
}

impl Default for EpsilonStudyOptions {
    fn default() -> Self {
        Self {
            height: 2.0,
            cells_per_eps: 16,
            h_cell: 1.0 / 64.0,
            mesh_check: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonRow {
    pub eps: f64,
    pub sup_error: f64,
    /// `log2(error(2ε) / error(ε))`; absent on the first row.
    pub order: Option<f64>,
    /// `error(ε) / error(2ε)`; absent on the first row.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonStudy {
    pub rows: Vec<EpsilonRow>,
    /// Least-squares slope of `log error` against `log ε`.
    pub fitted_order: Option<f64>,
    pub h: f64,
    /// Sup difference between the smallest-ε solves on the study mesh and
    /// on a mesh refined once more.
    pub mesh_check: Option<f64>,
    /// Set when a solve failed; rows hold the ε values completed before it.
    pub aborted: Option<String>,
}

/// Solves the strip problem with coefficients `A(y/ε)` for each `ε = 1/m`
/// in the ladder and compares against the homogenized solve on a common
/// mesh.
pub fn epsilon_refinement_study(
    op: &StripOperator,
    data: Arc<dyn BoundaryData>,
    xi: &RationalDirection,
    eps_ladder: &[f64],
    opts: &EpsilonStudyOptions,
) -> Result<EpsilonStudy> {
    if eps_ladder.len() < 2 {
        return Err(Error::invalid("the ε ladder needs at least two values"));
    }
    let mut multipliers = Vec::with_capacity(eps_ladder.len());
    for &e in eps_ladder {
        let m = (1.0 / e).round();
        if !(e > 0.0) || (m * e - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("ε = {e} is not the reciprocal of an integer")));
        }
        multipliers.push(m as i64);
    }
    let m_max = *multipliers.iter().max().expect("non-empty ladder");
    let h_target = 1.0 / (opts.cells_per_eps as f64 * m_max as f64);
    let base = |operator: StripOperator, h: f64| {
        StripProblem::new(xi.clone(), operator, data.clone())
            .with_target_h(h)
            .with_height_fitted(opts.height)
            .with_top(TopBoundary::NeumannZero)
    };
    let effective = homogenized_operator(op, opts.h_cell)?;
    let reference = solve(&base(effective.clone(), h_target))?;
    let h = reference.problem.h;

    let mut rows = Vec::new();
    let mut aborted = None;
    let mut finest: Option<StripSolution> = None;
    for (&eps, &m) in eps_ladder.iter().zip(&multipliers) {
        match solve(&base(rescaled_operator(op, m), h_target)) {
            Ok(sol) => {
                let err = sup_difference(&sol.values, &reference.values);
                let prev: Option<&EpsilonRow> = rows.last();
                let (order, ratio) = match prev {
                    Some(p) if p.sup_error > 0.0 && err > 0.0 => {
                        let ratio = err / p.sup_error;
                        (Some(-(ratio.ln()) / (p.eps / eps).ln()), Some(ratio))
                    }
                    _ => (None, None),
                };
                rows.push(EpsilonRow {
                    eps,
                    sup_error: err,
                    order,
                    ratio,
                });
                if m == m_max {
                    finest = Some(sol);
                }
            }
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        }
    }
    let mesh_check = match (&finest, opts.mesh_check) {
        (Some(sol), true) => {
            let fine = solve(&base(rescaled_operator(op, m_max), 0.5 * h))?;
            Some(sup_difference_on_coarse(&sol.values, &fine.values, &sol.grid, &fine.grid))
        }
        _ => None,
    };
    Ok(EpsilonStudy {
        fitted_order: fitted_slope(&rows),
        rows,
        h,
        mesh_check,
        aborted,
    })
}

fn sup_difference(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Compares a solution against one on a grid refined by two along each axis.
fn sup_difference_on_coarse(coarse: &[f64], fine: &[f64], cg: &StructuredGrid, fg: &StructuredGrid) -> f64 {
    let comps = coarse.len() / cg.n_nodes();
    let mut worst = 0.0f64;
    let mut m = vec![0usize; cg.dim];
    for node in 0..cg.n_nodes() {
        let mc = cg.node_multi(node);
        for j in 0..cg.dim {
            m[j] = 2 * mc[j];
        }
        let f = fg.node_index(&m);
        for c in 0..comps {
            worst = worst.max((coarse[node * comps + c] - fine[f * comps + c]).abs());
        }
    }
    worst
}

fn fitted_slope(rows: &[EpsilonRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.sup_error > 0.0)
        .map(|r| (r.eps.ln(), r.sup_error.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Phase, PeriodicFieldExpr};
    use crate::lattice::make_rational_direction;

    fn laminate() -> LinearTensorField {
        let a = PeriodicFieldExpr::scalar(2, 2.0 / 3.0).with_term(&[1.0 / 3.0], &[1, 0], Phase::Cos);
        LinearTensorField::isotropic(a, 1.0 / 3.0)
    }

    #[test]
    fn constant_tensor_is_its_own_homogenization() {
        let t = LinearTensorField::constant(2, 1, &[1.0, 0.2, 0.2, 0.7], 0.5);
        let h = homogenize_linear(&t, 1.0 / 16.0).unwrap();
        assert_eq!(h.a0, vec![1.0, 0.2, 0.2, 0.7]);
    }

    #[test]
    fn laminate_gives_harmonic_and_arithmetic_means() {
        let h = homogenize_linear(&laminate(), 1.0 / 64.0).unwrap();
        assert!((h.entry(0, 0) - 3f64.sqrt() / 3.0).abs() < 1e-3, "{:?}", h.a0);
        assert!((h.entry(1, 1) - 2.0 / 3.0).abs() < 1e-3, "{:?}", h.a0);
        assert!(h.entry(0, 1).abs() < 1e-10 && h.entry(1, 0).abs() < 1e-10);
        assert!(h.corrector_mean <= 1e-12);
    }

    #[test]
    fn checkerboard_tensor_is_symmetric_and_elliptic() {
        let a = PeriodicFieldExpr::scalar(2, 1.0)
            .with_term(&[0.3], &[1, 0], Phase::Cos)
            .with_term(&[0.3], &[0, 1], Phase::Cos)
            .with_term(&[0.2], &[1, 1], Phase::Sin);
        let t = LinearTensorField::isotropic(a, 0.2);
        let h = homogenize_linear(&t, 1.0 / 32.0).unwrap();
        assert!(h.asymmetry() < 1e-9, "{:?}", h.a0);
        let (lo, hi) = h.ellipticity_range();
        assert!(lo > 0.2 && hi <= 1.8);
    }

    #[test]
    fn quadratic_potential_matches_linear_path() {
        let t = laminate();
        let lin = homogenize_linear(&t, 1.0 / 32.0).unwrap();
        let spec = MonotoneMapSpec::quadratic(t);
        let p = [0.6, -0.8];
        let s = homogenize_nonlinear(&spec, &p, 1.0 / 32.0, None).unwrap();
        for r in 0..2 {
            let expect = lin.entry(r, 0) * p[0] + lin.entry(r, 1) * p[1];
            assert!((s.a0_of_p[r] - expect).abs() < 1e-6, "{:?}", s.a0_of_p);
        }
    }

    #[test]
    fn y_independent_law_is_exact() {
        let s = homogenize_nonlinear(&MonotoneMapSpec::non_variational_3d(), &[0.3, 0.0, -1.0], 1.0 / 8.0, None).unwrap();
        assert!(s.exact);
        assert_eq!(s.a0_of_p, FluxLaw::NonVariational3d.flux_vec(&[0.0; 3], &[0.3, 0.0, -1.0], 0.0));
    }

    #[test]
    fn effective_map_is_homogeneous_and_cached() {
        let w = PeriodicFieldExpr::scalar(2, 1.0).with_term(&[0.4], &[1, 0], Phase::Cos);
        let spec = MonotoneMapSpec::new(
            FluxLaw::Weighted {
                weight: w,
                base: Box::new(FluxLaw::Reduced2d),
            },
            0.45,
        );
        let map = EffectiveMap::new(spec, 1.0 / 32.0);
        let a = map.eval(&[0.3, 0.4]).unwrap();
        let b = map.eval(&[0.6, 0.8]).unwrap();
        assert_eq!(map.cached_samples(), 1);
        for k in 0..2 {
            assert!((b[k] - 2.0 * a[k]).abs() < 1e-12);
        }
        let c = map.eval(&[-0.8, 0.6]).unwrap();
        let dp = [0.3 + 0.8, 0.4 - 0.6];
        let mono = (a[0] - c[0]) * dp[0] + (a[1] - c[1]) * dp[1];
        assert!(mono > 0.0);
    }

    #[test]
    fn tabulated_reduction_reproduces_samples() {
        let w = PeriodicFieldExpr::scalar(2, 1.0).with_term(&[0.4], &[1, 0], Phase::Cos);
        let spec = MonotoneMapSpec::new(
            FluxLaw::Weighted {
                weight: w,
                base: Box::new(FluxLaw::Linear(LinearTensorField::identity(2))),
            },
            0.6,
        );
        let map = EffectiveMap::new(spec, 1.0 / 32.0);
        let law = map.reduced_law(&[vec![1.0, 0.0], vec![0.0, 1.0]], 32).unwrap();
        let p = [-0.3, -0.5];
        let direct = map.eval(&p).unwrap();
        let tab = law.flux_vec(&[0.0, 0.0], &p, 0.0);
        for k in 0..2 {
            assert!((direct[k] - tab[k]).abs() < 1e-3, "{direct:?} {tab:?}");
        }
    }

    #[test]
    fn epsilon_study_with_constant_tensor_has_no_error() {
        let t = LinearTensorField::constant(2, 1, &[1.0, 0.0, 0.0, 0.5], 0.5);
        let data: Arc<dyn BoundaryData> = Arc::new(PeriodicFieldExpr::scalar(2, 0.0).with_term(&[1.0], &[1, 0], Phase::Cos));
        let xi = make_rational_direction(&[0, 1]).unwrap();
        let opts = EpsilonStudyOptions {
            height: 1.0,
            cells_per_eps: 8,
            ..Default::default()
        };
        let st = epsilon_refinement_study(&StripOperator::Linear(t), data, &xi, &[0.5, 0.25], &opts).unwrap();
        for r in &st.rows {
            assert!(r.sup_error < 1e-8, "{r:?}");
        }
    }
}
