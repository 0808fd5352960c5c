//! Discrete kernels shared by strip and cell problems: Q1 assembly of
//! linear tensors, monotone-flux residuals and energies, and the nonlinear
//! iterations that drive the residual to zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fields::{LinearTensorField, PeriodicFieldExpr};
use crate::grid::StructuredGrid;
use crate::linalg::{dotv, norm_inf, FastSolver, StencilMatrix};
use crate::operators::FluxLaw;

/// A discretized scalar equation `G(u) = 0` seen by the nonlinear
/// iterations. `gradient` must vanish on constrained rows.
pub(crate) trait DiscreteSystem {
    fn gradient(&self, u: &[f64], out: &mut [f64]);
    fn energy(&self, u: &[f64]) -> Option<f64>;
}

pub(crate) fn corner_offset(dim: usize, a: usize, b: usize) -> [i32; 3] {
    let mut o = [0; 3];
    for (k, ok) in o.iter_mut().enumerate().take(dim) {
        *ok = (b >> k & 1) as i32 - (a >> k & 1) as i32;
    }
    o
}

pub(crate) fn assemble_tensor(grid: &StructuredGrid, t: &LinearTensorField) -> StencilMatrix {
    let d = grid.dim;
    let nc = grid.corners();
    let comps = t.components;
    let s = t.size();
    let mut m = StencilMatrix::new(grid, comps);
    let mut nodes = vec![0; nc];
    let mut y = vec![0.0; d];
    let mut a_vals = vec![0.0; s * s];
    let mut ke = vec![0.0; nc * comps * nc * comps];
    let constant = t.is_constant();
    let mut cached = false;
    for cell in 0..grid.n_cells() {
        grid.cell_nodes(cell, &mut nodes);
        if !(constant && cached) {
            ke.iter_mut().for_each(|v| *v = 0.0);
            for g in 0..nc {
                grid.gauss_point(cell, g, &mut y);
                t.eval_into(&y, &mut a_vals);
                let w = grid.gauss_weight[g];
                for a in 0..nc {
                    let ga = &grid.grad[(g * nc + a) * d..(g * nc + a + 1) * d];
                    for b in 0..nc {
                        let gb = &grid.grad[(g * nc + b) * d..(g * nc + b + 1) * d];
                        for i in 0..comps {
                            for j in 0..comps {
                                let mut acc = 0.0;
                                for al in 0..d {
                                    for be in 0..d {
                                        acc += ga[al] * a_vals[(i * d + al) * s + j * d + be] * gb[be];
                                    }
                                }
                                ke[((a * comps + i) * nc + b) * comps + j] += w * acc;
                            }
                        }
                    }
                }
            }
            cached = true;
        }
        for a in 0..nc {
            for b in 0..nc {
                let off = corner_offset(d, a, b);
                for i in 0..comps {
                    for j in 0..comps {
                        m.add(nodes[a], &off[..d], i, j, ke[((a * comps + i) * nc + b) * comps + j]);
                    }
                }
            }
        }
    }
    m
}

pub(crate) fn assemble_forcing(grid: &StructuredGrid, f: &PeriodicFieldExpr, comps: usize, load: &mut [f64]) {
    let d = grid.dim;
    let nc = grid.corners();
    let mut nodes = vec![0; nc];
    let mut y = vec![0.0; d];
    let mut fv = vec![0.0; comps * d];
    for cell in 0..grid.n_cells() {
        grid.cell_nodes(cell, &mut nodes);
        for g in 0..nc {
            grid.gauss_point(cell, g, &mut y);
            f.eval_into(&y, &mut fv);
            let w = grid.gauss_weight[g];
            for a in 0..nc {
                let ga = &grid.grad[(g * nc + a) * d..(g * nc + a + 1) * d];
                for i in 0..comps {
                    let s: f64 = (0..d).map(|al| fv[i * d + al] * ga[al]).sum();
                    load[nodes[a] * comps + i] -= w * s;
                }
            }
        }
    }
}

/// `G_a(u) = Σ_cells Σ_g w_g a(y_g, offset + ∇u_h) · ∇φ_a` for a scalar unknown.
pub(crate) fn law_residual(grid: &StructuredGrid, law: &FluxLaw, tau: f64, offset: &[f64], u: &[f64], out: &mut [f64]) {
    let d = grid.dim;
    let nc = grid.corners();
    let mut nodes = vec![0; nc];
    let mut y = vec![0.0; d];
    let mut p = [0.0; 3];
    let mut flux = [0.0; 3];
    out.iter_mut().for_each(|v| *v = 0.0);
    for cell in 0..grid.n_cells() {
        grid.cell_nodes(cell, &mut nodes);
        for g in 0..nc {
            grid.gauss_point(cell, g, &mut y);
            p[..d].copy_from_slice(offset);
            for a in 0..nc {
                let ua = u[nodes[a]];
                let ga = &grid.grad[(g * nc + a) * d..(g * nc + a + 1) * d];
                for k in 0..d {
                    p[k] += ua * ga[k];
                }
            }
            law.flux(&y, &p[..d], tau, &mut flux[..d]);
            let w = grid.gauss_weight[g];
            for a in 0..nc {
                let ga = &grid.grad[(g * nc + a) * d..(g * nc + a + 1) * d];
                out[nodes[a]] += w * dotv(&flux[..d], ga);
            }
        }
    }
}

pub(crate) fn law_energy(grid: &StructuredGrid, law: &FluxLaw, tau: f64, offset: &[f64], u: &[f64]) -> Option<f64> {
    let d = grid.dim;
    let nc = grid.corners();
    let mut nodes = vec![0; nc];
    let mut y = vec![0.0; d];
    let mut p = [0.0; 3];
    let mut e = 0.0;
    for cell in 0..grid.n_cells() {
        grid.cell_nodes(cell, &mut nodes);
        for g in 0..nc {
            grid.gauss_point(cell, g, &mut y);
            p[..d].copy_from_slice(offset);
            for a in 0..nc {
                let ga = &grid.grad[(g * nc + a) * d..(g * nc + a + 1) * d];
                for k in 0..d {
                    p[k] += u[nodes[a]] * ga[k];
                }
            }
            e += grid.gauss_weight[g] * law.potential(&y, &p[..d], tau)?;
        }
    }
    Some(e)
}

/// Preconditioned nonlinear conjugate gradients (Polak-Ribière+) with a
/// derivative-based line search that never accepts an energy increase.
pub(crate) fn descent(
    sys: &dyn DiscreteSystem,
    pre: &FastSolver,
    u: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<(usize, Vec<f64>, Vec<f64>)> {
    let n = u.len();
    let grad = |x: &[f64], out: &mut [f64]| {
        sys.gradient(x, out);
    };
    let energy = |x: &[f64]| sys.energy(x).expect("potential flux");
    let mut g = vec![0.0; n];
    let mut z = vec![0.0; n];
    grad(u, &mut g);
    pre.apply(&g, &mut z);
    let mut e = energy(u);
    let mut energies = vec![e];
    let mut updates = vec![norm_inf(&z)];
    let mut dir: Vec<f64> = z.iter().map(|v| -v).collect();
    let mut zg = dotv(&z, &g);
    let mut trial = vec![0.0; n];
    let mut gt = vec![0.0; n];
    for it in 1..=max_iter {
        if norm_inf(&z) <= tol {
            return Ok((it - 1, energies, updates));
        }
        let mut slope = dotv(&g, &dir);
        if slope >= 0.0 {
            dir.iter_mut().zip(&z).for_each(|(d, zi)| *d = -zi);
            slope = dotv(&g, &dir);
        }
        let dphi = |alpha: f64, trial: &mut Vec<f64>, gt: &mut Vec<f64>| {
            for i in 0..n {
                trial[i] = u[i] + alpha * dir[i];
            }
            grad(trial, gt);
            dotv(gt, &dir)
        };
        // bracket the minimizer along the ray
        let (mut lo, mut d_lo) = (0.0, slope);
        let mut hi = 1.0;
        let mut d_hi = dphi(hi, &mut trial, &mut gt);
        let mut expansions = 0;
        while d_hi < 0.0 && expansions < 40 {
            lo = hi;
            d_lo = d_hi;
            hi *= 2.0;
            d_hi = dphi(hi, &mut trial, &mut gt);
            expansions += 1;
        }
        let mut alpha = hi;
        if d_hi > 0.0 {
            // Illinois regula falsi on the directional derivative
            let mut side = 0i32;
            for _ in 0..30 {
                alpha = (lo * d_hi - hi * d_lo) / (d_hi - d_lo);
                let da = dphi(alpha, &mut trial, &mut gt);
                if da.abs() <= 0.1 * slope.abs() {
                    break;
                }
                if da < 0.0 {
                    lo = alpha;
                    d_lo = da;
                    if side == -1 {
                        d_hi *= 0.5;
                    }
                    side = -1;
                } else {
                    hi = alpha;
                    d_hi = da;
                    if side == 1 {
                        d_lo *= 0.5;
                    }
                    side = 1;
                }
            }
        }
        let slack = 1e-14 * (e.abs() + 1.0);
        let mut accepted = None;
        for candidate in [alpha, lo] {
            if candidate <= 0.0 {
                continue;
            }
            for i in 0..n {
                trial[i] = u[i] + candidate * dir[i];
            }
            let et = energy(&trial);
            if et <= e + slack {
                accepted = Some((candidate, et));
                break;
            }
        }
        if accepted.is_none() {
            let mut a = alpha.min(1.0);
            for _ in 0..50 {
                a *= 0.5;
                for i in 0..n {
                    trial[i] = u[i] + a * dir[i];
                }
                let et = energy(&trial);
                if et <= e + slack {
                    accepted = Some((a, et));
                    break;
                }
            }
        }
        let Some((step, e_new)) = accepted else {
            if norm_inf(&z) <= 1e3 * tol {
                // stalled at roundoff level of the energy
                return Ok((it - 1, energies, updates));
            }
            return Err(Error::EnergyIncrease {
                iteration: it,
                before: e,
                after: energy(&trial),
            });
        };
        for i in 0..n {
            u[i] += step * dir[i];
        }
        e = e_new.min(e);
        energies.push(e);
        let g_old = g.clone();
        grad(u, &mut g);
        pre.apply(&g, &mut z);
        updates.push(norm_inf(&z));
        let zg_new = dotv(&z, &g);
        let beta = if zg.abs() > 0.0 {
            ((zg_new - dotv(&z, &g_old)) / zg).max(0.0)
        } else {
            0.0
        };
        zg = zg_new;
        for i in 0..n {
            dir[i] = -z[i] + beta * dir[i];
        }
    }
    Err(Error::SolverFailure {
        method: "preconditioned-ncg",
        iterations: max_iter,
        residual: norm_inf(&z),
        reason: "update norm above tolerance at the iteration cap".into(),
        trace: energies,
    })
}

/// Anderson-accelerated preconditioned Richardson iteration for
/// `G(u) = 0`, restarting its history whenever the residual grows.
pub(crate) fn anderson(
    sys: &dyn DiscreteSystem,
    pre: &FastSolver,
    u: &mut [f64],
    tol: f64,
    max_iter: usize,
    memory: usize,
) -> Result<(usize, Vec<f64>)> {
    let n = u.len();
    let mut g = vec![0.0; n];
    let mut f = vec![0.0; n];
    let fixed_point_residual = |x: &[f64], g: &mut [f64], f: &mut [f64]| {
        sys.gradient(x, g);
        pre.apply(g, f);
        f.iter_mut().for_each(|v| *v = -*v);
    };
    fixed_point_residual(u, &mut g, &mut f);
    let mut trace = vec![norm_inf(&f)];
    let mut dx: Vec<Vec<f64>> = Vec::new();
    let mut df: Vec<Vec<f64>> = Vec::new();
    let mut x_prev = u.to_vec();
    let mut f_prev = f.clone();
    for it in 1..=max_iter {
        let fnorm = *trace.last().unwrap();
        if fnorm <= tol {
            return Ok((it - 1, trace));
        }
        if !fnorm.is_finite() {
            break;
        }
        // u_next = u + f - (ΔX + ΔF) γ, γ = argmin ‖f - ΔF γ‖
        let mut step = f.clone();
        if !df.is_empty() {
            let m = df.len();
            let mat = DMatrix::from_fn(m, m, |i, j| dotv(&df[i], &df[j]));
            let rhs = DVector::from_fn(m, |i, _| dotv(&df[i], &f));
            let reg = 1e-12 * (0..m).map(|i| mat[(i, i)]).sum::<f64>();
            let mat = mat + DMatrix::identity(m, m) * reg;
            if let Some(gamma) = mat.cholesky().map(|ch| ch.solve(&rhs)) {
                for j in 0..m {
                    let gj = gamma[j];
                    for i in 0..n {
                        step[i] -= gj * (dx[j][i] + df[j][i]);
                    }
                }
            }
        }
        x_prev.copy_from_slice(u);
        f_prev.copy_from_slice(&f);
        for i in 0..n {
            u[i] += step[i];
        }
        fixed_point_residual(u, &mut g, &mut f);
        let new_norm = norm_inf(&f);
        trace.push(new_norm);
        if new_norm > 2.0 * fnorm {
            dx.clear();
            df.clear();
            continue;
        }
        dx.push(u.iter().zip(&x_prev).map(|(a, b)| a - b).collect());
        df.push(f.iter().zip(&f_prev).map(|(a, b)| a - b).collect());
        if dx.len() > memory {
            dx.remove(0);
            df.remove(0);
        }
    }
    let last = *trace.last().unwrap();
    Err(Error::SolverFailure {
        method: "anderson-richardson",
        iterations: trace.len() - 1,
        residual: last,
        reason: format!("preconditioned update above {tol:.3e} at the iteration cap"),
        trace,
    })
}
