//! Stencil matrices on structured grids, BiCGSTAB, and a fast solver for
//! constant-coefficient Q1 operators.
//!
//! The fast solver diagonalizes the operator with discrete Fourier
//! transforms along the periodic axes. On a strip each lateral Fourier mode
//! leaves a tridiagonal system in the vertical index; on a torus the
//! operator is fully diagonal. It serves as the preconditioner for every
//! iterative solve in the crate.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::StructuredGrid;

pub(crate) fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dotv(a, a).sqrt()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn slot_of(offset: &[i32]) -> usize {
    offset.iter().rev().fold(0, |acc, &o| acc * 3 + (o + 1) as usize)
}

fn offset_of(slot: usize, dim: usize) -> [i32; 3] {
    let mut o = [0; 3];
    let mut r = slot;
    for oj in o.iter_mut().take(dim) {
        *oj = (r % 3) as i32 - 1;
        r /= 3;
    }
    o
}

/// Block sparse matrix whose rows couple each node to its `3^d` grid
/// neighbors, with `comps × comps` blocks.
#[derive(Debug, Clone)]
pub struct StencilMatrix {
    pub n_nodes: usize,
    pub comps: usize,
    slots: usize,
    nbr: Vec<usize>,
    vals: Vec<f64>,
}

impl StencilMatrix {
    pub fn new(grid: &StructuredGrid, comps: usize) -> Self {
        let slots = 3usize.pow(grid.dim as u32);
        let n = grid.n_nodes();
        let mut nbr = vec![usize::MAX; n * slots];
        for node in 0..n {
            for s in 0..slots {
                let o = offset_of(s, grid.dim);
                if let Some(m) = grid.neighbor(node, &o[..grid.dim]) {
                    nbr[node * slots + s] = m;
                }
            }
        }
        Self {
            n_nodes: n,
            comps,
            slots,
            nbr,
            vals: vec![0.0; n * slots * comps * comps],
        }
    }

    /// Adds `v` to the block entry `(i, j)` coupling `row` to the neighbor at
    /// `offset`.
    pub fn add(&mut self, row: usize, offset: &[i32], i: usize, j: usize, v: f64) {
        let s = slot_of(offset);
        let c = self.comps;
        self.vals[((row * self.slots + s) * c + i) * c + j] += v;
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let c = self.comps;
        for row in 0..self.n_nodes {
            for i in 0..c {
                let mut acc = 0.0;
                for s in 0..self.slots {
                    let col = self.nbr[row * self.slots + s];
                    if col == usize::MAX {
                        continue;
                    }
                    let base = ((row * self.slots + s) * c + i) * c;
                    for j in 0..c {
                        acc += self.vals[base + j] * x[col * c + j];
                    }
                }
                y[row * c + i] = acc;
            }
        }
    }
}

/// Convergence record of a Krylov solve.
#[derive(Debug, Clone)]
pub struct KrylovOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub trace: Vec<f64>,
}

/// Right-preconditioned BiCGSTAB for `A x = b`.
///
/// `apply` and `precond` must both vanish on constrained rows; `b` must vanish
/// there too. Stops at `‖b - A x‖ ≤ tol · reference` where `reference`
/// defaults to `‖b‖`.
pub fn bicgstab(
    apply: &dyn Fn(&[f64], &mut [f64]),
    precond: &dyn Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    reference: Option<f64>,
    max_iter: usize,
) -> Result<KrylovOutcome> {
    let n = b.len();
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let bnorm = reference.unwrap_or_else(|| norm2(b));
    let target = tol * bnorm;
    let mut trace = vec![norm2(&r)];
    if trace[0] <= target || bnorm == 0.0 {
        return Ok(KrylovOutcome {
            iterations: 0,
            relative_residual: if bnorm > 0.0 { trace[0] / bnorm } else { 0.0 },
            trace,
        });
    }
    let mut rhat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut restarts = 0;
    for it in 1..=max_iter {
        let rho_new = dotv(&rhat, &r);
        if rho_new.abs() < 1e-300 || omega == 0.0 {
            if restarts >= 5 {
                break;
            }
            restarts += 1;
            rhat.copy_from_slice(&r);
            p.iter_mut().for_each(|z| *z = 0.0);
            v.iter_mut().for_each(|z| *z = 0.0);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        precond(&p, &mut phat);
        apply(&phat, &mut v);
        let denom = dotv(&rhat, &v);
        if denom.abs() < 1e-300 {
            rho = 0.0;
            continue;
        }
        alpha = rho_new / denom;
        for k in 0..n {
            s[k] = r[k] - alpha * v[k];
        }
        let sn = norm2(&s);
        if sn <= target {
            for k in 0..n {
                x[k] += alpha * phat[k];
            }
            trace.push(sn);
            return Ok(KrylovOutcome {
                iterations: it,
                relative_residual: sn / bnorm,
                trace,
            });
        }
        precond(&s, &mut shat);
        apply(&shat, &mut t);
        let tt = dotv(&t, &t);
        omega = if tt > 0.0 { dotv(&t, &s) / tt } else { 0.0 };
        for k in 0..n {
            x[k] += alpha * phat[k] + omega * shat[k];
            r[k] = s[k] - omega * t[k];
        }
        rho = rho_new;
        let rn = norm2(&r);
        trace.push(rn);
        if rn <= target {
            // confirm with the true residual
            apply(x, &mut r);
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri = bi - *ri;
            }
            let true_rn = norm2(&r);
            if true_rn <= 10.0 * target {
                return Ok(KrylovOutcome {
                    iterations: it,
                    relative_residual: true_rn / bnorm,
                    trace,
                });
            }
        }
        if !rn.is_finite() {
            break;
        }
    }
    let last = *trace.last().unwrap();
    Err(Error::SolverFailure {
        method: "bicgstab",
        iterations: trace.len() - 1,
        residual: last / bnorm,
        reason: format!("relative residual did not reach {tol:.1e}"),
        trace,
    })
}

/// Boundary treatment of the fast solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FastBoundary {
    /// Strip: bottom Dirichlet, top Neumann (`top_dirichlet = false`) or
    /// Dirichlet.
    Strip { top_dirichlet: bool },
    /// Fully periodic; the mean is projected out.
    Torus,
}

#[derive(Debug)]
enum Factor {
    /// Per lateral mode: Thomas multipliers `c'_k` and inverse pivots.
    Strip {
        sub: Vec<Complex64>,
        cprime: Vec<Complex64>,
        inv_den: Vec<Complex64>,
    },
    Torus { inv_symbol: Vec<Complex64> },
}

/// Exact inverse of the Q1 operator `-∇·(B ∇u)` for constant `B`, one
/// matrix per solution component.
pub struct FastSolver {
    dim: usize,
    comps: usize,
    nodes_per_axis: Vec<usize>,
    boundary: FastBoundary,
    /// Free vertical rows `1..=k_max` on a strip.
    k_max: usize,
    factors: Vec<Factor>,
    plans: Vec<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
}

impl std::fmt::Debug for FastSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FastSolver")
            .field("dim", &self.dim)
            .field("comps", &self.comps)
            .field("nodes_per_axis", &self.nodes_per_axis)
            .field("boundary", &self.boundary)
            .finish()
    }
}

impl FastSolver {
    pub fn new(grid: &StructuredGrid, tensors: &[Vec<f64>], boundary: FastBoundary) -> Result<Self> {
        let d = grid.dim;
        match boundary {
            FastBoundary::Strip { .. } if !grid.is_strip() => {
                return Err(Error::InvalidMesh("strip solver needs a bounded last axis".into()))
            }
            FastBoundary::Torus if grid.periodic.iter().any(|p| !p) => {
                return Err(Error::InvalidMesh("torus solver needs periodic axes".into()))
            }
            _ => {}
        }
        let mut planner = FftPlanner::new();
        let plans = grid
            .nodes_per_axis
            .iter()
            .map(|&n| (planner.plan_fft_forward(n), planner.plan_fft_inverse(n)))
            .collect();
        let nc = grid.corners();
        let slots = 3usize.pow(d as u32);
        let mut factors = Vec::with_capacity(tensors.len());
        let k_max = match boundary {
            FastBoundary::Strip { top_dirichlet } => grid.cells[d - 1] - usize::from(top_dirichlet),
            FastBoundary::Torus => 0,
        };
        for b in tensors {
            let ke = grid.element_matrix(b);
            // stencil contributions split by the cell lying below/above the node
            let mut lower = vec![0.0; slots];
            let mut upper = vec![0.0; slots];
            for a in 0..nc {
                for c in 0..nc {
                    let off: Vec<i32> = (0..d).map(|k| (c >> k & 1) as i32 - (a >> k & 1) as i32).collect();
                    let s = slot_of(&off);
                    if a >> (d - 1) & 1 == 1 {
                        lower[s] += ke[a * nc + c];
                    } else {
                        upper[s] += ke[a * nc + c];
                    }
                }
            }
            factors.push(match boundary {
                FastBoundary::Torus => {
                    let n_total = grid.n_nodes();
                    let mut inv_symbol = vec![Complex64::new(0.0, 0.0); n_total];
                    for (m, inv) in inv_symbol.iter_mut().enumerate() {
                        let mm = grid.node_multi(m);
                        let mut sym = Complex64::new(0.0, 0.0);
                        for s in 0..slots {
                            let o = offset_of(s, d);
                            let phase: f64 = (0..d)
                                .map(|j| TAU * mm[j] as f64 * o[j] as f64 / grid.nodes_per_axis[j] as f64)
                                .sum();
                            sym += Complex64::from_polar(lower[s] + upper[s], phase);
                        }
                        *inv = if m == 0 || sym.norm() < 1e-14 * lower.iter().map(|v| v.abs()).sum::<f64>() {
                            Complex64::new(0.0, 0.0)
                        } else {
                            1.0 / sym
                        };
                    }
                    Factor::Torus { inv_symbol }
                }
                FastBoundary::Strip { .. } => {
                    let n_lat = grid.slice_len();
                    let n_free = k_max;
                    let mut sub = vec![Complex64::new(0.0, 0.0); n_lat];
                    let mut cprime = vec![Complex64::new(0.0, 0.0); n_lat * n_free];
                    let mut inv_den = vec![Complex64::new(0.0, 0.0); n_lat * n_free];
                    for m in 0..n_lat {
                        let mm = grid.node_multi(m);
                        let mut sig_l = [Complex64::new(0.0, 0.0); 3];
                        let mut sig_u = [Complex64::new(0.0, 0.0); 3];
                        for s in 0..slots {
                            let o = offset_of(s, d);
                            let phase: f64 = (0..d - 1)
                                .map(|j| TAU * mm[j] as f64 * o[j] as f64 / grid.nodes_per_axis[j] as f64)
                                .sum();
                            let ov = (o[d - 1] + 1) as usize;
                            sig_l[ov] += Complex64::from_polar(lower[s], phase);
                            sig_u[ov] += Complex64::from_polar(upper[s], phase);
                        }
                        let a = sig_l[0];
                        let c = sig_u[2];
                        let b_int = sig_l[1] + sig_u[1];
                        let b_top = sig_l[1];
                        sub[m] = a;
                        let top_neumann = matches!(boundary, FastBoundary::Strip { top_dirichlet: false });
                        let mut prev_c = Complex64::new(0.0, 0.0);
                        for k in 0..n_free {
                            let is_top = top_neumann && k == n_free - 1;
                            let bk = if is_top { b_top } else { b_int };
                            let den = if k == 0 { bk } else { bk - a * prev_c };
                            let inv = 1.0 / den;
                            let ck = if is_top { Complex64::new(0.0, 0.0) } else { c * inv };
                            cprime[m * n_free + k] = ck;
                            inv_den[m * n_free + k] = inv;
                            prev_c = ck;
                        }
                    }
                    Factor::Strip { sub, cprime, inv_den }
                }
            });
        }
        Ok(Self {
            dim: d,
            comps: tensors.len(),
            nodes_per_axis: grid.nodes_per_axis.clone(),
            boundary,
            k_max,
            factors,
            plans,
        })
    }

    fn fft_axis(&self, buf: &mut [Complex64], axis: usize, inverse: bool, scratch: &mut Vec<Complex64>) {
        let n = self.nodes_per_axis[axis];
        if n == 1 {
            return;
        }
        let stride: usize = self.nodes_per_axis[..axis].iter().product();
        let total = buf.len();
        let plan = if inverse { &self.plans[axis].1 } else { &self.plans[axis].0 };
        if stride == 1 {
            plan.process(buf);
            return;
        }
        let block = stride * n;
        let lines = total / n;
        scratch.resize(total, Complex64::new(0.0, 0.0));
        // gather lines contiguously
        let mut li = 0;
        for outer in 0..total / block {
            for inner in 0..stride {
                let base = outer * block + inner;
                for k in 0..n {
                    scratch[li * n + k] = buf[base + k * stride];
                }
                li += 1;
            }
        }
        debug_assert_eq!(li, lines);
        plan.process(&mut scratch[..total]);
        li = 0;
        for outer in 0..total / block {
            for inner in 0..stride {
                let base = outer * block + inner;
                for k in 0..n {
                    buf[base + k * stride] = scratch[li * n + k];
                }
                li += 1;
            }
        }
    }

    /// `out = K_B^{-1} r` on free rows (zero on constrained rows).
    pub fn apply(&self, r: &[f64], out: &mut [f64]) {
        let n_total: usize = self.nodes_per_axis.iter().product();
        let c = self.comps;
        let mut buf = vec![Complex64::new(0.0, 0.0); n_total];
        let mut scratch = Vec::new();
        for (ci, factor) in self.factors.iter().enumerate() {
            for (node, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(r[node * c + ci], 0.0);
            }
            match factor {
                Factor::Torus { inv_symbol } => {
                    for axis in 0..self.dim {
                        self.fft_axis(&mut buf, axis, false, &mut scratch);
                    }
                    for (b, s) in buf.iter_mut().zip(inv_symbol) {
                        *b *= s;
                    }
                    for axis in 0..self.dim {
                        self.fft_axis(&mut buf, axis, true, &mut scratch);
                    }
                    let scale = 1.0 / n_total as f64;
                    for (node, b) in buf.iter().enumerate() {
                        out[node * c + ci] = b.re * scale;
                    }
                }
                Factor::Strip { sub, cprime, inv_den } => {
                    let n_lat: usize = self.nodes_per_axis[..self.dim - 1].iter().product();
                    let n_free = self.k_max;
                    for axis in 0..self.dim - 1 {
                        self.fft_axis(&mut buf, axis, false, &mut scratch);
                    }
                    let mut col = vec![Complex64::new(0.0, 0.0); n_free];
                    for m in 0..n_lat {
                        let a = sub[m];
                        let cp = &cprime[m * n_free..(m + 1) * n_free];
                        let inv = &inv_den[m * n_free..(m + 1) * n_free];
                        // forward sweep over rows k = 1..=n_free
                        let mut prev = Complex64::new(0.0, 0.0);
                        for k in 0..n_free {
                            let rk = buf[m + n_lat * (k + 1)];
                            let v = if k == 0 { rk * inv[k] } else { (rk - a * prev) * inv[k] };
                            col[k] = v;
                            prev = v;
                        }
                        for k in (0..n_free.saturating_sub(1)).rev() {
                            let next = col[k + 1];
                            col[k] -= cp[k] * next;
                        }
                        buf[m] = Complex64::new(0.0, 0.0);
                        for k in 0..n_free {
                            buf[m + n_lat * (k + 1)] = col[k];
                        }
                        for k in n_free + 1..self.nodes_per_axis[self.dim - 1] {
                            buf[m + n_lat * k] = Complex64::new(0.0, 0.0);
                        }
                    }
                    for axis in 0..self.dim - 1 {
                        self.fft_axis(&mut buf, axis, true, &mut scratch);
                    }
                    let scale = 1.0 / n_lat as f64;
                    for (node, b) in buf.iter().enumerate() {
                        out[node * c + ci] = b.re * scale;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_rational_direction;

    fn assemble_constant(grid: &StructuredGrid, b: &[f64]) -> StencilMatrix {
        let mut m = StencilMatrix::new(grid, 1);
        let ke = grid.element_matrix(b);
        let nc = grid.corners();
        let mut nodes = vec![0; nc];
        let d = grid.dim;
        for cell in 0..grid.n_cells() {
            grid.cell_nodes(cell, &mut nodes);
            for a in 0..nc {
                for c in 0..nc {
                    let off: Vec<i32> = (0..d).map(|k| (c >> k & 1) as i32 - (a >> k & 1) as i32).collect();
                    m.add(nodes[a], &off, 0, 0, ke[a * nc + c]);
                }
            }
        }
        m
    }

    #[test]
    fn fast_solver_inverts_sheared_strip_operator() {
        let xi = make_rational_direction(&[1, 1, 2]).unwrap();
        let grid = StructuredGrid::strip(&xi, 0.0, 1.0, &[5, 6], 7, 2.0).unwrap();
        let b = vec![1.0, 0.2, 0.1, 0.0, 0.9, -0.1, 0.1, 0.0, 1.2];
        let k = assemble_constant(&grid, &b);
        let fs = FastSolver::new(&grid, &[b.clone()], FastBoundary::Strip { top_dirichlet: false }).unwrap();
        let n = grid.n_nodes();
        let sl = grid.slice_len();
        let x: Vec<f64> = (0..n).map(|i| if i < sl { 0.0 } else { ((i * 37 % 11) as f64).sin() }).collect();
        let mut kx = vec![0.0; n];
        k.apply(&x, &mut kx);
        kx[..sl].iter_mut().for_each(|v| *v = 0.0);
        let mut back = vec![0.0; n];
        fs.apply(&kx, &mut back);
        for i in 0..n {
            assert!((back[i] - x[i]).abs() < 1e-9, "node {i}: {} vs {}", back[i], x[i]);
        }
    }

    #[test]
    fn fast_solver_inverts_torus_operator_on_zero_mean() {
        let grid = StructuredGrid::torus(2, 6, 1.0).unwrap();
        let b = vec![1.0, 0.3, 0.3, 0.8];
        let k = assemble_constant(&grid, &b);
        let fs = FastSolver::new(&grid, &[b], FastBoundary::Torus).unwrap();
        let n = grid.n_nodes();
        let mut x: Vec<f64> = (0..n).map(|i| ((i * 13 % 7) as f64).cos()).collect();
        let mean = x.iter().sum::<f64>() / n as f64;
        x.iter_mut().for_each(|v| *v -= mean);
        let mut kx = vec![0.0; n];
        k.apply(&x, &mut kx);
        let mut back = vec![0.0; n];
        fs.apply(&kx, &mut back);
        for i in 0..n {
            assert!((back[i] - x[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn bicgstab_solves_with_fast_preconditioner() {
        let xi = make_rational_direction(&[0, 1]).unwrap();
        let grid = StructuredGrid::strip(&xi, 0.0, 1.0, &[8], 16, 2.0).unwrap();
        let b = vec![1.0, 0.0, 0.0, 1.0];
        let k = assemble_constant(&grid, &[1.5, 0.2, 0.0, 0.7]);
        let fs = FastSolver::new(&grid, &[b], FastBoundary::Strip { top_dirichlet: true }).unwrap();
        let n = grid.n_nodes();
        let sl = grid.slice_len();
        let free = |i: usize| i >= sl && i < n - sl;
        let apply = |x: &[f64], y: &mut [f64]| {
            k.apply(x, y);
            for (i, v) in y.iter_mut().enumerate() {
                if !free(i) {
                    *v = 0.0;
                }
            }
        };
        let pre = |x: &[f64], y: &mut [f64]| fs.apply(x, y);
        let rhs: Vec<f64> = (0..n).map(|i| if free(i) { 1.0 } else { 0.0 }).collect();
        let mut x = vec![0.0; n];
        let out = bicgstab(&apply, &pre, &rhs, &mut x, 1e-10, None, 200).unwrap();
        assert!(out.relative_residual <= 1e-9);
    }
}
