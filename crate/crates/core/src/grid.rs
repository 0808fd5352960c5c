//! Structured parallelepiped grids carrying multilinear (Q1) elements.
//!
//! A grid is the image of a box of unit cells under a constant affine map:
//! node `(i_0, .., i_{d-1})` sits at `origin + Σ_j i_j edges[j]`. Axes are
//! either periodic (nodes wrap around) or bounded. A strip grid has the
//! first `d-1` axes periodic along the period lattice of a rational
//! direction and a bounded last axis along `ξ̂`; a torus grid is periodic in
//! every axis. Node indices run with axis 0 fastest, so each horizontal
//! slice of a strip is a contiguous range.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lattice::RationalDirection;

const GAUSS_LO: f64 = 0.211_324_865_405_187_1; // (1 - 1/√3) / 2
const GAUSS_HI: f64 = 0.788_675_134_594_812_9;

#[derive(Debug, Clone)]
pub struct StructuredGrid {
    pub dim: usize,
    pub cells: Vec<usize>,
    pub periodic: Vec<bool>,
    pub nodes_per_axis: Vec<usize>,
    /// `edges[j]`: physical displacement of one cell step along axis `j`.
    pub edges: Vec<Vec<f64>>,
    pub origin: Vec<f64>,
    strides: Vec<usize>,
    /// Reference Gauss points `[g][axis]` in the unit cell.
    pub gauss_ref: Vec<Vec<f64>>,
    /// Quadrature weight times cell volume.
    pub gauss_weight: Vec<f64>,
    /// Shape function values `[g * corners + a]`.
    pub shape: Vec<f64>,
    /// Physical shape gradients `[(g * corners + a) * dim + k]`.
    pub grad: Vec<f64>,
    pub cell_volume: f64,
}

impl StructuredGrid {
    pub fn new(edges: Vec<Vec<f64>>, origin: Vec<f64>, cells: Vec<usize>, periodic: Vec<bool>) -> Result<Self> {
        let dim = edges.len();
        if !(dim == 2 || dim == 3) || cells.len() != dim || periodic.len() != dim || origin.len() != dim {
            return Err(Error::InvalidMesh("inconsistent grid dimensions".into()));
        }
        if cells.iter().any(|&c| c == 0) {
            return Err(Error::InvalidMesh("every axis needs at least one cell".into()));
        }
        let nodes_per_axis: Vec<usize> = cells
            .iter()
            .zip(&periodic)
            .map(|(&c, &p)| if p { c } else { c + 1 })
            .collect();
        let mut strides = vec![1; dim];
        for j in 1..dim {
            strides[j] = strides[j - 1] * nodes_per_axis[j - 1];
        }
        let jac = DMatrix::from_fn(dim, dim, |r, c| edges[c][r]);
        let det = jac.determinant();
        if det.abs() < 1e-300 {
            return Err(Error::InvalidMesh("degenerate cell".into()));
        }
        let jinv_t = jac
            .try_inverse()
            .ok_or_else(|| Error::InvalidMesh("singular cell map".into()))?
            .transpose();
        let corners = 1usize << dim;
        let mut gauss_ref = Vec::with_capacity(corners);
        let mut shape = Vec::with_capacity(corners * corners);
        let mut grad = Vec::with_capacity(corners * corners * dim);
        for g in 0..corners {
            let xi: Vec<f64> = (0..dim).map(|k| if g >> k & 1 == 1 { GAUSS_HI } else { GAUSS_LO }).collect();
            for a in 0..corners {
                let f = |k: usize, x: f64| if a >> k & 1 == 1 { x } else { 1.0 - x };
                shape.push((0..dim).map(|k| f(k, xi[k])).product());
                let gref: Vec<f64> = (0..dim)
                    .map(|k| {
                        let sign = if a >> k & 1 == 1 { 1.0 } else { -1.0 };
                        sign * (0..dim).filter(|&j| j != k).map(|j| f(j, xi[j])).product::<f64>()
                    })
                    .collect();
                for r in 0..dim {
                    grad.push((0..dim).map(|c| jinv_t[(r, c)] * gref[c]).sum());
                }
            }
            gauss_ref.push(xi);
        }
        let vol = det.abs();
        let w = vol / corners as f64;
        Ok(Self {
            dim,
            cells,
            periodic,
            nodes_per_axis,
            edges,
            origin,
            strides,
            gauss_ref,
            gauss_weight: vec![w; corners],
            shape,
            grad,
            cell_volume: vol,
        })
    }

    /// Strip over the period cell of `xi`: lateral axes along the periods
    /// (scaled by `period`), last axis along `ξ̂` from height `shift` to
    /// `shift + height`.
    pub fn strip(
        xi: &RationalDirection,
        shift: f64,
        period: f64,
        lateral_cells: &[usize],
        vertical_cells: usize,
        height: f64,
    ) -> Result<Self> {
        let d = xi.dim();
        if lateral_cells.len() != d - 1 {
            return Err(Error::InvalidMesh("one cell count per period vector required".into()));
        }
        let mut edges = Vec::with_capacity(d);
        for (l, &n) in xi.periods.iter().zip(lateral_cells) {
            edges.push(l.iter().map(|&c| period * c as f64 / n as f64).collect());
        }
        let hv = height / vertical_cells as f64;
        edges.push(xi.xi_hat.iter().map(|c| c * hv).collect());
        let origin = xi.xi_hat.iter().map(|c| c * shift).collect();
        let mut cells = lateral_cells.to_vec();
        cells.push(vertical_cells);
        let mut periodic = vec![true; d - 1];
        periodic.push(false);
        Self::new(edges, origin, cells, periodic)
    }

    /// `[0, period)^d` with `n` cells per axis, periodic everywhere.
    pub fn torus(dim: usize, n: usize, period: f64) -> Result<Self> {
        let edges = (0..dim)
            .map(|j| (0..dim).map(|k| if j == k { period / n as f64 } else { 0.0 }).collect())
            .collect();
        Self::new(edges, vec![0.0; dim], vec![n; dim], vec![true; dim])
    }

    pub fn corners(&self) -> usize {
        1 << self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes_per_axis.iter().product()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_strip(&self) -> bool {
        !self.periodic[self.dim - 1]
    }

    /// Nodes in one horizontal slice of a strip.
    pub fn slice_len(&self) -> usize {
        self.nodes_per_axis[..self.dim - 1].iter().product()
    }

    pub fn vertical_nodes(&self) -> usize {
        self.nodes_per_axis[self.dim - 1]
    }

    pub fn node_multi(&self, idx: usize) -> [usize; 3] {
        let mut m = [0; 3];
        let mut r = idx;
        for j in 0..self.dim {
            m[j] = r % self.nodes_per_axis[j];
            r /= self.nodes_per_axis[j];
        }
        m
    }

    pub fn node_index(&self, m: &[usize]) -> usize {
        m.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    pub fn node_coord(&self, idx: usize) -> Vec<f64> {
        let m = self.node_multi(idx);
        let mut y = self.origin.clone();
        for j in 0..self.dim {
            for (yk, e) in y.iter_mut().zip(&self.edges[j]) {
                *yk += m[j] as f64 * e;
            }
        }
        y
    }

    /// Physical point at fractional grid coordinates.
    pub fn point_at(&self, frac: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.origin);
        for (j, &t) in frac.iter().enumerate() {
            for (o, e) in out.iter_mut().zip(&self.edges[j]) {
                *o += t * e;
            }
        }
    }

    pub fn cell_multi(&self, c: usize) -> [usize; 3] {
        let mut m = [0; 3];
        let mut r = c;
        for j in 0..self.dim {
            m[j] = r % self.cells[j];
            r /= self.cells[j];
        }
        m
    }

    /// Node indices of the corners of cell `c`, corner `a` having offset
    /// bit `k` along axis `k`.
    pub fn cell_nodes(&self, c: usize, out: &mut [usize]) {
        let m = self.cell_multi(c);
        for (a, o) in out.iter_mut().enumerate().take(self.corners()) {
            let mut idx = 0;
            for j in 0..self.dim {
                let mut v = m[j] + (a >> j & 1);
                if v == self.nodes_per_axis[j] {
                    v = 0;
                }
                idx += v * self.strides[j];
            }
            *o = idx;
        }
    }

    /// Physical coordinates of Gauss point `g` of cell `c`.
    pub fn gauss_point(&self, c: usize, g: usize, out: &mut [f64]) {
        let m = self.cell_multi(c);
        let mut frac = [0.0; 3];
        for j in 0..self.dim {
            frac[j] = m[j] as f64 + self.gauss_ref[g][j];
        }
        self.point_at(&frac[..self.dim], out);
    }

    /// Neighbor of `node` shifted by `offset` (entries in {-1, 0, 1}), or
    /// `None` past a bounded axis.
    pub fn neighbor(&self, node: usize, offset: &[i32]) -> Option<usize> {
        let m = self.node_multi(node);
        let mut idx = 0;
        for j in 0..self.dim {
            let n = self.nodes_per_axis[j] as i64;
            let mut v = m[j] as i64 + offset[j] as i64;
            if self.periodic[j] {
                v = v.rem_euclid(n);
            } else if v < 0 || v >= n {
                return None;
            }
            idx += v as usize * self.strides[j];
        }
        Some(idx)
    }

    /// Vertical spacing of a strip.
    pub fn vertical_step(&self) -> f64 {
        crate::lattice::norm(&self.edges[self.dim - 1])
    }

    /// Element matrix of the constant tensor `b` (`d × d`, row-major) for a
    /// scalar unknown: `K[a][b] = Σ_g w_g ∇φ_a · B ∇φ_b`.
    pub fn element_matrix(&self, b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let nc = self.corners();
        let mut k = vec![0.0; nc * nc];
        for g in 0..nc {
            let w = self.gauss_weight[g];
            for a in 0..nc {
                let ga = &self.grad[(g * nc + a) * d..(g * nc + a + 1) * d];
                for c in 0..nc {
                    let gc = &self.grad[(g * nc + c) * d..(g * nc + c + 1) * d];
                    let mut s = 0.0;
                    for r in 0..d {
                        for q in 0..d {
                            s += ga[r] * b[r * d + q] * gc[q];
                        }
                    }
                    k[a * nc + c] += w * s;
                }
            }
        }
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_rational_direction;

    #[test]
    fn shape_gradients_sum_to_zero_and_reproduce_linears() {
        let xi = make_rational_direction(&[1, 2, 3]).unwrap();
        let g = StructuredGrid::strip(&xi, 0.0, 1.0, &[3, 4], 5, 2.0).unwrap();
        let nc = g.corners();
        // ∇ of the nodal interpolant of a linear function equals its gradient
        let slope = [0.3, -1.1, 0.7];
        let mut nodes = vec![0; nc];
        g.cell_nodes(7, &mut nodes);
        let m = g.cell_multi(7);
        for gp in 0..nc {
            let mut p = [0.0; 3];
            let mut s = [0.0; 3];
            for a in 0..nc {
                let frac: Vec<f64> = (0..3).map(|j| (m[j] + (a >> j & 1)) as f64).collect();
                let mut y = vec![0.0; 3];
                g.point_at(&frac, &mut y);
                let u: f64 = (0..3).map(|k| slope[k] * y[k]).sum();
                for k in 0..3 {
                    p[k] += u * g.grad[(gp * nc + a) * 3 + k];
                    s[k] += g.grad[(gp * nc + a) * 3 + k];
                }
            }
            for k in 0..3 {
                assert!((p[k] - slope[k]).abs() < 1e-12);
                assert!(s[k].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn laplace_element_matrix_rows_sum_to_zero() {
        let g = StructuredGrid::torus(2, 4, 1.0).unwrap();
        let k = g.element_matrix(&[1.0, 0.0, 0.0, 1.0]);
        for a in 0..4 {
            assert!(k[a * 4..a * 4 + 4].iter().sum::<f64>().abs() < 1e-14);
        }
        assert!((k[0] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn periodic_wrap_and_bounded_neighbors() {
        let xi = make_rational_direction(&[0, 1]).unwrap();
        let g = StructuredGrid::strip(&xi, 0.0, 1.0, &[8], 32, 4.0).unwrap();
        assert_eq!(g.n_nodes(), 8 * 33);
        assert_eq!(g.neighbor(0, &[-1, 0]), Some(7));
        assert_eq!(g.neighbor(0, &[0, -1]), None);
    }
}
