//! Rational directions, boundary period lattices and Diophantine approximation.
//!
//! All lattice operations run in exact integer arithmetic. A rational
//! direction `ξ ∈ Z^d` (d = 2 or 3) carries a basis of the rank `d-1` lattice
//! `Z^d ∩ ξ^⊥`; those vectors are the periods of any `Z^d`-periodic function
//! restricted to a hyperplane normal to `ξ`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn idot(a: &[i64], b: &[i64]) -> i128 {
    a.iter().zip(b).map(|(&x, &y)| x as i128 * y as i128).sum()
}

fn inorm(a: &[i64]) -> f64 {
    (idot(a, a) as f64).sqrt()
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Nearest integer to `num / den` for `den > 0`, ties away from zero.
fn round_div(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    if num >= 0 {
        (2 * num + den) / (2 * den)
    } else {
        -((-2 * num + den) / (2 * den))
    }
}

pub(crate) fn cross_i(a: &[i64], b: &[i64]) -> [i64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// An irreducible lattice vector together with its boundary period lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalDirection {
    pub xi: Vec<i64>,
    pub xi_hat: Vec<f64>,
    pub norm: f64,
    /// Basis of `Z^d ∩ ξ^⊥`, oriented so that `(ℓ_1, .., ℓ_{d-1}, ξ)` is
    /// positively oriented in d = 3.
    pub periods: Vec<Vec<i64>>,
    pub period_bound: f64,
}

impl RationalDirection {
    pub fn new(v: &[i64]) -> Result<Self> {
        make_rational_direction(v)
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    /// Period lengths `|ℓ_j|`.
    pub fn period_lengths(&self) -> Vec<f64> {
        self.periods.iter().map(|l| inorm(l)).collect()
    }

    /// Unit vector along the first period, used as the default transverse
    /// direction. Its first nonzero component is positive.
    pub fn default_transverse(&self) -> Vec<f64> {
        let l = &self.periods[0];
        let sign = l.iter().find(|&&c| c != 0).map_or(1.0, |&c| c.signum() as f64);
        let n = inorm(l);
        l.iter().map(|&c| sign * c as f64 / n).collect()
    }
}

impl fmt::Display for RationalDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.xi.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Reduces `v` by the gcd of its entries and computes a reduced period basis.
pub fn make_rational_direction(v: &[i64]) -> Result<RationalDirection> {
    let d = v.len();
    if !(d == 2 || d == 3) {
        return Err(Error::invalid(format!("direction must have 2 or 3 components, got {d}")));
    }
    if v.iter().all(|&c| c == 0) {
        return Err(Error::invalid("zero vector is not a direction"));
    }
    if v.iter().any(|c| c.unsigned_abs() > 1 << 30) {
        return Err(Error::invalid("direction components exceed 2^30"));
    }
    let g = v.iter().fold(0, |acc, &c| gcd(acc, c));
    let xi: Vec<i64> = v.iter().map(|&c| c / g).collect();
    let norm = inorm(&xi);
    let xi_hat = xi.iter().map(|&c| c as f64 / norm).collect();

    let periods = if d == 2 {
        vec![vec![-xi[1], xi[0]]]
    } else {
        let (mut b1, mut b2) = kernel_basis_3d(&xi);
        gauss_reduce(&mut b1, &mut b2);
        let c = cross_i(&b1, &b2);
        if idot(&c, &xi) < 0 {
            b2.iter_mut().for_each(|x| *x = -*x);
        }
        vec![b1, b2]
    };
    let period_bound = periods.iter().map(|l| inorm(l)).fold(0.0, f64::max);
    Ok(RationalDirection {
        xi,
        xi_hat,
        norm,
        periods,
        period_bound,
    })
}

/// Basis of `{z ∈ Z^3 : z·ξ = 0}` from unimodular column operations that
/// reduce the row `ξ` to `(±1, 0, 0)`.
fn kernel_basis_3d(xi: &[i64]) -> (Vec<i64>, Vec<i64>) {
    let mut row = [xi[0], xi[1], xi[2]];
    // columns of the unimodular transform
    let mut cols = [[1i64, 0, 0], [0, 1, 0], [0, 0, 1]];
    loop {
        let nonzero: Vec<usize> = (0..3).filter(|&j| row[j] != 0).collect();
        if nonzero.len() <= 1 {
            break;
        }
        let m = *nonzero.iter().min_by_key(|&&j| row[j].abs()).unwrap();
        for &j in &nonzero {
            if j == m {
                continue;
            }
            let q = row[j] / row[m];
            row[j] -= q * row[m];
            for i in 0..3 {
                cols[j][i] -= q * cols[m][i];
            }
        }
    }
    let pivot = (0..3).find(|&j| row[j] != 0).unwrap();
    let others: Vec<usize> = (0..3).filter(|&j| j != pivot).collect();
    (cols[others[0]].to_vec(), cols[others[1]].to_vec())
}

/// Lagrange-Gauss reduction of a rank-2 integer lattice basis.
fn gauss_reduce(b1: &mut Vec<i64>, b2: &mut Vec<i64>) {
    if idot(b1, b1) > idot(b2, b2) {
        std::mem::swap(b1, b2);
    }
    loop {
        let mu = round_div(idot(b1, b2), idot(b1, b1)) as i64;
        for (x, y) in b2.iter_mut().zip(b1.iter()) {
            *x -= mu * y;
        }
        if idot(b2, b2) >= idot(b1, b1) {
            break;
        }
        std::mem::swap(b1, b2);
    }
}

/// A unit vector written relative to a rational direction as
/// `n = cos(ε) ξ̂ - sin(ε) η` with `η ⊥ ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalApproach {
    pub n: Vec<f64>,
    pub xi: RationalDirection,
    pub epsilon: f64,
    pub eta: Vec<f64>,
}

impl DirectionalApproach {
    pub fn reconstruct(&self) -> Vec<f64> {
        let (s, c) = self.epsilon.sin_cos();
        self.xi
            .xi_hat
            .iter()
            .zip(&self.eta)
            .map(|(x, e)| c * x - s * e)
            .collect()
    }
}

const ALIGNED_TOL: f64 = 1e-14;

pub fn decompose_direction(n: &[f64], xi: &RationalDirection) -> Result<DirectionalApproach> {
    if n.len() != xi.dim() {
        return Err(Error::invalid("direction dimension mismatch"));
    }
    if (norm(n) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("n is not a unit vector (|n| = {})", norm(n))));
    }
    let c = dot(n, &xi.xi_hat);
    let perp: Vec<f64> = n.iter().zip(&xi.xi_hat).map(|(a, b)| a - c * b).collect();
    let s = norm(&perp);
    let (epsilon, eta) = if s < ALIGNED_TOL {
        let eps = if c > 0.0 { 0.0 } else { std::f64::consts::PI };
        (eps, xi.default_transverse())
    } else {
        (s.atan2(c), perp.iter().map(|p| -p / s).collect())
    };
    Ok(DirectionalApproach {
        n: n.to_vec(),
        xi: xi.clone(),
        epsilon,
        eta,
    })
}

/// Best simultaneous rational approximation `ξ/k` of a unit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiophantineApprox {
    pub n: Vec<f64>,
    pub xi: Vec<i64>,
    pub k: i64,
    pub q: i64,
    pub error: f64,
    /// Empirical constant `error · k · Q^{1/(d-1)}`.
    pub constant: f64,
}

pub(crate) fn approx_error(n: &[f64], xi: &[i64], k: i64) -> f64 {
    n.iter()
        .zip(xi)
        .map(|(a, &b)| {
            let e = a - b as f64 / k as f64;
            e * e
        })
        .sum::<f64>()
        .sqrt()
}

/// Minimizes `|n - ξ/k|` over `1 ≤ k ≤ Q`.
///
/// For fixed `k` the optimal numerator is the componentwise rounding of
/// `k n`, so the search costs `O(Q d)`. Ties go to the smaller denominator.
pub fn dirichlet_approximate(n: &[f64], q: i64) -> Result<DiophantineApprox> {
    if q < 1 {
        return Err(Error::invalid("approximation budget Q must be at least 1"));
    }
    if !(n.len() == 2 || n.len() == 3) {
        return Err(Error::invalid("direction must have 2 or 3 components"));
    }
    let mut best: Option<(Vec<i64>, i64, f64)> = None;
    for k in 1..=q {
        let xi: Vec<i64> = n.iter().map(|&c| (c * k as f64).round() as i64).collect();
        if xi.iter().all(|&c| c == 0) {
            continue;
        }
        let err = approx_error(n, &xi, k);
        if best.as_ref().map_or(true, |b| err < b.2) {
            best = Some((xi, k, err));
        }
    }
    let (xi, k, error) = best.ok_or_else(|| Error::invalid("n has no lattice approximant"))?;
    let d = n.len() as f64;
    Ok(DiophantineApprox {
        n: n.to_vec(),
        constant: error * k as f64 * (q as f64).powf(1.0 / (d - 1.0)),
        xi,
        k,
        q,
        error,
    })
}

/// A direction literal as written in configuration files:
/// `"rational: [1,2,0]"` or `"unit: [0.6,0.8]"`.
#[derive(Debug, Clone, PartialEq)]
pub enum DirectionSpec {
    Rational(Vec<i64>),
    Unit(Vec<f64>),
}

impl DirectionSpec {
    /// The unit vector this literal denotes.
    pub fn unit_vector(&self) -> Result<Vec<f64>> {
        match self {
            DirectionSpec::Rational(v) => Ok(make_rational_direction(v)?.xi_hat),
            DirectionSpec::Unit(v) => {
                let n = norm(v);
                if (n - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!("unit direction has norm {n}")));
                }
                Ok(v.clone())
            }
        }
    }
}

impl FromStr for DirectionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("direction `{s}` lacks a `kind:` prefix")))?;
        let body = rest.trim();
        let body = body
            .strip_prefix('[')
            .and_then(|b| b.strip_suffix(']'))
            .ok_or_else(|| Error::Config(format!("direction `{s}` must list components in brackets")))?;
        let parts: Vec<&str> = body.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
        match kind.trim() {
            "rational" => parts
                .iter()
                .map(|p| p.parse::<i64>().map_err(|e| Error::Config(format!("`{p}`: {e}"))))
                .collect::<Result<Vec<_>>>()
                .map(DirectionSpec::Rational),
            "unit" => parts
                .iter()
                .map(|p| p.parse::<f64>().map_err(|e| Error::Config(format!("`{p}`: {e}"))))
                .collect::<Result<Vec<_>>>()
                .map(DirectionSpec::Unit),
            other => Err(Error::Config(format!("unknown direction kind `{other}`"))),
        }
    }
}

impl fmt::Display for DirectionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DirectionSpec::Rational(v) => {
                let p: Vec<String> = v.iter().map(|c| c.to_string()).collect();
                write!(f, "rational: [{}]", p.join(","))
            }
            DirectionSpec::Unit(v) => {
                let p: Vec<String> = v.iter().map(|c| format!("{c:?}")).collect();
                write!(f, "unit: [{}]", p.join(","))
            }
        }
    }
}

impl Serialize for DirectionSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for DirectionSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Index of the sublattice spanned by `periods` inside `Z^3 ∩ ξ^⊥`, by
    /// counting short kernel vectors that are not integer combinations.
    fn spans_kernel_exhaustively(xi: &[i64], b1: &[i64], b2: &[i64], box_size: i64) -> bool {
        // Solve z = a b1 + b b2 via the 2x2 Gram system; integrality of (a,b) is required.
        let g11 = idot(b1, b1);
        let g12 = idot(b1, b2);
        let g22 = idot(b2, b2);
        let det = g11 * g22 - g12 * g12;
        for x in -box_size..=box_size {
            for y in -box_size..=box_size {
                for z in -box_size..=box_size {
                    let v = [x, y, z];
                    if idot(&v, xi) != 0 {
                        continue;
                    }
                    let r1 = idot(&v, b1);
                    let r2 = idot(&v, b2);
                    let a = r1 * g22 - r2 * g12;
                    let b = g11 * r2 - g12 * r1;
                    if a % det != 0 || b % det != 0 {
                        return false;
                    }
                }
            }
        }
        true
    }

    #[test]
    fn two_d_reduction_and_rotation() {
        let r = make_rational_direction(&[2, 4]).unwrap();
        assert_eq!(r.xi, vec![1, 2]);
        assert_eq!(r.periods, vec![vec![-2, 1]]);
        assert!((r.period_bound - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn axis_direction_in_3d() {
        let r = make_rational_direction(&[0, 0, 1]).unwrap();
        assert_eq!(r.xi, vec![0, 0, 1]);
        let mut ps: Vec<Vec<i64>> = r.periods.iter().map(|p| p.iter().map(|c| c.abs()).collect()).collect();
        ps.sort();
        assert_eq!(ps, vec![vec![0, 1, 0], vec![1, 0, 0]]);
        assert_eq!(r.period_bound, 1.0);
    }

    #[test]
    fn diagonal_direction_has_index_one_basis() {
        let r = make_rational_direction(&[1, 1, 1]).unwrap();
        assert!((r.period_bound - 2f64.sqrt()).abs() < 1e-15);
        for p in &r.periods {
            assert_eq!(idot(p, &r.xi), 0);
        }
        assert!(spans_kernel_exhaustively(&r.xi, &r.periods[0], &r.periods[1], 4));
    }

    #[test]
    fn kernel_basis_spans_for_assorted_directions() {
        for v in [[1, 2, 3], [2, 3, 5], [0, 3, 4], [4, -1, 7], [1, 0, 0], [6, 10, 15]] {
            let r = make_rational_direction(&v).unwrap();
            let c = cross_i(&r.periods[0], &r.periods[1]);
            assert_eq!(c.to_vec(), r.xi, "covolume equals |ξ| for {v:?}");
            assert!(spans_kernel_exhaustively(&r.xi, &r.periods[0], &r.periods[1], 3));
        }
    }

    #[test]
    fn zero_vector_rejected() {
        assert!(matches!(make_rational_direction(&[0, 0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn aligned_direction_has_zero_angle() {
        let xi = make_rational_direction(&[1, 2]).unwrap();
        let a = decompose_direction(&xi.xi_hat.clone(), &xi).unwrap();
        assert_eq!(a.epsilon, 0.0);
        assert!(dot(&a.eta, &xi.xi_hat).abs() < 1e-15);
        assert!(a.eta[0] > 0.0);
    }

    #[test]
    fn tilted_axis_direction() {
        let xi = make_rational_direction(&[0, 0, 1]).unwrap();
        let n = [-(0.1f64.sin()), 0.0, 0.1f64.cos()];
        let a = decompose_direction(&n, &xi).unwrap();
        assert!((a.epsilon - 0.1).abs() < 1e-15);
        assert!((a.eta[0] - 1.0).abs() < 1e-15 && a.eta[1].abs() < 1e-15 && a.eta[2].abs() < 1e-15);
    }

    #[test]
    fn two_d_trig_identity() {
        let xi = make_rational_direction(&[1, 0]).unwrap();
        let a = decompose_direction(&[0.8, -0.6], &xi).unwrap();
        assert!((a.epsilon - (0.75f64).atan()).abs() < 1e-15);
        assert!(a.eta[0].abs() < 1e-15 && (a.eta[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_unit_rejected() {
        let xi = make_rational_direction(&[1, 0]).unwrap();
        assert!(decompose_direction(&[1.0, 1.0], &xi).is_err());
    }

    #[test]
    fn exact_rational_direction_is_recovered() {
        let a = dirichlet_approximate(&[0.6, 0.8], 10).unwrap();
        assert_eq!((a.xi.clone(), a.k), (vec![3, 4], 5));
        assert!(a.error < 1e-16);
        let b = dirichlet_approximate(&[1.0, 0.0, 0.0], 1).unwrap();
        assert_eq!((b.xi, b.k), (vec![1, 0, 0], 1));
        assert_eq!(b.error, 0.0);
    }

    #[test]
    fn direction_literals_parse() {
        let r: DirectionSpec = "rational: [1, 2, 3]".parse().unwrap();
        assert_eq!(r, DirectionSpec::Rational(vec![1, 2, 3]));
        let u: DirectionSpec = "unit: [0.6,0.8]".parse().unwrap();
        assert_eq!(u, DirectionSpec::Unit(vec![0.6, 0.8]));
        assert_eq!(u.to_string().parse::<DirectionSpec>().unwrap(), u);
        assert!("polar: [1]".parse::<DirectionSpec>().is_err());
        assert!("rational: 1,2".parse::<DirectionSpec>().is_err());
    }
}
