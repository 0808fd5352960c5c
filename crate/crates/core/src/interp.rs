//! Periodic interpolation of uniformly sampled vector data.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpKind {
    Linear,
    Cubic,
}

/// Interpolant of samples `values[j]` at `x_j = j · period / K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicInterpolant {
    pub period: f64,
    pub kind: InterpKind,
    /// `values[j][c]`: sample `j`, component `c`.
    pub values: Vec<Vec<f64>>,
    /// Spline second derivatives, same layout as `values`.
    second: Vec<Vec<f64>>,
}

impl PeriodicInterpolant {
    pub fn new(period: f64, values: Vec<Vec<f64>>, kind: InterpKind) -> Self {
        assert!(!values.is_empty(), "interpolant needs samples");
        let k = values.len();
        let comps = values[0].len();
        let step = period / k as f64;
        let mut second = vec![vec![0.0; comps]; k];
        if kind == InterpKind::Cubic && k >= 3 {
            // Circulant system (M_{j-1} + 4 M_j + M_{j+1}) = 6 Δ²y_j / step²,
            // diagonalized by the discrete Fourier transform.
            for c in 0..comps {
                let rhs: Vec<f64> = (0..k)
                    .map(|j| {
                        let ym = values[(j + k - 1) % k][c];
                        let yp = values[(j + 1) % k][c];
                        6.0 * (yp - 2.0 * values[j][c] + ym) / (step * step)
                    })
                    .collect();
                for (j, m) in second.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for mode in 0..k {
                        let eig = 4.0 + 2.0 * (TAU * mode as f64 / k as f64).cos();
                        let mut re = 0.0;
                        for (l, r) in rhs.iter().enumerate() {
                            re += r * (TAU * (mode * ((j + k - l) % k)) as f64 / k as f64).cos();
                        }
                        acc += re / eig;
                    }
                    m[c] = acc / k as f64;
                }
            }
        }
        Self {
            period,
            kind,
            values,
            second,
        }
    }

    pub fn components(&self) -> usize {
        self.values[0].len()
    }

    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        let k = self.values.len();
        let step = self.period / k as f64;
        let t = x / self.period;
        let t = (t - t.floor()) * k as f64;
        let j = (t.floor() as usize).min(k - 1);
        let u = t - j as f64;
        let j1 = (j + 1) % k;
        for (c, o) in out.iter_mut().enumerate() {
            let (y0, y1) = (self.values[j][c], self.values[j1][c]);
            let lin = (1.0 - u) * y0 + u * y1;
            *o = match self.kind {
                InterpKind::Linear => lin,
                InterpKind::Cubic => {
                    let (m0, m1) = (self.second[j][c], self.second[j1][c]);
                    lin + step * step / 6.0 * (((1.0 - u).powi(3) - (1.0 - u)) * m0 + (u.powi(3) - u) * m1)
                }
            };
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.components()];
        self.eval_into(x, &mut out);
        out
    }

    /// Period average; for a periodic cubic spline on uniform knots this
    /// equals the sample mean exactly.
    pub fn mean(&self) -> Vec<f64> {
        let k = self.values.len() as f64;
        (0..self.components())
            .map(|c| self.values.iter().map(|v| v[c]).sum::<f64>() / k)
            .collect()
    }

    /// Largest gap between this interpolant and piecewise-linear
    /// interpolation at cell midpoints; a conservative error indicator.
    pub fn midpoint_discrepancy(&self) -> f64 {
        let k = self.values.len();
        let step = self.period / k as f64;
        let mut worst = 0.0f64;
        let mut buf = vec![0.0; self.components()];
        for j in 0..k {
            self.eval_into((j as f64 + 0.5) * step, &mut buf);
            for (c, b) in buf.iter().enumerate() {
                let lin = 0.5 * (self.values[j][c] + self.values[(j + 1) % k][c]);
                worst = worst.max((b - lin).abs());
            }
        }
        worst
    }
}
