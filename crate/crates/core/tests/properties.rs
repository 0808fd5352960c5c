//! Property-based checks of lattice geometry, operators and the strip
//! solvers.

mod common;

use std::f64::consts::TAU;
use std::sync::Arc;

use common::*;
use homogbc::fields::{PeriodicFieldExpr, Phase};
use homogbc::lattice::{decompose_direction, dirichlet_approximate, make_rational_direction};
use homogbc::operators::{validate_operator, MonotoneMapSpec};
use homogbc::strip::{solve, StripDiscretization, StripProblem};
use proptest::prelude::*;

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn lattice_vector(d: usize) -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(-7i64..=7, d).prop_filter("nonzero", |v| v.iter().any(|&c| c != 0))
}

fn unit_vector(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, d)
        .prop_filter("not tiny", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-2)
        .prop_map(|v| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn periods_are_primitive_and_orthogonal(v in prop_oneof![lattice_vector(2), lattice_vector(3)]) {
        let r = make_rational_direction(&v).unwrap();
        let g = v.iter().fold(0, |a, &b| gcd(a, b));
        prop_assert!(r.xi.iter().zip(&v).all(|(a, b)| a * g == *b));
        for l in &r.periods {
            prop_assert_eq!(l.iter().zip(&r.xi).map(|(a, b)| a * b).sum::<i64>(), 0);
        }
        if v.len() == 2 {
            let l = &r.periods[0];
            prop_assert_eq!((l[0] * r.xi[1] - l[1] * r.xi[0]).abs(), r.xi.iter().map(|c| c * c).sum::<i64>());
        } else {
            let (a, b) = (&r.periods[0], &r.periods[1]);
            let c = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
            prop_assert_eq!(c.to_vec(), r.xi.clone());
        }
        let bound = r.period_lengths().into_iter().fold(0.0, f64::max);
        prop_assert!((bound - r.period_bound).abs() < 1e-12);
    }

    #[test]
    fn decomposition_reconstructs_the_direction(v in lattice_vector(3), n in unit_vector(3)) {
        let xi = make_rational_direction(&v).unwrap();
        let a = decompose_direction(&n, &xi).unwrap();
        let back = a.reconstruct();
        prop_assert!(back.iter().zip(&n).all(|(x, y)| (x - y).abs() < 1e-12));
        let eta_dot: f64 = a.eta.iter().zip(&xi.xi_hat).map(|(x, y)| x * y).sum();
        prop_assert!(eta_dot.abs() < 1e-12);
        prop_assert!((0.0..=std::f64::consts::PI).contains(&a.epsilon));
    }

    #[test]
    fn dirichlet_error_is_below_the_pigeonhole_bound(n in prop_oneof![unit_vector(2), unit_vector(3)], q in 1i64..40) {
        let a = dirichlet_approximate(&n, q).unwrap();
        let d = n.len() as f64;
        prop_assert!(a.k >= 1 && a.k <= q);
        let grid = ((q as f64).powf(1.0 / d) + 1e-9).floor();
        prop_assert!(a.error <= d.sqrt() / grid + 1e-12);
    }

    #[test]
    fn reduced_map_monotonicity_constant(seed in 0u64..1000) {
        let r = validate_operator(&MonotoneMapSpec::reduced2d(), 4000, 1.0, seed).unwrap();
        prop_assert!((0.74..=0.76).contains(&r.lambda_hat), "λ̂ = {}", r.lambda_hat);
        prop_assert!(r.lipschitz_hat <= 1.5 + 1e-12);
    }
}

fn wave(c1: f64, c2: f64) -> PeriodicFieldExpr {
    PeriodicFieldExpr::scalar(2, 0.2)
        .with_term(&[c1], &[1, 0], Phase::Cos)
        .with_term(&[c2], &[2, 0], Phase::Sin)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn strip_solutions_obey_the_maximum_principle(c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, kinked in any::<bool>()) {
        let data = wave(c1, c2);
        let op = if kinked { planar_kinked() } else { laminate_op(2) };
        let p = StripProblem::new(make_rational_direction(&[0, 1]).unwrap(), op, Arc::new(data.clone()))
            .with_h(1.0 / 16.0)
            .with_height(4.0);
        let s = solve(&p).unwrap();
        let (lo, hi) = data.sampled_range(64);
        let scale = hi[0] - lo[0] + 1.0;
        for &v in &s.values {
            prop_assert!(v >= lo[0] - 1e-9 * scale && v <= hi[0] + 1e-9 * scale, "{v} outside [{}, {}]", lo[0], hi[0]);
        }
    }

    #[test]
    fn descent_never_increases_the_energy(c1 in -1.0f64..1.0, c2 in -1.0f64..1.0) {
        let p = StripProblem::new(make_rational_direction(&[1, 1]).unwrap(), planar_kinked(), Arc::new(wave(c1, c2)))
            .with_target_h(1.0 / 12.0)
            .with_height(4.0 * std::f64::consts::SQRT_2);
        let s = solve(&p).unwrap();
        prop_assert!(!s.energy_trace.is_empty());
        for w in s.energy_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
        let disc = StripDiscretization::new(&p).unwrap();
        let e0 = disc.energy(&s.values).unwrap();
        let mut bumped = s.values.clone();
        let bump = disc.interpolate(|y| vec![(TAU * y[0]).sin() * y[1] * (4.0 * std::f64::consts::SQRT_2 - y[1]).max(0.0)]);
        for (node, b) in bump.iter().enumerate() {
            if disc.is_free(node) {
                bumped[node] += 1e-3 * b;
            }
        }
        prop_assert!(disc.energy(&bumped).unwrap() >= e0 - 1e-12 * e0.abs());
    }

    #[test]
    fn residual_is_the_energy_gradient(a in -1.0f64..1.0, b in -1.0f64..1.0, power in any::<bool>()) {
        let op = if power {
            homogbc::strip::StripOperator::Nonlinear(MonotoneMapSpec::new(
                homogbc::operators::FluxLaw::PowerGrowth { dim: 2 },
                1.0,
            ))
        } else {
            planar_kinked()
        };
        let p = StripProblem::new(make_rational_direction(&[1, 2]).unwrap(), op, shifted_cosine(2, 0))
            .with_target_h(1.0 / 8.0)
            .with_height(4.0 * 5f64.sqrt());
        let disc = StripDiscretization::new(&p).unwrap();
        let u = disc.interpolate(|y| vec![a * (TAU * y[0]).sin() + b * (TAU * y[1]).cos() * y[1]]);
        let v = disc.interpolate(|y| vec![(TAU * (y[0] - y[1])).cos() + 0.1 * y[0]]);
        let mut g = vec![0.0; u.len()];
        disc.residual(&u, &mut g);
        let analytic: f64 = g.iter().zip(&v).map(|(x, y)| x * y).sum();
        let at = |t: f64| disc.energy(&u.iter().zip(&v).map(|(x, y)| x + t * y).collect::<Vec<_>>()).unwrap();
        let step = 1e-5;
        let numeric = (at(step) - at(-step)) / (2.0 * step);
        let scale = analytic.abs().max(v.iter().map(|x| x.abs()).sum::<f64>() * 1e-3);
        prop_assert!((analytic - numeric).abs() <= 1e-6 * scale, "analytic {analytic}, numeric {numeric}");
    }
}
