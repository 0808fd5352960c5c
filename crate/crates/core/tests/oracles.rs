//! Comparisons with values known in closed form.

mod common;

use std::sync::Arc;

use common::*;
use homogbc::boundary_layer::{boundary_layer_limit, HeightLadder};
use homogbc::fields::PeriodicFieldExpr;
use homogbc::homogenization::homogenize_linear;
use homogbc::lattice::make_rational_direction;
use homogbc::strip::StripProblem;

/// Across a laminate `a(y₁)` the flux `∫ a ∂₂u dy₁` vanishes at every
/// height, so `∫ a u dy₁` is conserved and the far-field constant is
/// `∫ a φ / ∫ a`, which is `1/4` for `φ = cos 2πy₁`.
#[test]
fn laminate_limit_conserves_the_weighted_mean() {
    let mut errors = Vec::new();
    for h in [1.0 / 16.0, 1.0 / 32.0] {
        let p = StripProblem::new(make_rational_direction(&[0, 1]).unwrap(), laminate_op(2), cosine_data(2, 0)).with_h(h);
        let r = boundary_layer_limit(&p, 1e-9, &HeightLadder::default()).unwrap();
        errors.push((r.scalar() - 0.25).abs());
    }
    assert!(errors[1] < errors[0] / 3.0, "{errors:?}");
    assert!(errors[1] < 1e-3, "{errors:?}");
}

#[test]
fn three_dimensional_laminate_tensor() {
    let h = homogenize_linear(&laminate(3), 1.0 / 24.0).unwrap();
    assert!((h.entry(0, 0) - LAMINATE_HARMONIC).abs() < 2e-3);
    for i in 1..3 {
        assert!((h.entry(i, i) - LAMINATE_ARITHMETIC).abs() < 1e-12);
    }
    assert!(h.asymmetry() < 1e-12);
}

#[test]
fn harmonic_wave_in_three_dimensions_vanishes_at_rate_two_pi() {
    let p = StripProblem::new(make_rational_direction(&[0, 0, 1]).unwrap(), laplace(3), cosine_data(3, 0)).with_h(1.0 / 16.0);
    let r = boundary_layer_limit(&p, 1e-8, &HeightLadder::up_to(8.0)).unwrap();
    assert!(r.scalar().abs() < 1e-8);
    let rate = r.decay_rate.unwrap();
    assert!((rate / std::f64::consts::TAU - 1.0).abs() < 0.05, "{rate}");
}

#[test]
fn nonlinear_laws_keep_constant_data() {
    let data = Arc::new(PeriodicFieldExpr::scalar(2, -0.4));
    let p = StripProblem::new(make_rational_direction(&[1, 2]).unwrap(), planar_kinked(), data).with_target_h(1.0 / 8.0);
    let r = boundary_layer_limit(&p, 1e-9, &HeightLadder::default()).unwrap();
    assert!((r.scalar() + 0.4).abs() < 1e-9);
    let data3 = Arc::new(PeriodicFieldExpr::scalar(3, 0.6));
    let p3 = StripProblem::new(make_rational_direction(&[0, 0, 1]).unwrap(), nonvariational(), data3).with_h(1.0 / 8.0);
    let r3 = boundary_layer_limit(&p3, 1e-9, &HeightLadder::default()).unwrap();
    assert!((r3.scalar() - 0.6).abs() < 1e-9);
}

/// The closed form `(1/3 + cos 2πx) e^{-2πz}` solves the non-variational
/// law, so the computed solution approaches it as the mesh is refined.
#[test]
fn nonvariational_solution_approaches_the_closed_form() {
    let mut errors = Vec::new();
    for h in [1.0 / 8.0, 1.0 / 16.0] {
        let p = StripProblem::new(make_rational_direction(&[0, 0, 1]).unwrap(), nonvariational(), shifted_cosine(3, 0))
            .with_h(h)
            .with_height(2.0);
        let s = homogbc::strip::solve(&p).unwrap();
        let err = (0..s.grid.n_nodes())
            .map(|n| (s.values[n] - closed_form(&s.grid.node_coord(n))).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    assert!(errors[1] < errors[0] / 3.0, "{errors:?}");
    assert!(errors[1] < 2e-2, "{errors:?}");
}

/// On the strip normal to `(1, 1)` the data `cos 2πy₁` has tangential
/// wave vector `k⊥ = (1/2, -1/2)`, and with a zero-flux top the solution is
/// `cos(2π k⊥·y) cosh(κ(R - z)) / cosh(κR)` with `κ = 2π|k⊥|`.
#[test]
fn tilted_strip_converges_at_second_order() {
    use std::f64::consts::{PI, SQRT_2, TAU};
    let xi = make_rational_direction(&[1, 1]).unwrap();
    let r = 4.0 * SQRT_2;
    let kappa = TAU / SQRT_2;
    let mut hs = Vec::new();
    let mut errors = Vec::new();
    for cells in [16.0, 32.0, 64.0] {
        let h = SQRT_2 / cells;
        let p = StripProblem::new(xi.clone(), laplace(2), cosine_data(2, 0)).with_h(h).with_height(r);
        let s = homogbc::strip::solve(&p).unwrap();
        let err = (0..s.grid.n_nodes())
            .map(|n| {
                let y = s.grid.node_coord(n);
                let z = (y[0] + y[1]) / SQRT_2;
                let exact = (PI * (y[0] - y[1])).cos() * (kappa * (r - z)).cosh() / (kappa * r).cosh();
                (s.values[n] - exact).abs()
            })
            .fold(0.0, f64::max);
        hs.push(h);
        errors.push(err);
    }
    let order = fitted_order(&hs, &errors);
    assert!(order >= 1.9, "errors {errors:?}, order {order}");
}

#[test]
fn laminate_epsilon_study_has_first_order_rate() {
    let study = homogbc::homogenization::epsilon_refinement_study(
        &laminate_op(2),
        cosine_data(2, 0),
        &make_rational_direction(&[0, 1]).unwrap(),
        &[0.125, 0.0625, 0.03125],
        &homogbc::homogenization::EpsilonStudyOptions {
            mesh_check: true,
            ..Default::default()
        },
    )
    .unwrap();
    let order = study.fitted_order.unwrap();
    assert!(order >= 0.8, "{order}");
    let smallest = study.rows.last().unwrap().sup_error;
    assert!(study.rows.windows(2).all(|w| w[1].sup_error < w[0].sup_error));
    assert!(study.mesh_check.unwrap() < smallest / 4.0, "{:?} vs {smallest}", study.mesh_check);
}
