//! Discrete residual of the closed-form solution `(1/3 + cos 2πx) e^{-2πz}`
//! of the three-dimensional non-variational law, injected into the nodal
//! space on successively refined strips, with the observed order.
//!
//! ```text
//! cargo run --release --example injected_residual
//! ```

use std::f64::consts::TAU;
use std::sync::Arc;
use std::time::Instant;

use homogbc::fields::{PeriodicFieldExpr, Phase};
use homogbc::lattice::make_rational_direction;
use homogbc::operators::MonotoneMapSpec;
use homogbc::strip::{StripDiscretization, StripOperator, StripProblem};

fn main() -> homogbc::error::Result<()> {
    let data = PeriodicFieldExpr::scalar(3, 1.0 / 3.0).with_term(&[1.0], &[1, 0, 0], Phase::Cos);
    let mut previous: Option<(f64, f64)> = None;
    println!("{:>8} {:>14} {:>14} {:>10} {:>10}", "h", "interior sup", "interior l2", "sup order", "l2 order");
    for n in [16u32, 32, 64] {
        let start = Instant::now();
        let problem = StripProblem::new(
            make_rational_direction(&[0, 0, 1])?,
            StripOperator::Nonlinear(MonotoneMapSpec::non_variational_3d()),
            Arc::new(data.clone()),
        )
        .with_h(1.0 / n as f64)
        .with_height(0.5);
        let disc = StripDiscretization::new(&problem)?;
        let u = disc.interpolate(|y| vec![(1.0 / 3.0 + (TAU * y[0]).cos()) * (-TAU * y[2]).exp()]);
        let r = disc.residual_report(&u);
        let order = |o: Option<f64>| o.map_or("-".to_string(), |o| format!("{o:.3}"));
        println!(
            "{:>8} {:>14.6e} {:>14.6e} {:>10} {:>10}   ({:.2?})",
            format!("1/{n}"),
            r.interior_sup,
            r.interior_l2,
            order(previous.map(|p| (p.0 / r.interior_sup).log2())),
            order(previous.map(|p| (p.1 / r.interior_l2).log2())),
            start.elapsed()
        );
        previous = Some((r.interior_sup, r.interior_l2));
    }
    Ok(())
}
