//! Boundary layer limit of the three-dimensional non-variational operator
//! with data `1/3 + cos 2πx` on the half-space `z > 0`.
//!
//! The exact solution is `(1/3 + cos 2πx) e^{-2πz}`, so the far-field
//! constant is zero.
//!
//! ```text
//! cargo run --release --example nonvariational_limit -- [cells_per_unit] [max_height]
//! ```

use std::sync::Arc;
use std::time::Instant;

use homogbc::boundary_layer::{boundary_layer_limit, HeightLadder};
use homogbc::fields::{PeriodicFieldExpr, Phase};
use homogbc::lattice::make_rational_direction;
use homogbc::operators::MonotoneMapSpec;
use homogbc::strip::{StripOperator, StripProblem};

fn main() -> homogbc::error::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(32.0);
    let max_height: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(8.0);
    let data = PeriodicFieldExpr::scalar(3, 1.0 / 3.0).with_term(&[1.0], &[1, 0, 0], Phase::Cos);
    let problem = StripProblem::new(
        make_rational_direction(&[0, 0, 1])?,
        StripOperator::Nonlinear(MonotoneMapSpec::non_variational_3d()),
        Arc::new(data),
    )
    .with_h(1.0 / n);
    let start = Instant::now();
    let r = boundary_layer_limit(&problem, 1e-6, &HeightLadder::up_to(max_height))?;
    println!("c* = {:.3e} ± {:.3e}", r.value[0], r.error_bar);
    println!("heights {:?}, iterations {:?}", r.heights_used, r.iterations);
    if let Some(rate) = r.decay_rate {
        println!("decay rate {rate:.4} per unit height (2π = {:.4})", std::f64::consts::TAU);
    }
    println!("elapsed {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
