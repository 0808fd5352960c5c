//! Laplace strip problems in rational directions: far-field constant,
//! exponential decay of the slice oscillation and its fitted rate.
//!
//! Data `cos 2πk·y` restricted to a lattice plane oscillates with the
//! tangential wave vector `k⊥ = k - (k·ξ̂)ξ̂`, and the solution decays like
//! `exp(-2π|k⊥| z)`.
//!
//! ```text
//! cargo run --release --example strip_decay -- [cells_per_unit]
//! ```

use std::f64::consts::TAU;
use std::sync::Arc;

use homogbc::boundary_layer::{boundary_layer_limit, HeightLadder};
use homogbc::fields::{LinearTensorField, PeriodicFieldExpr, Phase};
use homogbc::lattice::make_rational_direction;
use homogbc::strip::{StripOperator, StripProblem};

fn main() -> homogbc::error::Result<()> {
    let n: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(16.0);
    let data = Arc::new(PeriodicFieldExpr::scalar(2, 0.0).with_term(&[1.0], &[1, 0], Phase::Cos));
    println!("{:>8} {:>12} {:>12} {:>12} {:>12}", "xi", "c*", "error bar", "rate", "2π|k⊥|");
    for v in [[0i64, 1], [1, 1], [1, 2], [2, 3]] {
        let xi = make_rational_direction(&v)?;
        let along = v[0] as f64 / xi.norm;
        let tangential = (1.0 - along * along).sqrt();
        let problem = StripProblem::new(xi, StripOperator::Linear(LinearTensorField::identity(2)), data.clone())
            .with_target_h(1.0 / n);
        let r = boundary_layer_limit(&problem, 1e-8, &HeightLadder::up_to(16.0))?;
        println!(
            "{:>8} {:>12.3e} {:>12.3e} {:>12.6} {:>12.6}",
            format!("({},{})", v[0], v[1]),
            r.scalar(),
            r.error_bar,
            r.decay_rate.unwrap_or(f64::NAN),
            TAU * tangential
        );
    }
    Ok(())
}
