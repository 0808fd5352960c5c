//! Boundary-layer constant of the laminate `a(y) = (2 + cos 2πy₁)/3` as a
//! function of the shift of the half-space, in the direction `(1, 1)`.
//!
//! The profile is periodic in the shift with period `1/|ξ|`; its average
//! is the value a second cell problem returns.
//!
//! ```text
//! cargo run --release --example phi_star_profile -- [samples]
//! ```

use std::sync::Arc;

use homogbc::boundary_layer::{phi_star_profile, shift_periodicity_defect, HeightLadder};
use homogbc::fields::{LinearTensorField, PeriodicFieldExpr, Phase};
use homogbc::lattice::make_rational_direction;
use homogbc::strip::{StripOperator, StripProblem};

fn main() -> homogbc::error::Result<()> {
    let samples: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    let a = PeriodicFieldExpr::scalar(2, 2.0 / 3.0).with_term(&[1.0 / 3.0], &[1, 0], Phase::Cos);
    let data = PeriodicFieldExpr::scalar(2, 0.0).with_term(&[1.0], &[1, 0], Phase::Cos);
    let base = StripProblem::new(
        make_rational_direction(&[1, 1])?,
        StripOperator::Linear(LinearTensorField::isotropic(a, 1.0 / 3.0)),
        Arc::new(data),
    )
    .with_target_h(1.0 / 16.0);
    let ladder = HeightLadder::default();
    let profile = phi_star_profile(&base, samples, 1e-8, &ladder)?;
    println!("{:>12} {:>22} {:>12}", "shift", "phi*", "error bar");
    for (s, r) in profile.shifts.iter().zip(&profile.samples) {
        println!("{s:>12.6} {:>22.16} {:>12.3e}", r.scalar(), r.error_bar);
    }
    let (defect, bar) = shift_periodicity_defect(&base, &profile, 1e-8, &ladder)?;
    println!("average over one shift period: {:.16}", profile.mean[0]);
    println!("shift period {:.6}, periodicity defect {defect:.3e} (bar {bar:.3e})", profile.shift_period());
    Ok(())
}
