//! Directional limits of the effective boundary data from the second cell
//! problem, for the laminate `a(y) = (2 + cos 2πy₁)/3`.
//!
//! In two dimensions the limit approached from either side of a rational
//! direction is the profile average; in three dimensions it does not depend
//! on the approach direction either, which the spread over several `η`
//! shows.
//!
//! ```text
//! cargo run --release --example second_cell_limits
//! ```

use std::sync::Arc;

use homogbc::boundary_layer::{phi_star_profile, HeightLadder};
use homogbc::fields::{LinearTensorField, PeriodicFieldExpr, Phase};
use homogbc::lattice::make_rational_direction;
use homogbc::second_cell::{eta_independence_check, transverse_basis, EffectiveOperator, SecondCellOptions};
use homogbc::strip::{StripOperator, StripProblem};

fn run(v: &[i64], h: f64, samples: usize) -> homogbc::error::Result<()> {
    let d = v.len();
    let mut freq = vec![0; d];
    freq[0] = 1;
    let a = PeriodicFieldExpr::scalar(d, 2.0 / 3.0).with_term(&[1.0 / 3.0], &freq, Phase::Cos);
    let op = StripOperator::Linear(LinearTensorField::isotropic(a, 1.0 / 3.0));
    let data = PeriodicFieldExpr::scalar(d, 0.0).with_term(&[1.0], &freq, Phase::Cos);
    let xi = make_rational_direction(v)?;
    let base = StripProblem::new(xi.clone(), op.clone(), Arc::new(data)).with_target_h(h);
    let ladder = HeightLadder::default();
    let profile = phi_star_profile(&base, samples, 1e-7, &ladder)?;
    let effective = EffectiveOperator::from_operator(&op, if d == 2 { 1.0 / 64.0 } else { 1.0 / 16.0 })?;
    let mut etas = transverse_basis(&xi);
    etas.push(etas[0].iter().map(|x| -x).collect());
    let opts = SecondCellOptions::default();
    let spread = eta_independence_check(&xi, &profile, &effective, &etas, &opts)?;
    println!("xi = {xi}: profile average {:.12}", profile.mean[0]);
    for l in &spread.limits {
        println!("  eta = {:?}: L = {:.12} ± {:.3e}", l.eta, l.scalar(), l.error_bar);
    }
    println!("  spread {:.3e} against error bar {:.3e}", spread.spread, spread.error_bar);
    Ok(())
}

fn main() -> homogbc::error::Result<()> {
    run(&[1, 1], 1.0 / 16.0, 16)?;
    run(&[1, 2], 1.0 / 16.0, 16)?;
    run(&[1, 1, 0], 1.0 / 8.0, 8)
}
