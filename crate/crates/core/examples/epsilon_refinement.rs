//! Interior homogenization on the half-plane `y₂ > 0`: the laminate
//! `a(y/ε) I` with data `cos 2πy₁` against the homogenized constant tensor.
//!
//! ```text
//! cargo run --release --example epsilon_refinement -- [cells_per_eps] [mesh_check|no] [m1,m2,...]
//! ```

use std::sync::Arc;
use std::time::Instant;

use homogbc::fields::{BoundaryData, LinearTensorField, PeriodicFieldExpr, Phase};
use homogbc::homogenization::{epsilon_refinement_study, EpsilonStudyOptions};
use homogbc::lattice::make_rational_direction;
use homogbc::strip::StripOperator;

fn main() -> homogbc::error::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let cells_per_eps = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    let mesh_check = args.get(2).is_some_and(|s| s == "mesh_check");
    let a = PeriodicFieldExpr::scalar(2, 2.0 / 3.0).with_term(&[1.0 / 3.0], &[1, 0], Phase::Cos);
    let op = StripOperator::Linear(LinearTensorField::isotropic(a, 1.0 / 3.0));
    let data: Arc<dyn BoundaryData> = Arc::new(PeriodicFieldExpr::scalar(2, 0.0).with_term(&[1.0], &[1, 0], Phase::Cos));
    let xi = make_rational_direction(&[0, 1])?;
    let opts = EpsilonStudyOptions {
        cells_per_eps,
        mesh_check,
        ..Default::default()
    };
    let start = Instant::now();
    let ladder: Vec<f64> = match args.get(3) {
        Some(s) => s.split(',').map(|v| 1.0 / v.parse::<f64>().expect("integer 1/ε")).collect(),
        None => vec![0.25, 0.125, 0.0625],
    };
    let study = epsilon_refinement_study(&op, data, &xi, &ladder, &opts)?;
    println!("h = {:.6e}", study.h);
    println!("{:>10} {:>14} {:>10} {:>10}", "eps", "sup_error", "ratio", "order");
    for r in &study.rows {
        println!(
            "{:>10.6} {:>14.6e} {:>10} {:>10}",
            r.eps,
            r.sup_error,
            r.ratio.map_or("-".into(), |v| format!("{v:.4}")),
            r.order.map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    println!("fitted order: {:?}", study.fitted_order);
    if let Some(m) = study.mesh_check {
        println!("mesh check (smallest eps, h vs h/2): {m:.3e}");
    }
    println!("elapsed: {:.2?}", start.elapsed());
    Ok(())
}
