//! Effective tensor of the laminate `a(y) = (2 + cos 2πy₁)/3` on a sequence
//! of cell meshes, compared with the harmonic and arithmetic means of `a`.
//!
//! ```text
//! cargo run --release --example laminate_homogenization
//! ```

use std::time::Instant;

use homogbc::fields::{LinearTensorField, PeriodicFieldExpr, Phase};
use homogbc::homogenization::homogenize_linear;

fn main() -> homogbc::error::Result<()> {
    let a = PeriodicFieldExpr::scalar(2, 2.0 / 3.0).with_term(&[1.0 / 3.0], &[1, 0], Phase::Cos);
    let tensor = LinearTensorField::isotropic(a, 1.0 / 3.0);
    let harmonic = 3f64.sqrt() / 3.0;
    let arithmetic = 2.0 / 3.0;
    println!("{:>8} {:>22} {:>22} {:>12} {:>12}", "h_cell", "A0_11", "A0_22", "err_11", "err_22");
    let mut previous: Option<Vec<f64>> = None;
    for n in [16, 32, 64, 128] {
        let start = Instant::now();
        let h = homogenize_linear(&tensor, 1.0 / n as f64)?;
        println!(
            "{:>8} {:>22.16} {:>22.16} {:>12.3e} {:>12.3e}   ({:.2?})",
            format!("1/{n}"),
            h.entry(0, 0),
            h.entry(1, 1),
            h.entry(0, 0) - harmonic,
            h.entry(1, 1) - arithmetic,
            start.elapsed()
        );
        if let Some(p) = &previous {
            let change = p.iter().zip(&h.a0).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            println!("         change under halving: {change:.3e}");
        }
        previous = Some(h.a0.clone());
    }
    Ok(())
}
