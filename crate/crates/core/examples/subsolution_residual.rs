//! Pointwise residual of the explicit barrier `(1/3 + cos y) e^{-z}` for
//! the planar kinked operator, scanned on a grid of `[0, 2π) × [0, z_max]`.
//!
//! The closed-form residual is nonpositive everywhere and vanishes only on
//! the line `y = 0`; the sign-split residual is shown alongside.
//!
//! ```text
//! cargo run --release --example subsolution_residual -- [samples]
//! ```

use homogbc::second_cell::{exact_subsolution_residual, subsolution_residual, subsolution_residual_formula};

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(256);
    for (name, f) in [
        ("closed form", subsolution_residual_formula as fn(f64, f64) -> f64),
        ("sign-split", exact_subsolution_residual),
    ] {
        let scan = subsolution_residual(f, n, n, 4.0);
        let ys: Vec<f64> = scan.argmax.iter().map(|p| p.0).collect();
        let on_axis = ys.iter().all(|&y| y == 0.0);
        println!(
            "{name:>12}: max {:.3e} over {} samples, attained at {} points, all on y = 0: {on_axis}",
            scan.max,
            scan.samples,
            scan.argmax.len()
        );
    }
}
