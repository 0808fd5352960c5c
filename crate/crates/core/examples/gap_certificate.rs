//! Certificate that the planar problem
//! `-∇·(v_y, (9/8) v_z + (3/8)|v_z|) = 0`, `v(y, 0) = 1/3 + cos 2πy`,
//! has a strictly positive far-field limit: the solution stays above the
//! explicit subsolution `(1/3 + cos 2πy) e^{-2πz}` by `δ̂ > 0` at height
//! `1/(2π)`, and the limit is at least `δ̂`.
//!
//! ```text
//! cargo run --release --example gap_certificate -- [cells_per_unit]
//! ```

use std::time::Instant;

use homogbc::boundary_layer::HeightLadder;
use homogbc::second_cell::gap_certificate;

fn main() -> homogbc::error::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(64.0);
    println!("{:>8} {:>8} {:>14} {:>14} {:>14} {:>12} {:>10}", "h", "tau", "delta_hat", "limit", "error_bar", "ordering", "time");
    for (h, tau) in [(1.0 / n, 1.0 / n), (0.5 / n, 1.0 / n), (0.5 / n, 0.5 / n)] {
        let start = Instant::now();
        let c = gap_certificate(h, tau, 1e-8, &HeightLadder::default())?;
        println!(
            "{:>8.5} {:>8.5} {:>14.8} {:>14.8} {:>14.3e} {:>12.3e} {:>10.2?}",
            h,
            tau,
            c.delta_hat,
            c.limit.value[0],
            c.limit.error_bar,
            c.ordering_violation,
            start.elapsed()
        );
    }
    Ok(())
}
