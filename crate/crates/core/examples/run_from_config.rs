//! Runs one experiment from a TOML configuration through the same driver
//! as the command-line tool and lists the files of the resulting manifest.
//!
//! ```text
//! cargo run --release --example run_from_config -- crates/core/configs/decay_fit.toml /tmp/decay
//! ```

use homogbc::config::ExperimentConfig;
use homogbc::experiments::run;

fn main() -> homogbc::error::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let path = args.get(1).map(String::as_str).unwrap_or("crates/core/configs/decay_fit.toml");
    let out = args.get(2).map(String::as_str).unwrap_or("out/example");
    let cfg = ExperimentConfig::load(path)?;
    let outcome = run(&cfg, cfg.experiment, out.as_ref(), rayon::current_num_threads())?;
    for line in &outcome.summary {
        println!("{line}");
    }
    println!("config hash {}", outcome.manifest.config_hash);
    for f in &outcome.manifest.files {
        println!("  {:<24} {:>9} bytes", f.path, f.bytes);
    }
    Ok(())
}
