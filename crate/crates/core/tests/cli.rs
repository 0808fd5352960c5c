//! End-to-end runs of the command-line tool: exit codes, determinism and
//! manifest completeness.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use homogbc::config::{ExperimentConfig, ExperimentKind, Numerics};
use homogbc::report::RunManifest;
use proptest::prelude::*;

fn homogbc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homogbc")).args(args).output().expect("binary runs")
}

fn config(name: &str) -> String {
    format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn assert_manifest_complete(dir: &Path) {
    let m = manifest(dir);
    let mut listed: Vec<String> = m.files.iter().map(|f| f.path.clone()).collect();
    let mut on_disk: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    listed.sort();
    on_disk.sort();
    assert_eq!(listed, on_disk);
    for f in m.files.iter().filter(|f| f.path != "manifest.json") {
        let bytes = fs::read(dir.join(&f.path)).unwrap();
        assert_eq!(bytes.len() as u64, f.bytes, "{}", f.path);
        assert_eq!(homogbc::report::sha256_hex(&bytes), f.sha256, "{}", f.path);
    }
}

const CONSTANT_DATA: &str = r#"
experiment = "cell-solve"
directions = ["rational: [1, 1]"]

[operator]
kind = "laplace"
dim = 2

[data]
dim = 2
constant = [0.75]
terms = []

[numerics]
h = 0.08838834764831845
"#;

#[test]
fn every_subcommand_runs_and_lists_its_files() {
    for (sub, file) in [
        ("cell-solve", "cell_solve.toml"),
        ("decay-fit", "decay_fit.toml"),
        ("phi-star", "phi_star.toml"),
        ("second-cell", "second_cell.toml"),
        ("homogenize", "homogenize.toml"),
        ("sweep", "sweep.toml"),
        ("discontinuity-demo", "discontinuity_demo.toml"),
    ] {
        let out = tempfile::tempdir().unwrap();
        let o = homogbc(&[sub, "--config", &config(file), "--out", out.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{sub}: {}", String::from_utf8_lossy(&o.stderr));
        assert_manifest_complete(out.path());
        assert_eq!(manifest(out.path()).command, sub);
        if sub == "discontinuity-demo" {
            let stdout = String::from_utf8_lossy(&o.stdout);
            assert!(stdout.contains("L(e3,e1)=") && stdout.contains("gap>0: PASS"), "{stdout}");
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (d, threads) in dirs.iter().zip(["1", "2"]) {
        let o = homogbc(&["sweep", "--config", &config("sweep.toml"), "--out", d.path().to_str().unwrap(), "--threads", threads]);
        assert_eq!(o.status.code(), Some(0));
    }
    let m = manifest(dirs[0].path());
    for f in m.files.iter().filter(|f| f.path != "manifest.json") {
        let a = fs::read(dirs[0].path().join(&f.path)).unwrap();
        let b = fs::read(dirs[1].path().join(&f.path)).unwrap();
        assert!(a == b, "{} differs between runs", f.path);
    }
    assert_eq!(m.files, manifest(dirs[1].path()).files);
}

#[test]
fn constant_data_limit_is_the_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONSTANT_DATA);
    let out = dir.path().join("out");
    let o = homogbc(&["cell-solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    let value = json["result"]["value"][0].as_f64().unwrap();
    assert!((value - 0.75).abs() < 1e-9, "{value}");
}

#[test]
fn sweep_over_constant_data_reports_a_degenerate_fit() {
    let dir = tempfile::tempdir().unwrap();
    let text = CONSTANT_DATA
        .replace("experiment = \"cell-solve\"", "experiment = \"sweep\"")
        .replace(
            "directions = [\"rational: [1, 1]\"]",
            "directions = [\"rational: [0, 1]\", \"rational: [1, 1]\", \"rational: [1, 2]\"]",
        )
        .replace("h = 0.08838834764831845", "h = 0.0625\nprofile_samples = 8");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = homogbc(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("degenerate fit"));
}

#[test]
fn homogenize_matches_the_laminate_means() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("homogenize.toml")).unwrap();
    let text = text.replace("directions = [\"rational: [0, 1]\"]\n", "");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    assert_eq!(homogbc(&["homogenize", "--config", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("a0.json")).unwrap()).unwrap();
    let a0: Vec<f64> = json["a0"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((a0[0] - 3f64.sqrt() / 3.0).abs() < 1e-3);
    assert!((a0[3] - 2.0 / 3.0).abs() < 1e-3);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let bad_h = write_config(dir.path(), &CONSTANT_DATA.replace("0.08838834764831845", "0.1"));
    assert_eq!(homogbc(&["cell-solve", "--config", &bad_h, "--out", out]).status.code(), Some(2));
    let short = write_config(dir.path(), &CONSTANT_DATA.replace("[numerics]", "[numerics]\nheight = 2.0"));
    assert_eq!(homogbc(&["cell-solve", "--config", &short, "--out", out]).status.code(), Some(2));
    let tau = write_config(dir.path(), &CONSTANT_DATA.replace("[numerics]", "[numerics]\ntau = -1.0"));
    assert_eq!(homogbc(&["cell-solve", "--config", &tau, "--out", out]).status.code(), Some(2));
    assert_eq!(homogbc(&["cell-solve", "--config", "/nonexistent.toml", "--out", out]).status.code(), Some(2));
    assert_eq!(homogbc(&["cell-solve", "--out", out]).status.code(), Some(2));
}

#[test]
fn exhausted_ladder_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("decay_fit.toml"))
        .unwrap()
        .replace("decay-fit", "cell-solve")
        .replace("[numerics]", "[numerics]\ntolerance = 1e-200\nladder = [4.0, 8.0]");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = homogbc(&["cell-solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert_manifest_complete(&out);
}

#[test]
fn seed_flag_overrides_the_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = homogbc(&["decay-fit", "--config", &config("decay_fit.toml"), "--out", out.to_str().unwrap(), "--seed", "42"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(manifest(&out).seed, 42);
}

#[test]
fn csv_reports_carry_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    homogbc(&["decay-fit", "--config", &config("decay_fit.toml"), "--out", out.to_str().unwrap()]);
    let text = fs::read_to_string(out.join("decay_points.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("z,oscillation"));
    for cell in lines.next().unwrap().split(',') {
        let mantissa = cell.split('e').next().unwrap().replace(['-', '.'], "");
        assert_eq!(mantissa.len(), 17, "{cell}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn configurations_round_trip(
        h_cells in 8usize..40,
        tol in 1e-12f64..1e-3,
        tau in prop::option::of(1e-4f64..0.5),
        q in 1i64..30,
        samples in 8usize..40,
        alpha in 0.01f64..1.0,
        seed in any::<u64>(),
    ) {
        let text = format!(
            "experiment = \"phi-star\"\nseed = {seed}\ndirections = [\"rational: [0, 1]\"]\n\n[operator]\nkind = \"reduced2d\"\n\n[data]\ndim = 2\nconstant = [0.5]\nterms = []\n"
        );
        let mut cfg = ExperimentConfig::from_toml(&text).unwrap();
        cfg.numerics = Numerics {
            h: 1.0 / h_cells as f64,
            tolerance: tol,
            tau,
            q_budget: q,
            profile_samples: samples,
            alpha,
            ..Numerics::default()
        };
        cfg.validate().unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.hash().unwrap(), cfg.hash().unwrap());
        prop_assert_eq!(again.experiment, ExperimentKind::PhiStar);
    }
}
