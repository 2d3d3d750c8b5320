use std::path::Path;
use std::process::{Command, Output};

use berry_det::cli::{emit_csv, run_config, Command as Pipeline, RunConfig, CSV_HEADER};
use berry_det::hamiltonians::{FamilySpec, LevelCurve};
use berry_det::Error;

fn berry_det(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_berry-det"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn demo_writes_csv_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo.csv");
    let run = berry_det(&["demo", "--out", out.to_str().unwrap(), "--quiet"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(run.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER.join(","));
    assert_eq!(lines.len(), 5);
    let ms: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ms, ["4", "8", "16", "32"]);
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let run = berry_det(&["demo", "--m", "2,5", "--out", path.to_str().unwrap(), "--quiet"]);
        assert!(run.status.success());
    }
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn empty_mlist_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "empty.toml",
        "m = []\n[family]\ntype = \"diag_const\"\nenergies = [1.0, -1.0]\n",
    );
    let run = berry_det(&["verify", "--config", &cfg]);
    assert_eq!(run.status.code(), Some(2));
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("config error") && err.contains("`m`"), "{err}");
}

#[test]
fn level_in_spectrum_reports_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "gapless.toml",
        "level = { type = \"constant\", value = 1.0 }\n[family]\ntype = \"spin_half\"\ntheta = 1.0\nb0 = 1.0\n",
    );
    let run = berry_det(&["berry", "--config", &cfg]);
    assert_eq!(run.status.code(), Some(2));
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("gap violation at t ="), "{err}");

    let cfg = RunConfig::from_toml_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    let err = run_config(&cfg, Pipeline::Berry).unwrap_err();
    assert!(matches!(err.root(), Error::GapViolation { .. }));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let report = run_config(
        &RunConfig {
            m: vec![2.0],
            ..RunConfig::new(FamilySpec::diag_const(&[1.0, -1.0]))
        },
        Pipeline::Det,
    )
    .unwrap();
    let err = emit_csv(&report, Path::new("/nonexistent/dir/out.csv")).unwrap_err();
    assert!(matches!(err, Error::Io(_)));
}

#[test]
fn berry_subcommand_writes_phases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "spin.toml",
        "methods = [\"holonomy\", \"wilson\"]\n[family]\ntype = \"spin_half\"\ntheta = 1.5707963267948966\nb0 = 2.0\n",
    );
    let out = dir.path().join("phases.csv");
    let run = berry_det(&["berry", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(run.status.success());
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("method,gamma\nholonomy,"));
    assert!(String::from_utf8_lossy(&run.stdout).contains("[PASS] methods agree"));
}

#[test]
fn det_needs_a_single_m() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "rand.toml",
        "[family]\ntype = \"random_gapped\"\nn = 4\nharmonics = 2\nseed = 3\ntarget_gap = 0.2\nn_minus = 2\n",
    );
    assert_eq!(berry_det(&["det", "--config", &cfg]).status.code(), Some(2));
    let run = berry_det(&["det", "--config", &cfg, "--m", "3", "--seed", "5"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("seed=5") && stdout.contains("m = 3"), "{stdout}");
}

#[test]
fn seed_on_fixed_family_is_rejected() {
    let run = berry_det(&["demo", "--seed", "3"]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn sweep_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sweep.toml",
        "m = [2.0, 8.0]\ns = [0.0, 0.5, 1.0]\n[family]\ntype = \"spin_half\"\ntheta = 1.0471975511965979\nb0 = 1.0\n",
    );
    let run = berry_det(&["sweep", "--config", &cfg]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("[PASS] deformation shrinks with m"));
}

#[test]
fn determinant_commands_need_level_zero() {
    let mut cfg = RunConfig::demo();
    cfg.level = LevelCurve::constant(0.5);
    assert!(matches!(
        run_config(&cfg, Pipeline::Verify),
        Err(Error::ConfigError(_))
    ));
}

#[test]
fn rows_carry_the_config_hash() {
    let cfg = RunConfig {
        m: vec![1.0, 2.0],
        ..RunConfig::new(FamilySpec::diag_const(&[1.0, -1.0, 0.5]))
    };
    let report = run_config(&cfg, Pipeline::Verify).unwrap();
    assert!(report.passed());
    assert!(report.rows.iter().all(|r| r.config_hash == report.config_hash));
    assert_eq!(report.config_hash, cfg.hash().unwrap());
}
