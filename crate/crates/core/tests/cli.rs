use std::fs;
use std::path::Path;

use koopman_pf::cli::{self, read_grid, run_command, write_grid, write_table, Format};
use koopman_pf::dynsys::{ep_system, State};
use koopman_pf::estimate::{estimate_pf, grid_sweep, Axis, EstimationConfig, GridSpec, Target};
use num_complex::Complex64;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("koopman-pf").chain(args.iter().copied());
    let code = run_command(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn lti_pf_prints_matrix_and_sums() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "a.txt", "0 1\n-2 -3\n");
    let (code, out, _) = run(&["lti-pf", "--matrix", &m]);
    assert_eq!(code, 0);
    assert!(out.contains(" 2.000000  -1.000000"), "{out}");
    assert!(out.contains("-1.000000   2.000000"), "{out}");
    assert!(out.contains("column sums: (1.000000, 1.000000)"), "{out}");
    assert!(out.contains("mode-in-state GPs"));
    assert!(out.contains("state-in-mode GPs"));
}

#[test]
fn lti_pf_rejects_defective_matrix_at_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "j.txt", "-1 1\n0 -1\n");
    let (code, _, err) = run(&["lti-pf", "--matrix", &m]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn sweep_with_equilibrium_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ep.toml", "system = \"ex1_ep\"\n");
    let out_path = dir.path().join("grid.csv");
    let (code, out, err) = run(&["sweep", "--config", &cfg, "--out", out_path.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let line = out.lines().find(|l| l.starts_with("err(P1^1(2)) = ")).unwrap();
    let value: f64 = line["err(P1^1(2)) = ".len()..].split(' ').next().unwrap().parse().unwrap();
    assert!(value < 0.005, "{line}");
    let text = fs::read_to_string(&out_path).unwrap();
    assert_eq!(text.lines().count(), 2 + 441 * 3 * 2);
}

#[test]
fn missing_config_is_a_validation_failure() {
    let (code, _, err) = run(&["sweep", "--config", "/nonexistent/config.toml"]);
    assert_eq!(code, 1);
    assert!(err.contains("cannot read"));
}

#[test]
fn unknown_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "system = \"ex1_ep\"\n[estimation]\ndelta_x = 1e-3\n");
    let (code, _, err) = run(&["sweep", "--config", &cfg]);
    assert_eq!(code, 1);
    assert!(err.contains("delta_x"), "{err}");
}

#[test]
fn invalid_override_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ep.toml", "system = \"ex1_ep\"\n");
    let (code, _, err) = run(&["sweep", "--config", &cfg, "--samples", "5", "--h", "-0.1"]);
    assert_eq!(code, 1);
    assert!(err.contains("num_samples") && err.contains("h must be positive"), "{err}");
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "ep.toml",
        "system = \"ex1_ep\"\n[grid]\naxes = [{min = 1.0, max = 1.0, count = 1}, {min = 1.0, max = 1.0, count = 1}]\n",
    );
    let (code, _, _) = run(&["sweep", "--config", &cfg, "--out", "/nonexistent/dir/grid.csv"]);
    assert_eq!(code, 2);
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(run(&["frobnicate"]).0, 1);
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("sweep"));
}

#[test]
fn estimate_prints_one_set() {
    let (code, out, err) = run(&["estimate", "--system", "ex1_ep", "--x0", "1,1", "--perturbed", "2"]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 6);
    let gp = out.lines().find(|l| l.starts_with("P1^1(2):")).unwrap();
    assert!(gp.contains("status=ok") && gp.contains("value=1.09"), "{gp}");
}

#[test]
fn estimate_warns_inside_the_limit_cycle() {
    let (code, _, err) = run(&["estimate", "--system", "ex2_lc", "--x0", "0.3,-0.2"]);
    assert_eq!(code, 0);
    assert!(err.contains("warning"));
}

#[test]
fn simulate_writes_a_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("traj.csv");
    let (code, _, err) = run(&[
        "simulate", "--system", "ex1_ep", "--x0", "1,-1", "--h", "0.3", "--samples", "6", "--out",
        p.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(p).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# schema: trajectory/1");
    assert_eq!(lines[1], "t,x1,x2");
    assert_eq!(lines[2], "0,1,-1");
    assert_eq!(lines.len(), 8);
}

#[test]
fn simulate_json_to_stdout() {
    let (code, out, _) = run(&["simulate", "--system", "ex2_lc", "--x0", "1,0", "--samples", "3", "--format", "json"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["samples"].as_array().unwrap().len(), 3);
}

fn small_grid(targets: Vec<Target>) -> koopman_pf::estimate::PfGrid {
    let b = ep_system();
    let cfg = EstimationConfig {
        targets,
        ..EstimationConfig::for_ep()
    };
    let g = GridSpec::cartesian(vec![Axis::new(-2.0, 2.0, 3), Axis::new(0.5, 2.0, 2)]);
    grid_sweep(&b.field, Some(&b), &g, 1, &cfg, None).unwrap()
}

#[test]
fn single_node_single_target_gives_two_rows() {
    let b = ep_system();
    let cfg = EstimationConfig {
        targets: vec![Target::new("1", Complex64::new(-1.0, 0.0))],
        ..EstimationConfig::for_ep()
    };
    let g = GridSpec::cartesian(vec![Axis::new(1.0, 1.0, 1); 2]);
    let grid = grid_sweep(&b.field, None, &g, 1, &cfg, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.csv");
    write_grid(&grid, &p, Format::Csv).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), 4);
    let golden = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/pfgrid_header_2d.csv")).unwrap();
    assert!(text.starts_with(&golden));
    assert!(text.lines().nth(2).unwrap().starts_with("1,1,1,1,2,ok,"));
}

#[test]
fn no_match_rows_have_empty_values() {
    let grid = small_grid(vec![Target::new("far", Complex64::new(-40.0, 0.0))]);
    let text = cli::grid_to_csv(&(&grid).into());
    let row = text.lines().nth(2).unwrap();
    assert!(row.ends_with(",no_match,,,,,"), "{row}");
}

#[test]
fn csv_and_json_round_trip_byte_identically() {
    let grid = small_grid(koopman_pf::estimate::ep_targets());
    let dir = tempfile::tempdir().unwrap();
    for (fmt, name) in [(Format::Csv, "g.csv"), (Format::Json, "g.json")] {
        let a = dir.path().join(name);
        let b = dir.path().join(format!("again-{name}"));
        write_grid(&grid, &a, fmt).unwrap();
        let table = read_grid(&a, fmt).unwrap();
        write_table(&table, &b, fmt).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap(), "{name}");
    }
}

#[test]
fn json_summary_survives_round_trip_exactly() {
    let grid = small_grid(koopman_pf::estimate::ep_targets());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.json");
    write_grid(&grid, &p, Format::Json).unwrap();
    let table = read_grid(&p, Format::Json).unwrap();
    for s in &grid.summary {
        let back = table.summary.iter().find(|r| r.quantity == s.quantity()).unwrap();
        assert_eq!(back.mean_error.map(f64::to_bits), s.mean_error.map(f64::to_bits));
        assert_eq!((back.matched, back.total), (s.matched, s.total));
    }
}

#[test]
fn identical_sweeps_write_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write_grid(&small_grid(koopman_pf::estimate::ep_targets()), &a, Format::Csv).unwrap();
    write_grid(&small_grid(koopman_pf::estimate::ep_targets()), &b, Format::Csv).unwrap();
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn estimate_records_match_library_output() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("e.csv");
    let (code, _, _) = run(&["estimate", "--system", "ex1_ep", "--x0", "1,1", "--out", p.to_str().unwrap()]);
    assert_eq!(code, 0);
    let table = read_grid(&p, Format::Csv).unwrap();
    let direct = estimate_pf(&ep_system().field, &State::from_vec(vec![1.0, 1.0]), 1, &EstimationConfig::for_ep()).unwrap();
    assert_eq!(table.records.len(), direct.len());
    for (r, d) in table.records.iter().zip(&direct) {
        assert_eq!(r.pf, d.value);
    }
}

#[test]
fn lti_config_sweep_uses_classical_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "lti.toml",
        "system = { lti = [[0.0, 1.0], [-2.0, -3.0]] }\n\
         [grid]\naxes = [{min = -1.0, max = 1.0, count = 3}, {min = -1.0, max = 1.0, count = 3}]\n\
         [estimation]\nnum_samples = 4\nperturbed = 1\n",
    );
    let (code, out, err) = run(&["sweep", "--config", &cfg, "--threads", "1"]);
    assert_eq!(code, 0, "{err}");
    for line in out.lines().filter(|l| l.starts_with("err(")) {
        let v: f64 = line.split(" = ").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap();
        assert!(v < 1e-5, "{line}");
    }
}
