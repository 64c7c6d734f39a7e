use std::path::Path;
use std::process::{Command, Output};

use bfpmg::analysis;
use bfpmg::fem::{Discretization, Pde, ProblemSpec};
use bfpmg_cli::{Command as Cmd, ExperimentConfig};

fn bfpmg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bfpmg")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_lines(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

fn config(pairs: &[(&str, &str)]) -> ExperimentConfig {
    let ov: Vec<(String, String)> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    ExperimentConfig::load(None, &ov).unwrap()
}

#[test]
fn quant_error_header_and_rows() {
    let o = bfpmg(&["quant-error", "--levels", "4", "--set", "widths=5,10", "--set", "count=3"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("# bfpmg quant-error\n# config-sha256 "));
    let lines = data_lines(&out);
    assert_eq!(lines[0], "pde,p,j,i,w,E,sqrt_kappa_times_eps");
    assert_eq!(lines.len(), 1 + 3 * 2);
}

#[test]
fn quant_error_rows_match_analysis() {
    let cfg = config(&[("levels", "5"), ("widths", "5,10,15"), ("count", "8"), ("prec", "256")]);
    let report = Cmd::QuantError.run(&cfg).unwrap();
    assert!(report.violations.is_empty());
    let spec = ProblemSpec::new(Pde::Poisson, 1, 1, 5).unwrap();
    let disc = Discretization::new(&spec, 256).unwrap();
    let (_, vecs) = analysis::smallest_eigpairs(&disc.a, 8, 256).unwrap();
    let rows: Vec<Vec<String>> =
        data_lines(&report.csv)[1..].iter().map(|l| l.split(',').map(str::to_string).collect()).collect();
    for (idx, w, row) in [(1usize, 5u32, 0usize), (4, 10, 10), (8, 15, 23)] {
        let fields = &rows[row];
        assert_eq!(fields[3], idx.to_string());
        assert_eq!(fields[4], w.to_string());
        let e = analysis::quant_error(&vecs[idx - 1], w, &disc.a, 256).unwrap().relative.to_f64();
        assert_eq!(fields[5], format!("{e:.6e}"));
    }
}

#[test]
fn output_is_deterministic_and_written_to_dir() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let args = ["fmg", "--p", "1", "--levels", "2..5", "--out", d];
    assert_eq!(bfpmg(&args).status.code(), Some(0));
    let first = std::fs::read_to_string(Path::new(d).join("fmg.csv")).unwrap();
    assert_eq!(bfpmg(&args).status.code(), Some(0));
    let second = std::fs::read_to_string(Path::new(d).join("fmg.csv")).unwrap();
    assert_eq!(first, second);
    // three default modes over four levels
    assert_eq!(data_lines(&first).len(), 1 + 3 * 4);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "pde = biharmonic\np = 3\nlevels = 3..4\nmode = fixed64\n").unwrap();
    let o = bfpmg(&["fmg", "--config", path.to_str().unwrap(), "--levels", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("# pde=biharmonic\n"));
    let lines = data_lines(&out);
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("fixed64,biharmonic,3,4,64,64,64,"));
}

#[test]
fn failed_check_exits_with_two() {
    let o = bfpmg(&["fmg", "--levels", "3..4", "--mode", "progressive-qcomp", "--set", "ratio_bound=0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("check failed"));
}

#[test]
fn errors_exit_with_one() {
    assert_eq!(bfpmg(&["fmg", "--pde", "biharmonic", "--p", "2"]).status.code(), Some(1));
    assert_eq!(bfpmg(&["fmg", "--set", "nonsense=1"]).status.code(), Some(1));
    assert_eq!(bfpmg(&["fmg", "--config", "/nonexistent/file.cfg"]).status.code(), Some(1));
}

#[test]
fn recompute_table_counts() {
    let cfg = config(&[("levels", "6"), ("schedule", "fixed:64")]);
    let report = Cmd::RecomputeTable.run(&cfg).unwrap();
    let lines = data_lines(&report.csv);
    assert_eq!(lines[0], "pde,p,j,cap,recomputed,calls");
    assert_eq!(lines.len(), 5);
    let caps: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(caps, ["0", "2", "4", "inf"]);
    for l in &lines[1..] {
        let f: Vec<usize> = l.split(',').skip(4).map(|x| x.parse().unwrap()).collect();
        assert!(f[0] <= f[1]);
        assert_eq!(f[1], 13);
    }
}

#[test]
fn prec_est_schedules_are_ordered() {
    let cfg = config(&[("levels", "1..6")]);
    let report = Cmd::PrecEst.run(&cfg).unwrap();
    assert!(report.violations.is_empty(), "{:?}", report.violations);
    for l in &data_lines(&report.csv)[1..] {
        let f: Vec<&str> = l.split(',').collect();
        let (wc, w, wd): (u32, u32, u32) = (f[8].parse().unwrap(), f[9].parse().unwrap(), f[10].parse().unwrap());
        assert!(wc >= w && w >= wd, "{l}");
    }
}

#[test]
fn min_width_base_level() {
    let cfg = config(&[("levels", "1..3")]);
    let report = Cmd::MinWidth.run(&cfg).unwrap();
    assert!(report.violations.is_empty());
    assert_eq!(data_lines(&report.csv).len(), 1 + 3 * 3);
    assert!(report.csv.contains("# slope p=1 w_check="));
}
