use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mwflood::raster_io::{write_ascii_grid, Raster};
use tempfile::TempDir;

fn mwflood(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mwflood")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Emits a built-in scenario and returns its config path.
fn emit(name: &str, dir: &Path) -> PathBuf {
    let o = mwflood(&["scenario", "emit", "--name", name, "--out", p(dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    PathBuf::from(stdout(&o).trim())
}

fn flat_dem(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("flat.asc");
    write_ascii_grid(&Raster::filled(n, n, 2.0, 7.5), &path).unwrap();
    path
}

/// Every file of a run except the wall-time bearing stats.
fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|f| f.file_name().unwrap() != "stats.txt")
        .map(|f| (f.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&f).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn version_and_scenario_list() {
    let o = mwflood(&["--version"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains(env!("CARGO_PKG_VERSION")));
    let o = mwflood(&["scenario", "list"]);
    let names: Vec<String> = stdout(&o).lines().map(str::to_owned).collect();
    assert_eq!(names, ["valley", "dambreak", "lake"]);
}

#[test]
fn flat_dem_gives_level_zero_grid() {
    let d = TempDir::new().unwrap();
    let dem = flat_dem(d.path(), 17);
    let nug = d.path().join("g.nug");
    let o = mwflood(&["grid", "generate", "--dem", p(&dem), "--max-level", "2", "--graded", "--out", p(&nug)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("epsilon = 1e-3"), "{text}");
    assert!(text.contains("level 0 (8 m): 16 leaves, 100.0%"), "{text}");

    let o = mwflood(&["grid", "stats", "--grid", p(&nug)]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("leaves = 16"));
}

#[test]
fn zero_epsilon_refines_everything() {
    let d = TempDir::new().unwrap();
    let dem = flat_dem(d.path(), 17);
    let nug = d.path().join("g.nug");
    let o = mwflood(&["grid", "generate", "--dem", p(&dem), "--epsilon", "0", "--max-level", "2", "--out", p(&nug)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("level 2 (2 m): 256 leaves, 100.0%"), "{}", stdout(&o));
}

#[test]
fn generate_reports_bad_input() {
    let d = TempDir::new().unwrap();
    let nug = d.path().join("g.nug");
    let missing = d.path().join("nope.asc");
    let o = mwflood(&["grid", "generate", "--dem", p(&missing), "--max-level", "2", "--out", p(&nug)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("nope.asc"));
    let dem = flat_dem(d.path(), 9);
    let o = mwflood(&["grid", "generate", "--dem", p(&dem), "--max-level", "2", "--wavelet", "db4", "--out", p(&nug)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_then_compare_with_itself() {
    let d = TempDir::new().unwrap();
    let cfg = emit("lake", d.path());
    let out = d.path().join("ref");
    let o = mwflood(&["run", "--config", p(&cfg), "--solver", "dg2", "--grid", "uniform", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["h_0000.asc", "qx_0000.asc", "qy_0000.asc", "stats.txt"] {
        assert!(out.join(f).exists(), "{f} missing");
    }

    let o = mwflood(&["compare", "--test", p(&out), "--ref", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let rmse: Vec<&str> = report.lines().filter(|l| l.starts_with("rmse,")).collect();
    assert!(!rmse.is_empty());
    for l in rmse {
        assert_eq!(l.split(',').nth(2), Some("0"), "{l}");
    }
}

#[test]
fn adaptive_solver_needs_max_level() {
    let d = TempDir::new().unwrap();
    let cfg = emit("lake", d.path());
    let text = fs::read_to_string(&cfg).unwrap();
    let stripped: String = text.lines().filter(|l| !l.trim_start().starts_with("max_level")).map(|l| format!("{l}\n")).collect();
    fs::write(&cfg, stripped).unwrap();
    let o = mwflood(&["run", "--config", p(&cfg), "--solver", "mwdg2", "--out", p(&d.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("max_level"), "{}", stderr(&o));

    let o = mwflood(&["run", "--config", p(&cfg), "--solver", "dg3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_rejects_mismatched_geometry_and_empty_dirs() {
    let d = TempDir::new().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    let o = mwflood(&["compare", "--test", p(&a), "--ref", p(&b)]);
    assert_eq!(o.status.code(), Some(2));

    write_ascii_grid(&Raster::filled(4, 3, 1.0, 0.5), a.join("h_0000.asc")).unwrap();
    write_ascii_grid(&Raster::filled(5, 3, 1.0, 0.5), b.join("h_0000.asc")).unwrap();
    let o = mwflood(&["compare", "--test", p(&a), "--ref", p(&b)]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains('4') && msg.contains('5'), "{msg}");
}

#[test]
fn repeated_runs_are_identical_for_any_thread_count() {
    let d = TempDir::new().unwrap();
    let cfg = emit("dambreak", d.path());
    let mut prev = None;
    for (k, threads) in ["1", "3", "1"].iter().enumerate() {
        let out = d.path().join(format!("o{k}"));
        let o = mwflood(&["--threads", threads, "run", "--config", p(&cfg), "--solver", "mwdg2", "--max-level", "2", "--out", p(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let files = outputs(&out);
        assert!(files.iter().any(|f| f.0 == "elements.csv"));
        if let Some(p) = &prev {
            assert_eq!(p, &files);
        }
        prev = Some(files);
    }
}
